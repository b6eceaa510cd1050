#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mslearn/common.hpp"

namespace mslearn {

// A clustered power-sum instance: the first kprime coordinates of v lie
// within beta of v_1, every other coordinate is at least gamma away from the
// cluster, the cluster weights sum to at least tau in absolute value, and no
// weight exceeds R.
struct PowerSumInstance {
  int k = 0;
  int kprime = 0;
  double alpha = 0.0, beta = 0.0, gamma = 0.0;
  double tau = 0.0, R = 0.0;
  std::vector<double> v, q;

  void validate() const {
    if (k < 1 || static_cast<int>(v.size()) != k ||
        static_cast<int>(q.size()) != k)
      throw std::invalid_argument("powersum: lengths");
    if (kprime < 1 || kprime > k)
      throw std::invalid_argument("powersum: kprime out of range");
    for (double a : {alpha, beta, gamma})
      if (a <= 0.0 || a >= 1.0)
        throw std::invalid_argument("powersum: alpha, beta, gamma in (0,1)");
    for (double x : v)
      if (std::abs(x) > 1.0) throw std::invalid_argument("powersum: |v| > 1");
    if (std::abs(v[0]) < alpha)
      throw std::invalid_argument("powersum: |v_1| < alpha");
    for (int i = 0; i < kprime; ++i)
      if (std::abs(v[0] - v[i]) > beta)
        throw std::invalid_argument("powersum: cluster wider than beta");
    for (int i = 0; i < kprime; ++i)
      for (int j = kprime; j < k; ++j)
        if (std::abs(v[i] - v[j]) < gamma)
          throw std::invalid_argument("powersum: cross gap below gamma");
    double cluster = 0.0;
    for (int i = 0; i < kprime; ++i) cluster += q[i];
    if (std::abs(cluster) < tau)
      throw std::invalid_argument("powersum: cluster weight below tau");
    for (double x : q)
      if (std::abs(x) > R) throw std::invalid_argument("powersum: |q| > R");
  }
};

inline double power_correlation(const std::vector<double>& v,
                                const std::vector<double>& q, int l) {
  if (v.size() != q.size())
    throw std::invalid_argument("power_correlation: lengths");
  if (l < 0) throw std::invalid_argument("power_correlation: l < 0");
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i)
    s += q[i] * std::pow(v[i], l);
  return s;
}

struct WitnessResult {
  int l_star = 0;     // even power with the largest |correlation|
  double value = 0.0; // correlation at l_star
  double bound = 0.0; // separation the lemma promises
  bool holds = false;
};

// calibrated once on a pre-registered random suite
constexpr double kPowersumC = 0.5;

// Sweep the even powers 0..2k and compare the largest correlation against
// (tau/2k)(alpha^2 gamma^2/4k)^k - C R k (k'-1) beta.
inline WitnessResult powersum_witness(const PowerSumInstance& inst) {
  inst.validate();
  WitnessResult res;
  for (int l = 0; l <= 2 * inst.k; l += 2) {
    double c = power_correlation(inst.v, inst.q, l);
    if (std::abs(c) > std::abs(res.value)) {
      res.value = c;
      res.l_star = l;
    }
  }
  double a2g2 = inst.alpha * inst.alpha * inst.gamma * inst.gamma;
  res.bound = inst.tau / (2.0 * inst.k) *
                  std::pow(a2g2 / (4.0 * inst.k), inst.k) -
              kPowersumC * inst.R * inst.k * (inst.kprime - 1) * inst.beta;
  res.holds = std::abs(res.value) >= res.bound;
  return res;
}

// v_i^2 = 1 - (i-1) gamma with alternating binomial weights: all even
// correlations below 2k-2 vanish (finite differences of a low-degree
// polynomial) and the one at 2k-2 equals (k-1)! gamma^(k-1).
inline std::pair<std::vector<double>, std::vector<double>> tightness_instance(
    int k, double gamma) {
  if (k < 1) throw std::invalid_argument("tightness_instance: k");
  if (gamma <= 0.0 || k * gamma >= 1.0)
    throw std::invalid_argument("tightness_instance: need k gamma < 1");
  std::vector<double> v(k), q(k);
  double binom = 1.0;
  for (int i = 0; i < k; ++i) {
    v[i] = std::sqrt(1.0 - i * gamma);
    q[i] = (i % 2 == 0) ? binom : -binom;
    binom = binom * (k - 1 - i) / (i + 1);
  }
  return {v, q};
}

// max relative residual of z^K = sum_s (-1)^(K-s+1) e_(K-s) z^s over the
// coordinates, with elementary symmetric polynomials from the product
// recurrence
inline double vieta_check(const std::vector<double>& z) {
  int K = static_cast<int>(z.size());
  if (K < 1) throw std::invalid_argument("vieta_check: empty");
  // poly[j] = coefficient of x^j in prod (x - z_i)
  std::vector<double> poly(K + 1, 0.0);
  poly[0] = 1.0;
  int deg = 0;
  for (double r : z) {
    ++deg;
    for (int j = deg; j >= 1; --j) poly[j] = poly[j - 1] - r * poly[j];
    poly[0] *= -r;
  }
  // e_j with sign: prod (x - z_i) = sum_j (-1)^j e_j x^(K-j)
  std::vector<double> e(K + 1);
  for (int j = 0; j <= K; ++j)
    e[j] = ((j % 2 == 0) ? 1.0 : -1.0) * poly[K - j];
  double worst = 0.0;
  for (double zi : z) {
    double zK = std::pow(zi, K);
    double rhs = 0.0;
    for (int s = 0; s < K; ++s) {
      double sign = ((K - s + 1) % 2 == 0) ? 1.0 : -1.0;
      rhs += sign * e[K - s] * std::pow(zi, s);
    }
    worst = std::max(worst, std::abs(zK - rhs) / std::max(1.0, std::abs(zK)));
  }
  return worst;
}

struct VandermondeResult {
  Vec alpha;
  double residual = 0.0;    // |V alpha - c|
  double alpha_norm = 0.0;
  double lemma_bound = 0.0; // m (1/min gap)^(2m-2) |c|
  double min_gap = 0.0;
};

inline VandermondeResult vandermonde_solve(const std::vector<double>& nodes,
                                           const Vec& c) {
  int m = static_cast<int>(nodes.size());
  if (m < 1 || c.size() != m)
    throw std::invalid_argument("vandermonde_solve: sizes");
  double gap = std::numeric_limits<double>::infinity();
  for (int i = 0; i < m; ++i)
    for (int j = i + 1; j < m; ++j)
      gap = std::min(gap, std::abs(nodes[i] - nodes[j]));
  if (m > 1 && gap == 0.0)
    throw std::invalid_argument("vandermonde_solve: duplicate nodes");
  Mat V(m, m);
  for (int i = 0; i < m; ++i) {
    double p = 1.0;
    for (int j = 0; j < m; ++j) {
      V(i, j) = p;
      p *= nodes[i];
    }
  }
  VandermondeResult res;
  res.alpha = V.colPivHouseholderQr().solve(c);
  res.residual = (V * res.alpha - c).norm();
  res.alpha_norm = res.alpha.norm();
  res.min_gap = gap;
  if (m == 1)
    res.lemma_bound = c.norm();
  else
    res.lemma_bound = m * std::pow(1.0 / gap, 2 * m - 2) * c.norm();
  return res;
}

// interpolate the requested sign pattern on the squared-projection nodes
inline VandermondeResult sign_pattern_coeffs(const std::vector<double>& nodes,
                                             const std::vector<int>& signs) {
  if (nodes.size() != signs.size())
    throw std::invalid_argument("sign_pattern_coeffs: sizes");
  Vec c(static_cast<int>(signs.size()));
  for (std::size_t i = 0; i < signs.size(); ++i) {
    if (signs[i] != 1 && signs[i] != -1)
      throw std::invalid_argument("sign_pattern_coeffs: signs must be +-1");
    c[static_cast<int>(i)] = signs[i];
  }
  return vandermonde_solve(nodes, c);
}

}  // namespace mslearn
