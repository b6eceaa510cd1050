#pragma once

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "mslearn/common.hpp"
#include "mslearn/rng.hpp"

namespace mslearn {

struct ReluNeuron {
  double mu;
  Vec u;
};

// f(x) = sum_i mu_i relu(<u_i, x>), directions unit, sum |mu_i|/2 <= R
struct ReluNetwork {
  int d = 0;
  double R = 0.0;
  std::vector<ReluNeuron> neurons;

  double evaluate(const Vec& x) const {
    double s = 0.0;
    for (const auto& n : neurons) s += n.mu * std::max(0.0, n.u.dot(x));
    return s;
  }
};

struct AbsTerm {
  double lambda;
  Vec u;
};

// f(x) = <w, x> + sum_i lambda_i |<u_i, x>|
struct AbsNetwork {
  int d = 0;
  double R = 0.0;
  Vec w;
  std::vector<AbsTerm> terms;

  static AbsNetwork zero(int d, double R) {
    AbsNetwork n;
    n.d = d;
    n.R = R;
    n.w = Vec::Zero(d);
    return n;
  }

  double evaluate(const Vec& x) const {
    double s = w.size() ? w.dot(x) : 0.0;
    for (const auto& t : terms) s += t.lambda * std::abs(t.u.dot(x));
    return s;
  }

  double weight_total() const {
    double s = 0.0;
    for (const auto& t : terms) s += std::abs(t.lambda);
    return s;
  }
};

// relu(z) = z/2 + |z|/2, exact rewrite
inline AbsNetwork to_abs_form(const ReluNetwork& net) {
  AbsNetwork out;
  out.d = net.d;
  out.R = net.R;
  out.w = Vec::Zero(net.d);
  out.terms.reserve(net.neurons.size());
  for (const auto& n : net.neurons) {
    out.w += (n.mu / 2.0) * n.u;
    out.terms.push_back({n.mu / 2.0, n.u});
  }
  return out;
}

struct LabeledSample {
  Vec x;
  double y;
};

// row i of X is sample i
struct SampleBatch {
  Mat X;
  Vec y;
  std::size_t size() const { return static_cast<std::size_t>(X.rows()); }
  LabeledSample sample(std::size_t i) const {
    return {X.row(i).transpose(), y[i]};
  }
};

inline Vec evaluate_batch(const AbsNetwork& net, const Mat& X) {
  Vec y = net.w.size() ? Vec(X * net.w) : Vec(Vec::Zero(X.rows()));
  for (const auto& t : net.terms)
    y += t.lambda * (X * t.u).cwiseAbs();
  return y;
}

inline Vec evaluate_batch(const ReluNetwork& net, const Mat& X) {
  Vec y = Vec::Zero(X.rows());
  for (const auto& n : net.neurons)
    y += n.mu * (X * n.u).cwiseMax(0.0);
  return y;
}

// Gaussian inputs, exact labels plus optional gaussian label noise.
// The input matrix for a given seed does not depend on noise_sigma.
template <class Net>
SampleBatch sample_labeled(const Net& net, std::size_t n, std::uint64_t seed,
                           double noise_sigma = 0.0) {
  Rng rng(seed);
  SampleBatch b;
  b.X.resize(n, net.d);
  for (std::size_t i = 0; i < n; ++i)
    for (int j = 0; j < net.d; ++j) b.X(i, j) = rng.next_gauss();
  b.y = evaluate_batch(net, b.X);
  if (noise_sigma > 0.0)
    for (std::size_t i = 0; i < n; ++i) b.y[i] += noise_sigma * rng.next_gauss();
  return b;
}

// E[|z1 z2|] for jointly standard normal with correlation rho
inline double kernel_abs(double rho) {
  rho = std::clamp(rho, -1.0, 1.0);
  return (2.0 / kPi) *
         (std::sqrt(std::max(0.0, 1.0 - rho * rho)) + rho * std::asin(rho));
}

// E[relu(z1) relu(z2)], same setup
inline double kernel_relu(double rho) {
  rho = std::clamp(rho, -1.0, 1.0);
  return (std::sqrt(std::max(0.0, 1.0 - rho * rho)) +
          rho * (kPi - std::acos(rho))) /
         (2.0 * kPi);
}

// L2(gaussian) distance between abs-form networks, closed form:
// stack the difference and use E[<w,x>^2] = |w|^2, E[<w,x>|<u,x>|] = 0,
// E[|<u,x>||<v,x>|] = kernel_abs(<u,v>) for unit u, v.
inline double l2_dist(const AbsNetwork& a, const AbsNetwork& b) {
  if (a.d != b.d) throw std::invalid_argument("l2_dist: dim mismatch");
  Vec wd = (a.w.size() ? a.w : Vec(Vec::Zero(a.d))) -
           (b.w.size() ? b.w : Vec(Vec::Zero(b.d)));
  std::vector<AbsTerm> ts;
  ts.reserve(a.terms.size() + b.terms.size());
  for (const auto& t : a.terms) ts.push_back(t);
  for (const auto& t : b.terms) ts.push_back({-t.lambda, t.u});
  double s = wd.squaredNorm();
  for (std::size_t i = 0; i < ts.size(); ++i)
    for (std::size_t j = 0; j < ts.size(); ++j)
      s += ts[i].lambda * ts[j].lambda * kernel_abs(ts[i].u.dot(ts[j].u));
  return std::sqrt(std::max(0.0, s));
}

inline double l2_dist(const ReluNetwork& a, const ReluNetwork& b) {
  return l2_dist(to_abs_form(a), to_abs_form(b));
}

inline double l2_dist(const AbsNetwork& a, const ReluNetwork& b) {
  return l2_dist(a, to_abs_form(b));
}

inline double l2_dist(const ReluNetwork& a, const AbsNetwork& b) {
  return l2_dist(to_abs_form(a), b);
}

template <class Net>
double l2_norm(const Net& net) {
  AbsNetwork z = AbsNetwork::zero(net.d, 0.0);
  return l2_dist(net, z);
}

template <class NetA, class NetB>
double l2_dist_mc(const NetA& a, const NetB& b, std::size_t n,
                  std::uint64_t seed) {
  if (a.d != b.d) throw std::invalid_argument("l2_dist_mc: dim mismatch");
  Rng rng(seed);
  double s = 0.0;
  Vec x(a.d);
  for (std::size_t i = 0; i < n; ++i) {
    for (int j = 0; j < a.d; ++j) x[j] = rng.next_gauss();
    double diff = a.evaluate(x) - b.evaluate(x);
    s += diff * diff;
  }
  return std::sqrt(s / n);
}

namespace detail {

template <class F>
double min_over_permutations(int k, F&& cost_of_perm) {
  std::vector<int> perm(k);
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    best = std::min(best, cost_of_perm(perm));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace detail

// min over neuron matchings of max_i (|mu_i - mu'_pi(i)| + |u_i - u'_pi(i)|).
// Brute force, k <= 10.
inline double param_dist(const ReluNetwork& a, const ReluNetwork& b) {
  if (a.neurons.size() != b.neurons.size())
    throw std::invalid_argument("param_dist: width mismatch");
  int k = static_cast<int>(a.neurons.size());
  if (k > 10) throw std::invalid_argument("param_dist: width > 10");
  if (k == 0) return 0.0;
  return detail::min_over_permutations(k, [&](const std::vector<int>& p) {
    double worst = 0.0;
    for (int i = 0; i < k; ++i) {
      const auto& x = a.neurons[i];
      const auto& y = b.neurons[p[i]];
      worst = std::max(worst, std::abs(x.mu - y.mu) + (x.u - y.u).norm());
    }
    return worst;
  });
}

// Abs terms are sign-blind in u, so directions compare up to sign.
inline double param_dist(const AbsNetwork& a, const AbsNetwork& b) {
  if (a.terms.size() != b.terms.size())
    throw std::invalid_argument("param_dist: width mismatch");
  int k = static_cast<int>(a.terms.size());
  if (k > 10) throw std::invalid_argument("param_dist: width > 10");
  if (k == 0) return 0.0;
  return detail::min_over_permutations(k, [&](const std::vector<int>& p) {
    double worst = 0.0;
    for (int i = 0; i < k; ++i) {
      const auto& x = a.terms[i];
      const auto& y = b.terms[p[i]];
      double du =
          std::min((x.u - y.u).norm(), (x.u + y.u).norm());
      worst = std::max(worst, std::abs(x.lambda - y.lambda) + du);
    }
    return worst;
  });
}

enum class InstanceKind { well_separated, line_multiscale, random_sphere };

struct GenParams {
  double sep = 0.8;             // min pairwise +-distance, well_separated
  std::vector<double> ladder;   // consecutive gaps, line_multiscale
  double mu_lo = 0.8, mu_hi = 1.6;  // |mu_i| in [lo,hi] * R/k
};

// Planted instances. Directions are unit; sum_i |mu_i|/2 <= R by
// construction (mu_hi <= 2).
inline ReluNetwork gen_instance(InstanceKind kind, int k, int d, double R,
                                std::uint64_t seed,
                                const GenParams& gp = GenParams{}) {
  if (k < 1 || d < 1 || R <= 0) throw std::invalid_argument("gen_instance");
  if (gp.mu_hi > 2.0 || gp.mu_lo <= 0 || gp.mu_lo > gp.mu_hi)
    throw std::invalid_argument("gen_instance: mu range");
  Rng rng(seed);
  std::vector<Vec> us;
  switch (kind) {
    case InstanceKind::random_sphere: {
      for (int i = 0; i < k; ++i) us.push_back(rng.unit_vec(d));
      break;
    }
    case InstanceKind::well_separated: {
      int guard = 0;
      while (static_cast<int>(us.size()) < k) {
        Vec c = rng.unit_vec(d);
        bool ok = true;
        for (const Vec& u : us) {
          double dist = std::min((u - c).norm(), (u + c).norm());
          if (dist < gp.sep) {
            ok = false;
            break;
          }
        }
        if (ok) us.push_back(c);
        if (++guard > 100000)
          throw std::runtime_error("gen_instance: separation infeasible");
      }
      break;
    }
    case InstanceKind::line_multiscale: {
      if (d < 2) throw std::invalid_argument("line_multiscale needs d >= 2");
      std::vector<double> ladder = gp.ladder;
      if (ladder.empty()) ladder.assign(k - 1, 0.5);
      if (static_cast<int>(ladder.size()) != k - 1)
        throw std::invalid_argument("line_multiscale: ladder size");
      Vec e1 = rng.unit_vec(d);
      Vec raw = rng.gauss_vec(d);
      Vec e2 = raw - raw.dot(e1) * e1;
      while (e2.norm() < 1e-9) {
        raw = rng.gauss_vec(d);
        e2 = raw - raw.dot(e1) * e1;
      }
      e2.normalize();
      double theta = 0.0;
      for (int i = 0; i < k; ++i) {
        us.push_back(std::cos(theta) * e1 + std::sin(theta) * e2);
        if (i + 1 < k) {
          double gap = ladder[i];
          if (gap < 0 || gap > 2)
            throw std::invalid_argument("line_multiscale: gap range");
          theta += 2.0 * std::asin(gap / 2.0);
        }
      }
      break;
    }
  }
  ReluNetwork net;
  net.d = d;
  net.R = R;
  for (int i = 0; i < k; ++i) {
    double mag = rng.uniform(gp.mu_lo, gp.mu_hi) * (R / k);
    double sign = rng.next_double() < 0.5 ? -1.0 : 1.0;
    net.neurons.push_back({sign * mag, us[i]});
  }
  return net;
}

// Line format: header "d k R"; one "coef u_1 ... u_d" row per neuron or abs
// term; abs networks append a final row "w w_1 ... w_d". All doubles %.17g,
// so parse-and-rewrite is byte-identical.
inline void write_network(std::ostream& os, const ReluNetwork& net) {
  os << net.d << ' ' << net.neurons.size() << ' ' << format_double(net.R)
     << '\n';
  for (const auto& n : net.neurons) {
    os << format_double(n.mu);
    for (int j = 0; j < net.d; ++j) os << ' ' << format_double(n.u[j]);
    os << '\n';
  }
}

inline void write_network(std::ostream& os, const AbsNetwork& net) {
  os << net.d << ' ' << net.terms.size() << ' ' << format_double(net.R)
     << '\n';
  for (const auto& t : net.terms) {
    os << format_double(t.lambda);
    for (int j = 0; j < net.d; ++j) os << ' ' << format_double(t.u[j]);
    os << '\n';
  }
  os << 'w';
  for (int j = 0; j < net.d; ++j)
    os << ' ' << format_double(net.w.size() ? net.w[j] : 0.0);
  os << '\n';
}

namespace detail {

inline void read_header(std::istream& is, int& d, int& k, double& R) {
  if (!(is >> d >> k >> R) || d < 1 || k < 0)
    throw std::runtime_error("network parse: header");
}

inline Vec read_direction(std::istream& is, int d) {
  Vec u(d);
  for (int j = 0; j < d; ++j)
    if (!(is >> u[j])) throw std::runtime_error("network parse: direction");
  return u;
}

}  // namespace detail

inline ReluNetwork read_relu_network(std::istream& is) {
  ReluNetwork net;
  int k;
  detail::read_header(is, net.d, k, net.R);
  for (int i = 0; i < k; ++i) {
    double mu;
    if (!(is >> mu)) throw std::runtime_error("network parse: coefficient");
    net.neurons.push_back({mu, detail::read_direction(is, net.d)});
  }
  std::string extra;
  if (is >> extra)
    throw std::runtime_error("network parse: unexpected trailing row");
  return net;
}

inline AbsNetwork read_abs_network(std::istream& is) {
  AbsNetwork net;
  int k;
  detail::read_header(is, net.d, k, net.R);
  net.w = Vec::Zero(net.d);
  for (int i = 0; i < k; ++i) {
    std::string tok;
    if (!(is >> tok)) throw std::runtime_error("network parse: coefficient");
    if (tok == "w") throw std::runtime_error("network parse: early w row");
    net.terms.push_back(
        {std::stod(tok), detail::read_direction(is, net.d)});
  }
  std::string tok;
  if (is >> tok) {
    if (tok != "w") throw std::runtime_error("network parse: expected w row");
    net.w = detail::read_direction(is, net.d);
  }
  return net;
}

}  // namespace mslearn
