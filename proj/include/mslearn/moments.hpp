#pragma once

#include <cmath>
#include <thread>
#include <vector>

#include "mslearn/common.hpp"
#include "mslearn/hermite.hpp"
#include "mslearn/network.hpp"
#include "mslearn/sym_tensor.hpp"

namespace mslearn {

// Degree-l Hermite moment tensor of the abs-form function
// f(x) = <w,x> + sum_i lambda_i |<u_i,x>|:
//   l = 1         -> w
//   l even        -> sum_i lambda_i u_i^{(x) l}
//   l odd, l >= 3 -> zero (the abs terms have no odd moments, the linear
//                    part none past degree 1)
inline SymTensor exact_moment_tensor(const AbsNetwork& net, int l) {
  SymTensor t(net.d, l);
  if (l == 1) {
    for (int j = 0; j < net.d; ++j) t[j] = net.w.size() ? net.w[j] : 0.0;
    return t;
  }
  if (l % 2 == 1) return t;
  t.for_each([&](const std::vector<int>& idx, std::size_t r, double,
                 double) {
    double s = 0.0;
    for (const auto& term : net.terms) {
      double p = term.lambda;
      for (int i : idx) p *= term.u[i];
      s += p;
    }
    t[r] = s;
  });
  return t;
}

inline SymTensor exact_moment_tensor(const ReluNetwork& net, int l) {
  return exact_moment_tensor(to_abs_form(net), l);
}

struct EstimateOptions {
  int shards = 16;   // fixed accumulation shards; result independent of threads
  int threads = 0;   // 0 = hardware concurrency
};

namespace detail {

// Accumulates sum_a y_a * prod_j He_{alpha_j}((x_a)_j) over canonical alpha,
// in canonical rank order, by depth-first sweep over count vectors with
// running prefix products.
struct HermiteAccumulator {
  int d, l;
  const double* he;  // (l+1) values per coordinate
  double* acc;
  double y;
  std::size_t pos;

  void run(int j, int rem, double prod) {
    if (j == d - 1) {
      acc[pos++] += y * prod * he[j * (l + 1) + rem];
      return;
    }
    for (int c = rem; c >= 0; --c)
      run(j + 1, rem - c, prod * he[j * (l + 1) + c]);
  }
};

inline void accumulate_shard(const Mat& X, const Vec& y, int l,
                             std::size_t lo, std::size_t hi, double* acc) {
  int d = static_cast<int>(X.cols());
  std::vector<double> he(static_cast<std::size_t>(d) * (l + 1));
  HermiteAccumulator a{d, l, he.data(), acc, 0.0, 0};
  for (std::size_t i = lo; i < hi; ++i) {
    for (int j = 0; j < d; ++j) {
      double* h = he.data() + static_cast<std::size_t>(j) * (l + 1);
      double x = X(i, j);
      h[0] = 1.0;
      if (l >= 1) h[1] = x;
      for (int n = 1; n < l; ++n) h[n + 1] = x * h[n] - n * h[n - 1];
    }
    a.y = y[i];
    a.pos = 0;
    a.run(0, l, 1.0);
  }
}

// mean of y * He_alpha(x) per canonical entry; sharded sum merged in shard
// order so the result does not depend on the thread count
inline std::vector<double> hermite_correlation(const Mat& X, const Vec& y,
                                               int l,
                                               const EstimateOptions& opt) {
  if (X.rows() == 0) throw std::invalid_argument("estimate: empty batch");
  if (l < 0) throw std::invalid_argument("estimate: negative degree");
  std::size_t n = static_cast<std::size_t>(X.rows());
  std::size_t entries = SymTensor(static_cast<int>(X.cols()), l).size();
  int shards = std::max(1, opt.shards);
  std::vector<std::vector<double>> part(
      shards, std::vector<double>(entries, 0.0));
  int threads = opt.threads > 0
                    ? opt.threads
                    : static_cast<int>(std::thread::hardware_concurrency());
  threads = std::max(1, std::min(threads, shards));
  auto work = [&](int t) {
    for (int s = t; s < shards; s += threads) {
      std::size_t lo = n * s / shards, hi = n * (s + 1) / shards;
      accumulate_shard(X, y, l, lo, hi, part[s].data());
    }
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(work, t);
    for (auto& th : pool) th.join();
  }
  std::vector<double> acc(entries, 0.0);
  for (int s = 0; s < shards; ++s)
    for (std::size_t r = 0; r < entries; ++r) acc[r] += part[s][r];
  for (double& v : acc) v /= static_cast<double>(n);
  return acc;
}

}  // namespace detail

// Unbiased estimate of the degree-l moment tensor:
// T_hat[alpha] = mean(y * He_alpha(x)) / (2 c_l l!). The scale constant is
// signed (negative at l = 4, 8, ...). Odd degrees >= 3 carry no signal and
// are refused.
inline SymTensor estimate_moments(const Mat& X, const Vec& y, int l,
                                  const EstimateOptions& opt = {}) {
  if (l >= 3 && l % 2 == 1)
    throw std::invalid_argument("estimate_moments: odd degree >= 3");
  auto acc = detail::hermite_correlation(X, y, l, opt);
  double scale = abs_hermite_scale(l);
  SymTensor t(static_cast<int>(X.cols()), l);
  for (std::size_t r = 0; r < acc.size(); ++r) t[r] = acc[r] / scale;
  return t;
}

inline SymTensor estimate_moments(const SampleBatch& b, int l,
                                  const EstimateOptions& opt = {}) {
  return estimate_moments(b.X, b.y, l, opt);
}

// Raw correlation mean(y * S_l(x)) against normalized Hermite products,
// exposed unscaled for diagnostics.
inline SymTensor estimate_moments_raw(const Mat& X, const Vec& y, int l,
                                      const EstimateOptions& opt = {}) {
  auto acc = detail::hermite_correlation(X, y, l, opt);
  SymTensor t(static_cast<int>(X.cols()), l);
  std::vector<int> counts(X.cols());
  t.for_each([&](const std::vector<int>& idx, std::size_t r, double,
                 double) {
    double nf = 1.0;
    std::fill(counts.begin(), counts.end(), 0);
    for (int i : idx) ++counts[i];
    for (int c : counts) nf *= sqrt_factorial(c);
    t[r] = acc[r] / nf;
  });
  return t;
}

inline SymTensor estimate_moments_raw(const SampleBatch& b, int l,
                                      const EstimateOptions& opt = {}) {
  return estimate_moments_raw(b.X, b.y, l, opt);
}

// Same estimator against residual labels y - f_hat(x).
inline SymTensor estimate_residual_moments(const SampleBatch& b,
                                           const AbsNetwork& learned, int l,
                                           const EstimateOptions& opt = {}) {
  Vec resid = b.y - evaluate_batch(learned, b.X);
  return estimate_moments(b.X, resid, l, opt);
}

struct ContractedMatrix {
  int l = 0;   // tensor order contracted from
  Mat m;
};

// M[a,b] = sum over the remaining l-2 slots of T[a,b,j_3..j_l] g_{j_3}...g_{j_l}
inline ContractedMatrix contract(const SymTensor& t, const Vec& g) {
  int l = t.order(), d = t.dim();
  if (l < 2) throw std::invalid_argument("contract: order < 2");
  if (g.size() != d) throw std::invalid_argument("contract: dim mismatch");
  ContractedMatrix out{l, Mat::Zero(d, d)};
  SymTensor betas(d, l - 2);  // canonical (l-2)-tuple enumerator
  std::vector<int> merged(l);
  betas.for_each([&](const std::vector<int>& beta, std::size_t, double,
                     double mult) {
    double gp = 1.0;
    for (int i : beta) gp *= g[i];
    if (gp == 0.0 && !beta.empty()) return;
    for (int a = 0; a < d; ++a) {
      for (int b = a; b < d; ++b) {
        // merge sorted beta with {a, b}
        std::size_t i = 0;
        int put = 0;
        while (i < beta.size() && beta[i] <= a) merged[put++] = beta[i++];
        merged[put++] = a;
        while (i < beta.size() && beta[i] <= b) merged[put++] = beta[i++];
        merged[put++] = b;
        while (i < beta.size()) merged[put++] = beta[i++];
        double v = mult * gp * t[t.rank_of(merged)];
        out.m(a, b) += v;
        if (a != b) out.m(b, a) += v;
      }
    }
  });
  return out;
}

inline double frobenius_dist(const SymTensor& a, const SymTensor& b) {
  SymTensor diff = a;
  diff -= b;
  return diff.frobenius();
}

}  // namespace mslearn
