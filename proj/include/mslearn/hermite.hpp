#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "mslearn/common.hpp"
#include "mslearn/sym_tensor.hpp"

namespace mslearn {

// Probabilist Hermite polynomials: H_0 = 1, H_1 = x,
// H_{n+1}(x) = x H_n(x) - n H_{n-1}(x).

inline double hermite_eval(int n, double x) {
  if (n < 0) throw std::invalid_argument("hermite_eval: negative degree");
  double hm = 1.0, h = x;
  if (n == 0) return hm;
  for (int m = 1; m < n; ++m) {
    double hn = x * h - m * hm;
    hm = h;
    h = hn;
  }
  return h;
}

inline double sqrt_factorial(int n) {
  double s = 1.0;
  for (int i = 2; i <= n; ++i) s *= std::sqrt(static_cast<double>(i));
  return s;
}

inline double hermite_normalized_eval(int n, double x) {
  return hermite_eval(n, x) / sqrt_factorial(n);
}

// Exact integer coefficient tables, grown on demand. Coefficients stay within
// int64 through degree 32 (max magnitude 7675951358500425000); requests past
// that throw.
class HermiteBasisCache {
 public:
  explicit HermiteBasisCache(int degree = 12) { extend(degree); }

  int max_degree() const { return static_cast<int>(coeffs_.size()) - 1; }

  // coefficient of x^j in H_n, as c(n)[j]
  const std::vector<std::int64_t>& coeffs(int n) {
    if (n < 0) throw std::invalid_argument("HermiteBasisCache: degree");
    if (n > max_degree()) extend(n);
    return coeffs_[n];
  }

  double eval_by_table(int n, double x) {
    const auto& c = coeffs(n);
    double v = 0.0;
    for (int j = n; j >= 0; --j) v = v * x + static_cast<double>(c[j]);
    return v;
  }

 private:
  void extend(int degree) {
    if (coeffs_.empty()) {
      coeffs_.push_back({1});     // H_0
      if (degree >= 1) coeffs_.push_back({0, 1});  // H_1
    }
    while (max_degree() < degree) {
      int n = max_degree();
      const auto& hn = coeffs_[n];
      const auto& hm = coeffs_[n - 1];
      std::vector<std::int64_t> next(n + 2, 0);
      for (int j = 0; j <= n; ++j) {
        __int128 v = static_cast<__int128>(hn[j]);
        // x * H_n contributes to x^{j+1}
        __int128 acc = static_cast<__int128>(next[j + 1]) + v;
        if (acc > INT64_MAX || acc < INT64_MIN)
          throw std::overflow_error("HermiteBasisCache: degree > 32");
        next[j + 1] = static_cast<std::int64_t>(acc);
      }
      for (int j = 0; j < n; ++j) {
        __int128 acc = static_cast<__int128>(next[j]) -
                       static_cast<__int128>(n) * hm[j];
        if (acc > INT64_MAX || acc < INT64_MIN)
          throw std::overflow_error("HermiteBasisCache: degree > 32");
        next[j] = static_cast<std::int64_t>(acc);
      }
      coeffs_.push_back(std::move(next));
    }
  }

  std::vector<std::vector<std::int64_t>> coeffs_;
};

// Hermite coefficient of relu(z) = max(z, 0) in the normalized basis
// He_l / sqrt(l!): relu(z) = sum_l c_l He_l(z) with
//   c_0 = 1/sqrt(2 pi), c_1 = 1/2, c_l = 0 for odd l >= 3,
//   c_{2m} = (-1)^{m+1} (2m-3)!! / (sqrt(2 pi) (2m)!).
// These are the coefficients against the UNNORMALIZED He_l; see
// abs_hermite_scale for the contraction constant the estimator uses.
inline double relu_hermite_coeff(int l) {
  if (l < 0) throw std::invalid_argument("relu_hermite_coeff: degree");
  if (l == 0) return 1.0 / kSqrt2Pi;
  if (l == 1) return 0.5;
  if (l % 2 == 1) return 0.0;
  int m = l / 2;
  double v = 1.0 / kSqrt2Pi;
  for (int i = 2 * m - 3; i >= 3; i -= 2) v *= i;  // (2m-3)!!
  for (int i = 2; i <= l; ++i) v /= i;             // / (2m)!
  if (m % 2 == 0) v = -v;                          // (-1)^{m+1}
  return v;
}

// E[|<u,x>| He_alpha(x)] = abs_hermite_scale(l) * u^alpha for unit u,
// |alpha| = l, with unnormalized Hermite products. SIGNED: negative at
// l = 4, 8, ... (equals 2 c_l l!). At l = 1 this is E[z He_1] scaling = 1,
// consistent with the linear part.
inline double abs_hermite_scale(int l) {
  double f = 1.0;
  for (int i = 2; i <= l; ++i) f *= i;
  return 2.0 * relu_hermite_coeff(l) * f;
}

// Tensor of normalized Hermite products: entry at canonical alpha is
// prod_j He_{alpha_j}(x_j) / sqrt(alpha_j!).
inline SymTensor hermite_tensor(int l, const Vec& x) {
  int d = static_cast<int>(x.size());
  SymTensor t(d, l);
  // per-coordinate value tables up to degree l
  std::vector<std::vector<double>> he(d, std::vector<double>(l + 1));
  for (int j = 0; j < d; ++j) {
    he[j][0] = 1.0;
    if (l >= 1) he[j][1] = x[j];
    for (int n = 1; n < l; ++n)
      he[j][n + 1] = x[j] * he[j][n] - n * he[j][n - 1];
    for (int n = 2; n <= l; ++n) he[j][n] /= sqrt_factorial(n);
  }
  std::vector<int> counts(d);
  t.for_each([&](const std::vector<int>& idx, std::size_t r, double,
                 double) {
    std::fill(counts.begin(), counts.end(), 0);
    for (int i : idx) ++counts[i];
    double p = 1.0;
    for (int j = 0; j < d; ++j) p *= he[j][counts[j]];
    t[r] = p;
  });
  return t;
}

}  // namespace mslearn
