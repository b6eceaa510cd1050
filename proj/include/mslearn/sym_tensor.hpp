#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "mslearn/common.hpp"

namespace mslearn {

// Symmetric tensor of order l over R^d, stored once per canonical
// (non-decreasing) multi-index. Canonical entries are ordered
// lexicographically, which matches the enumeration in next_index().
class SymTensor {
 public:
  SymTensor(int d, int l) : d_(d), l_(l) {
    if (d < 1 || l < 0) throw std::invalid_argument("SymTensor: bad shape");
    build_binom();
    v_.assign(binom(d_ + l_ - 1, l_), 0.0);
  }

  int dim() const { return d_; }
  int order() const { return l_; }
  std::size_t size() const { return v_.size(); }

  double& operator[](std::size_t r) { return v_[r]; }
  double operator[](std::size_t r) const { return v_[r]; }

  // rank of a non-decreasing multi-index in lex order
  std::size_t rank_of(const std::vector<int>& idx) const {
    check_index(idx);
    std::size_t r = 0;
    int lo = 0;
    for (int t = 0; t < l_; ++t) {
      for (int v = lo; v < idx[t]; ++v)
        r += binom(d_ - v + l_ - t - 2, l_ - t - 1);
      lo = idx[t];
    }
    return r;
  }

  double at(std::vector<int> idx) const {
    std::sort(idx.begin(), idx.end());
    return v_[rank_of(idx)];
  }
  double& at(std::vector<int> idx) {
    std::sort(idx.begin(), idx.end());
    return v_[rank_of(idx)];
  }

  // first canonical index (all zeros); advance with next_index
  std::vector<int> first_index() const { return std::vector<int>(l_, 0); }

  // lex successor of a canonical index; false when exhausted
  bool next_index(std::vector<int>& idx) const {
    for (int t = l_ - 1; t >= 0; --t) {
      if (idx[t] < d_ - 1) {
        int v = idx[t] + 1;
        for (int s = t; s < l_; ++s) idx[s] = v;
        return true;
      }
    }
    return false;
  }

  // number of distinct positions collapsing onto a canonical index
  static double multiplicity(const std::vector<int>& idx) {
    double m = 1.0;
    int run = 1, n = 1;
    for (std::size_t t = 1; t < idx.size(); ++t) {
      ++n;
      m *= n;
      if (idx[t] == idx[t - 1]) {
        ++run;
        m /= run;
      } else {
        run = 1;
      }
    }
    return m;
  }

  // f(idx, rank, value, multiplicity), canonical order
  template <class F>
  void for_each(F&& f) const {
    std::vector<int> idx = first_index();
    std::size_t r = 0;
    do {
      f(static_cast<const std::vector<int>&>(idx), r, v_[r],
        multiplicity(idx));
      ++r;
    } while (next_index(idx));
  }

  // Frobenius norm over all d^l positions
  double frobenius() const {
    double s = 0.0;
    for_each([&](const std::vector<int>&, std::size_t, double v, double m) {
      s += m * v * v;
    });
    return std::sqrt(s);
  }

  // full contraction <T, o^{x l}> over all positions
  double dot(const SymTensor& o) const {
    check_same(o);
    double s = 0.0;
    for_each([&](const std::vector<int>&, std::size_t r, double v, double m) {
      s += m * v * o.v_[r];
    });
    return s;
  }

  double contract_full(const Vec& u) const {
    if (u.size() != d_) throw std::invalid_argument("contract_full: dim");
    double s = 0.0;
    for_each([&](const std::vector<int>& idx, std::size_t, double v,
                 double m) {
      double p = 1.0;
      for (int i : idx) p *= u[i];
      s += m * v * p;
    });
    return s;
  }

  SymTensor& operator+=(const SymTensor& o) {
    check_same(o);
    for (std::size_t i = 0; i < v_.size(); ++i) v_[i] += o.v_[i];
    return *this;
  }
  SymTensor& operator-=(const SymTensor& o) {
    check_same(o);
    for (std::size_t i = 0; i < v_.size(); ++i) v_[i] -= o.v_[i];
    return *this;
  }
  SymTensor& operator*=(double c) {
    for (double& x : v_) x *= c;
    return *this;
  }

  std::size_t binom(int n, int r) const {
    if (r < 0 || n < 0 || r > n) return 0;
    return binom_[static_cast<std::size_t>(n) * (l_ + 1) + r];
  }

 private:
  void build_binom() {
    int nmax = d_ + l_;
    binom_.assign(static_cast<std::size_t>(nmax + 1) * (l_ + 1), 0);
    for (int n = 0; n <= nmax; ++n) {
      for (int r = 0; r <= std::min(n, l_); ++r) {
        std::size_t& c = binom_[static_cast<std::size_t>(n) * (l_ + 1) + r];
        if (r == 0 || r == n)
          c = 1;
        else
          c = binom_[static_cast<std::size_t>(n - 1) * (l_ + 1) + r - 1] +
              binom_[static_cast<std::size_t>(n - 1) * (l_ + 1) + r];
      }
    }
  }

  void check_index(const std::vector<int>& idx) const {
    if (static_cast<int>(idx.size()) != l_)
      throw std::invalid_argument("SymTensor: index order mismatch");
    for (int t = 0; t < l_; ++t) {
      if (idx[t] < 0 || idx[t] >= d_)
        throw std::out_of_range("SymTensor: index out of range");
      if (t > 0 && idx[t] < idx[t - 1])
        throw std::invalid_argument("SymTensor: index not sorted");
    }
  }

  void check_same(const SymTensor& o) const {
    if (o.d_ != d_ || o.l_ != l_)
      throw std::invalid_argument("SymTensor: shape mismatch");
  }

  int d_, l_;
  std::vector<double> v_;
  std::vector<std::size_t> binom_;
};

// Dump format: header "l d", then one "i_1 ... i_l value" line per canonical
// entry in rank order (indices 0-based). Round-trips exactly.
inline void write_tensor(std::ostream& os, const SymTensor& t) {
  os << t.order() << ' ' << t.dim() << '\n';
  t.for_each([&](const std::vector<int>& idx, std::size_t, double v, double) {
    for (int i : idx) os << i << ' ';
    os << format_double(v) << '\n';
  });
}

inline SymTensor read_tensor(std::istream& is) {
  int l, d;
  if (!(is >> l >> d)) throw std::runtime_error("tensor parse: header");
  SymTensor t(d, l);
  std::vector<int> idx(l);
  for (std::size_t r = 0; r < t.size(); ++r) {
    for (int& i : idx)
      if (!(is >> i)) throw std::runtime_error("tensor parse: index");
    double v;
    if (!(is >> v)) throw std::runtime_error("tensor parse: value");
    t[t.rank_of(idx)] = v;
  }
  return t;
}

}  // namespace mslearn
