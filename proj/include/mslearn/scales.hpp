#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "mslearn/common.hpp"
#include "mslearn/network.hpp"

namespace mslearn {

// Scale bookkeeping. T(gamma) = (Lambda^lambda_exp / R^2) (gamma/d)^(c_T k)
// underflows doubles after two or three descents at desk constants, so all
// internal arithmetic runs on ln(gamma); the plain-value entry points exist
// for interface parity and small exponents.
struct ScaleParams {
  int d = 1;
  int k = 1;
  double R = 1.0;
  double eps = 0.05;
  double Lambda = 0.05;     // detectability threshold
  double c_T = 2.0;         // T exponent is c_T * k; needs c_T * k > 1
  double lambda_exp = 10.0;
  double C0 = 1.0;          // eps' = eps / (C0 d^2 k^3 R)
  double anticonc_c = 0.05;
  double anticonc_cprime = 3.0;
  int gamma_floor_iters = 0;  // 0 -> ceil(log2(max(k,2))) + 3

  double ck() const {
    double v = c_T * k;
    if (v <= 1.0) throw std::invalid_argument("ScaleParams: c_T k <= 1");
    return v;
  }

  double eps_prime() const {
    return eps / (C0 * d * d * static_cast<double>(k) * k * k * R);
  }

  double log_T(double log_gamma) const {
    return lambda_exp * std::log(Lambda) - 2.0 * std::log(R) +
           ck() * (log_gamma - std::log(static_cast<double>(d)));
  }

  double T_of(double gamma) const {
    if (gamma <= 0.0 || gamma >= 1.0)
      throw std::invalid_argument("T_of: gamma outside (0,1)");
    return std::exp(log_T(std::log(gamma)));
  }

  // B and A(gamma) of the level closed form
  double level_B() const {
    return ck() * std::log(static_cast<double>(d)) +
           std::log(R * R / std::pow(Lambda, lambda_exp)) +
           (ck() - 1.0) * std::log(1.0 / eps_prime());
  }

  double level_A_log(double log_gamma) const {
    return (ck() - 1.0) * (std::log(eps_prime()) - log_gamma);
  }

  // L(gamma) = (0.9 / ln(ck)) ln(1 + A(gamma)/B); satisfies
  // L(T(gamma)) = 0.9 + L(gamma) exactly and L(eps') = 0.
  double level_log(double log_gamma) const {
    double b = level_B();
    double a = level_A_log(log_gamma);
    double arg = (b + a) / b;
    if (!(arg > 0.0)) throw std::domain_error("level: argument <= 0");
    return 0.9 / std::log(ck()) * std::log(arg);
  }

  double level(double gamma) const {
    if (gamma <= 0.0 || gamma >= 1.0)
      throw std::invalid_argument("level: gamma outside (0,1)");
    return level_log(std::log(gamma));
  }

  // inverse of the level map, in log space
  double log_gamma_of_level(double lvl) const {
    double b = level_B();
    double a = b * (std::exp(lvl * std::log(ck()) / 0.9) - 1.0);
    return std::log(eps_prime()) - a / (ck() - 1.0);
  }

  // descent scale sequence: lg(0) = ln(eps'/k_res),
  // lg(t+1) = log_T(lg(t) - ln k_res) - ln k_res
  double descent_scale_log(int t, int k_res) const {
    double lk = std::log(static_cast<double>(k_res));
    double lg = std::log(eps_prime()) - lk;
    for (int i = 0; i < t; ++i) lg = log_T(lg - lk) - lk;
    return lg;
  }

  int floor_iters() const {
    if (gamma_floor_iters > 0) return gamma_floor_iters;
    int lk = static_cast<int>(
        std::ceil(std::log2(static_cast<double>(std::max(k, 2)))));
    return lk + 3;
  }

  double log_gamma_floor() const {
    return descent_scale_log(floor_iters(), k);
  }

  // game threshold tau = L(gamma_floor)
  double tau_game() const { return level_log(log_gamma_floor()); }

  double max_level() const {
    double t = tau_game();
    return std::max(t + 2.0, 2.0 * t);
  }
};

// folded projections |<u_i, g>|, ascending, original indices retained
struct Projection {
  Vec g;
  std::vector<double> v;
  std::vector<int> order;  // order[slot] = original index
};

inline Projection project(const std::vector<Vec>& us, const Vec& g) {
  if (std::abs(g.norm() - 1.0) > 1e-9)
    throw std::invalid_argument("project: g must be unit");
  Projection p;
  p.g = g;
  std::vector<std::pair<double, int>> vals;
  vals.reserve(us.size());
  for (std::size_t i = 0; i < us.size(); ++i)
    vals.push_back({std::abs(us[i].dot(g)), static_cast<int>(i)});
  std::stable_sort(vals.begin(), vals.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  for (const auto& [val, idx] : vals) {
    p.v.push_back(val);
    p.order.push_back(idx);
  }
  return p;
}

inline Projection project(const AbsNetwork& net, const Vec& g) {
  std::vector<Vec> us;
  for (const auto& t : net.terms) us.push_back(t.u);
  return project(us, g);
}

inline Projection project(const ReluNetwork& net, const Vec& g) {
  std::vector<Vec> us;
  for (const auto& n : net.neurons) us.push_back(n.u);
  return project(us, g);
}

struct CloseFar {
  std::vector<int> close_slots, far_slots;
  bool gapped = false;
};

// Definitional core on sorted values, log-space thresholds:
// close iff |v_j - v_i| <= T(gamma), far iff |v_j - v_i| >= gamma.
// Gapped iff every index lands in exactly one of the two sets.
inline CloseFar close_far_with(const std::vector<double>& v, int i,
                               double log_gamma, double log_T_gamma) {
  CloseFar out;
  out.gapped = true;
  for (int j = 0; j < static_cast<int>(v.size()); ++j) {
    double diff = std::abs(v[j] - v[i]);
    bool is_close = diff == 0.0 || std::log(diff) <= log_T_gamma;
    bool is_far = diff > 0.0 && std::log(diff) >= log_gamma;
    if (is_close && !is_far)
      out.close_slots.push_back(j);
    else if (is_far && !is_close)
      out.far_slots.push_back(j);
    else
      out.gapped = false;
  }
  return out;
}

inline CloseFar close_far_sets(const Projection& proj, int i,
                               double log_gamma, const ScaleParams& p) {
  if (i < 0 || i >= static_cast<int>(proj.v.size()))
    throw std::out_of_range("close_far_sets: index");
  CloseFar cf = close_far_with(proj.v, i, log_gamma, p.log_T(log_gamma));
  // a scale below the descent floor never counts as gapped
  if (log_gamma < p.log_gamma_floor() - 1e-12) cf.gapped = false;
  return cf;
}

struct GapRecord {
  int slot = -1;    // position in the sorted projection
  int neuron = -1;  // original index
  double log_gamma = 0.0;
  double gamma = 0.0;  // exp(log_gamma); underflows to 0 harmlessly
  std::vector<int> close_slots, far_slots;
  std::vector<int> close_neurons, far_neurons;
  int descents = 0;  // scales tried before the hit
};

struct ScaleTraceRow {
  double log_gamma;
  int first_gapped_slot;  // -1 if none at this scale
};

// Descend scales from eps'/k_res; at each scale sweep slots in ascending
// order and return the first gapped one (largest scale wins, then smallest
// slot). Returns nothing exactly when the spread is at most eps'.
inline std::optional<GapRecord> find_gapped_scale(
    const Projection& proj, const ScaleParams& p,
    std::vector<ScaleTraceRow>* trace = nullptr) {
  int k_res = static_cast<int>(proj.v.size());
  if (k_res == 0) throw std::invalid_argument("find_gapped_scale: empty");
  double spread = proj.v.back() - proj.v.front();
  if (spread <= p.eps_prime()) return std::nullopt;
  double floor_lg = p.log_gamma_floor();
  int t = 0;
  while (true) {
    double lg = p.descent_scale_log(t, k_res);
    if (lg < floor_lg - 1e-12 && t > 0) break;
    double lT = p.log_T(lg);
    for (int i = 0; i < k_res; ++i) {
      CloseFar cf = close_far_with(proj.v, i, lg, lT);
      if (cf.gapped) {
        if (trace) trace->push_back({lg, i});
        GapRecord rec;
        rec.slot = i;
        rec.neuron = proj.order[i];
        rec.log_gamma = lg;
        rec.gamma = std::exp(lg);
        rec.close_slots = cf.close_slots;
        rec.far_slots = cf.far_slots;
        for (int s : cf.close_slots) rec.close_neurons.push_back(proj.order[s]);
        for (int s : cf.far_slots) rec.far_neurons.push_back(proj.order[s]);
        rec.descents = t;
        return rec;
      }
    }
    if (trace) trace->push_back({lg, -1});
    ++t;
    if (t > p.floor_iters() + 4)
      throw std::runtime_error("find_gapped_scale: descent exhausted");
  }
  throw std::runtime_error("find_gapped_scale: no gapped scale above floor");
}

inline double clump_weight(const GapRecord& gap,
                           const std::vector<double>& lambda_by_index) {
  double s = 0.0;
  for (int i : gap.close_neurons) s += lambda_by_index.at(i);
  return s;
}

inline bool detectable(const GapRecord& gap,
                       const std::vector<double>& lambda_by_index,
                       const ScaleParams& p) {
  return std::abs(clump_weight(gap, lambda_by_index)) > p.Lambda;
}

struct AnticoncResult {
  bool pairs = false;
  bool floor = false;
};

// Empirical anti-concentration bands for a direction g against unit vectors:
// pair directions (u_i +- u_j)/|..| must land in
// [c/(sqrt(d) k^2), c' sqrt(ln k)/sqrt(d)] and every |<u_i,g>| must clear
// c/(k sqrt(d)).
inline AnticoncResult check_anticoncentration(const std::vector<Vec>& us,
                                              const Vec& g,
                                              const ScaleParams& p) {
  int k = static_cast<int>(us.size());
  int d = static_cast<int>(g.size());
  double sqd = std::sqrt(static_cast<double>(d));
  AnticoncResult r;
  r.pairs = true;
  r.floor = true;
  double lo = p.anticonc_c / (sqd * k * k);
  double hi = p.anticonc_cprime *
              std::sqrt(std::log(static_cast<double>(std::max(k, 2)))) / sqd;
  for (int i = 0; i < k; ++i) {
    if (std::abs(us[i].dot(g)) < p.anticonc_c / (k * sqd)) r.floor = false;
    for (int j = i + 1; j < k; ++j) {
      for (double sign : {1.0, -1.0}) {
        Vec w = us[i] + sign * us[j];
        double n = w.norm();
        if (n < 1e-12) continue;  // antipodal pair, direction undefined
        double val = std::abs(w.dot(g)) / n;
        if (val < lo || val > hi) r.pairs = false;
      }
    }
  }
  return r;
}

}  // namespace mslearn
