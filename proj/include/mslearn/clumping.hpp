#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "mslearn/common.hpp"
#include "mslearn/rng.hpp"
#include "mslearn/scales.hpp"

namespace mslearn {

// Clumping game. States are vectors of non-negative reals with zero first
// and last entries. A move selects intervals (1-based, inclusive) subject to
// the format 1 = i_1 < j_1 <= i_2 < ... < j_m = k; overlapping or touching
// intervals merge into blocks and each block collapses to its minimum entry.

struct ClumpState {
  std::vector<double> w;

  int size() const { return static_cast<int>(w.size()); }
  bool terminal() const { return w.size() == 1; }

  void validate() const {
    if (w.empty()) throw std::invalid_argument("ClumpState: empty");
    for (double x : w)
      if (x < 0.0 || !std::isfinite(x))
        throw std::invalid_argument("ClumpState: entries must be >= 0");
    if (w.front() != 0.0 || w.back() != 0.0)
      throw std::invalid_argument("ClumpState: boundary entries must be 0");
  }
};

struct Move {
  std::vector<std::pair<int, int>> intervals;  // 1-based inclusive

  void validate_format(int k) const {
    if (intervals.empty()) throw std::invalid_argument("Move: empty");
    if (intervals.front().first != 1)
      throw std::invalid_argument("Move: must start at 1");
    if (intervals.back().second != k)
      throw std::invalid_argument("Move: must end at k");
    int prev_end = 0;
    for (auto [i, j] : intervals) {
      if (i < 1 || j > k || i >= j)
        throw std::invalid_argument("Move: bad interval");
      if (prev_end > i) throw std::invalid_argument("Move: interval order");
      prev_end = j;
    }
  }
};

// An interval is good when both endpoint entries are at most tau and the
// interior entries are either all at most tau or all exceed the larger
// endpoint by more than phi. Empty interiors are vacuously good.
inline bool is_legal(const ClumpState& s, const Move& m, double tau,
                     double phi = 1.0) {
  m.validate_format(s.size());
  for (auto [i, j] : m.intervals) {
    double a = s.w[i - 1], b = s.w[j - 1];
    if (a > tau || b > tau) return false;
    if (j == i + 1) continue;
    bool all_small = true, all_big = true;
    double cut = std::max(a, b) + phi;
    for (int t = i + 1; t < j; ++t) {
      double x = s.w[t - 1];
      if (x > tau) all_small = false;
      if (x <= cut) all_big = false;
    }
    if (!all_small && !all_big) return false;
  }
  return true;
}

// Applies a format-valid move: merge intervals that overlap or touch, then
// collapse each merged block to its minimum entry. Entries outside every
// block survive unchanged. Legality is the caller's concern.
inline ClumpState apply_move(const ClumpState& s, const Move& m) {
  m.validate_format(s.size());
  std::vector<std::pair<int, int>> blocks;
  for (auto iv : m.intervals) {
    if (!blocks.empty() && iv.first <= blocks.back().second)
      blocks.back().second = std::max(blocks.back().second, iv.second);
    else
      blocks.push_back(iv);
  }
  ClumpState out;
  int pos = 1;
  for (auto [i, j] : blocks) {
    for (; pos < i; ++pos) out.w.push_back(s.w[pos - 1]);
    double mn = s.w[i - 1];
    for (int t = i; t <= j; ++t) mn = std::min(mn, s.w[t - 1]);
    out.w.push_back(mn);
    pos = j + 1;
  }
  for (; pos <= s.size(); ++pos) out.w.push_back(s.w[pos - 1]);
  return out;
}

namespace detail {

// prefix [1, a] / suffix [b, k] anchors are usable when every entry they
// cover is at most tau (all-small branch)
inline bool range_small(const std::vector<double>& w, int i, int j,
                        double tau) {
  for (int t = i; t <= j; ++t)
    if (w[t - 1] > tau) return false;
  return true;
}

// complete a sorted nonempty interval list to the move format, or fail
inline bool anchor_move(const ClumpState& s, double tau,
                        std::vector<std::pair<int, int>>& iv) {
  int k = s.size();
  if (iv.empty()) return false;
  if (iv.front().first > 1) {
    int a = iv.front().first;
    if (!range_small(s.w, 1, a, tau)) return false;
    iv.insert(iv.begin(), {1, a});
  }
  if (iv.back().second < k) {
    int b = iv.back().second;
    if (!range_small(s.w, b, k, tau)) return false;
    iv.push_back({b, k});
  }
  return true;
}

}  // namespace detail

struct StrategyDiag {
  int low_count = 0;        // ground set of the round's run partition
  int move1_intervals = 0;  // partition blocks actually collapsed
};

// One strategy round at threshold tau - round (clamped at 0.5):
// move 1 collapses maximal runs of entries at or below the threshold, move 2
// swallows high blocks that exceed both neighbouring run minima by more than
// 1. Rounds where neither move can be anchored to the format return nothing;
// the threshold descent makes later rounds strictly easier.
inline std::vector<Move> strategy_step(const ClumpState& s, double tau,
                                       int round,
                                       StrategyDiag* diag = nullptr) {
  if (s.size() <= 1) return {};
  double thr = std::max(tau - round, 0.5);
  std::vector<Move> out;

  // move 1: collapse low runs of length >= 2
  std::vector<std::pair<int, int>> runs;  // maximal low runs
  int k = s.size();
  for (int i = 1; i <= k;) {
    if (s.w[i - 1] <= thr) {
      int j = i;
      while (j + 1 <= k && s.w[j] <= thr) ++j;
      runs.push_back({i, j});
      i = j + 1;
    } else {
      ++i;
    }
  }
  if (diag) {
    diag->low_count = 0;
    for (auto [a, b] : runs) diag->low_count += b - a + 1;
    diag->move1_intervals = 0;
  }
  std::vector<std::pair<int, int>> m1;
  for (auto [a, b] : runs)
    if (b > a) m1.push_back({a, b});
  int partition_blocks = static_cast<int>(m1.size());
  ClumpState cur = s;
  if (!m1.empty() && detail::anchor_move(s, tau, m1)) {
    Move mv{m1};
    if (!is_legal(s, mv, tau)) throw std::logic_error("strategy: move 1");
    if (diag) diag->move1_intervals = partition_blocks;
    out.push_back(mv);
    cur = apply_move(s, mv);
  }

  // move 2: eat high blocks over their flanking entries
  if (cur.size() > 1) {
    int n = cur.size();
    std::vector<std::pair<int, int>> eats;
    for (int i = 2; i <= n;) {
      if (cur.w[i - 1] > thr) {
        int j = i;
        double mn = cur.w[i - 1];
        while (j + 1 <= n && cur.w[j] > thr) {
          ++j;
          mn = std::min(mn, cur.w[j - 1]);
        }
        // boundary entries are 0, so flanks always exist
        double fl = cur.w[i - 2], fr = (j < n) ? cur.w[j] : 0.0;
        if (j < n && mn > std::max(fl, fr) + 1.0) eats.push_back({i - 1, j + 1});
        i = j + 1;
      } else {
        ++i;
      }
    }
    if (!eats.empty() && detail::anchor_move(cur, tau, eats)) {
      Move mv{eats};
      if (!is_legal(cur, mv, tau)) throw std::logic_error("strategy: move 2");
      out.push_back(mv);
    }
  }
  return out;
}

struct TranscriptStep {
  std::vector<double> before;
  Move move;
  std::vector<double> after;
  double phi = 1.0;   // legality margin the move was certified against
  bool legal = false;
};

struct Transcript {
  std::vector<double> initial, terminal;
  std::vector<TranscriptStep> steps;
  int rounds = 0;
  bool done = false;

  int moves() const { return static_cast<int>(steps.size()); }
};

// states never hold exactly one zero entry unless they are the terminal
// singleton; with the boundary invariant this is structural
inline void check_zero_entries(const ClumpState& s) {
  int zeros = 0;
  for (double x : s.w) zeros += (x == 0.0);
  if (zeros == 1 && s.size() != 1)
    throw std::logic_error("clump state: lone zero in a long vector");
}

constexpr double kMoveBudgetConstant = 5.0;  // move bound C log2(k)

inline double default_tau(int k) {
  return std::ceil(std::log2(static_cast<double>(std::max(k, 2)))) + 2.0;
}

inline Transcript play_noiseless(const std::vector<double>& w, double tau) {
  ClumpState s{w};
  s.validate();
  Transcript tr;
  tr.initial = w;
  int round = 0;
  int idle = 0;
  while (!s.terminal()) {
    auto moves = strategy_step(s, tau, round);
    if (moves.empty()) {
      ++idle;
      if (++round > tau + 20.0 || idle > tau + 20.0)
        throw std::runtime_error("play_noiseless: no progress");
      continue;
    }
    idle = 0;
    for (const Move& m : moves) {
      TranscriptStep step;
      step.before = s.w;
      step.move = m;
      step.legal = is_legal(s, m, tau);
      if (!step.legal) throw std::logic_error("play_noiseless: illegal move");
      s = apply_move(s, m);
      check_zero_entries(s);
      step.after = s.w;
      tr.steps.push_back(std::move(step));
    }
    ++round;
  }
  tr.rounds = round;
  tr.terminal = s.w;
  tr.done = s.w.size() == 1 && s.w[0] == 0.0;
  if (!tr.done) throw std::logic_error("play_noiseless: bad terminal");
  return tr;
}

// A perturbation may lower any entry, but entries above 1 may drop by at
// most delta. Raising any entry is invalid.
inline ClumpState perturb(const ClumpState& s, const std::vector<double>& p,
                          double delta) {
  if (p.size() != s.w.size()) throw std::invalid_argument("perturb: length");
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] < 0.0 || p[i] > s.w[i])
      throw std::invalid_argument("perturb: entry raised or negative");
    if (s.w[i] > 1.0 && p[i] < s.w[i] - delta)
      throw std::invalid_argument("perturb: dropped too far");
  }
  ClumpState out{p};
  return out;
}

// adversary maps (state, delta) to a perturbed vector
using Adversary =
    std::function<std::vector<double>(const std::vector<double>&, double, Rng&)>;

inline std::vector<double> adversary_null(const std::vector<double>& w, double,
                                          Rng&) {
  return w;
}

inline std::vector<double> adversary_worst(const std::vector<double>& w,
                                           double delta, Rng&) {
  std::vector<double> p = w;
  for (double& x : p) x = std::max(0.0, x - delta);
  return p;
}

inline std::vector<double> adversary_random(const std::vector<double>& w,
                                            double delta, Rng& rng) {
  std::vector<double> p = w;
  for (double& x : p) {
    if (x > 1.0)
      x -= delta * rng.next_double();
    else
      x *= rng.next_double();  // entries at most 1 may drop arbitrarily
  }
  return p;
}

// Noisy game: run the same strategy against the adversarially perturbed
// states. Each move is certified 0.99-legal on the state it is applied to;
// since moves are built from the current state and a single perturbation
// drops entries above 1 by at most delta <= 0.01, the certificate holds for
// every adversary.
inline Transcript play_noisy(const std::vector<double>& w, double tau,
                             const Adversary& adv, Rng& rng,
                             double delta = 0.0) {
  ClumpState s{w};
  s.validate();
  if (delta == 0.0) delta = 1.0 / (100.0 * std::max<std::size_t>(w.size(), 1));
  if (delta > 0.01) throw std::invalid_argument("play_noisy: delta > 0.01");
  Transcript tr;
  tr.initial = w;
  int round = 0;
  int idle = 0;
  while (!s.terminal()) {
    auto moves = strategy_step(s, tau, round);
    if (moves.empty()) {
      ++idle;
      if (++round > tau + 20.0 || idle > tau + 20.0)
        throw std::runtime_error("play_noisy: no progress");
      continue;
    }
    idle = 0;
    for (const Move& m : moves) {
      TranscriptStep step;
      step.before = s.w;
      step.move = m;
      step.phi = 0.99;
      step.legal = is_legal(s, m, tau, 0.99);
      s = apply_move(s, m);
      check_zero_entries(s);
      // adversary perturbs after every move unless the game just ended
      if (!s.terminal()) s = perturb(s, adv(s.w, delta, rng), delta);
      step.after = s.w;
      tr.steps.push_back(std::move(step));
    }
    ++round;
  }
  tr.rounds = round;
  tr.terminal = s.w;
  tr.done = s.w.size() == 1;
  return tr;
}

struct GameSetup {
  ClumpState state;
  double tau = 0.0;  // level of the descent floor
  double cap = 0.0;  // sentinel for coincident projections
};

// Bridge from a sorted projection to an initial game vector: k+1 entries,
// zero at the boundary, interior entry i the level of the gap v_i - v_{i-1}
// (clamped to [0, cap]; coincident projections take the cap).
inline GameSetup from_projection(const Projection& proj,
                                 const ScaleParams& p) {
  GameSetup gs;
  gs.tau = p.tau_game();
  gs.cap = p.max_level();
  int k = static_cast<int>(proj.v.size());
  gs.state.w.assign(k + 1, 0.0);
  for (int i = 1; i < k; ++i) {
    double gap = proj.v[i] - proj.v[i - 1];
    double lvl;
    if (gap <= 0.0)
      lvl = gs.cap;
    else if (gap >= 1.0)
      lvl = 0.0;
    else
      lvl = std::min(std::max(p.level(gap), 0.0), gs.cap);
    gs.state.w[i] = lvl;
  }
  return gs;
}

}  // namespace mslearn
