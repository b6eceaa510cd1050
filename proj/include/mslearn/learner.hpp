#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mslearn/clumping.hpp"
#include "mslearn/common.hpp"
#include "mslearn/moments.hpp"
#include "mslearn/network.hpp"
#include "mslearn/powersum.hpp"
#include "mslearn/rng.hpp"
#include "mslearn/scales.hpp"

namespace mslearn {

enum class BranchMode { exhaustive, oracle, beam };

// Batches on demand: (count, seed) -> labeled samples. Stages share batches
// by seed, so branches see identical read-only shards.
using SampleSource = std::function<SampleBatch(std::size_t, std::uint64_t)>;

inline SampleSource gaussian_source(ReluNetwork net, double noise_sigma = 0.0) {
  return [net, noise_sigma](std::size_t n, std::uint64_t seed) {
    return sample_labeled(net, n, seed, noise_sigma);
  };
}

inline SampleSource gaussian_source(AbsNetwork net, double noise_sigma = 0.0) {
  return [net, noise_sigma](std::size_t n, std::uint64_t seed) {
    return sample_labeled(net, n, seed, noise_sigma);
  };
}

struct LearnerConfig {
  ScaleParams scales;
  double upsilon = 0.05;    // direction net granularity
  double upsilon_w = 0.05;  // weight grid step on [-R, R]
  double omega = 0.0;       // two-neuron cutoff; 0 -> sqrt(eps')
  std::size_t n_stage = 1'000'000;  // samples per stage
  std::size_t n_validate = 100'000;
  std::size_t n_beam = 10'000;  // beam scoring shard
  BranchMode branch_mode = BranchMode::oracle;
  int beam_width = 4;
  int max_stages = 0;  // 0 -> k + 2
  double eps = 0.05;   // target squared loss
  std::uint64_t seed = 1;
  std::size_t branch_cap = 4096;    // live-branch cap (exhaustive)
  std::size_t net_cap = 200'000;    // direction enumeration cap
  double weight_cap_multiple = 0.0;  // 0 -> 2k; sum |lambda_hat| <= mult * R

  // Instance geometry. Every mode uses it for scale discovery (projections
  // of the not-yet-resolved directions); the oracle additionally reads the
  // witness choices from it. Sample-based scale discovery is out of scope.
  std::optional<ReluNetwork> oracle_truth;

  void validate() const {
    if (upsilon <= 0.0 || upsilon_w <= 0.0)
      throw std::invalid_argument("LearnerConfig: granularity must be > 0");
    if (n_stage < 1 || n_validate < 1 || n_beam < 1)
      throw std::invalid_argument("LearnerConfig: budgets must be >= 1");
    if (beam_width < 1)
      throw std::invalid_argument("LearnerConfig: beam width must be >= 1");
    if (eps <= 0.0) throw std::invalid_argument("LearnerConfig: eps");
    if (branch_cap < 1) throw std::invalid_argument("LearnerConfig: cap");
    if (!oracle_truth)
      throw std::invalid_argument("LearnerConfig: instance geometry missing");
  }

  double omega_eff() const {
    return omega > 0.0 ? omega : std::sqrt(scales.eps_prime());
  }

  int max_stages_eff() const {
    return max_stages > 0 ? max_stages : scales.k + 2;
  }

  double weight_cap() const {
    double mult =
        weight_cap_multiple > 0.0 ? weight_cap_multiple : 2.0 * scales.k;
    return mult * scales.R;
  }
};

// The theoretical granularity the analysis asks for; desk scale runs on the
// configured value and reports both.
inline double theoretical_upsilon(double xi_prime, double c1, double c2) {
  if (c1 <= 0.0) throw std::invalid_argument("theoretical_upsilon: c1");
  return std::sqrt(xi_prime / c1) + std::pow(c2 / c1, 0.25);
}

// Constants of the detectable-clump signal bound: a slot whose cluster has
// weight above Lambda, positions separated by gamma across clusters and at
// most beta within, and |projection| at least alpha, has an even moment
// contraction of size at least c1 |r|^4 - c2 along r. Inside the learner
// beta is T(gamma) at the certified scale; exact planted clusters pass 0.
struct SpecificConstants {
  double c1 = 0.0;
  double c2 = 0.0;
  double alpha = 0.0;
  double gamma = 0.0;
  double beta = 0.0;
};

inline SpecificConstants powersum_specific_constants(const ScaleParams& p,
                                                     double alpha,
                                                     double log_gamma,
                                                     double beta) {
  if (alpha <= 0.0)
    throw std::invalid_argument("powersum_specific_constants: alpha");
  if (beta < 0.0)
    throw std::invalid_argument("powersum_specific_constants: beta");
  SpecificConstants sc;
  sc.alpha = alpha;
  sc.gamma = std::exp(log_gamma);
  sc.beta = beta;
  double k = static_cast<double>(p.k);
  double ln_c1 = std::log(p.Lambda) - std::log(2.0 * k) +
                 k * (2.0 * std::log(alpha) + 2.0 * log_gamma -
                      std::log(4.0 * k));
  sc.c1 = std::exp(ln_c1);
  sc.c2 = kPowersumC * p.R * k * std::max(k - 1.0, 1.0) * beta;
  return sc;
}

// Calibrated constants of the two clump-replacement error lemmas.
constexpr double kSubtractLinearC = 2.0;  // cost of zeroing undetectables
constexpr double kEpsCoverC = 3.0;        // cost of grid-rounding detectables

inline double subtract_linear_bound(const ScaleParams& p, double t_gamma) {
  double k = static_cast<double>(p.k);
  return kSubtractLinearC *
         (t_gamma * k * k * k * std::sqrt(static_cast<double>(p.d)) +
          k * p.Lambda);
}

inline double epscover_bound(const ScaleParams& p, double upsilon) {
  double k = static_cast<double>(p.k);
  return kEpsCoverC * (p.Lambda + k * k * p.R * upsilon);
}

namespace detail {

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b,
                              std::uint64_t c = 0) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(a) ^ b) ^ c);
}

inline Mat matrix_of(const SymTensor& t2) {
  if (t2.order() != 2) throw std::invalid_argument("matrix_of: order != 2");
  int d = t2.dim();
  return contract(t2, Vec::Zero(d)).m;
}

inline Vec top_abs_eigvec(const Mat& m) {
  Eigen::SelfAdjointEigenSolver<Mat> es(m);
  int best = 0;
  for (int i = 1; i < m.rows(); ++i)
    if (std::abs(es.eigenvalues()[i]) > std::abs(es.eigenvalues()[best]))
      best = i;
  return es.eigenvectors().col(best);
}

}  // namespace detail

// Floor to the step grid on [-R, R]. A 1e-12 relative slop keeps exact grid
// points from dropping a cell.
inline double floor_weight(double x, double R, double step) {
  if (step <= 0.0 || R <= 0.0) throw std::invalid_argument("floor_weight");
  long jmax = static_cast<long>(std::floor(2.0 * R / step + 1e-9));
  long j = static_cast<long>(std::floor((x + R) / step + 1e-12));
  j = std::max(0L, std::min(j, jmax));
  return -R + static_cast<double>(j) * step;
}

// An upsilon-net over the unit sphere of span(basis), realized as the
// integer lattice of step upsilon/sqrt(r) in basis coordinates, restricted
// to the shell |c| in [1 - upsilon/2, 1 + upsilon/2] and normalized.
// round_direction lands in the same shell, so its output is a net element.
class DirectionNet {
 public:
  DirectionNet(Mat basis, double upsilon)
      : basis_(std::move(basis)), upsilon_(upsilon) {
    if (upsilon_ <= 0.0) throw std::invalid_argument("DirectionNet: upsilon");
    r_ = static_cast<int>(basis_.cols());
    if (r_ < 1) throw std::invalid_argument("DirectionNet: empty basis");
    delta_ = upsilon_ / std::sqrt(static_cast<double>(r_));
  }

  int span_dim() const { return r_; }
  double delta() const { return delta_; }
  const Mat& basis() const { return basis_; }

  // Project onto the span, round coordinates to the lattice, normalize.
  // Empty when the projection is degenerate. The result is within upsilon
  // of the normalized projection.
  std::optional<Vec> round_direction(const Vec& v) const {
    Vec c = basis_.transpose() * v;
    double n = c.norm();
    if (n < 1e-9) return std::nullopt;
    c /= n;
    Vec rounded(r_);
    for (int i = 0; i < r_; ++i)
      rounded[i] = delta_ * std::round(c[i] / delta_);
    double rn = rounded.norm();
    if (rn < 1e-12) return std::nullopt;  // unreachable for upsilon < 2
    return basis_ * (rounded / rn);
  }

  // Lattice points in the shell, before gcd deduplication. Cheap integer
  // recursion; used for the capacity check.
  std::size_t count_shell() const {
    std::vector<long> c(r_, 0);
    std::size_t n = 0;
    count_rec(0, 0.0, c, n);
    return n;
  }

  // Deterministic enumeration (lexicographic lattice order, first
  // occurrence of each primitive integer direction wins).
  std::vector<Vec> enumerate(std::size_t cap) const {
    std::size_t n = count_shell();
    if (n > cap) {
      double shrink = static_cast<double>(n) / static_cast<double>(cap);
      double req =
          upsilon_ * std::pow(shrink, 1.0 / std::max(1, r_ - 1)) * 1.1;
      throw CapacityError(n, req);
    }
    std::vector<Vec> out;
    std::set<std::vector<long>> seen;
    std::vector<long> c(r_, 0);
    emit_rec(0, 0.0, c, seen, out);
    return out;
  }

 private:
  long coord_max() const {
    return static_cast<long>(std::ceil((1.0 + upsilon_) / delta_));
  }

  bool in_shell(double sq) const {
    double lo = 1.0 - upsilon_ / 2.0 - 1e-12;
    double hi = 1.0 + upsilon_ / 2.0 + 1e-12;
    double nrm = std::sqrt(sq);
    return nrm >= lo && nrm <= hi;
  }

  void count_rec(int i, double sq, std::vector<long>& c, std::size_t& n) const {
    double hi = 1.0 + upsilon_ / 2.0 + 1e-12;
    if (std::sqrt(sq) > hi) return;
    if (i == r_) {
      if (in_shell(sq)) ++n;
      return;
    }
    long m = coord_max();
    for (long t = -m; t <= m; ++t) {
      double x = delta_ * static_cast<double>(t);
      double s2 = sq + x * x;
      if (s2 > hi * hi) continue;
      c[i] = t;
      count_rec(i + 1, s2, c, n);
    }
    c[i] = 0;
  }

  void emit_rec(int i, double sq, std::vector<long>& c,
                std::set<std::vector<long>>& seen,
                std::vector<Vec>& out) const {
    double hi = 1.0 + upsilon_ / 2.0 + 1e-12;
    if (i == r_) {
      if (!in_shell(sq)) return;
      std::vector<long> prim = c;
      long g = 0;
      for (long x : prim) g = std::gcd(g, std::abs(x));
      if (g == 0) return;
      for (long& x : prim) x /= g;
      if (!seen.insert(prim).second) return;
      Vec cd(r_);
      for (int t = 0; t < r_; ++t) cd[t] = static_cast<double>(c[t]);
      out.push_back(basis_ * (cd / cd.norm()));
      return;
    }
    long m = coord_max();
    for (long t = -m; t <= m; ++t) {
      double x = delta_ * static_cast<double>(t);
      double s2 = sq + x * x;
      if (s2 > hi * hi) continue;
      c[i] = t;
      emit_rec(i + 1, s2, c, seen, out);
    }
    c[i] = 0;
  }

  Mat basis_;
  double upsilon_;
  double delta_ = 0.0;
  int r_ = 0;
};

// Joint span of the top-k eigendirections (by magnitude) of each matrix,
// orthonormalized; dimension capped by rank and by k(k+2).
inline Mat pca_subspace(const std::vector<ContractedMatrix>& ms, int k,
                        double sigma_tol = 1e-12) {
  if (ms.empty()) throw std::invalid_argument("pca_subspace: no matrices");
  if (k < 1) throw std::invalid_argument("pca_subspace: k");
  int d = static_cast<int>(ms.front().m.rows());
  std::vector<Vec> cols;
  for (const auto& cm : ms) {
    if (cm.m.rows() != d || cm.m.cols() != d)
      throw std::invalid_argument("pca_subspace: shape mismatch");
    Eigen::SelfAdjointEigenSolver<Mat> es(cm.m);
    std::vector<int> idx(d);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) {
      return std::abs(es.eigenvalues()[a]) > std::abs(es.eigenvalues()[b]);
    });
    double top = std::abs(es.eigenvalues()[idx[0]]);
    for (int t = 0; t < std::min(k, d); ++t) {
      double ev = std::abs(es.eigenvalues()[idx[t]]);
      if (ev <= sigma_tol || ev <= sigma_tol * top) break;
      cols.push_back(es.eigenvectors().col(idx[t]));
    }
  }
  if (cols.empty()) return Mat(d, 0);
  Mat stack(d, static_cast<int>(cols.size()));
  for (std::size_t i = 0; i < cols.size(); ++i)
    stack.col(static_cast<int>(i)) = cols[i];
  Eigen::JacobiSVD<Mat> svd(stack, Eigen::ComputeThinU);
  double smax = svd.singularValues()[0];
  int cap = std::min(d, k * (k + 2));
  int r = 0;
  for (int i = 0; i < svd.singularValues().size() && r < cap; ++i) {
    if (svd.singularValues()[i] > std::max(sigma_tol, 1e-9 * smax)) ++r;
  }
  return svd.matrixU().leftCols(r);
}

// One m-neuron guess: directions from the net, weights from the floor grid.
struct NetGuess {
  std::vector<Vec> dirs;
  std::vector<double> weights;
};

// Deterministic stream over m in {1..k_max}: direction multisets (indices
// non-decreasing) crossed with independent weight grid choices.
class CandidateStream {
 public:
  CandidateStream(const Mat& basis, double upsilon, int k_max, double R,
                  std::size_t cap = 200'000, double upsilon_w = 0.0)
      : k_max_(k_max) {
    if (k_max < 1) throw std::invalid_argument("candidate_net: k_max");
    step_ = upsilon_w > 0.0 ? upsilon_w : upsilon;
    DirectionNet net(basis, upsilon);
    dirs_ = net.enumerate(cap);
    long jmax = static_cast<long>(std::floor(2.0 * R / step_ + 1e-9));
    for (long j = 0; j <= jmax; ++j)
      weights_.push_back(-R + static_cast<double>(j) * step_);
    double total = 0.0;
    for (int m = 1; m <= k_max_; ++m) {
      double ways = 1.0;
      for (int t = 0; t < m; ++t)
        ways *= static_cast<double>(dirs_.size() + t) /
                static_cast<double>(t + 1);
      total += ways * std::pow(static_cast<double>(weights_.size()), m);
      if (total > static_cast<double>(cap) * 64.0)
        throw CapacityError(static_cast<std::size_t>(total), upsilon * 2.0);
    }
    m_ = 1;
    dir_idx_.assign(1, 0);
    w_idx_.assign(1, 0);
    fresh_ = true;
  }

  const std::vector<Vec>& directions() const { return dirs_; }
  const std::vector<double>& weight_grid() const { return weights_; }

  bool next(NetGuess& out) {
    if (m_ > k_max_) return false;
    if (!fresh_ && !advance()) return false;
    fresh_ = false;
    out.dirs.clear();
    out.weights.clear();
    for (int t = 0; t < m_; ++t) {
      out.dirs.push_back(dirs_[dir_idx_[t]]);
      out.weights.push_back(weights_[w_idx_[t]]);
    }
    return true;
  }

 private:
  bool advance() {
    for (int t = m_ - 1; t >= 0; --t) {
      if (++w_idx_[t] < weights_.size()) {
        for (int s = t + 1; s < m_; ++s) w_idx_[s] = 0;
        return true;
      }
    }
    std::fill(w_idx_.begin(), w_idx_.end(), 0);
    for (int t = m_ - 1; t >= 0; --t) {
      if (++dir_idx_[t] < dirs_.size()) {
        for (int s = t + 1; s < m_; ++s) dir_idx_[s] = dir_idx_[t];
        return true;
      }
    }
    ++m_;
    if (m_ > k_max_) return false;
    dir_idx_.assign(m_, 0);
    w_idx_.assign(m_, 0);
    return true;
  }

  int k_max_;
  double step_ = 0.0;
  std::vector<Vec> dirs_;
  std::vector<double> weights_;
  int m_ = 1;
  std::vector<std::size_t> dir_idx_, w_idx_;
  bool fresh_ = true;
};

inline CandidateStream candidate_net(const Mat& basis, double upsilon,
                                     int k_max, double R,
                                     std::size_t cap = 200'000,
                                     double upsilon_w = 0.0) {
  return CandidateStream(basis, upsilon, k_max, R, cap, upsilon_w);
}

struct TwoNeuronFit {
  double mu_plus = 0.0;   // weight of relu(<u, x>)
  double mu_minus = 0.0;  // weight of relu(-<u, x>)
  Vec u;
  Vec w_hat;       // estimated residual linear part
  double a = 0.0;  // abs weight along u
  double b = 0.0;  // linear weight along u
  bool zero = false;
  bool degenerate = false;  // contraction with g was unreliable
  AbsNetwork h;

  ReluNetwork as_relu_pair() const {
    ReluNetwork n;
    n.d = static_cast<int>(u.size());
    n.R = std::abs(mu_plus) / 2.0 + std::abs(mu_minus) / 2.0;
    n.neurons.push_back({mu_plus, u});
    n.neurons.push_back({mu_minus, Vec(-u)});
    return n;
  }
};

// Case 1 fit: first residual moment gives the linear part, the second gives
// the single abs direction; mu_+- = a +- b reproduce the relu pair. The
// returned hypothesis keeps the full estimated linear part in its w slot,
// so off-axis remainders are not dropped. Direction comes from the
// g-contraction of the second moment when g is supplied (flagged degenerate
// and replaced by the top eigendirection if the contraction is tiny), else
// from the top eigendirection.
inline TwoNeuronFit two_neuron_fit(const SampleBatch& batch,
                                   const AbsNetwork& learned,
                                   const LearnerConfig& cfg,
                                   const Vec& g = Vec()) {
  int d = learned.d;
  if (batch.X.cols() != d)
    throw std::invalid_argument("two_neuron_fit: dim mismatch");
  Vec resid = batch.y - evaluate_batch(learned, batch.X);
  SymTensor t1 = estimate_moments(batch.X, resid, 1);
  TwoNeuronFit fit;
  fit.w_hat = Vec(d);
  for (int j = 0; j < d; ++j) fit.w_hat[j] = t1[static_cast<std::size_t>(j)];
  Mat M = detail::matrix_of(estimate_moments(batch.X, resid, 2));
  if (g.size() == d) {
    Vec mg = M * g;
    double floor = cfg.scales.anticonc_c /
                   (cfg.scales.k * std::sqrt(static_cast<double>(d)));
    if (mg.norm() <= floor * M.norm() || mg.norm() < 1e-14) {
      fit.degenerate = true;
      fit.u = detail::top_abs_eigvec(M);
    } else {
      fit.u = mg.normalized();
    }
  } else {
    fit.u = detail::top_abs_eigvec(M);
  }
  fit.a = fit.u.dot(M * fit.u);
  fit.b = fit.w_hat.dot(fit.u);
  fit.mu_plus = fit.a + fit.b;
  fit.mu_minus = fit.a - fit.b;
  double omega = cfg.omega_eff();
  if (std::abs(fit.mu_plus) < omega && std::abs(fit.mu_minus) < omega) {
    fit.zero = true;
    fit.h = AbsNetwork::zero(d, cfg.scales.R);
  } else {
    fit.h.d = d;
    fit.h.R = cfg.scales.R;
    fit.h.w = fit.w_hat;
    fit.h.terms.push_back({fit.a, fit.u});
  }
  return fit;
}

struct ClumpDecision {
  std::vector<int> slots;    // positions in the stage projection
  std::vector<int> neurons;  // original indices
  double true_weight = 0.0;  // abs-form clump sum
  bool detectable = false;
  bool skipped = false;
  double lambda_hat = 0.0;
  Vec u_hat;
  double dir_err = 0.0;  // distance of u_hat to the clump representative
};

struct StageRecord {
  int stage = 0;
  int kase = 0;  // 1 or 2
  int g_retries = 0;
  bool anticonc_ok = false;
  double spread = 0.0;
  double log_gamma = 0.0;
  int descents = 0;
  int gapped_slot = -1;
  int basis_dim = 0;
  std::vector<ClumpDecision> clumps;
  std::vector<double> game_vec;  // game vector of the stage projection
  std::vector<std::pair<int, int>> game_move;
  // Case 1 summary
  double mu_plus = 0.0, mu_minus = 0.0, a = 0.0, b = 0.0;
  bool zero_fit = false;
  bool degenerate = false;
};

struct LearnerState {
  AbsNetwork learned;
  std::vector<char> resolved;
  int stage = 0;
  std::vector<StageRecord> trace;  // branch log
  double residual_error = -1.0;
  bool terminal = false;

  void check_weight_cap(const LearnerConfig& cfg) const {
    if (learned.weight_total() > cfg.weight_cap() + 1e-9)
      throw std::logic_error("LearnerState: learned weight exceeds cap");
  }
};

struct Candidate {
  AbsNetwork net;
  double loss = 0.0;
  bool complete = true;
  int stages = 0;
  std::vector<StageRecord> trace;
};

struct LearnerResult {
  std::vector<Candidate> candidates;
  bool complete = true;
};

namespace detail {

inline double empirical_sq_loss(const AbsNetwork& net, const SampleBatch& b) {
  Vec diff = b.y - evaluate_batch(net, b.X);
  return diff.squaredNorm() / static_cast<double>(b.size());
}

struct StageClump {
  std::vector<int> slots;
  std::vector<int> neurons;
};

// All disjoint clumps certified gapped at the stage scale, ascending slots.
inline std::vector<StageClump> certified_clumps(const Projection& proj,
                                                double log_gamma,
                                                const ScaleParams& p) {
  std::vector<StageClump> out;
  std::vector<char> taken(proj.v.size(), 0);
  double lt = p.log_T(log_gamma);
  for (int i = 0; i < static_cast<int>(proj.v.size()); ++i) {
    if (taken[i]) continue;
    CloseFar cf = close_far_with(proj.v, i, log_gamma, lt);
    if (!cf.gapped) continue;
    bool clash = false;
    for (int s : cf.close_slots)
      if (taken[s]) clash = true;
    if (clash) continue;
    StageClump c;
    for (int s : cf.close_slots) {
      taken[s] = 1;
      c.slots.push_back(s);
      c.neurons.push_back(proj.order[s]);
    }
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace detail

// Algorithm: per stage project the unresolved true directions along a fresh
// conditioned g. If the spread is within eps', finish the branch with the
// two-neuron fit. Otherwise resolve every clump certified at the first
// gapped scale: detectable clumps get a direction from the moment-subspace
// net and a grid-rounded weight (with the clump's linear share, so learned
// terms behave like relu pairs), undetectable clumps are recorded as zero
// skips. Branch mode picks the net elements: the oracle takes the witness
// choice, exhaustive forks on every (direction, weight), beam forks and
// keeps the best-scoring width.
inline LearnerResult recursive_learn(const SampleSource& source,
                                     const LearnerConfig& cfg) {
  cfg.validate();
  const ReluNetwork& truth = *cfg.oracle_truth;
  AbsNetwork truth_abs = to_abs_form(truth);
  int d = truth.d;
  int k = static_cast<int>(truth.neurons.size());
  const ScaleParams& sp = cfg.scales;

  LearnerResult result;
  std::vector<LearnerState> live(1);
  live[0].learned = AbsNetwork::zero(d, sp.R);
  live[0].resolved.assign(k, 0);

  SampleBatch beam_shard;
  if (cfg.branch_mode == BranchMode::beam)
    beam_shard = source(cfg.n_beam, detail::mix_seed(cfg.seed, 0xBEA));

  std::vector<Candidate> done;
  for (int stage = 1; stage <= cfg.max_stages_eff() && !live.empty();
       ++stage) {
    std::uint64_t stage_sample_seed = detail::mix_seed(cfg.seed, stage, 1);
    SampleBatch batch;  // drawn lazily, shared by every branch this stage
    bool have_batch = false;
    auto need_batch = [&]() -> SampleBatch& {
      if (!have_batch) {
        batch = source(cfg.n_stage, stage_sample_seed);
        have_batch = true;
      }
      return batch;
    };

    std::vector<LearnerState> next_live;
    for (std::size_t bi = 0; bi < live.size(); ++bi) {
      LearnerState st = std::move(live[bi]);
      st.stage = stage;

      std::vector<Vec> us;
      std::vector<int> index_map;
      for (int i = 0; i < k; ++i)
        if (!st.resolved[i]) {
          us.push_back(truth.neurons[i].u);
          index_map.push_back(i);
        }

      StageRecord rec;
      rec.stage = stage;

      // conditioned projection direction; shared across branches by seed
      Vec g;
      Projection proj;
      std::optional<GapRecord> gap;
      if (!us.empty()) {
        for (int attempt = 0; attempt < 10; ++attempt) {
          Rng grng(detail::mix_seed(cfg.seed, stage, 100 + attempt));
          g = grng.unit_vec(d);
          AnticoncResult ac = check_anticoncentration(us, g, sp);
          rec.g_retries = attempt;
          rec.anticonc_ok = ac.pairs && ac.floor;
          if (rec.anticonc_ok) break;
        }
        proj = project(us, g);
        rec.spread = proj.v.back() - proj.v.front();
        gap = find_gapped_scale(proj, sp);
      }

      if (!gap) {
        // Case 1: single effective direction (or nothing) left
        rec.kase = 1;
        TwoNeuronFit fit =
            two_neuron_fit(need_batch(), st.learned, cfg,
                           us.empty() ? Vec() : g);
        rec.mu_plus = fit.mu_plus;
        rec.mu_minus = fit.mu_minus;
        rec.a = fit.a;
        rec.b = fit.b;
        rec.zero_fit = fit.zero;
        rec.degenerate = fit.degenerate;
        st.trace.push_back(rec);

        Candidate cand;
        cand.net = st.learned;
        if (!fit.zero) {
          cand.net.w += fit.h.w;
          for (const auto& t : fit.h.terms) cand.net.terms.push_back(t);
        }
        cand.stages = stage;
        cand.trace = st.trace;
        done.push_back(std::move(cand));
        continue;
      }

      // Case 2: resolve the clumps certified at the found scale
      rec.kase = 2;
      rec.log_gamma = gap->log_gamma;
      rec.descents = gap->descents;
      rec.gapped_slot = gap->slot;
      GameSetup gs = from_projection(proj, sp);
      rec.game_vec = gs.state.w;
      auto moves = strategy_step(gs.state, gs.tau, stage - 1);
      if (!moves.empty()) rec.game_move = moves.front().intervals;

      auto clumps = detail::certified_clumps(proj, gap->log_gamma, sp);
      // projection slots index the unresolved subset; map back to neurons
      for (auto& c : clumps)
        for (int& n : c.neurons) n = index_map[n];

      // residual moment contractions feed the direction subspace
      std::vector<ContractedMatrix> cms;
      bool any_detectable = false;
      for (const auto& c : clumps) {
        double wsum = 0.0;
        for (int n : c.neurons) wsum += truth_abs.terms[n].lambda;
        if (std::abs(wsum) > sp.Lambda) any_detectable = true;
      }
      Mat basis;
      std::optional<DirectionNet> dnet;
      if (any_detectable) {
        for (int l = 2; l <= 2 * k + 2; l += 2) {
          SymTensor t =
              estimate_residual_moments(need_batch(), st.learned, l);
          cms.push_back(contract(t, g));
        }
        basis = pca_subspace(cms, k);
        rec.basis_dim = static_cast<int>(basis.cols());
        if (basis.cols() > 0) dnet.emplace(basis, cfg.upsilon);
      }

      struct Resolution {
        LearnerState st;
        StageRecord rec;
      };
      std::vector<Resolution> partial;
      partial.push_back({std::move(st), rec});

      for (const auto& clump : clumps) {
        double wsum = 0.0;
        Vec rep = Vec::Zero(d);
        for (int n : clump.neurons) {
          double l = truth_abs.terms[n].lambda;
          wsum += l;
          double sgn = truth.neurons[n].u.dot(g) < 0.0 ? -1.0 : 1.0;
          rep += l * sgn * truth.neurons[n].u;
        }
        bool det = std::abs(wsum) > sp.Lambda;

        ClumpDecision base;
        base.slots = clump.slots;
        base.neurons = clump.neurons;
        base.true_weight = wsum;
        base.detectable = det;

        std::vector<Resolution> expanded;
        for (auto& res : partial) {
          if (!det) {
            ClumpDecision dec = base;
            dec.skipped = true;
            Resolution nx = res;
            for (int n : clump.neurons) nx.st.resolved[n] = 1;
            nx.rec.clumps.push_back(dec);
            expanded.push_back(std::move(nx));
            continue;
          }
          double lam_true = wsum;
          Vec u_rep = rep.norm() > 1e-12 ? Vec(rep.normalized())
                                         : truth.neurons[clump.neurons[0]].u;
          auto push_choice = [&](const Vec& uh, double lh) {
            Resolution nx = res;
            ClumpDecision dec = base;
            dec.lambda_hat = lh;
            dec.u_hat = uh;
            dec.dir_err =
                std::min((uh - u_rep).norm(), (uh + u_rep).norm());
            nx.st.learned.terms.push_back({lh, uh});
            nx.st.learned.w += lh * uh;  // the clump's relu linear share
            for (int n : clump.neurons) nx.st.resolved[n] = 1;
            nx.st.check_weight_cap(cfg);
            nx.rec.clumps.push_back(dec);
            expanded.push_back(std::move(nx));
          };

          if (cfg.branch_mode == BranchMode::oracle) {
            Vec uh = u_rep;
            if (dnet) {
              auto r = dnet->round_direction(u_rep);
              if (r) uh = *r;
            }
            push_choice(uh, floor_weight(lam_true, sp.R, cfg.upsilon_w));
          } else {
            if (!dnet)
              throw std::runtime_error(
                  "recursive_learn: empty direction basis");
            std::vector<Vec> dirs = dnet->enumerate(cfg.net_cap);
            long jmax = static_cast<long>(
                std::floor(2.0 * sp.R / cfg.upsilon_w + 1e-9));
            for (const Vec& uh : dirs)
              for (long j = 0; j <= jmax; ++j)
                push_choice(uh, -sp.R + static_cast<double>(j) *
                                            cfg.upsilon_w);
          }
        }
        partial = std::move(expanded);
        if (partial.size() > cfg.branch_cap) {
          partial.resize(cfg.branch_cap);
          result.complete = false;
        }
      }

      if (cfg.branch_mode == BranchMode::beam &&
          partial.size() > static_cast<std::size_t>(cfg.beam_width)) {
        std::vector<std::pair<double, std::size_t>> scored;
        scored.reserve(partial.size());
        for (std::size_t i = 0; i < partial.size(); ++i)
          scored.push_back(
              {detail::empirical_sq_loss(partial[i].st.learned, beam_shard),
               i});
        std::stable_sort(scored.begin(), scored.end(),
                         [](const auto& x, const auto& y) {
                           return x.first < y.first;
                         });
        std::vector<Resolution> kept;
        for (int i = 0; i < cfg.beam_width; ++i)
          kept.push_back(std::move(partial[scored[i].second]));
        partial = std::move(kept);
      }

      for (auto& res : partial) {
        res.st.trace.push_back(res.rec);
        next_live.push_back(std::move(res.st));
      }
      if (next_live.size() > cfg.branch_cap) {
        next_live.resize(cfg.branch_cap);
        result.complete = false;
      }
    }
    live = std::move(next_live);
  }

  // stage budget exhausted with branches still open
  for (auto& st : live) {
    Candidate cand;
    cand.net = st.learned;
    cand.complete = false;
    cand.stages = st.stage;
    cand.trace = st.trace;
    done.push_back(std::move(cand));
    result.complete = false;
  }

  SampleBatch holdout =
      source(cfg.n_validate, detail::mix_seed(cfg.seed, 0x11A1D));
  for (auto& c : done) c.loss = detail::empirical_sq_loss(c.net, holdout);
  result.candidates = std::move(done);
  return result;
}

struct Selection {
  int index = -1;
  double loss = 0.0;
  double margin = 0.0;      // gap to the runner-up
  double half_width = 0.0;  // Hoeffding-shaped confidence from the n samples
  bool meets_eps = false;
};

// Argmin of empirical squared loss; ties keep the earliest candidate.
inline Candidate validate_select(const std::vector<Candidate>& cands,
                                 const SampleBatch& validation, double eps,
                                 Selection* out = nullptr) {
  if (cands.empty())
    throw std::invalid_argument("validate_select: no candidates");
  std::vector<double> losses(cands.size());
  double cap = 0.0;
  for (std::size_t i = 0; i < cands.size(); ++i) {
    Vec diff = validation.y - evaluate_batch(cands[i].net, validation.X);
    losses[i] = diff.squaredNorm() / static_cast<double>(validation.size());
    cap = std::max(cap, diff.cwiseAbs().maxCoeff());
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < cands.size(); ++i)
    if (losses[i] < losses[best]) best = i;
  if (out) {
    out->index = static_cast<int>(best);
    out->loss = losses[best];
    double second = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < cands.size(); ++i)
      if (i != best) second = std::min(second, losses[i]);
    out->margin = cands.size() > 1 ? second - losses[best] : 0.0;
    double n = static_cast<double>(validation.size());
    double m = static_cast<double>(std::max<std::size_t>(cands.size(), 2));
    out->half_width =
        cap * cap * std::sqrt(std::log(2.0 * m / 0.05) / (2.0 * n));
    out->meets_eps = losses[best] <= eps;
  }
  Candidate chosen = cands[best];
  chosen.loss = losses[best];
  return chosen;
}

}  // namespace mslearn
