#pragma once

// Experiment harness. One suite per acceptance criterion, a flat key=value
// config format, and a serializable report. Suites derive every random seed
// from the config seed, never read clocks or ambient state, and size
// themselves by the ci/full profile, so a report is a pure function of its
// config. Wall-clock timing is the caller's business (the CLI prints it to
// stderr); it is never serialized.

#include <json.hpp>

#include <Eigen/Dense>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <future>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mslearn/clumping.hpp"
#include "mslearn/common.hpp"
#include "mslearn/hermite.hpp"
#include "mslearn/learner.hpp"
#include "mslearn/moments.hpp"
#include "mslearn/network.hpp"
#include "mslearn/powersum.hpp"
#include "mslearn/rng.hpp"
#include "mslearn/scales.hpp"
#include "mslearn/sym_tensor.hpp"

namespace mslearn {

inline constexpr int kReportSchemaVersion = 1;

using json = nlohmann::ordered_json;

// Report suites in criterion order; the position is the criterion number.
inline const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names = {
      "hermite",  "moments", "powersum", "vieta_vandermonde", "clumping",
      "scales",   "recovery", "end_to_end", "noise",          "determinism"};
  return names;
}

inline int criterion_of(const std::string& suite) {
  const auto& names = suite_names();
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == suite) return static_cast<int>(i) + 1;
  return 0;
}

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

// Shortest decimal that round-trips; keeps the config echo readable.
inline std::string num_str(double v) {
  char buf[40];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_num(const std::string& s, const std::string& where) {
  const std::string t = trim(s);
  try {
    std::size_t used = 0;
    double v = std::stod(t, &used);
    if (used != t.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument(where + ": bad number '" + t + "'");
  }
}

inline std::int64_t parse_int(const std::string& s, const std::string& where) {
  double v = parse_num(s, where);
  auto r = static_cast<std::int64_t>(v);
  if (static_cast<double>(r) != v)
    throw std::invalid_argument(where + ": expected an integer, got '" +
                                trim(s) + "'");
  return r;
}

inline std::vector<std::string> split_list(const std::string& s,
                                           const std::string& where) {
  std::vector<std::string> items;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, ',')) {
    cur = trim(cur);
    if (cur.empty()) throw std::invalid_argument(where + ": empty list item");
    items.push_back(cur);
  }
  return items;
}

// Named boolean sub-checks of one suite: the suite passes iff all do.
struct Checks {
  json j = json::object();
  bool all = true;
  void add(const std::string& name, bool ok) {
    j[name] = ok;
    all = all && ok;
  }
};

// Golub-Welsch rules, independent of the closed forms under test.
struct QuadRule {
  std::vector<double> x, w;
};

inline QuadRule quad_from_jacobi(const Eigen::MatrixXd& J, double mass) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  QuadRule r;
  int n = static_cast<int>(J.rows());
  r.x.resize(n);
  r.w.resize(n);
  for (int i = 0; i < n; ++i) {
    r.x[i] = es.eigenvalues()[i];
    double v0 = es.eigenvectors()(0, i);
    r.w[i] = mass * v0 * v0;
  }
  return r;
}

// Integration against the standard normal density, total mass 1.
inline QuadRule gauss_hermite_rule(int n) {
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (int i = 1; i < n; ++i)
    J(i, i - 1) = J(i - 1, i) = std::sqrt(static_cast<double>(i));
  return quad_from_jacobi(J, 1.0);
}

inline QuadRule gauss_legendre_rule(int n) {
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (int i = 1; i < n; ++i)
    J(i, i - 1) = J(i - 1, i) = i / std::sqrt(4.0 * i * i - 1.0);
  return quad_from_jacobi(J, 2.0);
}

template <class F>
double panel_integrate(F&& f, double a, double b, int panels, int order) {
  QuadRule r = gauss_legendre_rule(order);
  double h = (b - a) / panels;
  double s = 0.0;
  for (int p = 0; p < panels; ++p) {
    double lo = a + p * h;
    for (int i = 0; i < order; ++i)
      s += 0.5 * h * r.w[i] * f(lo + 0.5 * h * (r.x[i] + 1.0));
  }
  return s;
}

// Geometry first, constants derived, so every instance is valid by
// construction: a cluster of kprime points within beta of v_1, the rest at
// least gamma away, weights in [-1, 1] nudged off exact cancellation.
inline PowerSumInstance random_powersum_instance(Rng& rng) {
  PowerSumInstance inst;
  inst.k = 1 + static_cast<int>(rng.uniform_int(6));
  inst.kprime = 1 + static_cast<int>(rng.uniform_int(inst.k));
  double v1 = (rng.next_double() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.3, 0.9);
  double beta = rng.uniform(0.001, 0.05);
  double gamma = rng.uniform(0.05, 0.3);
  inst.v.resize(inst.k);
  inst.v[0] = v1;
  for (int i = 1; i < inst.kprime; ++i) {
    double lo = std::max(v1 - beta, -1.0), hi = std::min(v1 + beta, 1.0);
    inst.v[i] = rng.uniform(lo, hi);
  }
  for (int i = inst.kprime; i < inst.k; ++i) {
    for (int tries = 0;; ++tries) {
      double x = rng.uniform(-1.0, 1.0);
      bool ok = true;
      for (int j = 0; j < inst.kprime; ++j)
        if (std::abs(x - inst.v[j]) < gamma * 1.0001) ok = false;
      if (ok) {
        inst.v[i] = x;
        break;
      }
      if (tries > 200) {
        gamma *= 0.5;
        tries = 0;
      }
    }
  }
  inst.q.resize(inst.k);
  for (int i = 0; i < inst.k; ++i) inst.q[i] = rng.uniform(-1.0, 1.0);
  double cluster = 0.0;
  for (int i = 0; i < inst.kprime; ++i) cluster += inst.q[i];
  if (std::abs(cluster) < 1e-6) {
    inst.q[0] += (cluster >= 0 ? 0.5 : -0.5);
    cluster = 0.0;
    for (int i = 0; i < inst.kprime; ++i) cluster += inst.q[i];
  }
  inst.alpha = std::abs(v1) * 0.999;
  inst.beta = beta;
  inst.gamma = gamma * 0.999;
  inst.tau = std::abs(cluster) * 0.999;
  inst.R = 1.0;
  for (double x : inst.q) inst.R = std::max(inst.R, std::abs(x));
  return inst;
}

inline std::vector<double> random_game_vector(int k, double tau, Rng& rng) {
  std::vector<double> w(k, 0.0);
  for (int i = 1; i + 1 < k; ++i)
    w[i] = (rng.next_double() < 0.15) ? 0.0 : rng.uniform(1.0, 1.5 * tau);
  return w;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// configuration

// Flat sectioned key=value text. Unknown sections or keys are errors; '#'
// starts a comment. canonical() is a fixed-order echo that reparses to the
// same canonical text.
struct ExperimentConfig {
  // [run]
  std::string profile = "ci";  // ci | full
  std::uint64_t seed = 1;
  // The effective selection: defaults to every suite, and an explicitly
  // empty selection ("suites = none") runs nothing, leaving a report that
  // carries only the config echo.
  std::vector<std::string> suites = suite_names();
  std::string out;  // report path hint for the CLI
  // [instance]
  std::string kind = "well_separated";
  int k = 2;
  int d = 4;
  double R = 2.0;
  std::vector<double> ladder;  // line_multiscale gaps
  double noise_sigma = 0.0;
  // [learner]
  double upsilon = 0.05;
  double upsilon_w = 0.05;
  double omega = 0.0;
  double eps = 0.05;
  std::size_t n_stage = 1'000'000;
  std::size_t n_validate = 100'000;
  std::size_t n_beam = 10'000;
  std::string branch_mode = "oracle";
  int beam_width = 4;
  int max_stages = 0;
  std::size_t branch_cap = 4096;
  std::size_t net_cap = 200'000;
  double weight_cap_multiple = 0.0;

  static ExperimentConfig parse(const std::string& text) {
    ExperimentConfig c;
    std::istringstream in(text);
    std::string raw, section;
    int ln = 0;
    while (std::getline(in, raw)) {
      ++ln;
      std::string where = "config line " + std::to_string(ln);
      std::size_t hash = raw.find('#');
      if (hash != std::string::npos) raw.erase(hash);
      std::string line = detail::trim(raw);
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']')
          throw std::invalid_argument(where + ": unterminated section header");
        section = detail::trim(line.substr(1, line.size() - 2));
        if (section != "run" && section != "instance" && section != "learner")
          throw std::invalid_argument(where + ": unknown section [" + section +
                                      "]");
        continue;
      }
      std::size_t eq = line.find('=');
      if (eq == std::string::npos)
        throw std::invalid_argument(where + ": expected key = value");
      std::string key = detail::trim(line.substr(0, eq));
      std::string val = detail::trim(line.substr(eq + 1));
      if (key.empty()) throw std::invalid_argument(where + ": empty key");
      if (section.empty())
        throw std::invalid_argument(where + ": key '" + key +
                                    "' outside any section");
      if (!c.apply(section, key, val, where))
        throw std::invalid_argument(where + ": unknown key '" + key +
                                    "' in [" + section + "]");
    }
    c.validate();
    return c;
  }

  static ExperimentConfig load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
  }

  std::string canonical() const {
    using detail::num_str;
    std::ostringstream o;
    o << "[run]\n";
    o << "profile = " << profile << "\n";
    o << "seed = " << seed << "\n";
    o << "suites = ";
    if (suites.empty()) {
      o << "none";
    } else {
      for (std::size_t i = 0; i < suites.size(); ++i)
        o << (i ? "," : "") << suites[i];
    }
    o << "\n";
    if (!out.empty()) o << "out = " << out << "\n";
    o << "\n[instance]\n";
    o << "kind = " << kind << "\n";
    o << "k = " << k << "\n";
    o << "d = " << d << "\n";
    o << "R = " << num_str(R) << "\n";
    if (!ladder.empty()) {
      o << "ladder = ";
      for (std::size_t i = 0; i < ladder.size(); ++i)
        o << (i ? "," : "") << num_str(ladder[i]);
      o << "\n";
    }
    o << "noise_sigma = " << num_str(noise_sigma) << "\n";
    o << "\n[learner]\n";
    o << "upsilon = " << num_str(upsilon) << "\n";
    o << "upsilon_w = " << num_str(upsilon_w) << "\n";
    o << "omega = " << num_str(omega) << "\n";
    o << "eps = " << num_str(eps) << "\n";
    o << "n_stage = " << n_stage << "\n";
    o << "n_validate = " << n_validate << "\n";
    o << "n_beam = " << n_beam << "\n";
    o << "branch_mode = " << branch_mode << "\n";
    o << "beam_width = " << beam_width << "\n";
    o << "max_stages = " << max_stages << "\n";
    o << "branch_cap = " << branch_cap << "\n";
    o << "net_cap = " << net_cap << "\n";
    o << "weight_cap_multiple = " << num_str(weight_cap_multiple) << "\n";
    return o.str();
  }

  void validate() const {
    if (profile != "ci" && profile != "full")
      throw std::invalid_argument("config: profile must be ci or full");
    if (kind != "well_separated" && kind != "line_multiscale" &&
        kind != "random_sphere")
      throw std::invalid_argument("config: unknown instance kind '" + kind +
                                  "'");
    if (branch_mode != "oracle" && branch_mode != "exhaustive" &&
        branch_mode != "beam")
      throw std::invalid_argument("config: unknown branch_mode '" +
                                  branch_mode + "'");
    if (k < 1 || d < 1 || R <= 0.0)
      throw std::invalid_argument("config: need k >= 1, d >= 1, R > 0");
    if (noise_sigma < 0.0)
      throw std::invalid_argument("config: noise_sigma < 0");
    for (const std::string& s : suites)
      if (criterion_of(s) == 0)
        throw std::invalid_argument("config: unknown suite '" + s + "'");
  }

  InstanceKind instance_kind() const {
    if (kind == "well_separated") return InstanceKind::well_separated;
    if (kind == "line_multiscale") return InstanceKind::line_multiscale;
    return InstanceKind::random_sphere;
  }

  ReluNetwork instance() const {
    GenParams gp;
    gp.ladder = ladder;
    return gen_instance(instance_kind(), k, d, R, seed, gp);
  }

  BranchMode branch() const {
    if (branch_mode == "oracle") return BranchMode::oracle;
    if (branch_mode == "exhaustive") return BranchMode::exhaustive;
    return BranchMode::beam;
  }

  ScaleParams scale_params() const {
    ScaleParams p;
    p.d = d;
    p.k = k;
    p.R = R;
    p.eps = eps;
    return p;
  }

  LearnerConfig learner_config() const {
    LearnerConfig lc;
    lc.scales = scale_params();
    lc.upsilon = upsilon;
    lc.upsilon_w = upsilon_w;
    lc.omega = omega;
    lc.eps = eps;
    lc.n_stage = n_stage;
    lc.n_validate = n_validate;
    lc.n_beam = n_beam;
    lc.branch_mode = branch();
    lc.beam_width = beam_width;
    lc.max_stages = max_stages;
    lc.branch_cap = branch_cap;
    lc.net_cap = net_cap;
    lc.weight_cap_multiple = weight_cap_multiple;
    lc.seed = seed;
    lc.oracle_truth = instance();
    return lc;
  }

 private:
  bool apply(const std::string& sec, const std::string& key,
             const std::string& val, const std::string& where) {
    using detail::parse_int;
    using detail::parse_num;
    auto as_size = [&](const std::string& v) {
      std::int64_t x = parse_int(v, where);
      if (x < 0) throw std::invalid_argument(where + ": negative count");
      return static_cast<std::size_t>(x);
    };
    if (sec == "run") {
      if (key == "profile") return profile = val, true;
      if (key == "seed") {
        std::int64_t x = parse_int(val, where);
        if (x < 0) throw std::invalid_argument(where + ": negative seed");
        seed = static_cast<std::uint64_t>(x);
        return true;
      }
      if (key == "suites") {
        if (detail::trim(val) == "none") {
          suites.clear();
          return true;
        }
        auto items = detail::split_list(val, where);
        if (items.size() == 1 && items[0] == "all")
          suites = suite_names();
        else
          suites = items;
        return true;
      }
      if (key == "out") return out = val, true;
      return false;
    }
    if (sec == "instance") {
      if (key == "kind") return kind = val, true;
      if (key == "k") return k = static_cast<int>(parse_int(val, where)), true;
      if (key == "d") return d = static_cast<int>(parse_int(val, where)), true;
      if (key == "R") return R = parse_num(val, where), true;
      if (key == "noise_sigma")
        return noise_sigma = parse_num(val, where), true;
      if (key == "ladder") {
        ladder.clear();
        for (const std::string& item : detail::split_list(val, where))
          ladder.push_back(parse_num(item, where));
        return true;
      }
      return false;
    }
    // [learner]
    if (key == "upsilon") return upsilon = parse_num(val, where), true;
    if (key == "upsilon_w") return upsilon_w = parse_num(val, where), true;
    if (key == "omega") return omega = parse_num(val, where), true;
    if (key == "eps") return eps = parse_num(val, where), true;
    if (key == "n_stage") return n_stage = as_size(val), true;
    if (key == "n_validate") return n_validate = as_size(val), true;
    if (key == "n_beam") return n_beam = as_size(val), true;
    if (key == "branch_mode") return branch_mode = val, true;
    if (key == "beam_width")
      return beam_width = static_cast<int>(parse_int(val, where)), true;
    if (key == "max_stages")
      return max_stages = static_cast<int>(parse_int(val, where)), true;
    if (key == "branch_cap") return branch_cap = as_size(val), true;
    if (key == "net_cap") return net_cap = as_size(val), true;
    if (key == "weight_cap_multiple")
      return weight_cap_multiple = parse_num(val, where), true;
    return false;
  }
};

// ---------------------------------------------------------------------------
// reports

struct SuiteResult {
  std::string name;
  bool passed = false;
  json details;  // {"checks": {...}, "stats": {...}} or {"error": ...}
};

// Every constant the suites treat as frozen, echoed into each report so a
// reader can audit what the pass/fail lines were measured against.
inline json frozen_constants() {
  json c;
  c["transition_exponent_cT"] = 2.0;
  c["detectability_Lambda"] = 0.05;
  c["eps_prime_C0"] = 1.0;
  c["anticonc_c"] = 0.05;
  c["anticonc_cprime"] = 3.0;
  c["level_step"] = 0.9;
  c["move_budget_C"] = kMoveBudgetConstant;
  c["powersum_C"] = kPowersumC;
  c["subtract_linear_C"] = kSubtractLinearC;
  c["epscover_C"] = kEpsCoverC;
  c["upsilon_default"] = 0.05;
  c["upsilon_w_default"] = 0.05;
  c["omega_rule"] = "sqrt(eps_prime)";
  return c;
}

struct Report {
  int schema_version = kReportSchemaVersion;
  std::string profile = "ci";
  std::uint64_t seed = 1;
  std::string config_echo;
  std::vector<SuiteResult> suites;
  json constants = frozen_constants();
  std::uint64_t samples_drawn = 0;
  // Filled by timing callers, never serialized: reports from identical
  // configs stay byte-identical.
  std::int64_t wall_clock_ms = -1;

  bool all_passed() const {
    for (const SuiteResult& s : suites)
      if (!s.passed) return false;
    return true;
  }
};

struct SuiteContext {
  const ExperimentConfig& cfg;
  bool full = false;
  std::uint64_t samples = 0;  // labeled samples drawn by this suite

  std::uint64_t drew(std::uint64_t n) {
    samples += n;
    return n;
  }
};

inline Report run_experiment(const ExperimentConfig& cfg);
inline std::string emit_report(const Report& r, const std::string& format);

// ---------------------------------------------------------------------------
// suites, one per criterion

// Criterion 1: normalized polynomials are orthonormal under the gaussian
// (degree up to 12, quadrature error at most 1e-8) and the closed-form
// activation coefficients match direct numerical integration.
inline SuiteResult suite_hermite(SuiteContext& ctx) {
  (void)ctx;
  detail::Checks ck;
  json stats;

  detail::QuadRule q = detail::gauss_hermite_rule(40);
  double worst_ortho = 0.0;
  for (int m = 0; m <= 12; ++m)
    for (int n = 0; n <= 12; ++n) {
      double s = 0.0;
      for (std::size_t i = 0; i < q.x.size(); ++i)
        s += q.w[i] * hermite_normalized_eval(m, q.x[i]) *
             hermite_normalized_eval(n, q.x[i]);
      worst_ortho = std::max(worst_ortho, std::abs(s - (m == n ? 1.0 : 0.0)));
    }
  ck.add("orthonormal_through_degree_12", worst_ortho <= 1e-8);
  stats["max_orthonormality_error"] = worst_ortho;

  // c_l = E[relu(z) He_l(z)] / l!, integral over [0, 40]
  double worst_coeff = 0.0;
  for (int l = 0; l <= 12; ++l) {
    double fact = 1.0;
    for (int i = 2; i <= l; ++i) fact *= i;
    double integral = detail::panel_integrate(
        [l](double z) {
          return z * hermite_eval(l, z) *
                 std::exp(-0.5 * z * z) / kSqrt2Pi;
        },
        0.0, 40.0, 80, 24);
    worst_coeff =
        std::max(worst_coeff, std::abs(relu_hermite_coeff(l) - integral / fact));
  }
  ck.add("relu_coefficients_match_integration", worst_coeff <= 1e-8);
  stats["max_coefficient_error"] = worst_coeff;

  bool anchors = std::abs(relu_hermite_coeff(0) - 1.0 / kSqrt2Pi) < 1e-15 &&
                 relu_hermite_coeff(1) == 0.5 &&
                 relu_hermite_coeff(3) == 0.0 && relu_hermite_coeff(5) == 0.0;
  ck.add("anchor_values_exact", anchors);

  return {"hermite", ck.all, json{{"checks", ck.j}, {"stats", stats}}};
}

// Criterion 2: estimated moment tensors of sampled networks sit within the
// pre-registered tolerances of the exact tensors on most seeds, and the
// residual estimator matches the exact residual tensors at the same
// tolerances. Tolerances are pinned before running: frobenius error 0.025
// at degree 2 and 0.13 at degree 4 for one million samples, scaled by
// sqrt(5) for the ci profile's two hundred thousand.
inline SuiteResult suite_moments(SuiteContext& ctx) {
  detail::Checks ck;
  json stats;
  const int seeds = ctx.full ? 20 : 5;
  const std::size_t n = ctx.full ? 1'000'000 : 200'000;
  const double scale = ctx.full ? 1.0 : std::sqrt(5.0);
  const double tol2 = 0.025 * scale, tol4 = 0.13 * scale;
  const int need = ctx.full ? 18 : 4;

  int pass = 0;
  double worst2 = 0.0, worst4 = 0.0, worst_r2 = 0.0, worst_r4 = 0.0;
  for (int s = 0; s < seeds; ++s) {
    const int k = (s % 2 == 0) ? 2 : 1;
    const int d = (s % 2 == 0) ? 4 : 3;
    ReluNetwork net =
        gen_instance(InstanceKind::random_sphere, k, d, 2.0,
                     detail::mix_seed(ctx.cfg.seed, 2, s));
    AbsNetwork abs_form = to_abs_form(net);
    SampleBatch b =
        sample_labeled(net, ctx.drew(n), detail::mix_seed(ctx.cfg.seed, 2, 100 + s));

    double e2 = frobenius_dist(estimate_moments(b, 2),
                               exact_moment_tensor(abs_form, 2));
    double e4 = frobenius_dist(estimate_moments(b, 4),
                               exact_moment_tensor(abs_form, 4));

    // partially learned network: linear part plus the first term
    AbsNetwork learned = AbsNetwork::zero(d, abs_form.R);
    learned.w = abs_form.w;
    learned.terms.assign(abs_form.terms.begin(), abs_form.terms.begin() + 1);
    AbsNetwork rest = AbsNetwork::zero(d, abs_form.R);
    rest.terms.assign(abs_form.terms.begin() + 1, abs_form.terms.end());
    double r2 = frobenius_dist(estimate_residual_moments(b, learned, 2),
                               exact_moment_tensor(rest, 2));
    double r4 = frobenius_dist(estimate_residual_moments(b, learned, 4),
                               exact_moment_tensor(rest, 4));

    worst2 = std::max(worst2, e2);
    worst4 = std::max(worst4, e4);
    worst_r2 = std::max(worst_r2, r2);
    worst_r4 = std::max(worst_r4, r4);
    if (e2 <= tol2 && e4 <= tol4 && r2 <= tol2 && r4 <= tol4) ++pass;
  }
  ck.add("seeds_within_tolerance", pass >= need);
  stats["seeds"] = seeds;
  stats["seeds_passed"] = pass;
  stats["seeds_required"] = need;
  stats["tolerance_degree2"] = tol2;
  stats["tolerance_degree4"] = tol4;
  stats["worst_error_degree2"] = worst2;
  stats["worst_error_degree4"] = worst4;
  stats["worst_residual_error_degree2"] = worst_r2;
  stats["worst_residual_error_degree4"] = worst_r4;
  return {"moments", ck.all, json{{"checks", ck.j}, {"stats", stats}}};
}

// Criterion 3: the clustered power-sum witness bound holds on a large batch
// of random instances, and the alternating tightness construction kills
// every even power below 2k-2 while the first survivor matches
// (k-1)! gamma^(k-1).
inline SuiteResult suite_powersum(SuiteContext& ctx) {
  detail::Checks ck;
  json stats;
  const int trials = ctx.full ? 10000 : 1000;
  Rng rng(detail::mix_seed(ctx.cfg.seed, 3));

  bool all_hold = true, l_star_valid = true;
  int positive = 0;
  for (int t = 0; t < trials; ++t) {
    PowerSumInstance inst = detail::random_powersum_instance(rng);
    WitnessResult res = powersum_witness(inst);
    all_hold = all_hold && res.holds;
    l_star_valid = l_star_valid && res.l_star % 2 == 0 && res.l_star >= 0 &&
                   res.l_star <= 2 * inst.k;
    if (res.bound > 0) ++positive;
  }
  ck.add("separation_bound_holds", all_hold);
  ck.add("witness_degree_in_range", l_star_valid);
  ck.add("nontrivial_bounds_exercised", positive > trials / 10);
  stats["instances"] = trials;
  stats["positive_bounds"] = positive;

  double worst_zero = 0.0, worst_survivor = 0.0;
  for (auto [k, gamma] :
       {std::pair{3, 0.1}, {4, 0.05}, {5, 0.08}, {6, 0.05}}) {
    auto [v, q] = tightness_instance(k, gamma);
    for (int l = 0; l < 2 * k - 2; l += 2)
      worst_zero = std::max(worst_zero, std::abs(power_correlation(v, q, l)));
    double expect = 1.0;
    for (int i = 2; i < k; ++i) expect *= i;
    expect *= std::pow(gamma, k - 1);
    double got = power_correlation(v, q, 2 * k - 2);
    worst_survivor =
        std::max(worst_survivor, std::abs(got - expect) / std::abs(expect));
  }
  ck.add("tightness_zeroes_low_even_powers", worst_zero <= 1e-9);
  ck.add("tightness_first_survivor_value", worst_survivor <= 1e-9);
  stats["worst_low_power_residue"] = worst_zero;
  stats["worst_survivor_relative_error"] = worst_survivor;
  return {"powersum", ck.all, json{{"checks", ck.j}, {"stats", stats}}};
}

// Criterion 4: the root/coefficient identity closes to 1e-10 on random root
// sets up to degree 10, and interpolation through separated nodes solves to
// small residual with coefficient norm inside the gap bound.
inline SuiteResult suite_vieta_vandermonde(SuiteContext& ctx) {
  detail::Checks ck;
  json stats;
  const int trials = ctx.full ? 1000 : 200;
  Rng rng(detail::mix_seed(ctx.cfg.seed, 4));

  double worst_vieta = 0.0;
  for (int t = 0; t < trials; ++t) {
    int K = 1 + static_cast<int>(rng.uniform_int(10));
    std::vector<double> z(K);
    for (auto& x : z) x = rng.uniform(-2.0, 2.0);
    worst_vieta = std::max(worst_vieta, vieta_check(z));
  }
  ck.add("root_identity_within_1e-10", worst_vieta <= 1e-10);
  stats["vieta_trials"] = trials;
  stats["worst_vieta_residual"] = worst_vieta;

  bool residual_ok = true, norm_ok = true;
  double worst_rel_residual = 0.0;
  for (int t = 0; t < trials; ++t) {
    int m = 2 + static_cast<int>(rng.uniform_int(5));
    double delta = rng.uniform(0.02, 0.3);
    std::vector<double> nodes(m);
    double span = delta * (m - 1);
    nodes[0] = rng.uniform(-1.0, 1.0 - span);
    for (int i = 1; i < m; ++i)
      nodes[i] = nodes[i - 1] +
                 rng.uniform(delta, std::min(0.6, (1.0 - nodes[i - 1]) /
                                                      std::max(1, m - i)));
    Vec c(m);
    for (int i = 0; i < m; ++i) c[i] = rng.uniform(-1.0, 1.0);
    VandermondeResult res = vandermonde_solve(nodes, c);
    double rel = res.residual / std::max(1.0, c.norm());
    worst_rel_residual = std::max(worst_rel_residual, rel);
    residual_ok = residual_ok && rel <= 1e-8;
    norm_ok = norm_ok && res.alpha_norm <= res.lemma_bound;
  }
  ck.add("interpolation_residual_small", residual_ok);
  ck.add("coefficient_norm_within_gap_bound", norm_ok);
  stats["vandermonde_trials"] = trials;
  stats["worst_relative_residual"] = worst_rel_residual;
  return {"vieta_vandermonde", ck.all,
          json{{"checks", ck.j}, {"stats", stats}}};
}

// Criterion 5: the worked merge-game example replays its documented move,
// random games end in a single zero entry within the move budget, and noisy
// games against adversarial perturbations never make an illegal move.
//
// The one-move state sub-check is a known failure, kept as stated. The
// strategy plays exactly the documented move {[1,3],[4,6],[7,9],[10,12]},
// and four merged intervals necessarily leave a four-entry state: the two
// middle runs each cross tau once, giving (0, 1, 1, 0). The recorded
// expectation (0, 1, 0) has three entries, which no four-interval move can
// produce, so the expectation is unreachable; it is reported honestly
// instead of being edited to match the implementation.
inline SuiteResult suite_clumping(SuiteContext& ctx) {
  detail::Checks ck;
  json stats;

  const std::vector<double> figure = {0.0, 3.1, 2.0, 2.0, 3.1, 1.0,
                                      1.0, 3.1, 2.0, 2.0, 3.1, 0.0};
  const std::vector<std::pair<int, int>> documented_move = {
      {1, 3}, {4, 6}, {7, 9}, {10, 12}};
  const std::vector<double> stated_after = {0.0, 1.0, 0.0};
  Transcript fig = play_noiseless(figure, 3.0);
  bool have_move = fig.moves() >= 1;
  ck.add("figure_move_matches_documented",
         have_move && fig.steps[0].move.intervals == documented_move);
  ck.add("figure_one_move_state_exact",
         have_move && fig.steps[0].after == stated_after);
  stats["figure_stated_after_one_move"] = stated_after;
  stats["figure_actual_after_one_move"] =
      have_move ? fig.steps[0].after : std::vector<double>{};
  stats["figure_total_moves"] = fig.moves();
  stats["figure_terminal"] = fig.terminal;

  std::vector<int> ks = ctx.full ? std::vector<int>{8, 64, 512, 1024}
                                 : std::vector<int>{8, 64};
  const int trials = ctx.full ? 1000 : 100;
  Rng rng(detail::mix_seed(ctx.cfg.seed, 5));
  bool noiseless_ok = true;
  json worsts;
  for (int k : ks) {
    double tau = default_tau(k);
    double budget = kMoveBudgetConstant * std::log2(static_cast<double>(k));
    int worst = 0;
    for (int t = 0; t < trials; ++t) {
      auto w = detail::random_game_vector(k, tau, rng);
      Transcript tr = play_noiseless(w, tau);
      bool legal = true;
      for (const auto& st : tr.steps) legal = legal && st.legal;
      noiseless_ok = noiseless_ok && tr.done && legal &&
                     tr.terminal == std::vector<double>{0.0} &&
                     tr.moves() <= budget;
      worst = std::max(worst, tr.moves());
    }
    worsts["k" + std::to_string(k)] = worst;
  }
  ck.add("noiseless_within_move_budget", noiseless_ok);
  stats["noiseless_trials_per_k"] = trials;
  stats["noiseless_worst_moves"] = worsts;

  const int noisy_trials = ctx.full ? 200 : 30;
  bool noisy_ok = true;
  for (int k : ks) {
    double tau = default_tau(k);
    double budget = kMoveBudgetConstant * std::log2(static_cast<double>(k));
    for (int t = 0; t < noisy_trials; ++t) {
      auto w = detail::random_game_vector(k, tau, rng);
      for (const Adversary& adv :
           {Adversary(adversary_worst), Adversary(adversary_random)}) {
        Transcript tr = play_noisy(w, tau, adv, rng);
        bool legal = true;
        for (const auto& st : tr.steps) legal = legal && st.legal;
        noisy_ok = noisy_ok && tr.done && legal && tr.terminal.size() == 1 &&
                   tr.moves() <= budget;
      }
    }
  }
  ck.add("noisy_games_stay_legal", noisy_ok);
  stats["noisy_trials_per_k_per_adversary"] = noisy_trials;
  return {"clumping", ck.all, json{{"checks", ck.j}, {"stats", stats}}};
}

// Criterion 6: the level map steps by 0.9 under the transition map and is
// zero at the base scale; the six-point worked configuration is gapped at
// the isolated slot and not inside the dead-band pair; a gapped scale
// exists exactly when the projected spread exceeds eps'; and random
// directions satisfy the anticoncentration bands at the expected rates.
inline SuiteResult suite_scales(SuiteContext& ctx) {
  detail::Checks ck;
  json stats;

  bool level_ok = true;
  double worst_level = 0.0;
  {
    Rng rng(detail::mix_seed(ctx.cfg.seed, 6, 1));
    for (auto [d, k, R] :
         {std::tuple{4, 3, 1.0}, {6, 2, 2.0}, {50, 8, 1.0}}) {
      ScaleParams p;
      p.d = d;
      p.k = k;
      p.R = R;
      level_ok = level_ok && std::abs(p.level(p.eps_prime())) <= 1e-12;
      for (int t = 0; t < 100; ++t) {
        double lg = -std::exp(rng.uniform(std::log(0.1), std::log(70.0)));
        double err = std::abs(p.level_log(p.log_T(lg)) -
                              (0.9 + p.level_log(lg)));
        worst_level = std::max(worst_level, err);
        level_ok = level_ok && err <= 1e-9;
      }
    }
  }
  ck.add("level_step_identity", level_ok);
  stats["worst_level_identity_error"] = worst_level;

  {
    std::vector<double> v = {0.0, 0.001, 0.002, 0.30, 0.50, 0.55};
    double lg = std::log(0.1), lT = std::log(0.005);
    CloseFar at4 = close_far_with(v, 3, lg, lT);
    bool six = at4.gapped && at4.close_slots == std::vector<int>{3} &&
               at4.far_slots == std::vector<int>{0, 1, 2, 4, 5} &&
               !close_far_with(v, 4, lg, lT).gapped &&
               !close_far_with(v, 5, lg, lT).gapped;
    ck.add("six_point_figure", six);
  }

  {
    const int trials = ctx.full ? 1000 : 200;
    Rng rng(detail::mix_seed(ctx.cfg.seed, 6, 2));
    bool iff_ok = true;
    int found = 0, none = 0;
    for (int t = 0; t < trials; ++t) {
      int k = 1 + static_cast<int>(rng.uniform_int(6));
      int d = 2 + static_cast<int>(rng.uniform_int(5));
      ScaleParams p;
      p.d = d;
      p.k = k;
      Projection proj;
      proj.v.resize(k);
      if (t % 3 == 0) {
        double base = rng.uniform(0.0, 0.9);
        for (int i = 0; i < k; ++i)
          proj.v[i] = base + rng.uniform(0.0, 0.5 * p.eps_prime());
      } else {
        for (int i = 0; i < k; ++i) proj.v[i] = rng.uniform(0.0, 1.0);
      }
      std::sort(proj.v.begin(), proj.v.end());
      for (int i = 0; i < k; ++i) proj.order.push_back(i);
      double spread = proj.v.back() - proj.v.front();
      auto rec = find_gapped_scale(proj, p);
      if (spread <= p.eps_prime()) {
        iff_ok = iff_ok && !rec.has_value();
        ++none;
      } else {
        iff_ok = iff_ok && rec.has_value() &&
                 rec->log_gamma >= p.log_gamma_floor() - 1e-12;
        ++found;
      }
    }
    ck.add("gap_found_iff_spread_above_base", iff_ok);
    ck.add("both_sides_exercised", found > trials / 10 && none > trials / 10);
    stats["projections"] = trials;
    stats["gapped"] = found;
    stats["collapsed"] = none;
  }

  {
    const int trials = ctx.full ? 10000 : 1000;
    const int d = 50, k = 8;
    ScaleParams p;
    p.d = d;
    p.k = k;
    Rng dir_rng(detail::mix_seed(ctx.cfg.seed, 6, 3));
    std::vector<Vec> us;
    for (int i = 0; i < k; ++i) us.push_back(dir_rng.unit_vec(d));
    Rng g_rng(detail::mix_seed(ctx.cfg.seed, 6, 4));
    int pairs_ok = 0, floor_ok = 0;
    for (int t = 0; t < trials; ++t) {
      AnticoncResult r = check_anticoncentration(us, g_rng.unit_vec(d), p);
      pairs_ok += r.pairs;
      floor_ok += r.floor;
    }
    double pf = static_cast<double>(pairs_ok) / trials;
    double ff = static_cast<double>(floor_ok) / trials;
    ck.add("anticoncentration_frequencies", pf >= 0.8 && ff >= 0.9);
    stats["anticonc_directions"] = trials;
    stats["pair_band_frequency"] = pf;
    stats["floor_frequency"] = ff;
  }

  return {"scales", ck.all, json{{"checks", ck.j}, {"stats", stats}}};
}

// Criterion 7: from estimated even moments contracted along a conditioned
// direction, the extracted subspace plus the direction net contains a point
// within 2 upsilon of every planted direction, on at least 95 of 100 seeds.
inline SuiteResult suite_recovery(SuiteContext& ctx) {
  detail::Checks ck;
  json stats;
  const int seeds = ctx.full ? 100 : 6;
  const int need = ctx.full ? 95 : 5;
  const std::size_t n = ctx.full ? 1'000'000 : 200'000;
  const double ups = 0.05;

  int good = 0;
  for (int s = 0; s < seeds; ++s) {
    const int k = 1 + (s % 3);
    const int d = 4 + (s % 3);
    ReluNetwork net =
        gen_instance(InstanceKind::random_sphere, k, d, 1.0,
                     detail::mix_seed(ctx.cfg.seed, 7, s));
    SampleBatch b = sample_labeled(
        net, ctx.drew(n), detail::mix_seed(ctx.cfg.seed, 7, 1000 + s));

    ScaleParams p;
    p.d = d;
    p.k = k;
    const double floor = p.anticonc_c / (k * std::sqrt(static_cast<double>(d)));
    Rng grng(detail::mix_seed(ctx.cfg.seed, 7, 2000 + s));
    Vec g = grng.unit_vec(d);
    for (int tries = 0; tries < 100; ++tries) {
      bool ok = true;
      for (const auto& neuron : net.neurons)
        ok = ok && std::abs(neuron.u.dot(g)) >= floor;
      if (ok) break;
      g = grng.unit_vec(d);
    }

    std::vector<ContractedMatrix> mats;
    for (int l = 2; l <= 2 * k + 2; l += 2)
      mats.push_back(contract(estimate_moments(b, l), g));
    Mat basis = pca_subspace(mats, k);
    if (basis.cols() == 0) continue;
    DirectionNet dn(basis, ups);

    bool all_close = true;
    for (const auto& neuron : net.neurons) {
      auto r = dn.round_direction(neuron.u);
      if (!r) {
        all_close = false;
        break;
      }
      double dist = std::min((*r - neuron.u).norm(), (*r + neuron.u).norm());
      all_close = all_close && dist <= 2.0 * ups;
    }
    if (all_close) ++good;
  }
  ck.add("directions_within_two_upsilon", good >= need);
  stats["seeds"] = seeds;
  stats["seeds_passed"] = good;
  stats["seeds_required"] = need;
  stats["granularity"] = ups;
  return {"recovery", ck.all, json{{"checks", ck.j}, {"stats", stats}}};
}

namespace detail {

// Shared body of the end-to-end and noise suites: learn one planted
// instance, check the result against the target squared loss, and stress
// the selection rule with corrupted decoys. Validation labels are always
// drawn noiseless so the empirical loss measures distance to the target
// function, not the label noise floor.
inline void run_learn_case(SuiteContext& ctx, Checks& ck, json& stats,
                           const std::string& prefix, InstanceKind kind,
                           int k, int d, double R,
                           const std::vector<double>& ladder,
                           double train_noise, double eps,
                           std::uint64_t salt) {
  GenParams gp;
  gp.ladder = ladder;
  ReluNetwork net =
      gen_instance(kind, k, d, R, mix_seed(ctx.cfg.seed, salt, 1), gp);

  LearnerConfig lc;
  lc.scales.d = d;
  lc.scales.k = k;
  lc.scales.R = R;
  lc.scales.eps = eps;
  lc.eps = eps;
  lc.n_stage = ctx.full ? 1'000'000 : 400'000;
  lc.n_validate = ctx.full ? 100'000 : 50'000;
  lc.seed = mix_seed(ctx.cfg.seed, salt, 2);
  lc.oracle_truth = net;

  SampleSource raw = gaussian_source(net, train_noise);
  SampleSource counted = [&ctx, raw](std::size_t n, std::uint64_t s) {
    ctx.drew(n);
    return raw(n, s);
  };
  LearnerResult res = recursive_learn(counted, lc);

  SampleBatch validation = sample_labeled(
      net, ctx.drew(lc.n_validate), mix_seed(ctx.cfg.seed, salt, 3));
  Selection sel;
  Candidate best = validate_select(res.candidates, validation, eps, &sel);
  double l2 = l2_dist(best.net, net);
  double budget =
      kMoveBudgetConstant * std::log2(std::max(2.0, static_cast<double>(k)));

  ck.add(prefix + "_complete", res.complete && best.complete);
  ck.add(prefix + "_meets_target_loss", sel.meets_eps);
  ck.add(prefix + "_l2_squared_within_eps", l2 * l2 <= eps);
  ck.add(prefix + "_stage_count_bounded", best.stages <= budget);

  // corrupted decoys must never win the selection
  const int decoy_trials = ctx.full ? 100 : 20;
  const std::size_t nv = ctx.full ? 20'000 : 4'000;
  Candidate decoy_a = best;
  decoy_a.net.w[0] += 0.5;
  Candidate decoy_b = best;
  if (!decoy_b.net.terms.empty())
    decoy_b.net.terms[0].lambda += 0.4;
  else
    decoy_b.net.w[d - 1] -= 0.5;
  bool decoys_lose = true;
  for (int t = 0; t < decoy_trials; ++t) {
    int pos = t % 3;
    std::vector<Candidate> padded;
    for (int i = 0; i < 3; ++i) {
      if (i == pos)
        padded.push_back(best);
      else
        padded.push_back(i < pos ? decoy_a : decoy_b);
    }
    SampleBatch vb = sample_labeled(
        net, ctx.drew(nv), mix_seed(ctx.cfg.seed, salt, 5000 + t));
    Selection s2;
    validate_select(padded, vb, eps, &s2);
    decoys_lose = decoys_lose && s2.index == pos && s2.margin > 0.0;
  }
  ck.add(prefix + "_decoys_never_selected", decoys_lose);

  stats[prefix + "_loss"] = sel.loss;
  stats[prefix + "_l2_distance"] = l2;
  stats[prefix + "_stages"] = best.stages;
  stats[prefix + "_candidates"] = res.candidates.size();
  stats[prefix + "_decoy_trials"] = decoy_trials;
  json trace = json::array();
  for (const StageRecord& st : best.trace) {
    json row;
    row["stage"] = st.stage;
    row["case"] = st.kase;
    row["gapped_slot"] = st.gapped_slot;
    row["descents"] = st.descents;
    row["basis_dim"] = st.basis_dim;
    row["clumps"] = st.clumps.size();
    trace.push_back(std::move(row));
  }
  stats[prefix + "_trace"] = std::move(trace);
}

}  // namespace detail

// Criterion 8: the full pipeline recovers a well separated instance and a
// collinear multiscale instance to squared distance eps, the stage count
// stays logarithmic in k, and selection rejects decoy candidates.
inline SuiteResult suite_end_to_end(SuiteContext& ctx) {
  detail::Checks ck;
  json stats;
  detail::run_learn_case(ctx, ck, stats, "separated",
                         InstanceKind::well_separated, 2, 4, 2.0, {}, 0.0,
                         0.05, 8);
  detail::run_learn_case(ctx, ck, stats, "multiscale",
                         InstanceKind::line_multiscale, 3, 4, 1.0,
                         {0.5, 1e-30}, 0.0, 0.05, 88);
  return {"end_to_end", ck.all, json{{"checks", ck.j}, {"stats", stats}}};
}

// Criterion 9: the well separated case again, with gaussian label noise of
// variance 0.1 on the training samples and target eps 0.1.
inline SuiteResult suite_noise(SuiteContext& ctx) {
  detail::Checks ck;
  json stats;
  detail::run_learn_case(ctx, ck, stats, "noisy",
                         InstanceKind::well_separated, 2, 4, 2.0, {},
                         std::sqrt(0.1), 0.1, 9);
  return {"noise", ck.all, json{{"checks", ck.j}, {"stats", stats}}};
}

// Criterion 10: rerunning every other suite from the same config yields
// byte-identical reports. The reruns use the ci profile so the comparison
// stays affordable inside a full run.
inline SuiteResult suite_determinism(SuiteContext& ctx) {
  detail::Checks ck;
  json stats;
  ExperimentConfig sub = ctx.cfg;
  sub.profile = "ci";
  sub.suites.clear();
  for (const std::string& s : suite_names())
    if (s != "determinism") sub.suites.push_back(s);

  Report a = run_experiment(sub);
  Report b = run_experiment(sub);
  ctx.samples += a.samples_drawn + b.samples_drawn;
  std::string ja = emit_report(a, "json");
  std::string jb = emit_report(b, "json");
  std::string ca = emit_report(a, "csv_summary");
  std::string cb = emit_report(b, "csv_summary");
  ck.add("json_reports_byte_identical", ja == jb);
  ck.add("csv_reports_byte_identical", ca == cb);
  stats["suites_rerun"] = sub.suites;
  stats["report_bytes"] = ja.size();
  return {"determinism", ck.all, json{{"checks", ck.j}, {"stats", stats}}};
}

// ---------------------------------------------------------------------------
// orchestration

using SuiteFn = SuiteResult (*)(SuiteContext&);

struct SuiteEntry {
  const char* name;
  SuiteFn fn;
};

inline const std::vector<SuiteEntry>& suite_registry() {
  static const std::vector<SuiteEntry> reg = {
      {"hermite", suite_hermite},
      {"moments", suite_moments},
      {"powersum", suite_powersum},
      {"vieta_vandermonde", suite_vieta_vandermonde},
      {"clumping", suite_clumping},
      {"scales", suite_scales},
      {"recovery", suite_recovery},
      {"end_to_end", suite_end_to_end},
      {"noise", suite_noise},
      {"determinism", suite_determinism},
  };
  return reg;
}

// Suites run concurrently (each is a pure function of the config) and are
// assembled into the report in criterion order regardless of their order in
// the config. A suite that throws is recorded as failed with the error
// text; config errors themselves still throw.
inline Report run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  Report r;
  r.profile = cfg.profile;
  r.seed = cfg.seed;
  r.config_echo = cfg.canonical();
  std::vector<const SuiteEntry*> chosen;
  for (const SuiteEntry& entry : suite_registry())
    if (std::find(cfg.suites.begin(), cfg.suites.end(), entry.name) !=
        cfg.suites.end())
      chosen.push_back(&entry);
  std::vector<std::future<std::pair<SuiteResult, std::uint64_t>>> running;
  for (const SuiteEntry* entry : chosen)
    running.push_back(std::async(std::launch::async, [entry, &cfg] {
      SuiteContext sctx{cfg, cfg.profile == "full", 0};
      SuiteResult s = entry->fn(sctx);
      return std::make_pair(std::move(s), sctx.samples);
    }));
  for (std::size_t i = 0; i < chosen.size(); ++i) {
    try {
      auto [s, drawn] = running[i].get();
      r.samples_drawn += drawn;
      r.suites.push_back(std::move(s));
    } catch (const std::exception& e) {
      SuiteResult s;
      s.name = chosen[i]->name;
      s.passed = false;
      s.details = json{{"error", e.what()}};
      r.suites.push_back(std::move(s));
    }
  }
  return r;
}

inline std::string emit_report(const Report& r, const std::string& format) {
  if (format == "json") {
    json j;
    j["schema_version"] = r.schema_version;
    j["profile"] = r.profile;
    j["seed"] = r.seed;
    j["samples_drawn"] = r.samples_drawn;
    j["all_passed"] = r.all_passed();
    j["config"] = r.config_echo;
    j["constants"] = r.constants;
    json suites = json::array();
    for (const SuiteResult& s : r.suites) {
      json e;
      e["name"] = s.name;
      e["criterion"] = criterion_of(s.name);
      e["passed"] = s.passed;
      e["details"] = s.details;
      suites.push_back(std::move(e));
    }
    j["suites"] = std::move(suites);
    return j.dump(2) + "\n";
  }
  if (format == "csv_summary") {
    std::ostringstream o;
    o << "criterion,suite,passed,checks,failed_checks\n";
    for (const SuiteResult& s : r.suites) {
      int checks = 0, failed = 0;
      if (s.details.is_object() && s.details.contains("checks")) {
        for (const auto& item : s.details["checks"].items()) {
          ++checks;
          if (!item.value().get<bool>()) ++failed;
        }
      } else if (!s.passed) {
        failed = 1;
      }
      o << criterion_of(s.name) << "," << s.name << ","
        << (s.passed ? "true" : "false") << "," << checks << "," << failed
        << "\n";
    }
    return o.str();
  }
  throw std::invalid_argument("emit_report: unknown format '" + format + "'");
}

inline Report parse_report(const std::string& text) {
  json j = json::parse(text);
  int version = j.at("schema_version").get<int>();
  if (version != kReportSchemaVersion)
    throw std::runtime_error("report schema version " +
                             std::to_string(version) +
                             " unsupported (expected " +
                             std::to_string(kReportSchemaVersion) + ")");
  Report r;
  r.profile = j.at("profile").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.samples_drawn = j.at("samples_drawn").get<std::uint64_t>();
  r.config_echo = j.at("config").get<std::string>();
  r.constants = j.at("constants");
  for (const auto& e : j.at("suites")) {
    SuiteResult s;
    s.name = e.at("name").get<std::string>();
    s.passed = e.at("passed").get<bool>();
    s.details = e.at("details");
    r.suites.push_back(std::move(s));
  }
  return r;
}

}  // namespace mslearn
