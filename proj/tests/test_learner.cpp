#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "mslearn/learner.hpp"
#include "mslearn/moments.hpp"
#include "mslearn/network.hpp"
#include "mslearn/rng.hpp"

using namespace mslearn;

namespace {

ScaleParams desk_params(int d, int k, double R = 1.0) {
  ScaleParams p;
  p.d = d;
  p.k = k;
  p.R = R;
  p.eps = 0.05;
  return p;
}

LearnerConfig desk_config(const ReluNetwork& truth) {
  LearnerConfig cfg;
  cfg.scales = desk_params(truth.d, static_cast<int>(truth.neurons.size()),
                           std::max(truth.R, 1.0));
  cfg.oracle_truth = truth;
  return cfg;
}

Vec axis(int d, int i) {
  Vec v = Vec::Zero(d);
  v[i] = 1.0;
  return v;
}

// orthonormal columns via Gram-Schmidt on gaussian draws
Mat random_orthonormal(Rng& rng, int d, int r) {
  Mat b(d, r);
  for (int j = 0; j < r; ++j) {
    Vec v = rng.gauss_vec(d);
    for (int i = 0; i < j; ++i) v -= b.col(i).dot(v) * b.col(i);
    b.col(j) = v.normalized();
  }
  return b;
}

// minimal-norm r with <u_i, r> = |r|^2 for every i
Vec equiangular_witness(const std::vector<Vec>& us) {
  int d = static_cast<int>(us[0].size());
  int k = static_cast<int>(us.size());
  Mat U(d, k);
  for (int i = 0; i < k; ++i) U.col(i) = us[i];
  Vec s = U * (U.transpose() * U).ldlt().solve(Vec::Ones(k));
  return s / s.squaredNorm();
}

}  // namespace

TEST_CASE("two-neuron fit recovers a single absolute-value term",
          "[learner]") {
  int d = 4;
  AbsNetwork truth = AbsNetwork::zero(d, 1.0);
  truth.terms.push_back({1.0, axis(d, 0)});
  SampleBatch batch = sample_labeled(truth, 400'000, 11);

  LearnerConfig cfg;
  cfg.scales = desk_params(d, 1);
  ReluNetwork dummy;
  dummy.d = d;
  dummy.R = 1.0;
  dummy.neurons.push_back({1.0, axis(d, 0)});
  cfg.oracle_truth = dummy;

  AbsNetwork learned = AbsNetwork::zero(d, 1.0);
  TwoNeuronFit fit = two_neuron_fit(batch, learned, cfg);
  REQUIRE_FALSE(fit.zero);
  REQUIRE(std::abs(fit.a - 1.0) < 0.02);
  REQUIRE(std::abs(fit.b) < 0.02);
  REQUIRE(std::abs(fit.u.dot(axis(d, 0))) > 0.999);
  REQUIRE(l2_dist(fit.h, truth) < 0.05);
}

TEST_CASE("two-neuron fit reproduces an antipodal relu pair", "[learner]") {
  int d = 4;
  Vec u(d);
  u << 1.0, 1.0, 0.0, 0.0;
  u.normalize();
  ReluNetwork truth;
  truth.d = d;
  truth.R = 1.0;
  truth.neurons.push_back({1.2, u});
  truth.neurons.push_back({0.7, Vec(-u)});
  SampleBatch batch = sample_labeled(truth, 400'000, 12);

  LearnerConfig cfg = desk_config(truth);
  Rng rng(5);
  Vec g = rng.unit_vec(d);
  REQUIRE(std::abs(g.dot(u)) > 0.1);  // conditioned draw for this seed

  AbsNetwork learned = AbsNetwork::zero(d, 1.0);
  TwoNeuronFit fit = two_neuron_fit(batch, learned, cfg, g);
  REQUIRE_FALSE(fit.zero);
  REQUIRE(param_dist(fit.as_relu_pair(), truth) < 0.05);
  REQUIRE(l2_dist(fit.h, truth) < 0.05);
}

TEST_CASE("two-neuron fit returns the zero network on a fitted residual",
          "[learner]") {
  int d = 4;
  AbsNetwork net = AbsNetwork::zero(d, 1.0);
  net.w = 0.3 * axis(d, 1);
  net.terms.push_back({0.9, axis(d, 2)});
  SampleBatch batch = sample_labeled(net, 200'000, 13);

  ReluNetwork dummy;
  dummy.d = d;
  dummy.R = 1.0;
  dummy.neurons.push_back({1.0, axis(d, 2)});
  LearnerConfig cfg;
  cfg.scales = desk_params(d, 1);
  cfg.oracle_truth = dummy;

  TwoNeuronFit fit = two_neuron_fit(batch, net, cfg);
  REQUIRE(fit.zero);
  REQUIRE(fit.h.terms.empty());
  REQUIRE(fit.h.w.norm() == 0.0);
}

TEST_CASE("two-neuron fit flags a degenerate projection direction",
          "[learner]") {
  int d = 4;
  AbsNetwork truth = AbsNetwork::zero(d, 1.0);
  truth.terms.push_back({1.0, axis(d, 0)});
  SampleBatch batch = sample_labeled(truth, 400'000, 14);

  ReluNetwork dummy;
  dummy.d = d;
  dummy.R = 1.0;
  dummy.neurons.push_back({1.0, axis(d, 0)});
  LearnerConfig cfg;
  cfg.scales = desk_params(d, 1);
  cfg.oracle_truth = dummy;

  AbsNetwork learned = AbsNetwork::zero(d, 1.0);
  TwoNeuronFit fit = two_neuron_fit(batch, learned, cfg, axis(d, 1));
  REQUIRE(fit.degenerate);
  REQUIRE(std::abs(fit.u.dot(axis(d, 0))) > 0.99);
}

TEST_CASE("pca subspace spans the planted directions", "[learner]") {
  int d = 5;
  Rng rng(21);
  Vec u1 = rng.unit_vec(d), u2 = rng.unit_vec(d);
  AbsNetwork net = AbsNetwork::zero(d, 1.0);
  net.terms.push_back({0.6, u1});
  net.terms.push_back({-0.4, u2});
  Vec g = rng.unit_vec(d);

  std::vector<ContractedMatrix> cms;
  cms.push_back(contract(exact_moment_tensor(net, 2), g));
  cms.push_back(contract(exact_moment_tensor(net, 4), g));
  Mat basis = pca_subspace(cms, 2);
  REQUIRE(basis.cols() >= 2);
  REQUIRE((u1 - basis * (basis.transpose() * u1)).norm() < 1e-8);
  REQUIRE((u2 - basis * (basis.transpose() * u2)).norm() < 1e-8);

  std::vector<ContractedMatrix> zeros;
  zeros.push_back({2, Mat::Zero(d, d)});
  REQUIRE(pca_subspace(zeros, 2).cols() == 0);

  REQUIRE_THROWS_AS(pca_subspace(std::vector<ContractedMatrix>{}, 2),
                    std::invalid_argument);
}

TEST_CASE("direction rounding stays within the granularity", "[learner]") {
  Rng rng(31);
  int d = 6;
  for (int trial = 0; trial < 1000; ++trial) {
    int r = 1 + trial % 3;
    double upsilon = (trial % 2 == 0) ? 0.05 : 0.2;
    Mat basis = random_orthonormal(rng, d, r);
    Vec coeff = rng.unit_vec(r);
    Vec v = basis * coeff;
    DirectionNet net(basis, upsilon);
    auto rounded = net.round_direction(v);
    REQUIRE(rounded.has_value());
    REQUIRE(std::abs(rounded->norm() - 1.0) < 1e-12);
    REQUIRE((*rounded - v).norm() <= upsilon + 1e-12);
  }
  // general input compares to its normalized in-span projection
  Mat basis = random_orthonormal(rng, d, 2);
  Vec v = rng.gauss_vec(d);
  Vec proj = basis * (basis.transpose() * v);
  DirectionNet net(basis, 0.1);
  auto rounded = net.round_direction(v);
  REQUIRE(rounded.has_value());
  REQUIRE((*rounded - proj.normalized()).norm() <= 0.1 + 1e-12);
}

TEST_CASE("direction net enumerates the one-dimensional case exactly",
          "[learner]") {
  int d = 5;
  Mat basis(d, 1);
  basis.col(0) = axis(d, 2);
  DirectionNet net(basis, 0.1);
  auto dirs = net.enumerate(1000);
  REQUIRE(dirs.size() == 2);
  double s0 = dirs[0].dot(axis(d, 2));
  double s1 = dirs[1].dot(axis(d, 2));
  REQUIRE(std::abs(std::abs(s0) - 1.0) < 1e-12);
  REQUIRE(std::abs(std::abs(s1) - 1.0) < 1e-12);
  REQUIRE(s0 * s1 < 0.0);

  Rng rng(41);
  Mat wide = random_orthonormal(rng, d, 4);
  DirectionNet fine(wide, 0.05);
  bool threw = false;
  try {
    fine.enumerate(100'000);
  } catch (const CapacityError& e) {
    threw = true;
    REQUIRE(e.needed > 100'000);
    REQUIRE(e.required_upsilon > 0.05);
  }
  REQUIRE(threw);
}

TEST_CASE("floor weights land on the grid from below", "[learner]") {
  REQUIRE(floor_weight(0.37, 1.0, 0.1) == Catch::Approx(0.3));
  REQUIRE(floor_weight(-0.37, 1.0, 0.1) == Catch::Approx(-0.4));
  REQUIRE(floor_weight(1.0, 1.0, 0.1) == Catch::Approx(1.0));
  REQUIRE(floor_weight(-1.0, 1.0, 0.1) == Catch::Approx(-1.0));
  REQUIRE(floor_weight(5.0, 1.0, 0.1) == Catch::Approx(1.0));
  REQUIRE(floor_weight(-5.0, 1.0, 0.1) == Catch::Approx(-1.0));
  REQUIRE_THROWS_AS(floor_weight(0.0, 1.0, 0.0), std::invalid_argument);
  REQUIRE_THROWS_AS(floor_weight(0.0, 0.0, 0.1), std::invalid_argument);

  Rng rng(51);
  for (int i = 0; i < 500; ++i) {
    double x = rng.uniform(-1.0, 1.0);
    double f = floor_weight(x, 1.0, 0.05);
    REQUIRE(f <= x + 1e-9);
    REQUIRE(x - f < 0.05 + 1e-9);
    double cells = (f + 1.0) / 0.05;
    REQUIRE(std::abs(cells - std::round(cells)) < 1e-6);
  }
}

TEST_CASE("candidate stream covers small nets deterministically",
          "[learner]") {
  int d = 3;
  Mat basis(d, 1);
  basis.col(0) = axis(d, 0);
  auto run = [&]() {
    CandidateStream cs = candidate_net(basis, 1.0, 2, 1.0, 1000, 1.0);
    std::vector<std::string> sig;
    NetGuess guess;
    while (cs.next(guess)) {
      std::string s;
      for (std::size_t i = 0; i < guess.dirs.size(); ++i) {
        s += guess.dirs[i][0] > 0 ? '+' : '-';
        s += std::to_string(guess.weights[i]);
        s += '|';
      }
      sig.push_back(s);
    }
    return sig;
  };
  auto a = run();
  auto b = run();
  REQUIRE(a == b);
  REQUIRE(a.size() == 33);  // 2*3 singles + 3 direction pairs * 9 weights

  Rng rng(61);
  Mat wide = random_orthonormal(rng, 4, 2);
  REQUIRE_THROWS_AS(candidate_net(wide, 0.2, 3, 1.0, 200'000, 0.1),
                    CapacityError);
}

TEST_CASE("mixed seeds separate stages and purposes", "[learner]") {
  std::set<std::uint64_t> seen;
  seen.insert(detail::mix_seed(1, 1, 1));
  seen.insert(detail::mix_seed(1, 2, 1));
  seen.insert(detail::mix_seed(2, 1, 1));
  seen.insert(detail::mix_seed(1, 1, 2));
  seen.insert(detail::mix_seed(1, 2));
  REQUIRE(seen.size() == 5);
  REQUIRE(detail::mix_seed(7, 9, 3) == detail::mix_seed(7, 9, 3));
}

TEST_CASE("learner config validation", "[learner]") {
  ReluNetwork t;
  t.d = 3;
  t.R = 1.0;
  t.neurons.push_back({1.0, axis(3, 0)});
  LearnerConfig cfg = desk_config(t);
  REQUIRE_NOTHROW(cfg.validate());

  LearnerConfig bad = cfg;
  bad.oracle_truth.reset();
  REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.upsilon = 0.0;
  REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.n_stage = 0;
  REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.eps = 0.0;
  REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.beam_width = 0;
  REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);

  REQUIRE(cfg.omega_eff() ==
          Catch::Approx(std::sqrt(cfg.scales.eps_prime())));
  cfg.omega = 0.2;
  REQUIRE(cfg.omega_eff() == Catch::Approx(0.2));
  REQUIRE(cfg.max_stages_eff() == cfg.scales.k + 2);
  cfg.max_stages = 7;
  REQUIRE(cfg.max_stages_eff() == 7);
  REQUIRE(cfg.weight_cap() == Catch::Approx(2.0 * cfg.scales.k * cfg.scales.R));
}

TEST_CASE("recursive learner terminates immediately on one neuron",
          "[learner]") {
  int d = 3;
  Vec u(d);
  u << 1.0, -1.0, 1.0;
  u.normalize();
  ReluNetwork truth;
  truth.d = d;
  truth.R = 1.0;
  truth.neurons.push_back({1.5, u});

  LearnerConfig cfg = desk_config(truth);
  cfg.n_stage = 200'000;
  cfg.n_validate = 50'000;
  cfg.seed = 71;

  LearnerResult res = recursive_learn(gaussian_source(truth), cfg);
  REQUIRE(res.complete);
  REQUIRE(res.candidates.size() == 1);
  const Candidate& c = res.candidates.front();
  REQUIRE(c.complete);
  REQUIRE(c.stages == 1);
  REQUIRE(c.trace.size() == 1);
  REQUIRE(c.trace[0].kase == 1);
  REQUIRE(c.loss < 0.01);
  REQUIRE(l2_dist(c.net, truth) < 0.05);
}

TEST_CASE("recursive learner resolves two separated neurons", "[learner]") {
  ReluNetwork truth = gen_instance(InstanceKind::well_separated, 2, 4, 1.0, 7);
  AbsNetwork abs_truth = to_abs_form(truth);
  for (const auto& t : abs_truth.terms)
    REQUIRE(std::abs(t.lambda) > 0.05);  // both neurons detectable

  LearnerConfig cfg = desk_config(truth);
  cfg.n_stage = 400'000;
  cfg.n_validate = 100'000;
  cfg.seed = 72;

  LearnerResult res = recursive_learn(gaussian_source(truth), cfg);
  REQUIRE(res.complete);
  REQUIRE(res.candidates.size() == 1);
  const Candidate& c = res.candidates.front();
  REQUIRE(c.stages == 2);
  REQUIRE(c.trace[0].kase == 2);
  REQUIRE(c.trace[0].clumps.size() == 2);
  for (const auto& cl : c.trace[0].clumps) {
    REQUIRE(cl.detectable);
    REQUIRE_FALSE(cl.skipped);
    REQUIRE(cl.neurons.size() == 1);
    double lam = abs_truth.terms[cl.neurons[0]].lambda;
    REQUIRE(std::abs(cl.lambda_hat - lam) <= cfg.upsilon_w + 1e-9);
  }
  REQUIRE(c.trace[0].game_vec.size() == 3);
  REQUIRE_FALSE(c.trace[0].game_move.empty());
  REQUIRE(c.trace[1].kase == 1);

  SampleBatch holdout = sample_labeled(truth, 100'000, 73);
  Selection sel;
  Candidate best = validate_select(res.candidates, holdout, 0.05, &sel);
  REQUIRE(sel.meets_eps);
  REQUIRE(best.loss < 0.05);
  REQUIRE(l2_dist(best.net, truth) * l2_dist(best.net, truth) < 0.05);
}

TEST_CASE("recursive learner follows the two-scale line instance",
          "[learner]") {
  GenParams gp;
  gp.ladder = {0.5, 1e-30};  // second gap far below resolvable scales
  ReluNetwork truth =
      gen_instance(InstanceKind::line_multiscale, 3, 4, 1.0, 9, gp);

  LearnerConfig cfg = desk_config(truth);
  cfg.n_stage = 300'000;
  cfg.n_validate = 50'000;
  cfg.seed = 74;

  LearnerResult res = recursive_learn(gaussian_source(truth), cfg);
  REQUIRE(res.complete);
  REQUIRE(res.candidates.size() == 1);
  const Candidate& c = res.candidates.front();
  REQUIRE(c.stages == 2);
  REQUIRE(c.trace[0].kase == 2);
  REQUIRE(c.trace[0].clumps.size() == 2);
  std::size_t sizes[2] = {c.trace[0].clumps[0].neurons.size(),
                          c.trace[0].clumps[1].neurons.size()};
  REQUIRE(std::min(sizes[0], sizes[1]) == 1);
  REQUIRE(std::max(sizes[0], sizes[1]) == 2);
  REQUIRE(c.trace[1].kase == 1);

  SampleBatch holdout = sample_labeled(truth, 50'000, 75);
  Selection sel;
  Candidate best = validate_select(res.candidates, holdout, 0.05, &sel);
  REQUIRE(best.loss < 0.05);
}

TEST_CASE("exhaustive branching contains an exact candidate", "[learner]") {
  ReluNetwork truth;
  truth.d = 2;
  truth.R = 1.0;
  truth.neurons.push_back({1.0, axis(2, 0)});
  truth.neurons.push_back({1.0, axis(2, 1)});

  LearnerConfig cfg = desk_config(truth);
  cfg.branch_mode = BranchMode::exhaustive;
  cfg.upsilon = 1.0;
  cfg.upsilon_w = 0.5;
  cfg.n_stage = 4000;
  cfg.n_validate = 4000;
  cfg.seed = 81;

  LearnerResult res = recursive_learn(gaussian_source(truth), cfg);
  REQUIRE(res.complete);
  REQUIRE(res.candidates.size() >= 100);

  SampleBatch holdout = sample_labeled(truth, 20'000, 82);
  Selection sel;
  Candidate best = validate_select(res.candidates, holdout, 0.05, &sel);
  REQUIRE(sel.meets_eps);
  REQUIRE(best.loss < 0.05);
}

TEST_CASE("beam search prunes to width and still fits", "[learner]") {
  ReluNetwork truth;
  truth.d = 2;
  truth.R = 1.0;
  truth.neurons.push_back({1.0, axis(2, 0)});
  truth.neurons.push_back({1.0, axis(2, 1)});

  LearnerConfig cfg = desk_config(truth);
  cfg.branch_mode = BranchMode::beam;
  cfg.beam_width = 4;
  cfg.upsilon = 1.0;
  cfg.upsilon_w = 0.5;
  cfg.n_stage = 4000;
  cfg.n_validate = 4000;
  cfg.n_beam = 2000;
  cfg.seed = 83;

  LearnerResult res = recursive_learn(gaussian_source(truth), cfg);
  REQUIRE(res.complete);
  REQUIRE(res.candidates.size() <= 4);

  SampleBatch holdout = sample_labeled(truth, 20'000, 84);
  Selection sel;
  Candidate best = validate_select(res.candidates, holdout, 0.05, &sel);
  REQUIRE(best.loss < 0.05);
}

TEST_CASE("stage budget exhaustion is reported", "[learner]") {
  ReluNetwork truth;
  truth.d = 2;
  truth.R = 1.0;
  truth.neurons.push_back({1.0, axis(2, 0)});
  truth.neurons.push_back({1.0, axis(2, 1)});

  LearnerConfig cfg = desk_config(truth);
  cfg.max_stages = 1;
  cfg.n_stage = 4000;
  cfg.n_validate = 2000;
  cfg.seed = 85;

  LearnerResult res = recursive_learn(gaussian_source(truth), cfg);
  REQUIRE_FALSE(res.complete);
  REQUIRE(res.candidates.size() == 1);
  REQUIRE_FALSE(res.candidates.front().complete);
  REQUIRE(res.candidates.front().stages == 1);
}

TEST_CASE("weight cap violations throw", "[learner]") {
  ReluNetwork truth;
  truth.d = 2;
  truth.R = 1.0;
  truth.neurons.push_back({1.0, axis(2, 0)});
  truth.neurons.push_back({1.0, axis(2, 1)});

  LearnerConfig cfg = desk_config(truth);
  cfg.weight_cap_multiple = 0.2;  // cap 0.2 < first grid weight 0.5
  cfg.n_stage = 4000;
  cfg.n_validate = 2000;
  cfg.seed = 86;

  REQUIRE_THROWS_AS(recursive_learn(gaussian_source(truth), cfg),
                    std::logic_error);
}

TEST_CASE("validate select picks the candidate that generalizes",
          "[learner]") {
  ReluNetwork truth = gen_instance(InstanceKind::well_separated, 2, 4, 1.0, 5);
  AbsNetwork good = to_abs_form(truth);
  AbsNetwork bad = good;
  bad.terms[0].lambda += 0.5;

  Candidate ca, cb;
  ca.net = good;
  cb.net = bad;

  SampleBatch val = sample_labeled(truth, 100'000, 91);
  Selection sel;
  Candidate chosen = validate_select({ca, cb}, val, 0.05, &sel);
  REQUIRE(sel.index == 0);
  REQUIRE(sel.meets_eps);
  REQUIRE(sel.margin > 0.1);
  REQUIRE(chosen.loss < 1e-3);

  Selection single;
  validate_select({ca}, val, 0.05, &single);
  REQUIRE(single.index == 0);
  REQUIRE(single.margin == 0.0);

  REQUIRE_THROWS_AS(validate_select({}, val, 0.05), std::invalid_argument);

  // repeated draws never prefer the corrupted net
  for (int trial = 0; trial < 30; ++trial) {
    SampleBatch v = sample_labeled(truth, 20'000, 1000 + trial);
    Selection s;
    validate_select({ca, cb}, v, 0.05, &s);
    REQUIRE(s.index == 0);
  }
}

TEST_CASE("even-moment witness clears the planted signal bound",
          "[learner]") {
  Rng rng(101);
  int checked = 0;
  for (int trial = 0; trial < 200; ++trial) {
    int k = 2 + trial % 3;
    int d = 4 + trial % 3;
    ScaleParams sp = desk_params(d, k);

    // well-separated planted directions, all weights detectable
    std::vector<Vec> us;
    while (static_cast<int>(us.size()) < k) {
      Vec u = rng.unit_vec(d);
      bool ok = true;
      for (const Vec& v : us)
        if (std::min((u - v).norm(), (u + v).norm()) < 0.5) ok = false;
      if (ok) us.push_back(u);
    }
    AbsNetwork net = AbsNetwork::zero(d, 1.0);
    for (int i = 0; i < k; ++i) {
      double lam = (rng.next_double() < 0.5 ? -1.0 : 1.0) *
                   rng.uniform(0.06, 1.0 / k);
      net.terms.push_back({lam, us[i]});
    }

    // conditioned projection direction: bounded-away values, separated
    Vec g;
    double alpha = 0.0, gamma_sep = 0.0;
    bool found = false;
    for (int tries = 0; tries < 200 && !found; ++tries) {
      g = rng.unit_vec(d);
      std::vector<double> v;
      for (const Vec& u : us) v.push_back(std::abs(u.dot(g)));
      alpha = *std::min_element(v.begin(), v.end());
      gamma_sep = 2.0;
      for (int i = 0; i < k; ++i)
        for (int j = i + 1; j < k; ++j)
          gamma_sep = std::min(gamma_sep, std::abs(v[i] - v[j]));
      found = alpha >= 0.05 && gamma_sep >= 0.02;
    }
    if (!found) continue;

    Vec r = equiangular_witness(us);
    double r2 = r.squaredNorm();
    for (const Vec& u : us) REQUIRE(std::abs(u.dot(r) - r2) < 1e-9);

    double best = 0.0;
    for (int l = 2; l <= 2 * k + 2; l += 2) {
      ContractedMatrix cm = contract(exact_moment_tensor(net, l), g);
      best = std::max(best, std::abs(r.dot(cm.m * r)));
    }
    // exact singleton clusters: zero width, measured separation
    SpecificConstants sc =
        powersum_specific_constants(sp, alpha, std::log(gamma_sep), 0.0);
    double r4 = r2 * r2;
    REQUIRE(sc.c2 == 0.0);
    REQUIRE(sc.c1 * r4 > 0.0);  // the bound has content at this geometry
    REQUIRE(best >= sc.c1 * r4 - sc.c2);
    ++checked;
  }
  REQUIRE(checked > 150);

  // full-machinery reading: certified scale, anticoncentration floor for
  // alpha, cluster width T(gamma); the frozen constants keep the inequality
  // (at desk parameters the right side is deep in the slack)
  {
    Rng mrng(103);
    for (int trial = 0; trial < 20; ++trial) {
      int k = 2 + trial % 2;
      int d = 4;
      ScaleParams sp = desk_params(d, k);
      std::vector<Vec> us;
      while (static_cast<int>(us.size()) < k) {
        Vec u = mrng.unit_vec(d);
        bool ok = true;
        for (const Vec& v : us)
          if (std::min((u - v).norm(), (u + v).norm()) < 0.5) ok = false;
        if (ok) us.push_back(u);
      }
      AbsNetwork net = AbsNetwork::zero(d, 1.0);
      for (int i = 0; i < k; ++i)
        net.terms.push_back({mrng.uniform(0.06, 1.0 / k), us[i]});

      Vec g;
      bool conditioned = false;
      for (int tries = 0; tries < 50 && !conditioned; ++tries) {
        g = mrng.unit_vec(d);
        AnticoncResult ac = check_anticoncentration(us, g, sp);
        conditioned = ac.pairs && ac.floor;
      }
      if (!conditioned) continue;
      Projection proj = project(us, g);
      auto gap = find_gapped_scale(proj, sp);
      REQUIRE(gap.has_value());  // separated instance, spread above eps'

      double alpha_floor =
          sp.anticonc_c / (k * std::sqrt(static_cast<double>(d)));
      double width = std::exp(sp.log_T(gap->log_gamma));
      SpecificConstants sc = powersum_specific_constants(
          sp, alpha_floor, gap->log_gamma, width);
      REQUIRE(sc.c1 > 0.0);

      Mat basis = random_orthonormal(mrng, d, 1 + trial % d);
      Mat pi = basis * basis.transpose();
      Vec r = pi * us[gap->neuron];
      double r4 = r.squaredNorm() * r.squaredNorm();
      double best = 0.0;
      for (int l = 2; l <= 2 * k + 2; l += 2) {
        ContractedMatrix cm = contract(exact_moment_tensor(net, l), g);
        best = std::max(best, std::abs(r.dot(cm.m * r)));
      }
      REQUIRE(best >= sc.c1 * r4 - sc.c2);
    }
  }

  // the tensor sweep agrees with the direct power correlation
  {
    int d = 4, k = 2;
    Rng r2(102);
    std::vector<Vec> us = {r2.unit_vec(d), r2.unit_vec(d)};
    AbsNetwork net = AbsNetwork::zero(d, 1.0);
    net.terms.push_back({0.4, us[0]});
    net.terms.push_back({-0.3, us[1]});
    Vec g = r2.unit_vec(d);
    Vec rr = equiangular_witness(us);
    double rn4 = rr.squaredNorm() * rr.squaredNorm();
    std::vector<double> v = {us[0].dot(g), us[1].dot(g)};
    std::vector<double> q = {0.4, -0.3};
    for (int l = 2; l <= 2 * k + 2; l += 2) {
      ContractedMatrix cm = contract(exact_moment_tensor(net, l), g);
      double lhs = rr.dot(cm.m * rr);
      double rhs = rn4 * power_correlation(v, q, l - 2);
      REQUIRE(lhs == Catch::Approx(rhs).margin(1e-12));
    }
  }
  REQUIRE(powersum_specific_constants(desk_params(4, 2), 0.2, -2.0, 0.0).c1 >
          powersum_specific_constants(desk_params(4, 2), 0.1, -2.0, 0.0).c1);
  REQUIRE_THROWS_AS(
      powersum_specific_constants(desk_params(4, 2), 0.0, -2.0, 0.0),
      std::invalid_argument);
  REQUIRE_THROWS_AS(
      powersum_specific_constants(desk_params(4, 2), 0.1, -2.0, -1.0),
      std::invalid_argument);
  REQUIRE(theoretical_upsilon(1e-6, 1e-3, 1e-9) ==
          Catch::Approx(std::sqrt(1e-3) + std::pow(1e-6, 0.25)));
  REQUIRE_THROWS_AS(theoretical_upsilon(1e-6, 0.0, 1e-9),
                    std::invalid_argument);
}

TEST_CASE("dropping an undetectable clump is cheap", "[learner]") {
  Rng rng(111);
  for (int trial = 0; trial < 500; ++trial) {
    int k = 2 + trial % 4;
    int d = 3 + trial % 4;
    ScaleParams sp = desk_params(d, k);
    double log_gamma = std::log(sp.eps_prime() / k);  // top descent scale
    double t_gamma = std::exp(sp.log_T(log_gamma));

    int m = 2 + trial % (k > 2 ? k - 1 : 1);
    m = std::min(m, k);
    Vec base = rng.unit_vec(d);
    std::vector<Vec> dirs;
    for (int i = 0; i < m; ++i) {
      Vec u = base + t_gamma * k * rng.gauss_vec(d);
      dirs.push_back(u.normalized());
    }
    std::vector<double> lam(m);
    double partial = 0.0;
    for (int i = 0; i + 1 < m; ++i) {
      lam[i] = (rng.next_double() < 0.5 ? -1.0 : 1.0) *
               rng.uniform(0.1, sp.R / m);
      partial += lam[i];
    }
    lam[m - 1] = -partial + rng.uniform(-0.9, 0.9) * sp.Lambda;
    if (std::abs(lam[m - 1]) > sp.R) continue;

    AbsNetwork clump = AbsNetwork::zero(d, sp.R);
    double total = 0.0;
    for (int i = 0; i < m; ++i) {
      clump.terms.push_back({lam[i], dirs[i]});
      total += lam[i];
    }
    REQUIRE(std::abs(total) <= sp.Lambda + 1e-12);
    REQUIRE(l2_norm(clump) <= subtract_linear_bound(sp, t_gamma));
  }
}

TEST_CASE("grid replacement of a detectable clump is cheap", "[learner]") {
  Rng rng(121);
  for (int trial = 0; trial < 500; ++trial) {
    int k = 2 + trial % 4;
    int d = 3 + trial % 4;
    double upsilon = (trial % 2 == 0) ? 0.05 : 0.3;
    ScaleParams sp = desk_params(d, k);
    double log_gamma = std::log(sp.eps_prime() / k);
    double t_gamma = std::exp(sp.log_T(log_gamma));

    int m = 1 + trial % k;
    Vec base = rng.unit_vec(d);
    std::vector<Vec> dirs;
    for (int i = 0; i < m; ++i)
      dirs.push_back(Vec(base + t_gamma * k * rng.gauss_vec(d)).normalized());
    std::vector<double> lam(m);
    lam[0] = rng.uniform(2.0 * sp.Lambda, 0.8 * sp.R);
    for (int i = 1; i < m; ++i)
      lam[i] = rng.uniform(-0.5, 0.5) * sp.Lambda / m;

    AbsNetwork clump = AbsNetwork::zero(d, sp.R);
    Vec rep = Vec::Zero(d);
    double lam_true = 0.0;
    for (int i = 0; i < m; ++i) {
      clump.terms.push_back({lam[i], dirs[i]});
      lam_true += lam[i];
      rep += lam[i] * dirs[i];
    }
    REQUIRE(std::abs(lam_true) > sp.Lambda);
    Vec u_rep = rep.normalized();

    // a net direction within upsilon and a floored grid weight
    Vec zeta = rng.gauss_vec(d);
    zeta -= zeta.dot(u_rep) * u_rep;
    if (zeta.norm() > 1e-12)
      zeta *= 0.9 * upsilon / zeta.norm() * rng.next_double();
    Vec u_hat = Vec(u_rep + zeta).normalized();
    double lam_hat = floor_weight(lam_true, sp.R, upsilon);

    AbsNetwork approx = AbsNetwork::zero(d, sp.R);
    approx.terms.push_back({lam_hat, u_hat});
    REQUIRE(l2_dist(clump, approx) <= epscover_bound(sp, upsilon));
  }
}

TEST_CASE("stage counts stay logarithmic in the width", "[learner]") {
  for (int k = 1; k <= 4; ++k) {
    ReluNetwork truth =
        gen_instance(InstanceKind::random_sphere, k, 4, 1.0, 130 + k);
    LearnerConfig cfg = desk_config(truth);
    cfg.n_stage = 30'000;
    cfg.n_validate = 1000;
    cfg.seed = 131 + k;

    LearnerResult res = recursive_learn(gaussian_source(truth), cfg);
    REQUIRE(res.complete);
    double bound =
        kMoveBudgetConstant * std::log2(std::max(static_cast<double>(k), 2.0));
    for (const auto& c : res.candidates) {
      REQUIRE(c.complete);
      REQUIRE(static_cast<double>(c.stages) <= bound);
    }
  }
}
