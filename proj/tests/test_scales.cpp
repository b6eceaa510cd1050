#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "mslearn/rng.hpp"
#include "mslearn/scales.hpp"

using namespace mslearn;

namespace {

ScaleParams desk_params(int d, int k) {
  ScaleParams p;
  p.d = d;
  p.k = k;
  p.R = 1.0;
  p.eps = 0.05;
  return p;
}

// close/far sets must form a partition consistent with the thresholds
void check_record(const GapRecord& rec, const std::vector<double>& v,
                  const ScaleParams& p) {
  std::set<int> seen;
  for (int s : rec.close_slots) seen.insert(s);
  for (int s : rec.far_slots) seen.insert(s);
  REQUIRE(seen.size() == v.size());
  REQUIRE(rec.close_slots.size() + rec.far_slots.size() == v.size());
  double lT = p.log_T(rec.log_gamma);
  for (int s : rec.close_slots) {
    double diff = std::abs(v[s] - v[rec.slot]);
    if (diff > 0.0) REQUIRE(std::log(diff) <= lT);
  }
  for (int s : rec.far_slots) {
    double diff = std::abs(v[s] - v[rec.slot]);
    REQUIRE(diff > 0.0);
    REQUIRE(std::log(diff) >= rec.log_gamma);
  }
}

}  // namespace

TEST_CASE("transition map worked example", "[scales]") {
  ScaleParams p;
  p.d = 1;
  p.k = 1;
  p.R = 1.0;
  p.Lambda = 1.0;
  p.c_T = 3.0;  // exponent c_T k = 3
  REQUIRE(p.T_of(0.5) == Catch::Approx(0.125).margin(1e-15));

  // generic shape: T(gamma) << gamma at desk constants
  ScaleParams q = desk_params(4, 3);
  REQUIRE(q.T_of(0.01) < 1e-20);
  REQUIRE(q.T_of(0.01) > 0.0);
  REQUIRE_THROWS_AS(q.T_of(0.0), std::invalid_argument);
  REQUIRE_THROWS_AS(q.T_of(1.0), std::invalid_argument);
}

TEST_CASE("exponent guard", "[scales]") {
  ScaleParams p;
  p.k = 1;
  p.c_T = 0.9;  // c_T k <= 1 is rejected
  REQUIRE_THROWS_AS(p.T_of(0.5), std::invalid_argument);
  REQUIRE_THROWS_AS(p.level(0.5), std::invalid_argument);
}

TEST_CASE("level step identity and base point", "[scales][acceptance6]") {
  for (auto [d, k, R] : {std::tuple{4, 3, 1.0}, {6, 2, 2.0}, {50, 8, 1.0}}) {
    ScaleParams p = desk_params(d, k);
    p.R = R;
    REQUIRE(p.level(p.eps_prime()) == Catch::Approx(0.0).margin(1e-12));

    Rng rng(911);
    for (int t = 0; t < 100; ++t) {
      double lg = -std::exp(rng.uniform(std::log(0.1), std::log(70.0)));
      double lhs = p.level_log(p.log_T(lg));
      double rhs = 0.9 + p.level_log(lg);
      REQUIRE(lhs == Catch::Approx(rhs).margin(1e-9));
    }
  }
}

TEST_CASE("level is negative above the base scale", "[scales]") {
  ScaleParams p = desk_params(4, 3);
  REQUIRE(p.level(2.0 * p.eps_prime()) < 0.0);
  REQUIRE(p.level(0.5 * p.eps_prime()) > 0.0);
}

TEST_CASE("level inverse", "[scales]") {
  ScaleParams p = desk_params(5, 4);
  Rng rng(13);
  for (int t = 0; t < 50; ++t) {
    double lg = -std::exp(rng.uniform(std::log(0.1), std::log(50.0)));
    double lvl = p.level_log(lg);
    REQUIRE(p.log_gamma_of_level(lvl) == Catch::Approx(lg).margin(1e-7));
  }
}

TEST_CASE("game threshold grows like log k", "[scales]") {
  double prev = 0.0;
  for (int k : {2, 4, 8, 16, 32, 64, 128}) {
    ScaleParams p = desk_params(50, k);
    double tau = p.tau_game();
    int need = static_cast<int>(std::ceil(std::log2(double(k)))) + 2;
    REQUIRE(tau >= need);            // enough rounds for the halving game
    REQUIRE(tau <= 10.0 * (need + 3));  // and not wildly larger
    REQUIRE(tau > prev);
    prev = tau;
    REQUIRE(p.max_level() == Catch::Approx(std::max(tau + 2.0, 2.0 * tau)));
  }
}

TEST_CASE("projection sorting and folding", "[scales]") {
  Vec g(3);
  g << 1.0, 0.0, 0.0;
  std::vector<Vec> us(3, Vec(3));
  us[0] << -0.9, std::sqrt(1 - 0.81), 0.0;  // |<u,g>| = 0.9
  us[1] << 0.1, std::sqrt(1 - 0.01), 0.0;
  us[2] << 0.5, 0.0, std::sqrt(0.75);
  Projection p = project(us, g);
  REQUIRE(p.v.size() == 3);
  REQUIRE(p.v[0] == Catch::Approx(0.1));
  REQUIRE(p.v[1] == Catch::Approx(0.5));
  REQUIRE(p.v[2] == Catch::Approx(0.9));
  REQUIRE(p.order == std::vector<int>{1, 2, 0});

  Vec bad = 2.0 * g;
  REQUIRE_THROWS_AS(project(us, bad), std::invalid_argument);
}

TEST_CASE("coincident projections are a gapped scale", "[scales]") {
  ScaleParams p = desk_params(4, 3);
  Projection proj;
  proj.v = {0.3, 0.3, 0.3};
  proj.order = {0, 1, 2};
  CloseFar cf = close_far_sets(proj, 1, std::log(0.2), p);
  REQUIRE(cf.gapped);
  REQUIRE(cf.close_slots == std::vector<int>{0, 1, 2});
  REQUIRE(cf.far_slots.empty());
}

TEST_CASE("two clusters are gapped at an intermediate scale", "[scales]") {
  ScaleParams p = desk_params(4, 3);
  Projection proj;
  proj.v = {0.1, 0.1, 0.9};
  proj.order = {0, 1, 2};
  for (int i = 0; i < 3; ++i) {
    CloseFar cf = close_far_sets(proj, i, std::log(0.4), p);
    INFO("slot " << i);
    REQUIRE(cf.gapped);
  }
  CloseFar cf = close_far_sets(proj, 0, std::log(0.4), p);
  REQUIRE(cf.close_slots == std::vector<int>{0, 1});
  REQUIRE(cf.far_slots == std::vector<int>{2});
}

TEST_CASE("six point configuration from the figure", "[scales][acceptance6]") {
  // tight triple, an isolated point, and a pair whose spacing falls in the
  // dead band (T(gamma), gamma): gapped for the isolated point, not for the
  // pair members.
  std::vector<double> v = {0.0, 0.001, 0.002, 0.30, 0.50, 0.55};
  double lg = std::log(0.1);
  double lT = std::log(0.005);
  CloseFar at4 = close_far_with(v, 3, lg, lT);
  REQUIRE(at4.gapped);
  REQUIRE(at4.close_slots == std::vector<int>{3});
  REQUIRE(at4.far_slots == std::vector<int>{0, 1, 2, 4, 5});
  REQUIRE_FALSE(close_far_with(v, 4, lg, lT).gapped);
  REQUIRE_FALSE(close_far_with(v, 5, lg, lT).gapped);
}

TEST_CASE("scale below the floor is never gapped", "[scales]") {
  ScaleParams p = desk_params(4, 3);
  Projection proj;
  proj.v = {0.0, 0.5, 0.9};
  proj.order = {0, 1, 2};
  double lg = p.log_gamma_floor() - 10.0;
  REQUIRE_FALSE(close_far_sets(proj, 0, lg, p).gapped);
}

TEST_CASE("well separated pair is gapped at the first scale", "[scales]") {
  ScaleParams p = desk_params(2, 2);
  p.C0 = 0.05 / (0.01 * 4.0 * 8.0);  // eps' = 0.01
  REQUIRE(p.eps_prime() == Catch::Approx(0.01));
  Projection proj;
  proj.v = {0.0, 0.5};
  proj.order = {0, 1};
  std::vector<ScaleTraceRow> trace;
  auto rec = find_gapped_scale(proj, p, &trace);
  REQUIRE(rec.has_value());
  REQUIRE(rec->descents == 0);
  REQUIRE(rec->slot == 0);
  REQUIRE(rec->log_gamma == Catch::Approx(std::log(0.005)));
  REQUIRE(rec->far_slots == std::vector<int>{1});
  REQUIRE(trace.size() == 1);
  check_record(*rec, proj.v, p);
}

TEST_CASE("dead band gap forces one descent", "[scales]") {
  ScaleParams p = desk_params(2, 4);
  p.C0 = 0.05 / (0.03 * 4.0 * 64.0);  // eps' = 0.03
  REQUIRE(p.eps_prime() == Catch::Approx(0.03));
  // every slot has a neighbour at spacing 0.005, inside the dead band
  // (T(gamma_0), gamma_0) for gamma_0 = eps'/4 = 0.0075, so the first scale
  // has no gap anywhere; the second scale is far below 0.005
  Projection proj;
  proj.v = {0.0, 0.005, 0.04, 0.045};
  proj.order = {0, 1, 2, 3};
  std::vector<ScaleTraceRow> trace;
  auto rec = find_gapped_scale(proj, p, &trace);
  REQUIRE(rec.has_value());
  REQUIRE(rec->descents == 1);
  REQUIRE(rec->slot == 0);
  REQUIRE(trace.size() == 2);
  REQUIRE(trace[0].first_gapped_slot == -1);
  REQUIRE(trace[1].first_gapped_slot == 0);
  REQUIRE(rec->close_slots == std::vector<int>{0});
  REQUIRE(rec->far_slots == std::vector<int>{1, 2, 3});
  check_record(*rec, proj.v, p);
}

TEST_CASE("no gapped scale exactly when the spread is small",
          "[scales][acceptance6]") {
  Rng rng(4242);
  int found = 0, none = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    int k = 1 + static_cast<int>(rng.uniform_int(6));
    int d = 2 + static_cast<int>(rng.uniform_int(5));
    ScaleParams p = desk_params(d, k);
    Projection proj;
    proj.v.resize(k);
    if (trial % 3 == 0) {
      // clustered below eps': spread at most eps'/2
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
      REQUIRE_FALSE(rec.has_value());
      ++none;
    } else {
      REQUIRE(rec.has_value());
      REQUIRE(rec->log_gamma >= p.log_gamma_floor() - 1e-12);
      check_record(*rec, proj.v, p);
      ++found;
    }
  }
  REQUIRE(found > 100);
  REQUIRE(none > 100);
}

TEST_CASE("clump weight and detectability", "[scales]") {
  GapRecord rec;
  rec.close_neurons = {0, 2};
  ScaleParams p = desk_params(4, 3);
  std::vector<double> lam = {0.3, 5.0, -0.3};
  REQUIRE(clump_weight(rec, lam) == Catch::Approx(0.0).margin(1e-15));
  REQUIRE_FALSE(detectable(rec, lam, p));  // exact cancellation

  lam = {0.3, 5.0, 0.2};
  REQUIRE(clump_weight(rec, lam) == Catch::Approx(0.5));
  REQUIRE(detectable(rec, lam, p));

  // boundary is strict
  lam = {p.Lambda, 5.0, 0.0};
  REQUIRE_FALSE(detectable(rec, lam, p));
  lam[0] = p.Lambda + 1e-9;
  REQUIRE(detectable(rec, lam, p));
}

TEST_CASE("anticoncentration bands hold for most directions",
          "[scales][acceptance6]") {
  int d = 50, k = 8;
  ScaleParams p = desk_params(d, k);
  Rng dir_rng(77);
  std::vector<Vec> us;
  for (int i = 0; i < k; ++i) us.push_back(dir_rng.unit_vec(d));
  Rng g_rng(78);
  int pairs_ok = 0, floor_ok = 0;
  const int trials = 10000;
  for (int t = 0; t < trials; ++t) {
    Vec g = g_rng.unit_vec(d);
    AnticoncResult r = check_anticoncentration(us, g, p);
    pairs_ok += r.pairs;
    floor_ok += r.floor;
  }
  REQUIRE(double(pairs_ok) / trials >= 0.8);
  REQUIRE(double(floor_ok) / trials >= 0.9);
}

TEST_CASE("anticoncentration catches planted degeneracies", "[scales]") {
  int d = 50;
  ScaleParams p = desk_params(d, 2);
  Rng rng(5);
  Vec u = rng.unit_vec(d);
  std::vector<Vec> us = {u, u};  // difference direction vanishes; skipped
  Vec g = rng.unit_vec(d);
  // orthogonal g to u: floor must fail
  Vec
      gperp = (g - g.dot(u) * u).normalized();
  AnticoncResult r = check_anticoncentration({u}, gperp, p);
  REQUIRE_FALSE(r.floor);
  // g aligned with u_i + u_j: upper band must fail
  std::vector<Vec> pairug = {u, rng.unit_vec(d)};
  Vec aligned = (pairug[0] + pairug[1]).normalized();
  r = check_anticoncentration(pairug, aligned, p);
  REQUIRE_FALSE(r.pairs);
}

TEST_CASE("projection of a generated ladder finds a gap", "[scales]") {
  GenParams gp;
  gp.ladder = {0.3, 0.001};
  ReluNetwork net =
      gen_instance(InstanceKind::line_multiscale, 3, 4, 1.0, 99, gp);
  ScaleParams p = desk_params(4, 3);
  Rng rng(100);
  int found = 0;
  for (int t = 0; t < 50; ++t) {
    Projection proj = project(net, rng.unit_vec(4));
    auto rec = find_gapped_scale(proj, p);
    if (rec.has_value()) {
      check_record(*rec, proj.v, p);
      ++found;
    }
  }
  REQUIRE(found == 50);  // ladder spreads are far above eps'
}
