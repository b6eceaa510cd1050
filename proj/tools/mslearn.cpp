// Command line front end: instance generation, single-shot estimator and
// game runs, the learner, and the report suites. All subcommands are pure
// functions of config plus flags; timing goes to stderr only, so anything
// written to --out or stdout is byte-reproducible.

#include <CLI11.hpp>

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mslearn/harness.hpp"

using mslearn::json;

namespace {

struct Common {
  std::string config_path;
  std::string out;
  std::string profile;
  std::int64_t seed = -1;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config_path, "experiment config file");
  sub->add_option("--seed", c.seed, "override the config seed");
  sub->add_option("--out", c.out, "output path (default stdout)");
  sub->add_option("--profile", c.profile, "override the profile (ci, full)")
      ->check(CLI::IsMember({"ci", "full"}));
}

mslearn::ExperimentConfig resolve(const Common& c) {
  mslearn::ExperimentConfig cfg;
  if (!c.config_path.empty())
    cfg = mslearn::ExperimentConfig::load(c.config_path);
  if (c.seed >= 0) cfg.seed = static_cast<std::uint64_t>(c.seed);
  if (!c.profile.empty()) cfg.profile = c.profile;
  if (!c.out.empty()) cfg.out = c.out;
  cfg.validate();
  return cfg;
}

void write_output(const std::string& text, const std::string& out) {
  if (out.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream f(out, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + out);
  f << text;
  std::fprintf(stderr, "wrote %zu bytes to %s\n", text.size(), out.c_str());
}

json vec_json(const mslearn::Vec& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

json relu_net_json(const mslearn::ReluNetwork& net) {
  json j;
  j["d"] = net.d;
  j["R"] = net.R;
  json neurons = json::array();
  for (const auto& n : net.neurons)
    neurons.push_back(json{{"mu", n.mu}, {"u", vec_json(n.u)}});
  j["neurons"] = std::move(neurons);
  return j;
}

json abs_net_json(const mslearn::AbsNetwork& net) {
  json j;
  j["d"] = net.d;
  j["R"] = net.R;
  j["w"] = vec_json(net.w);
  json terms = json::array();
  for (const auto& t : net.terms)
    terms.push_back(json{{"lambda", t.lambda}, {"u", vec_json(t.u)}});
  j["terms"] = std::move(terms);
  return j;
}

json transcript_json(const mslearn::Transcript& tr) {
  json j;
  j["initial"] = tr.initial;
  j["rounds"] = tr.rounds;
  j["moves"] = tr.moves();
  j["done"] = tr.done;
  json steps = json::array();
  for (const auto& st : tr.steps) {
    json row;
    json intervals = json::array();
    for (auto [a, b] : st.move.intervals)
      intervals.push_back(json::array({a, b}));
    row["intervals"] = std::move(intervals);
    row["after"] = st.after;
    row["phi"] = st.phi;
    row["legal"] = st.legal;
    steps.push_back(std::move(row));
  }
  j["steps"] = std::move(steps);
  j["terminal"] = tr.terminal;
  return j;
}

json stage_trace_json(const std::vector<mslearn::StageRecord>& trace) {
  json rows = json::array();
  for (const auto& st : trace) {
    json row;
    row["stage"] = st.stage;
    row["case"] = st.kase;
    row["g_retries"] = st.g_retries;
    row["spread"] = st.spread;
    row["gapped_slot"] = st.gapped_slot;
    row["descents"] = st.descents;
    row["basis_dim"] = st.basis_dim;
    json clumps = json::array();
    for (const auto& c : st.clumps) {
      json cj;
      cj["slots"] = c.slots;
      cj["neurons"] = c.neurons;
      cj["true_weight"] = c.true_weight;
      cj["detectable"] = c.detectable;
      cj["skipped"] = c.skipped;
      cj["lambda_hat"] = c.lambda_hat;
      cj["direction_error"] = c.dir_err;
      clumps.push_back(std::move(cj));
    }
    row["clumps"] = std::move(clumps);
    if (st.kase == 1) {
      row["mu_plus"] = st.mu_plus;
      row["mu_minus"] = st.mu_minus;
      row["zero_fit"] = st.zero_fit;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

int cmd_generate(const Common& c) {
  mslearn::ExperimentConfig cfg = resolve(c);
  mslearn::ReluNetwork net = cfg.instance();
  json j;
  j["kind"] = cfg.kind;
  j["seed"] = cfg.seed;
  j["network"] = relu_net_json(net);
  j["abs_form"] = abs_net_json(mslearn::to_abs_form(net));
  write_output(j.dump(2) + "\n", cfg.out);
  return 0;
}

int cmd_estimate_moments(const Common& c, int degree, std::int64_t samples) {
  mslearn::ExperimentConfig cfg = resolve(c);
  mslearn::ReluNetwork net = cfg.instance();
  std::size_t n =
      samples > 0 ? static_cast<std::size_t>(samples) : cfg.n_stage;
  mslearn::SampleBatch b = mslearn::sample_labeled(
      net, n, mslearn::detail::mix_seed(cfg.seed, 0xE5), cfg.noise_sigma);
  mslearn::SymTensor est = mslearn::estimate_moments(b, degree);
  mslearn::SymTensor exact =
      mslearn::exact_moment_tensor(mslearn::to_abs_form(net), degree);
  json j;
  j["degree"] = degree;
  j["samples"] = n;
  j["estimated_frobenius"] = est.frobenius();
  j["exact_frobenius"] = exact.frobenius();
  j["frobenius_dist"] = mslearn::frobenius_dist(est, exact);
  write_output(j.dump(2) + "\n", cfg.out);
  return 0;
}

int cmd_powersum_check(const Common& c, int count) {
  mslearn::ExperimentConfig cfg = resolve(c);
  mslearn::Rng rng(mslearn::detail::mix_seed(cfg.seed, 0xB3));
  json j;
  if (count == 1) {
    mslearn::PowerSumInstance inst =
        mslearn::detail::random_powersum_instance(rng);
    mslearn::WitnessResult res = mslearn::powersum_witness(inst);
    j["instance"] = json{{"k", inst.k},       {"kprime", inst.kprime},
                         {"alpha", inst.alpha}, {"beta", inst.beta},
                         {"gamma", inst.gamma}, {"tau", inst.tau},
                         {"R", inst.R},         {"v", inst.v},
                         {"q", inst.q}};
    j["witness"] = json{{"l_star", res.l_star},
                        {"value", res.value},
                        {"bound", res.bound},
                        {"holds", res.holds}};
  } else {
    int held = 0, positive = 0;
    for (int t = 0; t < count; ++t) {
      mslearn::PowerSumInstance inst =
          mslearn::detail::random_powersum_instance(rng);
      mslearn::WitnessResult res = mslearn::powersum_witness(inst);
      if (res.holds) ++held;
      if (res.bound > 0) ++positive;
    }
    j["instances"] = count;
    j["held"] = held;
    j["positive_bounds"] = positive;
  }
  write_output(j.dump(2) + "\n", cfg.out);
  return 0;
}

int cmd_clump_sim(const Common& c, int size, double tau, bool noisy,
                  const std::string& adversary, double delta) {
  mslearn::ExperimentConfig cfg = resolve(c);
  if (size < 3) throw std::runtime_error("clump-sim: game size must be >= 3");
  double t = tau > 0 ? tau : mslearn::default_tau(size);
  mslearn::Rng rng(mslearn::detail::mix_seed(cfg.seed, 0xC1));
  std::vector<double> w = mslearn::detail::random_game_vector(size, t, rng);
  mslearn::Transcript tr;
  if (noisy) {
    mslearn::Adversary adv = adversary == "random"
                                 ? mslearn::Adversary(mslearn::adversary_random)
                                 : mslearn::Adversary(mslearn::adversary_worst);
    tr = mslearn::play_noisy(w, t, adv, rng, delta);
  } else {
    tr = mslearn::play_noiseless(w, t);
  }
  json j;
  j["tau"] = t;
  j["noisy"] = noisy;
  if (noisy) j["adversary"] = adversary;
  j["transcript"] = transcript_json(tr);
  write_output(j.dump(2) + "\n", cfg.out);
  return 0;
}

int cmd_scales_trace(const Common& c) {
  mslearn::ExperimentConfig cfg = resolve(c);
  mslearn::ReluNetwork net = cfg.instance();
  mslearn::ScaleParams p = cfg.scale_params();
  std::vector<mslearn::Vec> us;
  for (const auto& n : net.neurons) us.push_back(n.u);
  mslearn::Vec g;
  mslearn::AnticoncResult anti;
  int attempts = 0;
  for (; attempts < 10; ++attempts) {
    mslearn::Rng grng(mslearn::detail::mix_seed(cfg.seed, 0x6, attempts));
    g = grng.unit_vec(cfg.d);
    anti = mslearn::check_anticoncentration(us, g, p);
    if (anti.pairs && anti.floor) break;
  }
  mslearn::Projection proj = mslearn::project(us, g);
  std::vector<mslearn::ScaleTraceRow> rows;
  auto rec = mslearn::find_gapped_scale(proj, p, &rows);
  json j;
  j["g"] = vec_json(g);
  j["g_attempts"] = attempts + 1;
  j["anticoncentration"] = json{{"pairs", anti.pairs}, {"floor", anti.floor}};
  j["projection"] = json{{"v", proj.v}, {"order", proj.order}};
  json jr = json::array();
  for (const auto& row : rows)
    jr.push_back(json{{"log_gamma", row.log_gamma},
                      {"first_gapped_slot", row.first_gapped_slot}});
  j["scales"] = std::move(jr);
  if (rec) {
    j["gap"] = json{{"slot", rec->slot},
                    {"neuron", rec->neuron},
                    {"log_gamma", rec->log_gamma},
                    {"gamma", rec->gamma},
                    {"descents", rec->descents},
                    {"close_neurons", rec->close_neurons},
                    {"far_neurons", rec->far_neurons}};
  } else {
    j["gap"] = nullptr;
  }
  write_output(j.dump(2) + "\n", cfg.out);
  return 0;
}

int cmd_learn(const Common& c) {
  mslearn::ExperimentConfig cfg = resolve(c);
  mslearn::LearnerConfig lc = cfg.learner_config();
  mslearn::ReluNetwork truth = *lc.oracle_truth;
  auto t0 = std::chrono::steady_clock::now();
  mslearn::LearnerResult res = mslearn::recursive_learn(
      mslearn::gaussian_source(truth, cfg.noise_sigma), lc);
  mslearn::SampleBatch validation = mslearn::sample_labeled(
      truth, cfg.n_validate, mslearn::detail::mix_seed(cfg.seed, 0x7A));
  mslearn::Selection sel;
  mslearn::Candidate best =
      mslearn::validate_select(res.candidates, validation, cfg.eps, &sel);
  auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                std::chrono::steady_clock::now() - t0)
                .count();
  std::fprintf(stderr, "wall-clock ms: %lld\n", static_cast<long long>(ms));

  json j;
  j["config"] = cfg.canonical();
  j["truth"] = relu_net_json(truth);
  j["complete"] = res.complete;
  json cands = json::array();
  for (const auto& cand : res.candidates) {
    json cj;
    cj["loss"] = cand.loss;
    cj["complete"] = cand.complete;
    cj["stages"] = cand.stages;
    cj["net"] = abs_net_json(cand.net);
    cj["trace"] = stage_trace_json(cand.trace);
    cands.push_back(std::move(cj));
  }
  j["candidates"] = std::move(cands);
  j["selection"] = json{{"index", sel.index},
                        {"loss", sel.loss},
                        {"margin", sel.margin},
                        {"half_width", sel.half_width},
                        {"meets_eps", sel.meets_eps}};
  j["l2_dist_to_truth"] = mslearn::l2_dist(best.net, truth);
  write_output(j.dump(2) + "\n", cfg.out);
  return 0;
}

int cmd_suite(const Common& c, const std::vector<std::string>& names,
              const std::string& format) {
  mslearn::ExperimentConfig cfg = resolve(c);
  if (!names.empty()) {
    if (names.size() == 1 && names[0] == "none")
      cfg.suites.clear();
    else
      cfg.suites = names;
    cfg.validate();
  }
  auto t0 = std::chrono::steady_clock::now();
  mslearn::Report r = mslearn::run_experiment(cfg);
  auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                std::chrono::steady_clock::now() - t0)
                .count();
  r.wall_clock_ms = ms;
  for (const auto& s : r.suites)
    std::fprintf(stderr, "C%d %s: %s\n", mslearn::criterion_of(s.name),
                 s.name.c_str(), s.passed ? "PASS" : "FAIL");
  std::fprintf(stderr, "wall-clock ms: %lld\n", static_cast<long long>(ms));
  write_output(mslearn::emit_report(r, format), cfg.out);
  return r.all_passed() ? 0 : 1;
}

int cmd_report(const Common& c, const std::string& in,
               const std::string& format) {
  std::ifstream f(in);
  if (!f) throw std::runtime_error("cannot open report: " + in);
  std::ostringstream buf;
  buf << f.rdbuf();
  mslearn::Report r = mslearn::parse_report(buf.str());
  write_output(mslearn::emit_report(r, format), c.out);
  return r.all_passed() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"moment-based learner toolbox"};
  app.require_subcommand(1);

  Common common;
  int degree = 2;
  std::int64_t samples = 0;
  int count = 1;
  int game_size = 12;
  double tau = 0.0;
  bool noisy = false;
  std::string adversary = "worst";
  double delta = 0.0;
  std::vector<std::string> suite_list;
  std::string format = "json";
  std::string report_in;
  std::string report_format = "csv_summary";

  CLI::App* gen = app.add_subcommand("generate", "emit a planted instance");
  add_common(gen, common);

  CLI::App* est = app.add_subcommand(
      "estimate-moments", "estimate one moment tensor of the instance");
  add_common(est, common);
  est->add_option("--degree", degree, "tensor degree (even, or 0/1)");
  est->add_option("--samples", samples, "sample count (default n_stage)");

  CLI::App* pow = app.add_subcommand("powersum-check",
                                     "random clustered power-sum witnesses");
  add_common(pow, common);
  pow->add_option("--count", count, "number of random instances");

  CLI::App* clump =
      app.add_subcommand("clump-sim", "play one merge game and print it");
  add_common(clump, common);
  clump->add_option("--game-size", game_size, "entries in the game vector");
  clump->add_option("--tau", tau, "crossing threshold (default from size)");
  clump->add_flag("--noisy", noisy, "play against an adversary");
  clump->add_option("--adversary", adversary, "worst or random")
      ->check(CLI::IsMember({"worst", "random"}));
  clump->add_option("--delta", delta, "perturbation bound (default 1/100k)");

  CLI::App* scales = app.add_subcommand(
      "scales-trace", "project the instance and walk the scale ladder");
  add_common(scales, common);

  CLI::App* learn =
      app.add_subcommand("learn", "run the recursive learner on the instance");
  add_common(learn, common);

  CLI::App* suite =
      app.add_subcommand("suite", "run report suites (default: config list)");
  add_common(suite, common);
  suite->add_option("names", suite_list, "suites to run");
  suite->add_option("--format", format, "json or csv_summary")
      ->check(CLI::IsMember({"json", "csv_summary"}));

  CLI::App* report =
      app.add_subcommand("report", "re-emit a stored JSON report");
  add_common(report, common);
  report->add_option("input", report_in, "stored report path")->required();
  report->add_option("--format", report_format, "json or csv_summary")
      ->check(CLI::IsMember({"json", "csv_summary"}));

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_generate(common);
    if (est->parsed()) return cmd_estimate_moments(common, degree, samples);
    if (pow->parsed()) return cmd_powersum_check(common, count);
    if (clump->parsed())
      return cmd_clump_sim(common, game_size, tau, noisy, adversary, delta);
    if (scales->parsed()) return cmd_scales_trace(common);
    if (learn->parsed()) return cmd_learn(common);
    if (suite->parsed()) return cmd_suite(common, suite_list, format);
    if (report->parsed()) return cmd_report(common, report_in, report_format);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 2;
}
