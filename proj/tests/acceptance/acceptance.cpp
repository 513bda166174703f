// Acceptance run: one PASS/FAIL line per criterion. Exits 0 once every
// criterion has been evaluated (or 1 with --strict if any failed); a crash or
// a failed training run exits 2.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "prism/bench/metrics.hpp"
#include "prism/bench/push_env.hpp"
#include "prism/bench/studies.hpp"
#include "prism/bench/suite.hpp"
#include "prism/cli/commands.hpp"
#include "prism/cli/config.hpp"
#include "prism/inference/rollout.hpp"
#include "prism/loss/imle.hpp"
#include "prism/model/policy.hpp"
#include "prism/numerics/gradcheck.hpp"
#include "prism/numerics/rng.hpp"

namespace fs = std::filesystem;
using namespace prism;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  int id = 0;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

void info(int id, const std::string& text) { std::cout << "  [" << id << "] " << text << "\n" << std::flush; }

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

class Harness {
 public:
  Harness(fs::path root, bool reuse) : root_(std::move(root)), reuse_(reuse) {
    toy_ = fs::path(PRISM_SOURCE_DIR) / "configs" / "toy.ini";
    smoke_ = fs::path(PRISM_SOURCE_DIR) / "configs" / "smoke.ini";
    cfg_ = cli::parse_run_config(cli::read_config_file(toy_.string()));
    if (!reuse_) fs::remove_all(root_);
    fs::create_directories(root_);
  }

  const cli::RunConfig& config() const { return cfg_; }
  const fs::path& root() const { return root_; }
  const fs::path& smoke_config() const { return smoke_; }

  int cli(std::vector<std::string> args, std::string* out_text = nullptr) const {
    args.insert(args.begin(), "prism");
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    if (out_text) *out_text = out.str();
    if (code != cli::kExitOk) {
      std::string line;
      for (const auto& a : args) line += a + " ";
      throw std::runtime_error(line + "exited " + std::to_string(code) + ": " + err.str());
    }
    return code;
  }

  struct Trained {
    fs::path dir;
    double train_seconds = 0.0;
    bench::PolicyEntry entry;
  };

  // Trains the toy config under `objective` and `seed` once per harness.
  const Trained& trained(const std::string& objective, std::uint64_t seed) {
    const std::string key = objective + "-s" + std::to_string(seed);
    if (auto it = runs_.find(key); it != runs_.end()) return it->second;
    Trained t;
    t.dir = root_ / "train" / key;
    const fs::path manifest = t.dir / "manifest.json";
    bool done = false;
    if (reuse_ && fs::exists(manifest)) {
      const json m = json::parse(read_bytes(manifest));
      done = m.value("exit_code", -1) == 0;
      if (!done) fs::remove_all(t.dir);
    }
    if (!done) {
      fs::remove_all(t.dir);
      std::cout << "  training " << key << " ...\n" << std::flush;
      cli({"train", "--config", toy_.string(), "--seed", std::to_string(seed), "--set",
           "train.objective=" + objective, "--out", t.dir.string(), "--quiet"});
    }
    t.train_seconds = json::parse(read_bytes(manifest)).at("train_seconds").get<double>();
    t.entry = bench::load_policy_entry(key, (t.dir / "checkpoints" / "last.ckpt").string());
    std::cout << "  " << key << ": trained in " << fmt("%.1f", t.train_seconds) << " s\n" << std::flush;
    return runs_.emplace(key, std::move(t)).first->second;
  }

 private:
  fs::path root_, toy_, smoke_;
  bool reuse_ = false;
  cli::RunConfig cfg_;
  std::map<std::string, Trained> runs_;
};

// ---------------------------------------------------------------------------

Outcome favor_estimator() {
  const auto t0 = Clock::now();
  struct Shape {
    std::size_t seq_len, head_dim;
  };
  bool pass = true;
  std::string detail;
  for (const Shape s : {Shape{8, 4}, Shape{4, 8}, Shape{8, 8}}) {
    bench::FavorVarianceOptions o;
    o.seq_len = s.seq_len;
    o.head_dim = s.head_dim;
    o.seed = 100 + s.seq_len * 10 + s.head_dim;
    const bench::StudyReport r = bench::favor_variance_study(o);
    for (const auto& c : r.checks) {
      info(1, "T=" + std::to_string(s.seq_len) + " d=" + std::to_string(s.head_dim) + " " + c.name + " = " +
                  fmt("%.4g", c.value) + " in [" + fmt("%.3g", c.lo) + ", " + fmt("%.3g", c.hi) + "]" +
                  (c.pass ? "" : "  <- out"));
    }
    pass = pass && r.pass();
  }
  const double secs = since(t0);
  pass = pass && secs < 60.0;
  detail = "3 shapes x 500 draws, runtime " + fmt("%.1f", secs) + " s";
  return {1, pass, detail, secs};
}

void wake_up(model::Policy& policy, std::uint64_t seed) {
  num::Rng rng(seed);
  for (auto& e : policy.params().entries()) {
    const bool zero_init = e.name.ends_with(".wo") || e.name.ends_with(".w2") || e.name.ends_with(".bo");
    if (e.name.starts_with("gen.block") && zero_init) rng.fill_normal(e.value.data(), 0.0, 0.3);
  }
}

Outcome full_gradcheck() {
  const auto t0 = Clock::now();
  const std::size_t B = 2, K = 3;
  model::ModelConfig mc;
  mc.modalities = cli::push_modalities();
  mc.obs_horizon = 3;
  mc.pred_horizon = 4;
  mc.width = 8;
  mc.layers = 1;
  mc.ff_hidden = 16;
  mc.modality_hidden = 6;
  mc.modality_embed = 5;
  mc.fusion_hidden = 12;
  mc.attention.heads = 2;
  mc.attention.features = 8;
  model::Policy policy(mc, 21);
  wake_up(policy, 22);

  num::Rng rng(23);
  model::ObservationBatch obs = model::ObservationBatch::zeros(mc, B);
  for (auto& s : obs.streams) rng.fill_normal(s.data());
  num::Tensor z(num::Shape{B * K, mc.resolved_latent_dim()});
  rng.fill_normal(z.data());
  num::Tensor targets(num::Shape{B * mc.pred_horizon, mc.action_dim});
  rng.fill_uniform(targets.data(), -0.8, 0.8);

  loss::LossConfig lc;
  lc.distance = loss::DistanceConfig::uniform(mc.action_dim);
  lc.freeze_threshold = true;

  // Threshold in the widest gap of the middle half of the cross distances, so
  // the mask is non-trivial and no probe moves an entry across it.
  const model::CandidateSet base = policy.sample(obs, K, z);
  const loss::DistanceTensor dt = loss::distance_tensor(base.actions, targets, B, K, lc.distance);
  std::vector<double> d(dt.cross.data().begin(), dt.cross.data().end());
  std::sort(d.begin(), d.end());
  std::size_t gap_at = d.size() / 4;
  for (std::size_t i = d.size() / 4; i + 1 < 3 * d.size() / 4; ++i)
    if (d[i + 1] - d[i] > d[gap_at + 1] - d[gap_at]) gap_at = i;
  loss::RsState st;
  st.eps_max = 10.0;
  st.eps_rs = 0.5 * (d[gap_at] + d[gap_at + 1]);
  const loss::RejectionMask mask = loss::rejection_mask(dt, st.eps_rs);
  info(2, "eps_rs " + fmt("%.4f", st.eps_rs) + ", gap " + fmt("%.2e", d[gap_at + 1] - d[gap_at]) +
              ", rejection rate " + fmt("%.3f", mask.rejection_rate()));

  const num::ScalarFunction f = [&](num::Tape& tape, const num::BoundParams& p) {
    const num::Var ctx = policy.encode(tape, p, obs);
    const num::Var cand = policy.generate(tape, p, ctx, B, K, z);
    return loss::imle_objective(cand, targets, B, K, lc, st).total;
  };
  num::GradCheckOptions go;
  const num::GradCheckReport rep = num::check_gradients(f, policy.params(), go);
  std::size_t checked = 0, zeros = 0;
  std::string worst;
  double worst_err = -1.0;
  for (const auto& e : rep.entries) {
    checked += e.checked;
    zeros += e.zero_gradient_count;
    if (e.max_rel_error > worst_err) {
      worst_err = e.max_rel_error;
      worst = e.name;
    }
  }
  info(2, std::to_string(checked) + " elements over " + std::to_string(rep.entries.size()) + " tensors, " +
              std::to_string(zeros) + " exact-zero gradients, worst " + worst);
  const double secs = since(t0);
  const bool nontrivial = mask.rejection_rate() > 0.0 && mask.rejection_rate() < 1.0;
  const bool pass = rep.passed(1e-4) && nontrivial && secs < 60.0;
  return {2, pass, "max relative error " + fmt("%.3e", rep.max_rel_error()) + " (tol 1e-4)", secs};
}

Outcome mask_brute_force() {
  const auto t0 = Clock::now();
  num::Rng rng(31);
  std::size_t mismatches = 0, fallbacks = 0, boundary = 0, rejected_total = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t B = 1 + rng.below(6), K = 1 + rng.below(6);
    loss::DistanceTensor dt;
    dt.batch = B;
    dt.candidates = K;
    dt.cross = num::Tensor(num::Shape{B, K, B});
    const bool quantized = trial % 3 == 0;
    for (double& x : dt.cross.data()) x = quantized ? 0.25 * static_cast<double>(rng.below(5)) : rng.uniform(0.0, 1.0);
    double eps;
    switch (trial % 4) {
      case 0: eps = std::max(dt.cross[rng.below(dt.cross.size())], 0.25); break;  // exactly on an entry
      case 1: eps = 2.0; break;                                     // everything rejected
      default: eps = rng.uniform(0.0, 0.6);
    }

    std::vector<std::uint8_t> rej(B * K, 0), fb(B, 0);
    for (std::size_t i = 0; i < B; ++i) {
      bool all = true;
      for (std::size_t k = 0; k < K; ++k) {
        for (std::size_t j = 0; j < B; ++j) {
          const double v = dt.cross[(i * K + k) * B + j];
          if (v < eps) rej[i * K + k] = 1;
          if (v == eps) ++boundary;
        }
        all = all && rej[i * K + k];
      }
      fb[i] = all;
    }
    double hard = 0.0;
    for (std::size_t i = 0; i < B; ++i) {
      double best = INFINITY;
      for (std::size_t k = 0; k < K; ++k)
        if (fb[i] || !rej[i * K + k]) best = std::min(best, dt.cross[(i * K + k) * B + i]);
      hard += best;
    }
    hard /= static_cast<double>(B);

    const loss::RejectionMask m = loss::rejection_mask(dt, eps);
    const num::Tensor diag = dt.diag();
    num::Tape tape;
    const num::Var dv = tape.constant(diag);
    const bool same = m.rejected == rej && m.fallback == fb && loss::hard_loss(diag, m) == hard &&
                      loss::hard_loss(dv, m).value().item() == hard;
    mismatches += same ? 0 : 1;
    for (auto f : fb) fallbacks += f;
    for (auto r : rej) rejected_total += r;
  }
  info(3, std::to_string(fallbacks) + " fallback items, " + std::to_string(rejected_total) +
              " rejected candidates, " + std::to_string(boundary) + " entries equal to eps");
  const double secs = since(t0);
  return {3, mismatches == 0 && fallbacks > 0 && boundary > 0,
          std::to_string(mismatches) + " of 1000 tensors differ from the brute-force loop", secs};
}

Outcome quantile_calibration() {
  const auto t0 = Clock::now();
  const bench::StudyReport r = bench::quantile_variance_study({});
  for (const auto& c : r.checks)
    info(4, c.name + " = " + fmt("%.4g", c.value) + " in [" + fmt("%.4g", c.lo) + ", " + fmt("%.4g", c.hi) + "]" +
                (c.pass ? "" : "  <- out"));
  const double secs = since(t0);
  return {4, r.pass(), "N in {512, 4096, 32768}, 10000 update sequences", secs};
}

std::vector<double> mean_action(const num::Tensor& actions, std::size_t from, std::size_t count) {
  std::vector<double> m(actions.cols(), 0.0);
  for (std::size_t t = from; t < from + count; ++t)
    for (std::size_t d = 0; d < m.size(); ++d) m[d] += actions.at(t, d) / static_cast<double>(count);
  return m;
}

Outcome coverage(Harness& h) {
  const auto t0 = Clock::now();
  const bench::PushEnvConfig& env = h.config().env;
  bench::CoverageOptions co;
  co.candidates = 16;
  co.trials = 100;
  co.seed = 41;
  std::vector<double> bg, ps;
  double max_train = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto& a = h.trained("batch_global", seed);
    const auto& b = h.trained("per_sample", seed);
    bg.push_back(bench::coverage_probe(*a.entry.policy, env, co));
    ps.push_back(bench::coverage_probe(*b.entry.policy, env, co));
    max_train = std::max({max_train, a.train_seconds, b.train_seconds});
    info(5, "seed " + std::to_string(seed) + ": batch-global " + fmt("%.2f", bg.back()) + ", per-sample " +
                fmt("%.2f", ps.back()));
  }
  const double primary = bg.front();

  // Behaviour cloning: one deterministic plan per start, compared with the
  // average of the two scripted detours from the same start.
  const auto& bc = h.trained("mse_bc", 1);
  max_train = std::max(max_train, bc.train_seconds);
  bench::CoverageOptions bco = co;
  bco.candidates = 1;
  bco.zero_latents = true;
  const double bc_coverage = bench::coverage_probe(*bc.entry.policy, env, bco);
  const model::ModelConfig& mc = bc.entry.policy->config();
  num::Rng starts = num::Rng::substream(co.seed, "starts");
  double offset = 0.0;
  std::map<std::string, int> labels;
  for (std::size_t trial = 0; trial < co.trials; ++trial) {
    const double x0 = starts.uniform(co.x0_lo, co.x0_hi);
    num::Rng noise(num::Rng::derive_seed(co.seed, "noise" + std::to_string(trial)));
    const inference::Frame frame = bench::observe_state(env, x0, env.start_y, 0.0, 0.0, noise);
    model::ObservationBatch obs = model::ObservationBatch::zeros(mc, 1);
    for (std::size_t s = 0; s < mc.obs_horizon; ++s)
      for (std::size_t m = 0; m < mc.modalities.size(); ++m)
        std::copy(frame.streams[m].begin(), frame.streams[m].end(), obs.streams[m].row(s).begin());
    const model::CandidateSet c =
        bc.entry.policy->sample(obs, 1, num::Tensor(num::Shape{1, mc.resolved_latent_dim()}));
    const num::Tensor plan = c.sequence(0, 0);
    num::Rng demo_l(num::Rng::derive_seed(co.seed, "demo" + std::to_string(trial)));
    num::Rng demo_r = demo_l;
    const bench::Episode left = bench::scripted_demo(env, x0, -1, demo_l);
    const bench::Episode right = bench::scripted_demo(env, x0, +1, demo_r);
    const auto p = mean_action(plan, 0, mc.pred_horizon);
    const auto l = mean_action(left.actions, 1, mc.pred_horizon);
    const auto r = mean_action(right.actions, 1, mc.pred_horizon);
    double d2 = 0.0;
    for (std::size_t d = 0; d < p.size(); ++d) d2 += std::pow(p[d] - 0.5 * (l[d] + r[d]), 2);
    offset += std::sqrt(d2) / static_cast<double>(co.trials);
    ++labels[bench::mode_name(bench::plan_mode(std::vector<double>{x0, env.start_y}, plan, env))];
  }
  std::string label_text;
  for (const auto& [k, v] : labels) label_text += " " + k + "=" + std::to_string(v);
  info(5, "BC coverage " + fmt("%.2f", bc_coverage) + ", mean-action offset from the midpoint " +
              fmt("%.4f", offset) + ", plan labels" + label_text);

  const bench::Summary sb = bench::summarize(bg), sp = bench::summarize(ps);
  const double p = bench::paired_t_test_greater(bg, ps);
  info(5, "batch-global mean " + fmt("%.3f", sb.mean) + ", per-sample mean " + fmt("%.3f", sp.mean) +
              ", paired one-sided p = " + fmt("%.4g", p));
  info(5, "slowest training run " + fmt("%.1f", max_train) + " s (limit 900)");

  const bool main_ok = primary >= 0.95;
  const bool bc_ok = bc_coverage == 0.0 && offset <= 0.1;
  const bool scope_ok = p < 0.05 && sb.mean > sp.mean;
  const bool time_ok = max_train <= 900.0;
  std::string detail = "coverage " + fmt("%.2f", primary) + (main_ok ? "" : " (<0.95)") + "; BC " +
                       (bc_ok ? "ok" : "FAIL") + "; batch-global > per-sample " + (scope_ok ? "ok" : "FAIL") +
                       "; training time " + (time_ok ? "ok" : "FAIL");
  return {5, main_ok && bc_ok && scope_ok && time_ok, detail, since(t0)};
}

struct SelectionNumbers {
  double proxy_jerk, random_jerk, proxy_switch, random_switch, proxy_success, random_success;
};

SelectionNumbers selection_run(Harness& h, const bench::PolicyEntry& entry, std::size_t chunk) {
  bench::SuiteConfig sc;
  sc.policies = {entry};
  sc.conditions = {bench::parse_dropout("none", {"view", "proprio", "tactile"})};
  sc.rules = {inference::SelectionRule::kProxy, inference::SelectionRule::kRandom};
  sc.seeds = 1;
  sc.rollouts = 50;
  sc.base_seed = 61;
  sc.x0_lo = -0.2;
  sc.x0_hi = 0.2;
  sc.candidates = 16;
  sc.chunk = chunk;
  sc.env = h.config().env;
  const auto cells = bench::run_suite(sc);
  SelectionNumbers n{};
  for (const auto& c : cells) {
    const auto& s = c.seeds.at(0);
    if (c.rule == inference::SelectionRule::kProxy) {
      n.proxy_jerk = s.jerk;
      n.proxy_switch = s.switch_rate;
      n.proxy_success = s.success_rate;
    } else {
      n.random_jerk = s.jerk;
      n.random_switch = s.switch_rate;
      n.random_success = s.success_rate;
    }
  }
  return n;
}

std::string ratio_text(double num, double den) { return den > 0.0 ? fmt("%.2f", num / den) : "inf"; }

Outcome selection(Harness& h) {
  const auto& primary = h.trained("batch_global", 1);
  const auto t0 = Clock::now();
  const SelectionNumbers n = selection_run(h, primary.entry, 4);
  const double secs = since(t0);
  info(6, "proxy jerk " + fmt("%.4f", n.proxy_jerk) + " switch " + fmt("%.4f", n.proxy_switch) + " success " +
              fmt("%.2f", n.proxy_success) + "; random jerk " + fmt("%.4f", n.random_jerk) + " switch " +
              fmt("%.4f", n.random_switch) + " success " + fmt("%.2f", n.random_success));
  for (std::size_t chunk : {1, 2, 8}) {
    const SelectionNumbers s = selection_run(h, primary.entry, chunk);
    info(6, "not gated: T_a=" + std::to_string(chunk) + " jerk ratio " + ratio_text(s.random_jerk, s.proxy_jerk) +
                ", switch ratio " + ratio_text(s.random_switch, s.proxy_switch));
  }
  const bool jerk_ok = n.random_jerk >= 2.0 * n.proxy_jerk && n.random_jerk > 0.0;
  const bool switch_ok = n.random_switch >= 2.0 * n.proxy_switch && n.random_switch > 0.0;
  return {6, jerk_ok && switch_ok,
          "T_a=4, 50 paired rollouts: jerk ratio " + ratio_text(n.random_jerk, n.proxy_jerk) + ", switch ratio " +
              ratio_text(n.random_switch, n.proxy_switch) + " (need >= 2)",
          secs};
}

Outcome one_pass(Harness& h) {
  const auto t0 = Clock::now();
  model::ModelConfig mc = h.config().train.model;
  model::Policy policy(mc, 71);
  bool counters_ok = true;
  for (std::size_t k : {1, 5, 16}) {
    policy.reset_counters();
    bench::PushEnv env(h.config().env, 0.1, 72);
    inference::RolloutConfig rc;
    rc.candidates = k;
    rc.chunk = 4;
    rc.seed = 73;
    const inference::RolloutResult r = inference::rollout(env, policy, rc);
    const std::size_t replans = r.records.size();
    const bool ok = replans > 0 && policy.generator_calls() == replans && r.generator_calls == replans &&
                    policy.encoder_calls() == replans;
    info(7, "K=" + std::to_string(k) + ": " + std::to_string(replans) + " replans, " +
                std::to_string(policy.generator_calls()) + " generator calls");
    counters_ok = counters_ok && ok;
  }
  const bench::StudyReport r = bench::latency_scaling_study({});
  for (const auto& c : r.checks)
    info(7, c.name + " = " + fmt("%.3f", c.value) + " in [" + fmt("%.3g", c.lo) + ", " + fmt("%.3g", c.hi) + "]");
  return {7, counters_ok && r.pass(), std::string("one generator pass per replan ") + (counters_ok ? "ok" : "FAIL") +
                                          "; latency exponents " + (r.pass() ? "ok" : "FAIL"),
          since(t0)};
}

Outcome dropout(Harness& h) {
  const auto& primary = h.trained("batch_global", 1);
  const auto t0 = Clock::now();
  bench::SuiteConfig sc;
  sc.policies = {primary.entry};
  sc.rules = {inference::SelectionRule::kProxy};
  sc.seeds = 5;
  sc.rollouts = 20;
  sc.base_seed = 81;
  sc.env = h.config().env;
  const auto cells = bench::run_suite(sc);
  const std::vector<std::string> names{"view", "proprio", "tactile"};
  double none = -1.0;
  std::vector<std::pair<std::set<std::size_t>, double>> singles, pairs;
  for (const auto& c : cells) {
    info(8, c.condition + ": success " + fmt("%.3f", c.success.mean) + " +- " + fmt("%.3f", c.success.se));
    const auto cond = bench::parse_dropout(c.condition, names);
    std::set<std::size_t> dropped;
    for (std::size_t m = 0; m < cond.dropped.size(); ++m)
      if (cond.dropped[m]) dropped.insert(m);
    if (dropped.empty()) none = c.success.mean;
    if (dropped.size() == 1) singles.emplace_back(dropped, c.success.mean);
    if (dropped.size() == 2) pairs.emplace_back(dropped, c.success.mean);
  }
  std::sort(singles.begin(), singles.end(), [](const auto& a, const auto& b) { return a.second < b.second; });
  const std::set<std::size_t> top{*singles[0].first.begin(), *singles[1].first.begin()};
  double top_pair = -1.0, view_proprio = -1.0, other_pairs = 2.0;
  for (const auto& [set, success] : pairs) {
    if (set == top) top_pair = success;
    if (set == std::set<std::size_t>{0, 1}) view_proprio = success;
    else other_pairs = std::min(other_pairs, success);
  }
  const double worst_single = none - singles[0].second, pair_drop = none - top_pair;
  const bool ordering = worst_single < pair_drop;
  const bool vp = view_proprio < other_pairs;
  const std::string top_name = names[*top.begin()] + "+" + names[*top.rbegin()];
  return {8, ordering && vp,
          "worst single drop " + fmt("%.3f", worst_single) + " vs " + top_name + " " + fmt("%.3f", pair_drop) +
              "; view+proprio success " + fmt("%.3f", view_proprio) + " vs other pairs >= " +
              fmt("%.3f", other_pairs),
          since(t0)};
}

Outcome reproducibility(Harness& h) {
  const auto t0 = Clock::now();
  std::vector<fs::path> dirs;
  for (int run = 0; run < 2; ++run) {
    const fs::path dir = h.root() / "smoke" / ("run" + std::to_string(run));
    fs::remove_all(dir);
    h.cli({"train", "--config", h.smoke_config().string(), "--out", (dir / "train").string(), "--quiet"});
    h.cli({"eval", "--config", h.smoke_config().string(), "--checkpoint",
           "smoke=" + (dir / "train" / "checkpoints" / "last.ckpt").string(), "--dropout", "none", "--seeds", "1",
           "--rollouts", "10", "--out", (dir / "eval").string()});
    dirs.push_back(dir);
  }
  std::vector<fs::path> files{"train/config.ini", "train/train_log.csv", "train/summary.json",
                              "train/checkpoints/last.ckpt", "eval/seeds.csv", "eval/summary.csv"};
  for (const auto& e : fs::directory_iterator(dirs[0] / "eval" / "records"))
    files.push_back(fs::path("eval/records") / e.path().filename());
  std::size_t differ = 0;
  for (const auto& f : files) {
    const bool same = fs::exists(dirs[1] / f) && read_bytes(dirs[0] / f) == read_bytes(dirs[1] / f);
    if (!same) {
      ++differ;
      info(9, "differs: " + f.string());
    }
  }
  return {9, differ == 0, std::to_string(files.size() - differ) + " of " + std::to_string(files.size()) +
                              " files bitwise identical across two smoke runs",
          since(t0)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::string root = "acceptance_runs";
  std::vector<int> only;
  bool reuse = false, strict = false;
  app.add_option("--runs", root, "directory for training and eval runs");
  app.add_option("--only", only, "criteria to run")->delimiter(',');
  app.add_flag("--reuse", reuse, "keep finished training runs from an earlier invocation");
  app.add_flag("--strict", strict, "exit 1 when any criterion fails");
  CLI11_PARSE(app, argc, argv);

  const auto wanted = [&](int id) { return only.empty() || std::find(only.begin(), only.end(), id) != only.end(); };
  std::vector<Outcome> results;
  try {
    Harness h(root, reuse);
    const std::vector<std::pair<int, std::function<Outcome()>>> criteria{
        {1, favor_estimator},
        {2, full_gradcheck},
        {3, mask_brute_force},
        {4, quantile_calibration},
        {5, [&] { return coverage(h); }},
        {6, [&] { return selection(h); }},
        {7, [&] { return one_pass(h); }},
        {8, [&] { return dropout(h); }},
        {9, [&] { return reproducibility(h); }},
    };
    for (const auto& [id, run] : criteria) {
      if (!wanted(id)) continue;
      std::cout << "criterion " << id << " ...\n" << std::flush;
      const Outcome o = run();
      std::cout << "criterion " << o.id << ": " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail << "  ["
                << fmt("%.1f", o.seconds) << " s]\n"
                << std::flush;
      results.push_back(o);
    }
  } catch (const std::exception& e) {
    std::cout << "error: " << e.what() << "\n";
    return 2;
  }
  std::size_t passed = 0;
  std::cout << "\nsummary\n";
  for (const auto& o : results) {
    std::cout << "criterion " << o.id << ": " << (o.pass ? "PASS" : "FAIL") << "\n";
    passed += o.pass ? 1 : 0;
  }
  std::cout << passed << "/" << results.size() << " criteria passed\n";
  return strict && passed != results.size() ? 1 : 0;
}
