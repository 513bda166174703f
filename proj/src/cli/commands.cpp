#include "prism/cli/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>

#include <Eigen/Core>

#include "CLI11.hpp"
#include "json.hpp"
#include "prism/bench/metrics.hpp"
#include "prism/bench/studies.hpp"
#include "prism/bench/suite.hpp"
#include "prism/cli/config.hpp"
#include "prism/model/checkpoint.hpp"
#include "prism/numerics/errors.hpp"

#ifndef PRISM_VERSION
#define PRISM_VERSION "dev"
#endif
#ifndef PRISM_GIT_REVISION
#define PRISM_GIT_REVISION "unknown"
#endif

namespace prism::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string utc_stamp() {
  std::string s = utc_now();
  std::erase(s, '-');
  std::erase(s, ':');
  return s;
}

/// PRISM_THREADS, validated; 0 when unset.
std::size_t thread_count() {
  const char* raw = std::getenv("PRISM_THREADS");
  if (!raw || !*raw) return 0;
  char* end = nullptr;
  const long v = std::strtol(raw, &end, 10);
  if (*end != '\0' || v < 1 || v > 4096)
    throw ConfigError(std::string("PRISM_THREADS: expected a positive integer, got '") + raw + "'");
  return static_cast<std::size_t>(v);
}

/// One run directory and the manifest that indexes it.
class Run {
 public:
  Run(const std::string& command, const std::vector<std::string>& args, const std::string& out_dir) {
    if (!out_dir.empty()) {
      dir_ = out_dir;
    } else {
      const char* root = std::getenv("PRISM_OUTPUT_ROOT");
      const fs::path base = root && *root ? fs::path(root) : fs::path("runs");
      const std::string stem = command + "-" + utc_stamp();
      dir_ = base / stem;
      for (int i = 2; fs::exists(dir_); ++i) dir_ = base / (stem + "-" + std::to_string(i));
    }
    if (fs::exists(dir_ / "manifest.json")) throw IoError(dir_.string() + " already holds a run");
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw IoError("cannot create " + dir_.string() + ": " + ec.message());
    manifest_ = {{"command", command},
                 {"argv", args},
                 {"version", PRISM_VERSION},
                 {"revision", PRISM_GIT_REVISION},
                 {"started", utc_now()},
                 {"threads", thread_count()},
                 {"outputs", json::array()}};
  }

  const fs::path& dir() const { return dir_; }
  json& manifest() { return manifest_; }

  /// Opens a file under the run directory and records it in the manifest.
  std::ofstream open(const std::string& rel) {
    const fs::path p = dir_ / rel;
    fs::create_directories(p.parent_path());
    std::ofstream f(p, std::ios::binary);
    if (!f) throw IoError("cannot write " + p.string());
    add_output(rel);
    return f;
  }
  void add_output(const std::string& rel) {
    for (const auto& o : manifest_["outputs"])
      if (o == rel) return;
    manifest_["outputs"].push_back(rel);
  }
  void write_text(const std::string& rel, const std::string& text) {
    std::ofstream f = open(rel);
    f << text;
    if (!f) throw IoError("cannot write " + (dir_ / rel).string());
  }

  void finish(int code, const std::string& error = "") {
    manifest_["finished"] = utc_now();
    manifest_["exit_code"] = code;
    if (!error.empty()) manifest_["error"] = error;
    std::ofstream f(dir_ / "manifest.json");
    f << manifest_.dump(2) << '\n';
  }

 private:
  fs::path dir_;
  json manifest_;
};

std::string num17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

int code_for(const std::exception_ptr& ep, std::ostream& err) {
  try {
    std::rethrow_exception(ep);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DomainError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const NumericError& e) {
    err << "numeric fault: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const IoError& e) {
    err << "load error: " << e.what() << '\n';
    return kExitIo;
  } catch (const DimensionError& e) {
    err << "load error: " << e.what() << '\n';
    return kExitIo;
  } catch (const json::exception& e) {
    err << "load error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

/// Runs `body` inside a run directory; the manifest is written whatever happens.
template <class Body>
int with_run(Run& run, std::ostream& err, Body&& body) {
  int code = kExitOk;
  std::string error;
  try {
    code = body();
  } catch (...) {
    std::ostringstream msg;
    code = code_for(std::current_exception(), msg);
    error = msg.str();
    if (!error.empty() && error.back() == '\n') error.pop_back();
    err << msg.str();
  }
  run.finish(code, error);
  return code;
}

Tree load_tree(const std::string& config_path, const std::vector<std::string>& overrides) {
  Tree tree = config_path.empty() ? Tree{} : read_config_file(config_path);
  for (const auto& o : overrides) apply_override(tree, o);
  return tree;
}

// ---- train ---------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool quiet = false;
};

int cmd_train(const TrainArgs& a, const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
  Tree tree = load_tree(a.config, a.overrides);
  if (a.seed) tree.put("train.seed", std::to_string(*a.seed));
  const RunConfig cfg = parse_run_config(tree);

  Run run("train", argv, a.out);
  out << "run directory: " << run.dir().string() << '\n';
  return with_run(run, err, [&] {
    const std::uint64_t demo_seed = cfg.data.resolved_seed(cfg.train.seed);
    run.manifest()["config"] = to_json(cfg);
    run.manifest()["overrides"] = a.overrides;
    run.manifest()["config_file"] = a.config;
    run.manifest()["seeds"] = {{"train", cfg.train.seed}, {"demos", demo_seed}};
    run.write_text("config.ini", to_ini(cfg));

    bench::DemoOptions demo_opts;
    demo_opts.x0_min = cfg.data.x0_min;
    demo_opts.x0_max = cfg.data.x0_max;
    demo_opts.pad_steps = cfg.data.pad_steps;
    const auto demos = bench::generate_demos(cfg.env, cfg.data.demos + cfg.data.validation_demos, demo_seed, demo_opts);
    std::vector<trainer::EpisodeData> train(demos.begin(), demos.begin() + static_cast<std::ptrdiff_t>(cfg.data.demos));
    std::vector<trainer::EpisodeData> val(demos.begin() + static_cast<std::ptrdiff_t>(cfg.data.demos), demos.end());

    trainer::Trainer tr(cfg.train, train, val);
    const std::size_t planned = tr.planned_steps();
    const std::size_t every = std::max<std::size_t>(1, planned / 10);
    out << "training " << trainer::objective_name(cfg.train.objective) << " for " << planned << " steps on "
        << tr.train_windows().windows.size() << " windows\n";

    std::ofstream log = run.open("train_log.csv");
    fs::create_directories(run.dir() / "checkpoints");
    trainer::FitOptions fo;
    fo.checkpoint_dir = (run.dir() / "checkpoints").string();
    fo.log = &log;
    fo.on_step = [&](const trainer::StepStats& s) {
      const std::size_t done = s.log.step + 1;
      if (a.quiet || (done % every != 0 && done != planned)) return;
      char line[160];
      std::snprintf(line, sizeof line, "step %zu/%zu  loss %.5f  eps_rs %.4g  rejected %.3f\n", done, planned,
                    s.log.total, s.log.eps_rs, s.log.rejection_rate);
      out << line << std::flush;
    };
    const auto t0 = std::chrono::steady_clock::now();
    const trainer::FitResult fit = tr.fit(fo);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log.flush();
    for (const auto& c : fit.checkpoints) run.add_output(fs::relative(c, run.dir()).string());

    const bool deterministic = cfg.train.objective == trainer::Objective::kMseBc;
    bench::CoverageOptions co;
    co.candidates = deterministic ? 1 : cfg.train.effective_candidates();
    co.zero_latents = deterministic;
    co.seed = num::Rng::derive_seed(cfg.train.seed, "coverage");
    const double coverage = bench::coverage_probe(tr.policy(), cfg.env, co);

    json summary = {{"objective", trainer::objective_name(cfg.train.objective)},
                    {"steps", fit.steps},
                    {"epochs", tr.epoch()},
                    {"validation", fit.validation},
                    {"best_validation", fit.best_validation},
                    {"eps_rs", tr.rs_state().eps_rs},
                    {"coverage", coverage},
                    {"coverage_trials", co.trials},
                    {"checkpoints", json::array()}};
    if (!fit.records.empty()) {
      const auto& last = fit.records.back();
      summary["final"] = {{"hard", last.hard}, {"soft", last.soft}, {"total", last.total},
                          {"rejection_rate", last.rejection_rate}};
    }
    for (const auto& c : fit.checkpoints) summary["checkpoints"].push_back(fs::relative(c, run.dir()).string());
    run.write_text("summary.json", summary.dump(2) + "\n");
    run.manifest()["train_seconds"] = seconds;
    char line[120];
    std::snprintf(line, sizeof line, "done in %.1f s; coverage %.3f\n", seconds, coverage);
    out << line;
    return kExitOk;
  });
}

// ---- eval ----------------------------------------------------------------

struct EvalArgs {
  std::vector<std::string> checkpoints;
  std::string config;
  std::vector<std::string> overrides;
  std::vector<std::string> selection;
  std::vector<std::string> dropout;
  std::optional<std::size_t> seeds, rollouts, candidates, chunk;
  std::optional<std::uint64_t> seed;
  std::string out;
};

std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (const auto& x : v) s += (s.empty() ? "" : ",") + x;
  return s;
}

bench::PolicyEntry resolve_checkpoint(const std::string& arg, std::size_t index) {
  bench::PolicyEntry e;
  const auto eq = arg.find('=');
  if (eq != std::string::npos) {
    e.name = arg.substr(0, eq);
    e.checkpoint = arg.substr(eq + 1);
  } else {
    e.checkpoint = arg;
    e.name = "policy" + std::to_string(index);
  }
  if (e.name.empty() || e.name.find_first_of("/,\\") != std::string::npos)
    throw ConfigError("--checkpoint: bad policy name '" + e.name + "'");
  // A missing file becomes an absent cell; anything else must load cleanly.
  if (!fs::exists(e.checkpoint)) return e;
  bench::PolicyEntry loaded = bench::load_policy_entry(e.name, e.checkpoint);
  const auto& mods = loaded.policy->config().modalities;
  const auto expected = push_modalities();
  bool same = mods.size() == expected.size();
  for (std::size_t m = 0; same && m < mods.size(); ++m)
    same = mods[m].name == expected[m].name && mods[m].width == expected[m].width;
  if (!same || loaded.policy->config().action_dim != 2)
    throw IoError(e.checkpoint + ": model streams do not match the push task");
  return loaded;
}

json record_json(const bench::CellReport& cell, std::size_t seed, std::size_t index, const bench::RolloutSpec& spec,
                 const inference::RolloutResult& r, const bench::PushEnvConfig& env) {
  const bench::RolloutMetrics m = bench::rollout_metrics(r, env);
  json j = {{"policy", cell.policy},
            {"condition", cell.condition},
            {"rule", inference::rule_name(cell.rule)},
            {"seed", seed},
            {"index", index},
            {"x0", spec.x0},
            {"env_seed", spec.env_seed},
            {"rollout_seed", spec.rollout_seed},
            {"success", m.success},
            {"cause", r.cause},
            {"steps", r.executed.rows()},
            {"generator_calls", r.generator_calls},
            {"jerk", m.has_jerk ? json(m.jerk) : json(nullptr)},
            {"switch_rate", m.has_switch ? json(m.switch_rate) : json(nullptr)}};
  json labels = json::array();
  for (bench::Mode x : m.labels) labels.push_back(bench::mode_name(x));
  j["labels"] = labels;
  json replans = json::array();
  for (const auto& rec : r.records) {
    json obs = json::object();
    for (std::size_t s = 0; s < rec.observed.size() && s < bench::kModalityNames.size(); ++s)
      obs[bench::kModalityNames[s]] = rec.observed[s];
    replans.push_back({{"t", rec.t}, {"selected", rec.selected}, {"state", rec.state}, {"observed", obs}});
  }
  j["replans"] = replans;
  json executed = json::array();
  for (std::size_t t = 0; t < r.executed.rows(); ++t) executed.push_back({r.executed.at(t, 0), r.executed.at(t, 1)});
  j["executed"] = executed;
  return j;
}

std::size_t dropped_count(const std::string& condition) {
  if (condition == "none") return 0;
  return static_cast<std::size_t>(std::count(condition.begin(), condition.end(), '+')) + 1;
}

int cmd_eval(const EvalArgs& a, const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
  if (a.checkpoints.empty()) throw ConfigError("eval: at least one --checkpoint is required");
  Tree tree = load_tree(a.config, a.overrides);
  if (!a.selection.empty()) tree.put("eval.selection", join(a.selection));
  if (!a.dropout.empty()) tree.put("eval.dropout", join(a.dropout));
  if (a.seeds) tree.put("eval.seeds", std::to_string(*a.seeds));
  if (a.rollouts) tree.put("eval.rollouts", std::to_string(*a.rollouts));
  if (a.candidates) tree.put("eval.K", std::to_string(*a.candidates));
  if (a.chunk) tree.put("eval.chunk", std::to_string(*a.chunk));
  if (a.seed) tree.put("eval.seed", std::to_string(*a.seed));
  const RunConfig cfg = parse_run_config(tree, false);

  bench::SuiteConfig suite;
  std::vector<std::string> names;
  for (const char* n : bench::kModalityNames) names.emplace_back(n);
  for (const auto& d : cfg.eval.dropout) suite.conditions.push_back(bench::parse_dropout(d, names));
  suite.rules.clear();
  for (const auto& s : cfg.eval.selection) suite.rules.push_back(inference::parse_rule(s));
  suite.proxy_mode = cfg.eval.proxy_mode == "state" ? inference::ProxyMode::kInducedState
                                                     : inference::ProxyMode::kActionProximity;
  suite.seeds = cfg.eval.seeds;
  suite.rollouts = cfg.eval.rollouts;
  suite.base_seed = cfg.eval.seed;
  suite.x0_lo = cfg.eval.x0_min;
  suite.x0_hi = cfg.eval.x0_max;
  suite.candidates = cfg.eval.candidates;
  suite.chunk = cfg.eval.chunk;
  suite.env = cfg.env;
  for (std::size_t i = 0; i < a.checkpoints.size(); ++i) {
    suite.policies.push_back(resolve_checkpoint(a.checkpoints[i], i));
    for (std::size_t j = 0; j + 1 < suite.policies.size(); ++j)
      if (suite.policies[j].name == suite.policies.back().name)
        throw ConfigError("--checkpoint: policy name '" + suite.policies.back().name + "' used twice");
  }

  Run run("eval", argv, a.out);
  out << "run directory: " << run.dir().string() << '\n';
  return with_run(run, err, [&] {
    run.manifest()["config"] = to_json(cfg);
    run.manifest()["overrides"] = a.overrides;
    run.manifest()["config_file"] = a.config;
    run.manifest()["seeds"] = {{"eval", cfg.eval.seed}};
    json policies = json::array();
    for (const auto& p : suite.policies)
      policies.push_back({{"name", p.name}, {"checkpoint", p.checkpoint}, {"found", p.policy != nullptr},
                          {"deterministic", p.deterministic}});
    run.manifest()["policies"] = policies;
    run.write_text("config.ini", to_ini(cfg));

    std::map<std::string, std::ofstream> records;
    const auto cells = bench::run_suite(suite, [&](const bench::CellReport& cell, std::size_t seed, std::size_t index,
                                                   const bench::RolloutSpec& spec, const inference::RolloutResult& r) {
      const std::string rel =
          "records/" + cell.policy + "__" + cell.condition + "__" + inference::rule_name(cell.rule) + ".jsonl";
      auto it = records.find(rel);
      if (it == records.end()) it = records.emplace(rel, run.open(rel)).first;
      it->second << record_json(cell, seed, index, spec, r, suite.env).dump() << '\n';
    });
    for (auto& [rel, f] : records) {
      f.close();
      if (!f) throw IoError("cannot write " + (run.dir() / rel).string());
    }

    {
      std::ofstream f = run.open("seeds.csv");
      bench::write_seed_csv(f, cells);
    }
    {
      std::ofstream f = run.open("summary.csv");
      bench::write_summary_csv(f, cells);
    }
    {
      std::ofstream f = run.open("plots/success_vs_dropout.csv");
      f << "policy,rule,condition,dropped,success_mean,success_se\n";
      for (const auto& c : cells) {
        if (c.absent) continue;
        f << c.policy << ',' << inference::rule_name(c.rule) << ',' << c.condition << ',' << dropped_count(c.condition)
          << ',' << num17(c.success.mean) << ',' << num17(c.success.se) << '\n';
      }
    }
    {
      std::ofstream f = run.open("plots/jerk_switch.csv");
      f << "policy,condition,rule,jerk_mean,jerk_se,switch_mean,switch_se\n";
      for (const auto& c : cells) {
        if (c.absent) continue;
        f << c.policy << ',' << c.condition << ',' << inference::rule_name(c.rule) << ',' << num17(c.jerk.mean) << ','
          << num17(c.jerk.se) << ',' << num17(c.switch_rate.mean) << ',' << num17(c.switch_rate.se) << '\n';
      }
    }

    char line[200];
    for (const auto& c : cells) {
      if (c.absent) {
        out << c.policy << ' ' << c.condition << ' ' << inference::rule_name(c.rule) << ": absent (" << c.absent_reason
            << ")\n";
        continue;
      }
      std::snprintf(line, sizeof line, "%s %s %s: success %.3f +/- %.3f  jerk %.4g  switch %.3f\n", c.policy.c_str(),
                    c.condition.c_str(), inference::rule_name(c.rule), c.success.mean, c.success.se, c.jerk.mean,
                    c.switch_rate.mean);
      out << line;
    }
    return kExitOk;
  });
}

// ---- study ---------------------------------------------------------------

struct StudyArgs {
  std::string name;
  std::optional<std::size_t> trials;
  std::uint64_t seed = 0;
  std::vector<std::size_t> sizes;  // features, entries or lengths
  std::string checkpoint;
  std::optional<std::size_t> candidates;
  std::string config;
  std::vector<std::string> overrides;
  std::string out;
};

void require_trials(const std::string& study, const char* unit, std::size_t got, std::size_t need) {
  if (got < need)
    throw ConfigError(study + ": " + std::to_string(got) + " " + unit +
                      " are too few for the 95% confidence the thresholds assume; need at least " +
                      std::to_string(need));
}

int cmd_study(const StudyArgs& a, const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
  std::function<bench::StudyReport()> body;
  if (a.name == "favor-variance") {
    bench::FavorVarianceOptions o;
    o.seed = a.seed;
    if (a.trials) o.draws = *a.trials;
    if (!a.sizes.empty()) o.features = a.sizes;
    require_trials(a.name, "draws", o.draws, bench::required_trials(o));
    body = [o] { return bench::favor_variance_study(o); };
  } else if (a.name == "quantile-variance") {
    bench::QuantileVarianceOptions o;
    o.seed = a.seed;
    if (a.trials) o.repeats = *a.trials;
    if (!a.sizes.empty()) o.sizes = a.sizes;
    require_trials(a.name, "repeats", o.repeats, bench::required_trials(o));
    body = [o] { return bench::quantile_variance_study(o); };
  } else if (a.name == "latency-scaling") {
    bench::LatencyScalingOptions o;
    o.seed = a.seed;
    if (a.trials) o.repeats = *a.trials;
    if (!a.sizes.empty()) o.lengths = a.sizes;
    require_trials(a.name, "repeats", o.repeats, bench::required_trials(o));
    body = [o] { return bench::latency_scaling_study(o); };
  } else if (a.name == "coverage") {
    if (a.checkpoint.empty()) throw ConfigError("coverage: --checkpoint is required");
    bench::CoverageStudyOptions o;
    o.seed = a.seed;
    if (a.trials) o.trials = *a.trials;
    require_trials(a.name, "trials", o.trials, bench::required_trials(o));
    const RunConfig cfg = parse_run_config(load_tree(a.config, a.overrides), false);
    const bench::PolicyEntry entry = bench::load_policy_entry("policy", a.checkpoint);
    o.deterministic = entry.deterministic;
    if (a.candidates) o.candidates = *a.candidates;
    body = [o, entry, env = cfg.env] { return bench::coverage_study(*entry.policy, env, o); };
  } else {
    throw ConfigError("study: unknown study '" + a.name +
                      "'; expected favor-variance, quantile-variance, latency-scaling or coverage");
  }

  Run run("study-" + a.name, argv, a.out);
  out << "run directory: " << run.dir().string() << '\n';
  return with_run(run, err, [&] {
    run.manifest()["seeds"] = {{"study", a.seed}};
    if (!a.checkpoint.empty()) run.manifest()["checkpoint"] = a.checkpoint;
    const bench::StudyReport rep = body();
    run.manifest()["config"] = rep.params;
    run.write_text("report.json", rep.to_json().dump(2) + "\n");
    {
      std::ofstream f = run.open("series.csv");
      rep.write_series_csv(f);
    }
    char line[200];
    for (const auto& c : rep.checks) {
      std::snprintf(line, sizeof line, "%-40s %.6g in [%.6g, %.6g]  %s\n", c.name.c_str(), c.value, c.lo, c.hi,
                    c.pass ? "pass" : "FAIL");
      out << line;
    }
    out << a.name << ": " << (rep.pass() ? "pass" : "FAIL") << '\n';
    return rep.pass() ? kExitOk : kExitStudyFailed;
  });
}

// ---- inspect -------------------------------------------------------------

int cmd_inspect(const std::string& path, bool tensors, std::ostream& out) {
  const model::Checkpoint ckpt = model::load_checkpoint(path);
  out << "checkpoint: " << path << "\nformat version: " << model::Checkpoint::kVersion << '\n';
  out << "meta:\n" << ckpt.meta.dump(2) << '\n';
  std::size_t scalars = 0;
  for (const auto& [name, t] : ckpt.tensors) scalars += t.size();
  out << "tensors: " << ckpt.tensors.size() << " (" << scalars << " values)\n";
  if (tensors) {
    char line[200];
    for (const auto& [name, t] : ckpt.tensors) {
      double ss = 0.0;
      for (double v : t.data()) ss += v * v;
      std::snprintf(line, sizeof line, "  %-48s %-14s norm %.6g\n", name.c_str(), num::shape_string(t.shape()).c_str(),
                    std::sqrt(ss));
      out << line;
    }
  }
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multimodal action-chunk policies: training, evaluation and property studies", "prism"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(PRISM_VERSION) + " (" + PRISM_GIT_REVISION + ")");

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train a policy on scripted push demonstrations");
  train->add_option("--config,-c", ta.config, "INI config file")->required();
  train->add_option("--set", ta.overrides, "Override section.key=value (repeatable)");
  train->add_option("--seed", ta.seed, "Root seed (train.seed)");
  train->add_option("--out,-o", ta.out, "Run directory (default $PRISM_OUTPUT_ROOT/train-<time>)");
  train->add_flag("--quiet,-q", ta.quiet, "No progress lines");

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "Evaluate checkpoints on the push suite");
  eval->add_option("--checkpoint", ea.checkpoints, "[NAME=]PATH (repeatable)")->required();
  eval->add_option("--config,-c", ea.config, "INI config with [env] and [eval] sections");
  eval->add_option("--set", ea.overrides, "Override section.key=value (repeatable)");
  eval->add_option("--selection", ea.selection, "proxy, tiebreak or random (repeatable)");
  eval->add_option("--dropout", ea.dropout, "none, a modality, or a+b; 'wrist' names the view stream (repeatable)");
  eval->add_option("--seeds", ea.seeds, "Evaluation seeds");
  eval->add_option("--rollouts", ea.rollouts, "Rollouts per seed");
  eval->add_option("--candidates,-K", ea.candidates, "Candidates per replanning step");
  eval->add_option("--chunk", ea.chunk, "Actions executed per plan");
  eval->add_option("--seed", ea.seed, "Root seed for starts, noise and latents");
  eval->add_option("--out,-o", ea.out, "Run directory");

  StudyArgs sa;
  auto* study = app.add_subcommand("study", "Run a statistical property study");
  study->add_option("name", sa.name, "favor-variance, quantile-variance, latency-scaling or coverage")->required();
  study->add_option("--trials,-n", sa.trials, "Draws, repeats or trials");
  study->add_option("--seed", sa.seed, "Root seed");
  study->add_option("--sizes", sa.sizes, "Feature counts, entry counts or sequence lengths")->delimiter(',');
  study->add_option("--checkpoint", sa.checkpoint, "Policy for the coverage study");
  study->add_option("--candidates,-K", sa.candidates, "Candidates for the coverage study");
  study->add_option("--config,-c", sa.config, "INI config with an [env] section");
  study->add_option("--set", sa.overrides, "Override section.key=value (repeatable)");
  study->add_option("--out,-o", sa.out, "Run directory");

  std::string inspect_path;
  bool inspect_tensors = false;
  auto* inspect = app.add_subcommand("inspect", "Print a checkpoint's metadata and tensors");
  inspect->add_option("checkpoint", inspect_path, "Checkpoint file")->required();
  inspect->add_flag("--tensors", inspect_tensors, "List every tensor with its shape and norm");

  std::vector<const char*> argv;
  for (const auto& s : args) argv.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (const std::size_t threads = thread_count()) Eigen::setNbThreads(static_cast<int>(threads));
    if (*train) return cmd_train(ta, args, out, err);
    if (*eval) return cmd_eval(ea, args, out, err);
    if (*study) return cmd_study(sa, args, out, err);
    return cmd_inspect(inspect_path, inspect_tensors, out);
  } catch (...) {
    return code_for(std::current_exception(), err);
  }
}

}  // namespace prism::cli
