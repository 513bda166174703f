#include "prism/bench/suite.hpp"

#include <algorithm>
#include <cstdio>
#include <ostream>

#include "prism/model/checkpoint.hpp"
#include "prism/numerics/errors.hpp"

namespace prism::bench {

std::vector<DropoutCondition> dropout_grid(const std::vector<std::string>& modalities, bool singles, bool pairs) {
  const std::size_t m = modalities.size();
  std::vector<DropoutCondition> out{{"none", std::vector<std::uint8_t>(m, 0)}};
  if (singles) {
    for (std::size_t a = 0; a < m; ++a) {
      DropoutCondition c{modalities[a], std::vector<std::uint8_t>(m, 0)};
      c.dropped[a] = 1;
      out.push_back(std::move(c));
    }
  }
  if (pairs) {
    for (std::size_t a = 0; a < m; ++a)
      for (std::size_t b = a + 1; b < m; ++b) {
        DropoutCondition c{modalities[a] + "+" + modalities[b], std::vector<std::uint8_t>(m, 0)};
        c.dropped[a] = c.dropped[b] = 1;
        out.push_back(std::move(c));
      }
  }
  return out;
}

DropoutCondition parse_dropout(const std::string& spec, const std::vector<std::string>& modalities) {
  DropoutCondition c{"none", std::vector<std::uint8_t>(modalities.size(), 0)};
  if (spec.empty() || spec == "none") return c;
  std::vector<std::string> names;
  std::size_t start = 0;
  while (start <= spec.size()) {
    const std::size_t end = std::min(spec.find('+', start), spec.size());
    names.push_back(spec.substr(start, end - start));
    start = end + 1;
  }
  c.name.clear();
  for (const std::string& raw : names) {
    const std::string name = raw == "wrist" ? "view" : raw;
    const auto it = std::find(modalities.begin(), modalities.end(), name);
    if (it == modalities.end()) throw DomainError("unknown modality '" + raw + "' in dropout '" + spec + "'");
    c.dropped[static_cast<std::size_t>(it - modalities.begin())] = 1;
    c.name += (c.name.empty() ? "" : "+") + name;
  }
  if (std::all_of(c.dropped.begin(), c.dropped.end(), [](std::uint8_t d) { return d != 0; }))
    throw DomainError("dropout '" + spec + "' leaves the policy without any modality");
  return c;
}

PolicyEntry load_policy_entry(const std::string& name, const std::string& checkpoint) {
  const model::Checkpoint ckpt = model::load_checkpoint(checkpoint);
  PolicyEntry e;
  e.name = name;
  e.checkpoint = checkpoint;
  e.policy = std::make_shared<const model::Policy>(model::restore_policy(ckpt));
  e.deterministic = ckpt.meta.contains("train") && ckpt.meta["train"].value("objective", "") == "mse_bc";
  return e;
}

std::vector<Mode> replan_modes(const inference::RolloutResult& r, const PushEnvConfig& env) {
  std::vector<Mode> labels;
  for (const auto& rec : r.records) {
    num::Tensor visited(num::Shape{rec.t + 1, 2});
    for (std::size_t s = 0; s <= rec.t; ++s) {
      visited.at(s, 0) = r.states[s][0];
      visited.at(s, 1) = r.states[s][1];
    }
    labels.push_back(plan_mode(rec.state, rec.selected_sequence, env, visited));
  }
  return labels;
}

RolloutMetrics rollout_metrics(const inference::RolloutResult& r, const PushEnvConfig& env) {
  RolloutMetrics m;
  m.success = r.success();
  if (r.executed.rows() >= 3) {
    m.has_jerk = true;
    m.jerk = jerk_metric(r.executed);
  }
  m.labels = replan_modes(r, env);
  const auto labelled = std::count_if(m.labels.begin(), m.labels.end(), [](Mode x) { return x != Mode::kNone; });
  if (labelled >= 2) {
    m.has_switch = true;
    m.switch_rate = mode_switch_rate(m.labels);
  }
  return m;
}

RolloutSpec rollout_spec(const SuiteConfig& cfg, std::size_t seed, std::size_t index) {
  const std::uint64_t root = num::Rng::derive_seed(cfg.base_seed, "suite/seed" + std::to_string(seed));
  const std::string tag = "rollout" + std::to_string(index);
  num::Rng starts = num::Rng::substream(root, tag + "/start");
  RolloutSpec spec;
  spec.x0 = starts.uniform(cfg.x0_lo, cfg.x0_hi);
  spec.env_seed = num::Rng::derive_seed(root, tag + "/env");
  spec.rollout_seed = num::Rng::derive_seed(root, tag + "/policy");
  return spec;
}

namespace {

std::vector<std::string> modality_names(const model::ModelConfig& mc) {
  std::vector<std::string> out;
  for (const auto& m : mc.modalities) out.push_back(m.name);
  return out;
}

void finish_cell(CellReport& cell) {
  std::vector<double> s, j, w;
  for (const auto& seed : cell.seeds) {
    s.push_back(seed.success_rate);
    if (seed.jerk_count > 0) j.push_back(seed.jerk);
    if (seed.switch_count > 0) w.push_back(seed.switch_rate);
  }
  cell.success = summarize(s);
  cell.jerk = summarize(j);
  cell.switch_rate = summarize(w);
}

}  // namespace

std::vector<CellReport> run_suite(const SuiteConfig& cfg, const RolloutSink& sink) {
  if (cfg.seeds == 0 || cfg.rollouts == 0) throw DomainError("suite needs at least one seed and one rollout");
  if (cfg.rules.empty()) throw DomainError("suite needs at least one selection rule");
  std::vector<CellReport> cells;
  for (const PolicyEntry& listed : cfg.policies) {
    PolicyEntry entry = listed;
    std::string absent_reason;
    if (!entry.policy) {
      try {
        const bool deterministic = entry.deterministic;
        entry = load_policy_entry(listed.name, listed.checkpoint);
        entry.deterministic = entry.deterministic || deterministic;
      } catch (const std::exception& e) {
        absent_reason = e.what();
      }
    }
    std::vector<DropoutCondition> conditions = cfg.conditions;
    if (conditions.empty() && entry.policy) conditions = dropout_grid(modality_names(entry.policy->config()));
    if (conditions.empty()) conditions.push_back({"none", {}});

    for (const DropoutCondition& cond : conditions) {
      for (inference::SelectionRule rule : cfg.rules) {
        CellReport cell;
        cell.policy = listed.name;
        cell.condition = cond.name;
        cell.rule = rule;
        if (!entry.policy) {
          cell.absent = true;
          cell.absent_reason = absent_reason;
          cells.push_back(std::move(cell));
          continue;
        }
        for (std::size_t seed = 0; seed < cfg.seeds; ++seed) {
          SeedMetrics sm;
          sm.seed = seed;
          double successes = 0.0, jerk = 0.0, switches = 0.0;
          for (std::size_t r = 0; r < cfg.rollouts; ++r) {
            const RolloutSpec spec = rollout_spec(cfg, seed, r);
            PushEnv env(cfg.env, spec.x0, spec.env_seed);
            inference::RolloutConfig rc;
            rc.candidates = entry.deterministic ? 1 : cfg.candidates;
            rc.zero_latents = entry.deterministic;
            rc.chunk = cfg.chunk;
            rc.rule = rule;
            rc.proxy_mode = cfg.proxy_mode;
            rc.dropped = cond.dropped;
            rc.seed = spec.rollout_seed;
            const inference::RolloutResult result = inference::rollout(env, *entry.policy, rc);
            const RolloutMetrics m = rollout_metrics(result, cfg.env);
            successes += m.success ? 1.0 : 0.0;
            if (m.has_jerk) {
              jerk += m.jerk;
              ++sm.jerk_count;
            }
            if (m.has_switch) {
              switches += m.switch_rate;
              ++sm.switch_count;
            }
            if (sink) sink(cell, seed, r, spec, result);
          }
          sm.success_rate = successes / static_cast<double>(cfg.rollouts);
          sm.jerk = sm.jerk_count ? jerk / static_cast<double>(sm.jerk_count) : 0.0;
          sm.switch_rate = sm.switch_count ? switches / static_cast<double>(sm.switch_count) : 0.0;
          cell.seeds.push_back(sm);
        }
        finish_cell(cell);
        cells.push_back(std::move(cell));
      }
    }
  }
  return cells;
}

namespace {

std::string num17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void write_seed_csv(std::ostream& out, const std::vector<CellReport>& cells) {
  out << "policy,condition,rule,seed,success_rate,jerk,switch_rate,jerk_rollouts,switch_rollouts\n";
  for (const auto& c : cells) {
    if (c.absent) {
      out << c.policy << ',' << c.condition << ',' << inference::rule_name(c.rule) << ",absent,,,,,\n";
      continue;
    }
    for (const auto& s : c.seeds) {
      out << c.policy << ',' << c.condition << ',' << inference::rule_name(c.rule) << ',' << s.seed << ','
          << num17(s.success_rate) << ',' << num17(s.jerk) << ',' << num17(s.switch_rate) << ',' << s.jerk_count << ','
          << s.switch_count << '\n';
    }
  }
}

void write_summary_csv(std::ostream& out, const std::vector<CellReport>& cells) {
  out << "policy,condition,rule,status,seeds,success_mean,success_se,jerk_mean,jerk_se,switch_mean,switch_se\n";
  for (const auto& c : cells) {
    out << c.policy << ',' << c.condition << ',' << inference::rule_name(c.rule) << ',';
    if (c.absent) {
      out << "absent,0,,,,,,\n";
      continue;
    }
    out << "ok," << c.seeds.size() << ',' << num17(c.success.mean) << ',' << num17(c.success.se) << ','
        << num17(c.jerk.mean) << ',' << num17(c.jerk.se) << ',' << num17(c.switch_rate.mean) << ','
        << num17(c.switch_rate.se) << '\n';
  }
}

}  // namespace prism::bench
