#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "prism/bench/metrics.hpp"
#include "prism/bench/push_env.hpp"
#include "prism/inference/rollout.hpp"

namespace prism::bench {

/// A set of modalities withheld from the policy for a whole rollout.
struct DropoutCondition {
  std::string name;  // "none", "view", "view+proprio", ...
  std::vector<std::uint8_t> dropped;
};

/// No dropout, then every single modality, then every pair (C(M,2) cells).
std::vector<DropoutCondition> dropout_grid(const std::vector<std::string>& modalities, bool singles = true,
                                           bool pairs = true);
/// Parses "none" or "+"-joined modality names; "wrist" names the view stream.
DropoutCondition parse_dropout(const std::string& spec, const std::vector<std::string>& modalities);

struct PolicyEntry {
  std::string name;
  std::string checkpoint;                        // read when `policy` is empty
  std::shared_ptr<const model::Policy> policy;  // already in memory
  bool deterministic = false;                    // one candidate with a zero latent
};

/// Loads a trained policy; behaviour-cloning checkpoints come back deterministic.
PolicyEntry load_policy_entry(const std::string& name, const std::string& checkpoint);

struct SuiteConfig {
  std::vector<PolicyEntry> policies;
  std::vector<DropoutCondition> conditions;  // empty: the full grid
  std::vector<inference::SelectionRule> rules{inference::SelectionRule::kProxy};
  inference::ProxyMode proxy_mode = inference::ProxyMode::kActionProximity;
  std::size_t seeds = 5;
  std::size_t rollouts = 10;  // per seed
  std::uint64_t base_seed = 0;
  double x0_lo = -1.0;
  double x0_hi = 1.0;
  std::size_t candidates = 16;
  std::size_t chunk = 4;
  PushEnvConfig env;
};

/// Metrics of one rollout. Jerk needs three executed actions and the switch
/// rate two labelled replanning steps; otherwise they are left out.
struct RolloutMetrics {
  bool success = false;
  bool has_jerk = false;
  double jerk = 0.0;
  bool has_switch = false;
  double switch_rate = 0.0;
  std::vector<Mode> labels;  // one per replanning step
};

/// Label of each selected plan; positions already visited count towards it.
std::vector<Mode> replan_modes(const inference::RolloutResult& r, const PushEnvConfig& env);
RolloutMetrics rollout_metrics(const inference::RolloutResult& r, const PushEnvConfig& env);

struct SeedMetrics {
  std::uint64_t seed = 0;
  double success_rate = 0.0;
  double jerk = 0.0;         // mean over rollouts that define it
  double switch_rate = 0.0;  // likewise
  std::size_t jerk_count = 0;
  std::size_t switch_count = 0;
};

struct CellReport {
  std::string policy;
  std::string condition;
  inference::SelectionRule rule = inference::SelectionRule::kProxy;
  bool absent = false;
  std::string absent_reason;
  std::vector<SeedMetrics> seeds;
  Summary success, jerk, switch_rate;  // over seeds
};

/// Start offset, env noise seed and rollout seed of rollout `index` under
/// `seed`; shared by every cell so comparisons are paired.
struct RolloutSpec {
  double x0 = 0.0;
  std::uint64_t env_seed = 0;
  std::uint64_t rollout_seed = 0;
};
RolloutSpec rollout_spec(const SuiteConfig& cfg, std::size_t seed, std::size_t index);

using RolloutSink = std::function<void(const CellReport& cell, std::size_t seed, std::size_t index,
                                       const RolloutSpec& spec, const inference::RolloutResult& result)>;

/// Evaluates every policy x condition x rule cell over `seeds` seeds.
/// Policies whose checkpoint cannot be loaded give absent cells.
std::vector<CellReport> run_suite(const SuiteConfig& cfg, const RolloutSink& sink = {});

void write_seed_csv(std::ostream& out, const std::vector<CellReport>& cells);
void write_summary_csv(std::ostream& out, const std::vector<CellReport>& cells);

}  // namespace prism::bench
