#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "prism/inference/env.hpp"
#include "prism/model/policy.hpp"
#include "prism/numerics/rng.hpp"

namespace prism::inference {

enum class SelectionRule { kProxy, kTiebreak, kRandom };
enum class ProxyMode { kActionProximity, kInducedState };

const char* rule_name(SelectionRule r);
SelectionRule parse_rule(const std::string& name);

/// Neither signal a proxy score needs is available.
class RuleUnavailableError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Everything a selection rule may look at: observations and our own past
/// actions, never demonstration targets.
struct SelectionContext {
  std::optional<std::vector<double>> last_action;
  /// Where the agent would go if it kept its current motion.
  std::optional<std::vector<double>> reference_state;
  /// Transition of the environment applied to a candidate first action.
  std::function<std::optional<std::vector<double>>(std::span<const double>)> induced_state;
};

/// Lower is better. kActionProximity: ||a_1 - last_action||. kInducedState:
/// ||induced(a_1) - reference_state||. Only the first action is read.
double proxy_score(const num::Tensor& candidate, const SelectionContext& ctx,
                   ProxyMode mode = ProxyMode::kActionProximity);

/// argmin_k ||first action of k - last_action||, first index on ties.
std::size_t tiebreak_select(const model::CandidateSet& candidates, std::span<const double> last_action,
                            std::size_t item = 0);

/// Applies `rule`; the proxy falls back to the tiebreak when unavailable.
std::size_t select_candidate(SelectionRule rule, ProxyMode mode, const model::CandidateSet& candidates,
                             const SelectionContext& ctx, num::Rng& rng);

struct RolloutConfig {
  std::size_t candidates = 16;  // K
  std::size_t chunk = 4;        // T_a
  SelectionRule rule = SelectionRule::kProxy;
  ProxyMode proxy_mode = ProxyMode::kActionProximity;
  std::vector<std::uint8_t> dropped;  // per modality; missing entries mean present
  num::Precision precision = num::Precision::kFloat64;
  bool zero_latents = false;  // deterministic policies such as behaviour cloning
  std::uint64_t seed = 0;     // latents and random selection draw from its substreams
};

struct ReplanRecord {
  std::size_t t = 0;
  std::size_t selected = 0;
  num::Tensor first_actions;      // (K, D_a)
  num::Tensor selected_sequence;  // (T_p, D_a)
  num::Tensor executed;           // (n <= T_a, D_a)
  std::vector<double> state;      // env observables at replanning time
  std::vector<std::vector<double>> observed;  // newest frame as the policy saw it, per modality
};

struct RolloutResult {
  EnvStatus status = EnvStatus::kRunning;
  std::string cause;
  std::vector<ReplanRecord> records;
  num::Tensor executed;                     // (T, D_a)
  std::vector<std::vector<double>> states;  // state before the first and after every env step
  std::size_t generator_calls = 0;
  bool success() const { return status == EnvStatus::kSuccess; }
};

/// Receding-horizon control: observe, generate K candidates in one pass,
/// select, execute the first T_a actions, repeat until the env finishes.
RolloutResult rollout(Environment& env, const model::Policy& policy, const RolloutConfig& cfg);

/// Window of the last `steps` frames, left-padded with the oldest one, with
/// dropped modalities zeroed and masked.
model::ObservationBatch window_batch(const std::vector<Frame>& history, std::size_t steps,
                                     const model::ModelConfig& cfg, const std::vector<std::uint8_t>& dropped);

}  // namespace prism::inference
