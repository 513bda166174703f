#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace prism::inference {

/// One timestep of every modality stream.
struct Frame {
  std::vector<std::vector<double>> streams;
};

enum class EnvStatus { kRunning, kSuccess, kFailure };

const char* status_name(EnvStatus s);

/// What rollout() needs from a simulator.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual Frame observe() const = 0;
  /// Apply one action. Throws on a simulator fault; the rollout turns that
  /// into a failed episode.
  virtual EnvStatus step(std::span<const double> action) = 0;
  virtual EnvStatus status() const = 0;
  virtual std::size_t steps_taken() const = 0;
  virtual std::size_t step_budget() const = 0;
  virtual std::size_t action_dim() const = 0;
  /// Observable state recorded per replanning step (e.g. position).
  virtual std::vector<double> state() const = 0;
  virtual std::string failure_cause() const { return {}; }

  /// Next state if `action` were applied now, when the transition is exposed.
  virtual std::optional<std::vector<double>> induced_state(std::span<const double>) const { return std::nullopt; }
  /// State the current motion would reach without a change of action.
  virtual std::optional<std::vector<double>> coasting_state() const { return std::nullopt; }
};

}  // namespace prism::inference
