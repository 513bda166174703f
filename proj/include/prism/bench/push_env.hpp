#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "prism/inference/env.hpp"
#include "prism/numerics/rng.hpp"
#include "prism/numerics/tensor.hpp"
#include "prism/trainer/dataset.hpp"

namespace prism::bench {

struct PushEnvConfig {
  double obstacle_radius = 0.3;
  double goal_x = 0.0;
  double goal_y = 1.0;
  double start_y = -1.0;
  double step_size = 0.05;  // displacement for a unit action
  double success_radius = 0.05;
  std::size_t budget = 80;
  double view_noise = 0.01;
};

/// Stream names and widths, in observation order.
inline constexpr std::array<const char*, 3> kModalityNames = {"view", "proprio", "tactile"};
inline constexpr std::array<std::size_t, 3> kModalityWidths = {8, 4, 3};
/// "wrist" is accepted as another name for the camera-like "view" stream.
std::size_t modality_by_name(const std::string& name);

/// A point agent starts at (x0, start_y), must reach the goal behind a disk
/// obstacle at the origin, and may pass it on either side.
class PushEnv : public inference::Environment {
 public:
  PushEnv(PushEnvConfig cfg, double x0, std::uint64_t noise_seed);

  inference::Frame observe() const override;
  inference::EnvStatus step(std::span<const double> action) override;
  inference::EnvStatus status() const override { return status_; }
  std::size_t steps_taken() const override { return steps_; }
  std::size_t step_budget() const override { return cfg_.budget; }
  std::size_t action_dim() const override { return 2; }
  std::vector<double> state() const override { return {x_, y_}; }
  std::string failure_cause() const override { return cause_; }
  std::optional<std::vector<double>> induced_state(std::span<const double> action) const override;
  std::optional<std::vector<double>> coasting_state() const override;

  double x() const { return x_; }
  double y() const { return y_; }
  const PushEnvConfig& config() const { return cfg_; }

 private:
  PushEnvConfig cfg_;
  double x_, y_;
  double vx_ = 0.0, vy_ = 0.0;  // last applied action
  std::size_t steps_ = 0;
  inference::EnvStatus status_ = inference::EnvStatus::kRunning;
  std::string cause_;
  mutable num::Rng noise_;
};

/// Observation streams of a point agent: noisy view geometry, position and
/// velocity, obstacle proximity.
inference::Frame observe_state(const PushEnvConfig& cfg, double x, double y, double vx, double vy, num::Rng& noise);

/// One recorded episode. frames[t] is observed at time t and actions[t] is
/// the action that moved the agent into that state (actions[0] is zero).
struct Episode : trainer::EpisodeData {
  num::Tensor positions;  // (L, 2)
  double x0 = 0.0;
  int side = 0;  // -1 left, +1 right
};

/// Probability that a demonstration from x0 passes right of the obstacle:
/// 0.5 for |x0| <= 0.2, the near side for |x0| >= 0.6, linear in between.
double right_side_probability(double x0);

struct DemoOptions {
  double x0_min = -1.0;
  double x0_max = 1.0;
  std::size_t pad_steps = 8;  // zero actions appended at the goal
};

/// Scripted expert detours around the obstacle along a quadratic curve.
std::vector<Episode> generate_demos(const PushEnvConfig& cfg, std::size_t n, std::uint64_t seed,
                                    const DemoOptions& opts = {});
/// One demonstration from a fixed start and side.
Episode scripted_demo(const PushEnvConfig& cfg, double x0, int side, num::Rng& rng, std::size_t pad_steps = 8);

}  // namespace prism::bench
