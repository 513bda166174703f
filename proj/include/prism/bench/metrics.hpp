#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "prism/bench/push_env.hpp"
#include "prism/model/policy.hpp"

namespace prism::bench {

enum class Mode { kNone, kLeft, kRight };
const char* mode_name(Mode m);

/// Side of the obstacle a path passes: sign of the x positions integrated over
/// the points inside the obstacle's y-band. kNone if no point is in the band.
Mode mode_label(const num::Tensor& positions, double obstacle_radius);

/// Mode of a planned action sequence started from `start`. Points of `prefix`
/// (positions already visited) count towards the band integral. When neither
/// reaches the band, a plan still below it and moving up is extended along
/// its net heading to the band's lower edge and the sign of x there decides;
/// otherwise the sign of its net lateral displacement. Values under
/// `min_lateral` give kNone.
Mode plan_mode(std::span<const double> start, const num::Tensor& actions, const PushEnvConfig& env,
               const num::Tensor& prefix = num::Tensor(num::Shape{0, 2}), double min_lateral = 0.02);

/// Positions visited by executing `actions` from `start`.
num::Tensor integrate_path(std::span<const double> start, const num::Tensor& actions, double step_size);

/// Mean over t of ||a_{t+1} - 2 a_t + a_{t-1}||. Needs at least 3 rows.
double jerk_metric(const num::Tensor& executed);

/// Fraction of consecutive labelled replanning steps whose labels differ.
/// kNone labels are skipped; fewer than two labelled steps is an error.
double mode_switch_rate(const std::vector<Mode>& labels);

/// True when the labels contain both a left and a right plan.
bool covers_both_modes(const std::vector<Mode>& labels);

/// Fraction of trials whose K candidates include both a left and a right plan.
/// Each trial starts the env at an x0 drawn uniformly from [x0_lo, x0_hi].
struct CoverageOptions {
  std::size_t candidates = 16;
  std::size_t trials = 100;
  double x0_lo = -0.2;
  double x0_hi = 0.2;
  bool zero_latents = false;  // deterministic policies
  std::uint64_t seed = 0;
};
double coverage_probe(const model::Policy& policy, const PushEnvConfig& env, const CoverageOptions& opts);

struct Summary {
  double mean = 0.0;
  double se = 0.0;  // standard error of the mean
  std::size_t n = 0;
};
Summary summarize(const std::vector<double>& values);

/// One-sided paired t-test of mean(a - b) > 0; returns the p-value.
/// Identical pairs give p = 1 unless every difference is positive (then 0).
double paired_t_test_greater(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace prism::bench
