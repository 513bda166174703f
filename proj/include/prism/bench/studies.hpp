#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"
#include "prism/bench/push_env.hpp"
#include "prism/model/policy.hpp"

namespace prism::bench {

/// One thresholded quantity of a study.
struct StudyCheck {
  std::string name;
  double value = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  bool pass = false;
};

struct StudyReport {
  std::string study;
  nlohmann::json params = nlohmann::json::object();
  std::vector<StudyCheck> checks;
  std::vector<std::string> series_header;
  std::vector<std::vector<double>> series;
  bool pass() const;
  nlohmann::json to_json() const;
  void write_series_csv(std::ostream& out) const;
};

StudyCheck make_check(std::string name, double value, double lo, double hi);

/// Smallest sample size for which a ratio of two sample variances stays
/// inside [target * lo_factor, target * hi_factor] at ~95% confidence, using
/// the normal approximation sd(log ratio) = 2 / sqrt(n - 1).
std::size_t required_variance_trials(double lo_factor, double hi_factor);
/// Trials needed to resolve a rate p to within +/- margin at ~95% confidence.
std::size_t required_rate_trials(double p, double margin);

/// Monte-Carlo over feature draws of single-head FAVOR+ against exact
/// attention on one fixed random input. The per-draw error variance should
/// scale as 1/m.
struct FavorVarianceOptions {
  std::vector<std::size_t> features{64, 256};
  std::size_t draws = 500;
  std::size_t seq_len = 8;
  std::size_t head_dim = 4;
  double input_scale = 0.3;
  double mean_tolerance = 0.05;
  std::uint64_t seed = 0;
};
std::size_t required_trials(const FavorVarianceOptions& opts);
StudyReport favor_variance_study(const FavorVarianceOptions& opts);

/// Spread of the batch quantile estimate fed to the threshold update, on
/// synthetic distance tensors of B*K*B i.i.d. entries, plus a bounds sweep of
/// random update sequences.
struct QuantileVarianceOptions {
  std::vector<std::size_t> sizes{512, 4096, 32768};
  std::size_t repeats = 200;
  double quantile = 0.275;
  double slack = 2.0;        // allowed factor between measured and 1/N variance ratios
  double max_cv = 0.05;      // at the largest size
  std::size_t sequences = 10000;
  std::size_t sequence_length = 50;
  std::uint64_t seed = 0;
};
std::size_t required_trials(const QuantileVarianceOptions& opts);
StudyReport quantile_variance_study(const QuantileVarianceOptions& opts);

/// Wall time of streaming linear attention and of exact attention against
/// sequence length; fitted log-log exponents.
struct LatencyScalingOptions {
  std::vector<std::size_t> lengths{256, 512, 1024, 2048};
  std::size_t repeats = 3;  // the fastest repeat counts
  std::size_t head_dim = 16;
  std::size_t features = 64;
  double max_linear_exponent = 1.3;
  double min_exact_exponent = 1.7;
  std::uint64_t seed = 0;
};
std::size_t required_trials(const LatencyScalingOptions& opts);
StudyReport latency_scaling_study(const LatencyScalingOptions& opts);

/// Least-squares slope of log(y) against log(x).
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

struct CoverageStudyOptions {
  std::size_t candidates = 16;
  std::size_t trials = 100;
  double threshold = 0.95;
  bool deterministic = false;
  std::uint64_t seed = 0;
};
std::size_t required_trials(const CoverageStudyOptions& opts);
StudyReport coverage_study(const model::Policy& policy, const PushEnvConfig& env, const CoverageStudyOptions& opts);

}  // namespace prism::bench
