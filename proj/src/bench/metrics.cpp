#include "prism/bench/metrics.hpp"

#include <algorithm>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>

#include "prism/numerics/errors.hpp"

namespace prism::bench {

const char* mode_name(Mode m) {
  switch (m) {
    case Mode::kLeft: return "left";
    case Mode::kRight: return "right";
    case Mode::kNone: return "none";
  }
  return "none";
}

namespace {

// Integral of x over band points; returns false when no point is inside.
bool band_integral(const num::Tensor& positions, double radius, double& total) {
  bool any = false;
  for (std::size_t r = 0; r < positions.rows(); ++r) {
    if (std::abs(positions.at(r, 1)) <= radius) {
      total += positions.at(r, 0);
      any = true;
    }
  }
  return any;
}

Mode sign_mode(double v) { return v > 0.0 ? Mode::kRight : v < 0.0 ? Mode::kLeft : Mode::kNone; }

}  // namespace

Mode mode_label(const num::Tensor& positions, double obstacle_radius) {
  double total = 0.0;
  if (!band_integral(positions, obstacle_radius, total)) return Mode::kNone;
  return sign_mode(total);
}

num::Tensor integrate_path(std::span<const double> start, const num::Tensor& actions, double step_size) {
  num::Tensor path(num::Shape{actions.rows(), 2});
  double x = start[0], y = start[1];
  for (std::size_t t = 0; t < actions.rows(); ++t) {
    x += std::clamp(actions.at(t, 0), -1.0, 1.0) * step_size;
    y += std::clamp(actions.at(t, 1), -1.0, 1.0) * step_size;
    path.at(t, 0) = x;
    path.at(t, 1) = y;
  }
  return path;
}

Mode plan_mode(std::span<const double> start, const num::Tensor& actions, const PushEnvConfig& env,
               const num::Tensor& prefix, double min_lateral) {
  const num::Tensor path = integrate_path(start, actions, env.step_size);
  double total = 0.0;
  const bool a = band_integral(prefix, env.obstacle_radius, total);
  const bool b = band_integral(path, env.obstacle_radius, total);
  if (a || b) return sign_mode(total);
  if (path.rows() == 0) return Mode::kNone;
  const double x = path.at(path.rows() - 1, 0), y = path.at(path.rows() - 1, 1);
  const double dx = x - start[0], dy = y - start[1];
  const double edge = -env.obstacle_radius;
  double side = dx;
  if (y < edge && dy > 0.0) side = x + dx * (edge - y) / dy;
  return std::abs(side) < min_lateral ? Mode::kNone : sign_mode(side);
}

double jerk_metric(const num::Tensor& executed) {
  const std::size_t n = executed.rows(), d = executed.cols();
  if (n < 3) throw DomainError("jerk needs at least 3 actions, got " + std::to_string(n));
  double total = 0.0;
  for (std::size_t t = 1; t + 1 < n; ++t) {
    double s = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      const double j = executed.at(t + 1, c) - 2.0 * executed.at(t, c) + executed.at(t - 1, c);
      s += j * j;
    }
    total += std::sqrt(s);
  }
  return total / static_cast<double>(n - 2);
}

double mode_switch_rate(const std::vector<Mode>& labels) {
  std::vector<Mode> known;
  for (Mode m : labels)
    if (m != Mode::kNone) known.push_back(m);
  if (known.size() < 2) throw DomainError("mode switch rate needs two labelled replanning steps");
  std::size_t switches = 0;
  for (std::size_t i = 1; i < known.size(); ++i) switches += known[i] != known[i - 1] ? 1 : 0;
  return static_cast<double>(switches) / static_cast<double>(known.size() - 1);
}

bool covers_both_modes(const std::vector<Mode>& labels) {
  const bool left = std::find(labels.begin(), labels.end(), Mode::kLeft) != labels.end();
  const bool right = std::find(labels.begin(), labels.end(), Mode::kRight) != labels.end();
  return left && right;
}

double coverage_probe(const model::Policy& policy, const PushEnvConfig& env, const CoverageOptions& opts) {
  const model::ModelConfig& mc = policy.config();
  if (opts.candidates < 2) return 0.0;
  num::Rng start_rng = num::Rng::substream(opts.seed, "starts");
  num::Rng latent_rng = num::Rng::substream(opts.seed, "latents");
  std::size_t covered = 0;
  for (std::size_t trial = 0; trial < opts.trials; ++trial) {
    const double x0 = start_rng.uniform(opts.x0_lo, opts.x0_hi);
    num::Rng noise(num::Rng::derive_seed(opts.seed, "noise" + std::to_string(trial)));
    const inference::Frame frame = observe_state(env, x0, env.start_y, 0.0, 0.0, noise);
    model::ObservationBatch obs = model::ObservationBatch::zeros(mc, 1);
    for (std::size_t s = 0; s < mc.obs_horizon; ++s)
      for (std::size_t m = 0; m < mc.modalities.size(); ++m)
        std::copy(frame.streams[m].begin(), frame.streams[m].end(), obs.streams[m].row(s).begin());
    num::Tensor z(num::Shape{opts.candidates, mc.resolved_latent_dim()});
    if (!opts.zero_latents) latent_rng.fill_normal(z.data());
    const model::CandidateSet c = policy.sample(obs, opts.candidates, z);
    const std::vector<double> start{x0, env.start_y};
    std::vector<Mode> labels;
    for (std::size_t k = 0; k < opts.candidates; ++k) labels.push_back(plan_mode(start, c.sequence(0, k), env));
    covered += covers_both_modes(labels) ? 1 : 0;
  }
  return static_cast<double>(covered) / static_cast<double>(opts.trials);
}

Summary summarize(const std::vector<double>& values) {
  Summary s;
  s.n = values.size();
  if (s.n == 0) return s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(s.n);
  if (s.n > 1) {
    double var = 0.0;
    for (double v : values) var += (v - s.mean) * (v - s.mean);
    var /= static_cast<double>(s.n - 1);
    s.se = std::sqrt(var / static_cast<double>(s.n));
  }
  return s;
}

double paired_t_test_greater(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) throw DomainError("paired t-test needs two equal samples of size >= 2");
  std::vector<double> diff(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) diff[i] = a[i] - b[i];
  const Summary s = summarize(diff);
  if (s.se == 0.0) return s.mean > 0.0 ? 0.0 : 1.0;
  const boost::math::students_t dist(static_cast<double>(s.n - 1));
  return boost::math::cdf(boost::math::complement(dist, s.mean / s.se));
}

}  // namespace prism::bench
