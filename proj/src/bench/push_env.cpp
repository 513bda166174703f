#include "prism/bench/push_env.hpp"

#include <algorithm>
#include <cmath>

#include "prism/numerics/errors.hpp"

namespace prism::bench {

using inference::EnvStatus;

std::size_t modality_by_name(const std::string& name) {
  const std::string key = name == "wrist" ? "view" : name;
  for (std::size_t m = 0; m < kModalityNames.size(); ++m)
    if (key == kModalityNames[m]) return m;
  throw DomainError("unknown modality '" + name + "' (expected view/wrist, proprio or tactile)");
}

inference::Frame observe_state(const PushEnvConfig& cfg, double x, double y, double vx, double vy, num::Rng& noise) {
  const double dgx = cfg.goal_x - x, dgy = cfg.goal_y - y;
  const double clearance = std::hypot(x, y) - cfg.obstacle_radius;
  const double heading = std::atan2(dgy, dgx);
  inference::Frame f;
  std::vector<double> view = {dgx, dgy, -x, -y, std::tanh(2.0 * clearance), std::sin(heading), std::cos(heading),
                              std::tanh(3.0 * x)};
  for (double& v : view) v += noise.normal(0.0, cfg.view_noise);
  const double proximity = std::exp(-std::max(clearance, 0.0) / 0.1);
  f.streams.push_back(std::move(view));
  f.streams.push_back({x, y, vx, vy});
  f.streams.push_back({proximity, clearance < 0.05 ? 1.0 : 0.0, x >= 0.0 ? proximity : -proximity});
  return f;
}

PushEnv::PushEnv(PushEnvConfig cfg, double x0, std::uint64_t noise_seed)
    : cfg_(cfg), x_(x0), y_(cfg.start_y), noise_(noise_seed) {}

inference::Frame PushEnv::observe() const { return observe_state(cfg_, x_, y_, vx_, vy_, noise_); }

EnvStatus PushEnv::step(std::span<const double> action) {
  if (status_ != EnvStatus::kRunning) throw ContractError("step() on a finished episode");
  if (action.size() != 2) throw DimensionError("push env expects 2-D actions, got " + std::to_string(action.size()));
  if (!std::isfinite(action[0]) || !std::isfinite(action[1])) throw NumericError("non-finite action");
  vx_ = std::clamp(action[0], -1.0, 1.0);
  vy_ = std::clamp(action[1], -1.0, 1.0);
  x_ += vx_ * cfg_.step_size;
  y_ += vy_ * cfg_.step_size;
  ++steps_;
  if (std::hypot(x_, y_) < cfg_.obstacle_radius) {
    status_ = EnvStatus::kFailure;
    cause_ = "collision with obstacle";
  } else if (std::hypot(x_ - cfg_.goal_x, y_ - cfg_.goal_y) <= cfg_.success_radius) {
    status_ = EnvStatus::kSuccess;
  } else if (steps_ >= cfg_.budget) {
    status_ = EnvStatus::kFailure;
    cause_ = "step budget exhausted";
  }
  return status_;
}

std::optional<std::vector<double>> PushEnv::induced_state(std::span<const double> action) const {
  return std::vector<double>{x_ + std::clamp(action[0], -1.0, 1.0) * cfg_.step_size,
                             y_ + std::clamp(action[1], -1.0, 1.0) * cfg_.step_size};
}

std::optional<std::vector<double>> PushEnv::coasting_state() const {
  return std::vector<double>{x_ + vx_ * cfg_.step_size, y_ + vy_ * cfg_.step_size};
}

double right_side_probability(double x0) {
  const double a = std::abs(x0);
  const double near = a <= 0.2 ? 0.5 : a >= 0.6 ? 1.0 : 0.5 + 0.5 * (a - 0.2) / 0.4;
  return x0 >= 0.0 ? near : 1.0 - near;
}

Episode scripted_demo(const PushEnvConfig& cfg, double x0, int side, num::Rng& rng, std::size_t pad_steps) {
  const double width = rng.uniform(0.5, 0.65);
  const double speed = rng.uniform(0.75, 0.95);
  const double p0x = x0, p0y = cfg.start_y, p2x = cfg.goal_x, p2y = cfg.goal_y;
  // Control point that puts the curve's midpoint at (side * width, 0).
  const double p1x = 2.0 * side * width - 0.5 * (p0x + p2x);
  const double p1y = 0.0 - 0.5 * (p0y + p2y);

  constexpr std::size_t kSamples = 4000;
  std::vector<double> cx(kSamples + 1), cy(kSamples + 1), arc(kSamples + 1, 0.0);
  for (std::size_t i = 0; i <= kSamples; ++i) {
    const double s = static_cast<double>(i) / kSamples, r = 1.0 - s;
    cx[i] = r * r * p0x + 2 * r * s * p1x + s * s * p2x;
    cy[i] = r * r * p0y + 2 * r * s * p1y + s * s * p2y;
    if (i > 0) arc[i] = arc[i - 1] + std::hypot(cx[i] - cx[i - 1], cy[i] - cy[i - 1]);
  }

  const double stride = speed * cfg.step_size;
  std::vector<std::array<double, 2>> actions{{0.0, 0.0}};
  double x = p0x, y = p0y;
  std::size_t cursor = 0;
  for (double target = stride;; target += stride) {
    double nx, ny;
    if (target >= arc.back()) {
      nx = p2x;
      ny = p2y;
    } else {
      while (arc[cursor + 1] < target) ++cursor;
      const double f = (target - arc[cursor]) / (arc[cursor + 1] - arc[cursor]);
      nx = cx[cursor] + f * (cx[cursor + 1] - cx[cursor]);
      ny = cy[cursor] + f * (cy[cursor + 1] - cy[cursor]);
    }
    const std::array<double, 2> a{(nx - x) / cfg.step_size, (ny - y) / cfg.step_size};
    actions.push_back(a);
    x += a[0] * cfg.step_size;
    y += a[1] * cfg.step_size;
    if (std::hypot(x - p2x, y - p2y) <= 0.5 * cfg.success_radius) break;
  }
  for (std::size_t i = 0; i < pad_steps; ++i) actions.push_back({0.0, 0.0});

  const std::size_t len = actions.size();
  Episode ep;
  ep.x0 = x0;
  ep.side = side;
  ep.actions = num::Tensor(num::Shape{len, 2});
  ep.positions = num::Tensor(num::Shape{len, 2});
  for (std::size_t m = 0; m < kModalityNames.size(); ++m) ep.streams.emplace_back(num::Shape{len, kModalityWidths[m]});
  x = p0x;
  y = p0y;
  for (std::size_t t = 0; t < len; ++t) {
    x += actions[t][0] * cfg.step_size;
    y += actions[t][1] * cfg.step_size;
    ep.actions.at(t, 0) = actions[t][0];
    ep.actions.at(t, 1) = actions[t][1];
    ep.positions.at(t, 0) = x;
    ep.positions.at(t, 1) = y;
    const inference::Frame f = observe_state(cfg, x, y, actions[t][0], actions[t][1], rng);
    for (std::size_t m = 0; m < f.streams.size(); ++m)
      std::copy(f.streams[m].begin(), f.streams[m].end(), ep.streams[m].row(t).begin());
  }
  return ep;
}

std::vector<Episode> generate_demos(const PushEnvConfig& cfg, std::size_t n, std::uint64_t seed,
                                    const DemoOptions& opts) {
  if (n == 0) throw DomainError("generate_demos needs n >= 1");
  num::Rng rng(seed);
  std::vector<Episode> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x0 = rng.uniform(opts.x0_min, opts.x0_max);
    const int side = rng.bernoulli(right_side_probability(x0)) ? 1 : -1;
    out.push_back(scripted_demo(cfg, x0, side, rng, opts.pad_steps));
  }
  return out;
}

}  // namespace prism::bench
