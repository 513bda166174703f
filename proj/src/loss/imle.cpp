#include "prism/loss/imle.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

#include "prism/numerics/errors.hpp"
#include "prism/numerics/ops.hpp"
#include "prism/numerics/reduce.hpp"

namespace prism::loss {

DistanceConfig DistanceConfig::uniform(std::size_t action_dim, double charbonnier_eps) {
  DistanceConfig cfg;
  cfg.charbonnier_eps = charbonnier_eps;
  cfg.weights.assign(action_dim, 1.0);
  return cfg;
}

DistanceConfig DistanceConfig::from_actions(const num::Tensor& actions, double charbonnier_eps) {
  const std::size_t n = actions.rows(), dims = actions.cols();
  if (n == 0) throw DomainError("per-dimension weights need at least one action row");
  DistanceConfig cfg;
  cfg.charbonnier_eps = charbonnier_eps;
  cfg.weights.resize(dims);
  for (std::size_t d = 0; d < dims; ++d) {
    double mean = 0.0;
    for (std::size_t r = 0; r < n; ++r) mean += actions.at(r, d);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t r = 0; r < n; ++r) var += (actions.at(r, d) - mean) * (actions.at(r, d) - mean);
    cfg.weights[d] = 1.0 / (std::sqrt(var / static_cast<double>(n)) + 1e-8);
  }
  return cfg;
}

void DistanceConfig::validate(std::size_t action_dim) const {
  if (!(charbonnier_eps > 0.0)) throw DomainError("Charbonnier floor must be positive");
  if (weights.size() != action_dim) {
    throw DimensionError("distance weights cover " + std::to_string(weights.size()) + " dimensions, actions have " +
                         std::to_string(action_dim));
  }
  for (double w : weights)
    if (!(w > 0.0) || !std::isfinite(w)) throw DomainError("distance weights must be positive and finite");
}

double DistanceConfig::floor() const {
  return std::accumulate(weights.begin(), weights.end(), 0.0) * charbonnier_eps;
}

namespace {

double sequence_distance(std::span<const double> pred, std::span<const double> target, const DistanceConfig& cfg,
                         std::size_t horizon) {
  const std::size_t dims = cfg.weights.size();
  const double eps2 = cfg.charbonnier_eps * cfg.charbonnier_eps;
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double e = pred[i] - target[i];
    total += cfg.weights[i % dims] * std::sqrt(e * e + eps2);
  }
  return total / static_cast<double>(horizon);
}

}  // namespace

double robust_distance(const num::Tensor& pred, const num::Tensor& target, const DistanceConfig& cfg) {
  if (pred.shape() != target.shape() || pred.rank() != 2) {
    throw DimensionError("robust_distance: prediction " + num::shape_string(pred.shape()) + " vs target " +
                         num::shape_string(target.shape()));
  }
  cfg.validate(pred.cols());
  return sequence_distance(pred.data(), target.data(), cfg, pred.rows());
}

num::Tensor DistanceTensor::diag() const {
  num::Tensor out(num::Shape{batch, candidates});
  for (std::size_t i = 0; i < batch; ++i)
    for (std::size_t k = 0; k < candidates; ++k) out.at(i, k) = at(i, k, i);
  return out;
}

namespace {

std::size_t check_layout(const num::Tensor& candidates, const num::Tensor& targets, std::size_t batch, std::size_t k,
                         const DistanceConfig& cfg) {
  if (batch == 0 || k == 0) throw DomainError("distance tensor needs B >= 1 and K >= 1");
  if (targets.rank() != 2 || targets.rows() % batch != 0) {
    throw DimensionError("targets " + num::shape_string(targets.shape()) + " do not split into " +
                         std::to_string(batch) + " sequences");
  }
  const std::size_t horizon = targets.rows() / batch;
  if (candidates.rank() != 2 || candidates.rows() != batch * k * horizon || candidates.cols() != targets.cols()) {
    throw DimensionError("candidates " + num::shape_string(candidates.shape()) + " vs targets " +
                         num::shape_string(targets.shape()) + " with B=" + std::to_string(batch) +
                         ", K=" + std::to_string(k));
  }
  cfg.validate(targets.cols());
  return horizon;
}

}  // namespace

DistanceTensor distance_tensor(const num::Tensor& candidates, const num::Tensor& targets, std::size_t batch,
                               std::size_t k, const DistanceConfig& cfg) {
  const std::size_t horizon = check_layout(candidates, targets, batch, k, cfg);
  const std::size_t span = horizon * targets.cols();
  DistanceTensor dt;
  dt.batch = batch;
  dt.candidates = k;
  dt.cross = num::Tensor(num::Shape{batch, k, batch});
  for (std::size_t ik = 0; ik < batch * k; ++ik) {
    const auto pred = candidates.data().subspan(ik * span, span);
    for (std::size_t j = 0; j < batch; ++j)
      dt.cross[ik * batch + j] = sequence_distance(pred, targets.data().subspan(j * span, span), cfg, horizon);
  }
  return dt;
}

num::Var diag_distances(const num::Var& candidates, const num::Tensor& targets, std::size_t batch, std::size_t k,
                        const DistanceConfig& cfg) {
  const std::size_t horizon = check_layout(candidates.value(), targets, batch, k, cfg);
  const std::size_t dims = targets.cols(), span = horizon * dims;
  num::Tensor tiled(candidates.shape());
  for (std::size_t ik = 0; ik < batch * k; ++ik) {
    const std::size_t i = ik / k;
    std::copy_n(targets.data().begin() + static_cast<std::ptrdiff_t>(i * span), span,
                tiled.data().begin() + static_cast<std::ptrdiff_t>(ik * span));
  }
  num::Tape& tape = candidates.tape();
  const num::Var err = num::sub(candidates, tape.constant(std::move(tiled)));
  const num::Var charb =
      num::sqrt(num::add_scalar(num::square(err), cfg.charbonnier_eps * cfg.charbonnier_eps));
  const num::Var weighted = num::mul(charb, tape.constant(num::Tensor::vector(cfg.weights)));
  const num::Var per_seq = num::sum(num::reshape(weighted, {batch * k, span}), 1);
  return num::reshape(num::scale(per_seq, 1.0 / static_cast<double>(horizon)), {batch, k});
}

void RsState::validate() const {
  if (!(quantile > 0.0 && quantile < 1.0)) throw DomainError("rejection quantile must lie in (0, 1)");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw DomainError("EMA momentum must lie in [0, 1)");
  if (!(eps_min > 0.0 && eps_min <= eps_max)) throw DomainError("threshold clamps need 0 < eps_min <= eps_max");
}

RsState calibrate_from_estimate(double estimate, const RsState& state) {
  RsState next = state;
  next.last_estimate = estimate;
  const double raw = state.momentum * state.eps_rs + (1.0 - state.momentum) * estimate;
  next.eps_rs = std::clamp(raw, state.eps_min, state.eps_max);
  return next;
}

RsState calibrate(const DistanceTensor& dt, const RsState& state) {
  state.validate();
  return calibrate_from_estimate(num::quantile(dt.cross.data(), state.quantile), state);
}

double RejectionMask::rejection_rate() const {
  if (rejected.empty()) return 0.0;
  const auto n = std::count(rejected.begin(), rejected.end(), std::uint8_t{1});
  return static_cast<double>(n) / static_cast<double>(rejected.size());
}

RejectionMask rejection_mask(const DistanceTensor& dt, double eps_rs, MaskScope scope) {
  if (!(eps_rs > 0.0)) throw DomainError("rejection threshold must be positive");
  RejectionMask mask;
  mask.batch = dt.batch;
  mask.candidates = dt.candidates;
  mask.rejected.assign(dt.batch * dt.candidates, 0);
  mask.fallback.assign(dt.batch, 0);
  for (std::size_t i = 0; i < dt.batch; ++i) {
    bool any_survivor = false;
    for (std::size_t k = 0; k < dt.candidates; ++k) {
      double closest = dt.at(i, k, i);
      if (scope == MaskScope::kBatchGlobal)
        for (std::size_t j = 0; j < dt.batch; ++j) closest = std::min(closest, dt.at(i, k, j));
      const bool rej = closest < eps_rs;
      mask.rejected[i * dt.candidates + k] = rej ? 1 : 0;
      any_survivor = any_survivor || !rej;
    }
    mask.fallback[i] = any_survivor ? 0 : 1;
  }
  return mask;
}

std::vector<std::size_t> select_survivors(const num::Tensor& diag, const RejectionMask& mask) {
  if (diag.shape() != num::Shape{mask.batch, mask.candidates}) {
    throw DimensionError("diagonal " + num::shape_string(diag.shape()) + " does not match mask (" +
                         std::to_string(mask.batch) + ", " + std::to_string(mask.candidates) + ")");
  }
  std::vector<std::size_t> picked(mask.batch);
  for (std::size_t i = 0; i < mask.batch; ++i) {
    std::size_t best = mask.candidates;
    for (std::size_t k = 0; k < mask.candidates; ++k) {
      if (!mask.is_survivor(i, k)) continue;
      if (best == mask.candidates || diag.at(i, k) < diag.at(i, best)) best = k;
    }
    picked[i] = best;
  }
  return picked;
}

num::Var hard_loss(const num::Var& diag, const RejectionMask& mask) {
  const std::vector<std::size_t> picked = select_survivors(diag.value(), mask);
  std::vector<std::size_t> flat(picked.size());
  for (std::size_t i = 0; i < picked.size(); ++i) flat[i] = i * mask.candidates + picked[i];
  return num::mean(num::gather(diag, flat));
}

double hard_loss(const num::Tensor& diag, const RejectionMask& mask) {
  const std::vector<std::size_t> picked = select_survivors(diag, mask);
  double total = 0.0;
  for (std::size_t i = 0; i < picked.size(); ++i) total += diag.at(i, picked[i]);
  return total / static_cast<double>(picked.size());
}

std::vector<std::size_t> top_k_smallest(std::span<const double> row, std::size_t count) {
  std::vector<std::size_t> order(row.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return row[a] < row[b]; });
  order.resize(std::min(count, order.size()));
  return order;
}

namespace {

void check_soft(const num::Tensor& diag, std::size_t top_k, double tau) {
  if (diag.rank() != 2) throw DimensionError("soft loss expects a (B, K) diagonal, got " + num::shape_string(diag.shape()));
  if (top_k == 0 || top_k > diag.cols()) {
    throw DomainError("soft loss needs 1 <= K' <= K, got K'=" + std::to_string(top_k) + " with K=" +
                      std::to_string(diag.cols()));
  }
  if (!(tau > 0.0)) throw DomainError("soft loss temperature must be positive");
}

}  // namespace

num::Var soft_loss(const num::Var& diag, std::size_t top_k, double tau) {
  const num::Tensor& d = diag.value();
  check_soft(d, top_k, tau);
  std::vector<std::size_t> flat;
  flat.reserve(d.rows() * top_k);
  for (std::size_t i = 0; i < d.rows(); ++i)
    for (std::size_t k : top_k_smallest(d.row(i), top_k)) flat.push_back(i * d.cols() + k);
  const num::Var picked = num::reshape(num::gather(diag, flat), {d.rows(), top_k});
  return num::neg(num::mean(num::logsumexp_rows(num::scale(picked, -1.0 / tau))));
}

double soft_loss(const num::Tensor& diag, std::size_t top_k, double tau) {
  check_soft(diag, top_k, tau);
  double total = 0.0;
  for (std::size_t i = 0; i < diag.rows(); ++i) {
    const auto idx = top_k_smallest(diag.row(i), top_k);
    double mx = -diag.at(i, idx.front()) / tau;
    double s = 0.0;
    for (std::size_t k : idx) s += std::exp(-diag.at(i, k) / tau - mx);
    total += mx + std::log(s);
  }
  return -total / static_cast<double>(diag.rows());
}

num::Var total_loss(const num::Var& hard, const num::Var& soft, double lambda) {
  if (!(lambda >= 0.0)) throw DomainError("soft-loss weight must be non-negative");
  if (lambda == 0.0) return hard;
  return num::add(hard, num::scale(soft, lambda));
}

StepLoss imle_objective(const num::Var& candidates, const num::Tensor& targets, std::size_t batch, std::size_t k,
                        const LossConfig& cfg, const RsState& state) {
  StepLoss out;
  const DistanceTensor dt = distance_tensor(candidates.value(), targets, batch, k, cfg.distance);
  out.state = cfg.freeze_threshold ? state : calibrate(dt, state);
  if (cfg.freeze_threshold) out.state.last_estimate = num::quantile(dt.cross.data(), state.quantile);
  const RejectionMask mask = rejection_mask(dt, out.state.eps_rs, cfg.scope);
  out.rejection_rate = mask.rejection_rate();

  const num::Var diag = diag_distances(candidates, targets, batch, k, cfg.distance);
  const num::Var hard = hard_loss(diag, mask);
  out.selected = select_survivors(diag.value(), mask);
  out.hard = hard.value().item();
  if (cfg.lambda_soft == 0.0) {
    out.total = hard;
    return out;
  }
  const num::Var soft = soft_loss(diag, std::min(cfg.top_k, k), cfg.tau);
  out.soft = soft.value().item();
  out.total = total_loss(hard, soft, cfg.lambda_soft);
  return out;
}

void write_log_header(std::ostream& out) { out << "step,hard,soft,total,eps_rs,rejection_rate,eps_tilde\n"; }

void write_log_row(std::ostream& out, const LogRecord& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.step, r.hard, r.soft, r.total,
                r.eps_rs, r.rejection_rate, r.eps_tilde);
  out << buf;
}

}  // namespace prism::loss
