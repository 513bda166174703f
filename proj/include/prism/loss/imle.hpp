#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "prism/numerics/tape.hpp"

namespace prism::loss {

struct DistanceConfig {
  double charbonnier_eps = 1e-6;
  std::vector<double> weights;  // one per action dimension

  static DistanceConfig uniform(std::size_t action_dim, double charbonnier_eps = 1e-6);
  /// w_d = 1 / (std_d + 1e-8) over the rows of `actions` (N x D_a).
  static DistanceConfig from_actions(const num::Tensor& actions, double charbonnier_eps = 1e-6);
  void validate(std::size_t action_dim) const;
  /// Smallest value any distance can take: sum_d w_d * eps_c.
  double floor() const;
};

/// (1/T_p) sum_t sum_d w_d sqrt((pred - target)^2 + eps_c^2) over (T_p x D_a) sequences.
double robust_distance(const num::Tensor& pred, const num::Tensor& target, const DistanceConfig& cfg);

/// Batch-global distances between every candidate and every target.
struct DistanceTensor {
  std::size_t batch = 0;
  std::size_t candidates = 0;
  num::Tensor cross;  // (B, K, B): cross[i,k,j] = D(candidate (i,k), target j)

  double at(std::size_t i, std::size_t k, std::size_t j) const {
    return cross[(i * candidates + k) * batch + j];
  }
  double diag(std::size_t i, std::size_t k) const { return at(i, k, i); }
  num::Tensor diag() const;  // (B, K)
};

/// `candidates` is (B*K*T_p, D_a), `targets` (B*T_p, D_a).
DistanceTensor distance_tensor(const num::Tensor& candidates, const num::Tensor& targets, std::size_t batch,
                               std::size_t k, const DistanceConfig& cfg);

/// Differentiable diagonal D_{i,k} as a (B, K) variable.
num::Var diag_distances(const num::Var& candidates, const num::Tensor& targets, std::size_t batch, std::size_t k,
                        const DistanceConfig& cfg);

struct RsState {
  double eps_rs = 1e-4;
  double quantile = 0.275;
  double momentum = 0.9;
  double eps_min = 1e-4;
  double eps_max = 0.2;
  double last_estimate = 0.0;  // most recent batch quantile

  void validate() const;
};

/// EMA update toward the q-quantile of all B*K*B entries, clipped to [eps_min, eps_max].
RsState calibrate(const DistanceTensor& dt, const RsState& state);
/// The same update from an already computed batch quantile.
RsState calibrate_from_estimate(double estimate, const RsState& state);

/// kBatchGlobal rejects a candidate close to any target in the batch;
/// kPerSample only looks at the candidate's own target.
enum class MaskScope { kBatchGlobal, kPerSample };

struct RejectionMask {
  std::size_t batch = 0;
  std::size_t candidates = 0;
  std::vector<std::uint8_t> rejected;  // (B*K) before fallback
  std::vector<std::uint8_t> fallback;  // per item: every candidate was rejected

  bool is_rejected(std::size_t i, std::size_t k) const { return rejected[i * candidates + k] != 0; }
  /// Candidates eligible for the hard loss; all of them when the fallback fired.
  bool is_survivor(std::size_t i, std::size_t k) const { return fallback[i] != 0 || !is_rejected(i, k); }
  double rejection_rate() const;
};

RejectionMask rejection_mask(const DistanceTensor& dt, double eps_rs, MaskScope scope = MaskScope::kBatchGlobal);

/// Index of the closest surviving candidate per item, first index on ties.
std::vector<std::size_t> select_survivors(const num::Tensor& diag, const RejectionMask& mask);

/// (1/B) sum_i min over survivors of D_{i,k}. `diag` is (B, K).
num::Var hard_loss(const num::Var& diag, const RejectionMask& mask);
double hard_loss(const num::Tensor& diag, const RejectionMask& mask);

/// The K' smallest entries of each row, ordered by value then index.
std::vector<std::size_t> top_k_smallest(std::span<const double> row, std::size_t count);

/// -(1/B) sum_i log sum_{k in TopK'} exp(-D_{i,k} / tau).
num::Var soft_loss(const num::Var& diag, std::size_t top_k, double tau);
double soft_loss(const num::Tensor& diag, std::size_t top_k, double tau);

/// hard + lambda * soft. lambda == 0 returns `hard` itself.
num::Var total_loss(const num::Var& hard, const num::Var& soft, double lambda);

struct LossConfig {
  DistanceConfig distance;
  std::size_t top_k = 3;
  double tau = 0.1;
  double lambda_soft = 0.02;
  MaskScope scope = MaskScope::kBatchGlobal;
  /// Keep eps_rs fixed (no calibration), e.g. for plain IMLE.
  bool freeze_threshold = false;
};

struct StepLoss {
  num::Var total;
  double hard = 0.0;
  double soft = 0.0;
  double rejection_rate = 0.0;
  std::vector<std::size_t> selected;  // per item
  RsState state;                      // after calibration
};

/// Full objective for one batch: distances, calibration, mask, hard and soft terms.
StepLoss imle_objective(const num::Var& candidates, const num::Tensor& targets, std::size_t batch, std::size_t k,
                        const LossConfig& cfg, const RsState& state);

struct LogRecord {
  std::size_t step = 0;
  double hard = 0.0;
  double soft = 0.0;
  double total = 0.0;
  double eps_rs = 0.0;
  double rejection_rate = 0.0;
  double eps_tilde = 0.0;
};

void write_log_header(std::ostream& out);
/// Values are printed with round-trip precision so logs compare bitwise.
void write_log_row(std::ostream& out, const LogRecord& r);

}  // namespace prism::loss
