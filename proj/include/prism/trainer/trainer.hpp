#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "prism/loss/imle.hpp"
#include "prism/model/policy.hpp"
#include "prism/trainer/dataset.hpp"

namespace prism::trainer {

enum class Objective { kBatchGlobal, kPerSample, kMseBc };
const char* objective_name(Objective o);
Objective parse_objective(const std::string& name);

struct TrainConfig {
  model::ModelConfig model;
  Objective objective = Objective::kBatchGlobal;
  std::size_t candidates = 16;  // K; forced to 1 for MSE behaviour cloning
  std::size_t batch = 32;
  std::size_t epochs = 10;
  std::size_t max_steps = 0;  // 0: no cap
  double lr = 1e-4;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double grad_clip = 1.0;
  double warmup_frac = 0.05;
  // Objective.
  double charbonnier_eps = 1e-6;
  double lambda_soft = 0.02;
  std::size_t top_k = 3;
  double tau = 0.1;
  double quantile = 0.275;
  double momentum = 0.9;
  double eps_min = 1e-4;
  double eps_max = 0.2;
  double eps_init = 0.0;  // 0: start at eps_min
  bool freeze_threshold = false;
  // Data.
  double modality_dropout = 0.2;
  bool pad_start = true;  // T_o - 1 copies of each episode's first frame in front
  bool redraw_features = false;
  std::uint64_t seed = 0;
  num::Precision precision = num::Precision::kFloat64;

  std::size_t effective_candidates() const { return objective == Objective::kMseBc ? 1 : candidates; }
  /// Throws DomainError naming the offending field.
  void validate() const;
};

nlohmann::json train_config_to_json(const TrainConfig& cfg);

/// Decoupled-weight-decay Adam state, one moment pair per parameter.
struct OptimizerState {
  std::vector<num::Tensor> m;
  std::vector<num::Tensor> v;
  std::size_t step = 0;
};

struct StepStats {
  loss::LogRecord log;
  double grad_norm = 0.0;  // before clipping
  double clipped_norm = 0.0;
  double lr = 0.0;
  std::size_t generator_calls = 0;
};

struct FitOptions {
  std::string checkpoint_dir;  // empty: no checkpoints
  std::ostream* log = nullptr;  // CSV rows as they happen
  std::function<void(const StepStats&)> on_step;
};

struct FitResult {
  std::vector<loss::LogRecord> records;
  std::vector<double> validation;  // one per epoch
  double best_validation = 0.0;
  std::size_t steps = 0;
  std::vector<std::string> checkpoints;
};

class Trainer {
 public:
  Trainer(TrainConfig cfg, std::vector<EpisodeData> train, std::vector<EpisodeData> validation = {});

  /// One optimizer step on the given windows of the training split. On a
  /// non-finite value nothing is updated and NumericError propagates.
  StepStats train_step(std::span<const WindowRef> windows);

  /// Mean objective over the validation split (training split when empty)
  /// with fixed latents and the current threshold; changes nothing.
  double validation_loss() const;

  /// Runs the remaining epochs; resumes where a loaded checkpoint left off.
  FitResult fit(const FitOptions& opts = {});

  void save(const std::string& path) const;
  /// Restores parameters, optimizer, threshold, random streams and counters
  /// written by save(). The config echo must match this trainer's model.
  void load(const std::string& path);

  const TrainConfig& config() const { return cfg_; }
  model::Policy& policy() { return policy_; }
  const model::Policy& policy() const { return policy_; }
  const loss::RsState& rs_state() const { return rs_; }
  loss::RsState& rs_state() { return rs_; }
  const loss::DistanceConfig& distance() const { return loss_.distance; }
  const WindowSet& train_windows() const { return train_windows_; }
  const std::vector<EpisodeData>& train_episodes() const { return train_; }
  std::size_t step() const { return opt_.step; }
  std::size_t epoch() const { return epoch_; }
  std::size_t steps_per_epoch() const;
  std::size_t planned_steps() const;
  double learning_rate(std::size_t step) const;

 private:
  num::Var objective(num::Tape& tape, const num::BoundParams& p, const Batch& batch, const num::Tensor& latents,
                     const loss::RsState& state, loss::StepLoss* details) const;
  num::Tensor draw_latents(num::Rng& rng, std::size_t items) const;

  TrainConfig cfg_;
  std::vector<EpisodeData> train_;
  std::vector<EpisodeData> validation_;
  WindowSet train_windows_;
  WindowSet validation_windows_;
  model::Policy policy_;
  loss::LossConfig loss_;
  loss::RsState rs_;
  OptimizerState opt_;
  num::Rng latent_rng_;
  num::Rng dropout_rng_;
  std::size_t epoch_ = 0;
  double best_validation_ = 0.0;
  bool has_best_ = false;
};

/// Global L2 norm over a gradient list.
double global_norm(const std::vector<num::Tensor>& grads);
/// Scales grads in place so their global norm is at most `max_norm`; returns the norm before.
double clip_global_norm(std::vector<num::Tensor>& grads, double max_norm);

}  // namespace prism::trainer
