#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "prism/linattn/block.hpp"
#include "prism/numerics/params.hpp"
#include "prism/numerics/tape.hpp"

namespace prism::model {

struct ModalitySpec {
  std::string name;
  std::size_t width = 0;
};

struct ModelConfig {
  std::vector<ModalitySpec> modalities;
  std::size_t obs_horizon = 2;    // T_o
  std::size_t pred_horizon = 16;  // T_p
  std::size_t action_dim = 2;     // D_a
  std::size_t width = 256;        // d
  std::size_t latent_dim = 0;     // D_z; 0 means "same as width"
  std::size_t layers = 6;
  std::size_t ff_hidden = 0;      // 0 means 4 * width
  std::size_t modality_hidden = 64;
  std::size_t modality_embed = 32;
  std::size_t fusion_hidden = 1024;
  linattn::AttentionConfig attention;

  std::size_t resolved_latent_dim() const { return latent_dim == 0 ? width : latent_dim; }
  std::size_t resolved_ff_hidden() const { return ff_hidden == 0 ? 4 * width : ff_hidden; }
  std::size_t modality_index(const std::string& name) const;
  /// Throws DomainError naming the offending field.
  void validate() const;
};

/// Per-modality streams for `batch` windows of `steps` timesteps each.
/// Row r of every stream (and of `presence`) is timestep r % steps of window r / steps.
struct ObservationBatch {
  std::size_t batch = 0;
  std::size_t steps = 0;
  std::vector<num::Tensor> streams;  // (batch*steps, d_m) each
  num::Tensor presence;              // (batch*steps, M), entries 0 or 1

  static ObservationBatch zeros(const ModelConfig& cfg, std::size_t batch);
  std::size_t rows() const { return batch * steps; }
};

/// K action sequences per batch item.
struct CandidateSet {
  std::size_t batch = 0;
  std::size_t candidates = 0;
  std::size_t horizon = 0;
  std::size_t action_dim = 0;
  num::Tensor actions;  // (batch*K*T_p, D_a), candidate (i,k) occupies rows [(i*K+k)*T_p, +T_p)
  num::Tensor latents;  // (batch*K, D_z)

  num::Tensor sequence(std::size_t item, std::size_t k) const;
  std::span<const double> action(std::size_t item, std::size_t k, std::size_t t) const;
};

class Policy {
 public:
  /// Parameters are drawn from the "init" substream of `seed` and feature
  /// maps from its "features" substream.
  Policy(ModelConfig cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  num::ParameterSet& params() { return params_; }
  const num::ParameterSet& params() const { return params_; }
  const std::vector<linattn::BlockFeatures>& features() const { return features_; }
  std::uint64_t feature_seed() const { return feature_seed_; }
  /// Redraw every block's feature maps from a new seed.
  void redraw_features(std::uint64_t seed);

  /// Fuse each timestep independently: (batch*T_o, d) context tokens with
  /// positional embeddings added.
  num::Var encode(num::Tape& tape, const num::BoundParams& p, const ObservationBatch& obs) const;

  /// One batched pass for all batch*K candidates. `latents` is (batch*K, D_z);
  /// returns (batch*K*T_p, D_a) actions in (-1, 1).
  num::Var generate(num::Tape& tape, const num::BoundParams& p, const num::Var& context, std::size_t batch,
                    std::size_t candidates, const num::Tensor& latents) const;

  /// Encode + generate without gradients.
  CandidateSet sample(const ObservationBatch& obs, std::size_t candidates, const num::Tensor& latents,
                      num::Precision precision = num::Precision::kFloat64) const;

  std::size_t encoder_calls() const { return encoder_calls_; }
  std::size_t generator_calls() const { return generator_calls_; }
  void reset_counters() const { encoder_calls_ = generator_calls_ = 0; }

 private:
  ModelConfig cfg_;
  num::ParameterSet params_;
  std::vector<linattn::BlockFeatures> features_;
  std::uint64_t feature_seed_ = 0;
  mutable std::size_t encoder_calls_ = 0;
  mutable std::size_t generator_calls_ = 0;
};

/// Closed-form trainable-parameter count for a configuration.
std::size_t count_params(const ModelConfig& cfg);
/// Parameters of one linear map with bias.
constexpr std::size_t linear_param_count(std::size_t in, std::size_t out) { return in * out + out; }

}  // namespace prism::model
