#pragma once

#include <span>
#include <vector>

#include "prism/model/policy.hpp"
#include "prism/numerics/rng.hpp"

namespace prism::trainer {

/// Aligned streams of one episode. Row t of every stream is observed at time
/// t; actions row t is the action that moved the agent into that state.
struct EpisodeData {
  std::vector<num::Tensor> streams;
  num::Tensor actions;
  std::size_t length() const { return actions.rows(); }
};

/// Window ending at observation index `t` of `episode`; its target is
/// actions t+1 .. t+T_p.
struct WindowRef {
  std::size_t episode = 0;
  std::size_t t = 0;
  friend bool operator==(const WindowRef&, const WindowRef&) = default;
};

struct WindowSet {
  std::vector<WindowRef> windows;
  std::size_t skipped_episodes = 0;  // shorter than T_o + T_p
};

/// The episode with `steps` copies of its first frame in front, reached by
/// zero actions. Matches the left padding of the rollout observation buffer.
EpisodeData pad_start(const EpisodeData& episode, std::size_t steps);

/// Stride-1 sliding windows: an episode of length L yields L - T_o - T_p + 1.
WindowSet make_windows(std::span<const EpisodeData> episodes, std::size_t obs_horizon, std::size_t pred_horizon);

struct Batch {
  model::ObservationBatch obs;
  num::Tensor targets;  // (B*T_p, D_a)
};

/// Gathers windows into a batch. With `dropout` > 0 every modality of every
/// window is dropped with that probability (at least one always survives);
/// dropped streams are zeroed and masked.
Batch assemble(std::span<const EpisodeData> episodes, std::span<const WindowRef> windows,
               const model::ModelConfig& cfg, double dropout = 0.0, num::Rng* rng = nullptr);

/// Target slice actions[t+1 .. t+T_p] of one window.
num::Tensor target_slice(const EpisodeData& ep, std::size_t t, std::size_t pred_horizon);

/// All action rows of the given episodes stacked, e.g. for per-dimension scales.
num::Tensor stack_actions(std::span<const EpisodeData> episodes);

}  // namespace prism::trainer
