#include "prism/trainer/dataset.hpp"

#include "prism/numerics/errors.hpp"

namespace prism::trainer {

WindowSet make_windows(std::span<const EpisodeData> episodes, std::size_t obs_horizon, std::size_t pred_horizon) {
  if (obs_horizon == 0 || pred_horizon == 0) throw DomainError("windows need T_o >= 1 and T_p >= 1");
  WindowSet set;
  for (std::size_t e = 0; e < episodes.size(); ++e) {
    const std::size_t len = episodes[e].length();
    if (len < obs_horizon + pred_horizon) {
      ++set.skipped_episodes;
      continue;
    }
    for (std::size_t t = obs_horizon - 1; t + pred_horizon < len; ++t) set.windows.push_back({e, t});
  }
  return set;
}

num::Tensor target_slice(const EpisodeData& ep, std::size_t t, std::size_t pred_horizon) {
  if (t + pred_horizon >= ep.length()) throw DomainError("window target runs past the episode end");
  const std::size_t da = ep.actions.cols();
  num::Tensor out(num::Shape{pred_horizon, da});
  std::copy_n(ep.actions.data().begin() + static_cast<std::ptrdiff_t>((t + 1) * da), pred_horizon * da,
              out.data().begin());
  return out;
}

Batch assemble(std::span<const EpisodeData> episodes, std::span<const WindowRef> windows,
               const model::ModelConfig& cfg, double dropout, num::Rng* rng) {
  if (dropout > 0.0 && rng == nullptr) throw ContractError("modality dropout needs a random stream");
  const std::size_t b = windows.size(), to = cfg.obs_horizon, tp = cfg.pred_horizon, n_mod = cfg.modalities.size();
  Batch batch;
  batch.obs = model::ObservationBatch::zeros(cfg, b);
  batch.targets = num::Tensor(num::Shape{b * tp, cfg.action_dim});
  std::vector<std::uint8_t> keep(n_mod);
  for (std::size_t i = 0; i < b; ++i) {
    const WindowRef& w = windows[i];
    const EpisodeData& ep = episodes[w.episode];
    std::fill(keep.begin(), keep.end(), 1);
    if (dropout > 0.0) {
      std::size_t kept = 0;
      for (auto& k : keep) {
        k = rng->bernoulli(dropout) ? 0 : 1;
        kept += k;
      }
      if (kept == 0) keep[rng->below(n_mod)] = 1;
    }
    for (std::size_t s = 0; s < to; ++s) {
      const std::size_t src = w.t + 1 - to + s, row = i * to + s;
      for (std::size_t m = 0; m < n_mod; ++m) {
        batch.obs.presence.at(row, m) = keep[m];
        if (keep[m]) std::copy_n(ep.streams[m].row(src).begin(), cfg.modalities[m].width, batch.obs.streams[m].row(row).begin());
      }
    }
    const num::Tensor target = target_slice(ep, w.t, tp);
    std::copy(target.data().begin(), target.data().end(),
              batch.targets.data().begin() + static_cast<std::ptrdiff_t>(i * tp * cfg.action_dim));
  }
  return batch;
}

EpisodeData pad_start(const EpisodeData& episode, std::size_t steps) {
  if (episode.length() == 0 || steps == 0) return episode;
  auto pad = [steps](const num::Tensor& t, bool zero) {
    const std::size_t cols = t.cols();
    num::Tensor out(num::Shape{t.rows() + steps, cols});
    for (std::size_t r = 0; r < steps && !zero; ++r) std::copy_n(t.row(0).begin(), cols, out.row(r).begin());
    std::copy(t.data().begin(), t.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(steps * cols));
    return out;
  };
  EpisodeData out;
  for (const auto& s : episode.streams) out.streams.push_back(pad(s, false));
  out.actions = pad(episode.actions, true);
  return out;
}

num::Tensor stack_actions(std::span<const EpisodeData> episodes) {
  std::size_t rows = 0, da = 0;
  for (const auto& ep : episodes) {
    rows += ep.length();
    da = ep.actions.cols();
  }
  num::Tensor out(num::Shape{rows, da});
  std::size_t r = 0;
  for (const auto& ep : episodes)
    for (std::size_t t = 0; t < ep.length(); ++t, ++r) std::copy_n(ep.actions.row(t).begin(), da, out.row(r).begin());
  return out;
}

}  // namespace prism::trainer
