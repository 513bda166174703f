#include "prism/inference/rollout.hpp"

#include <cmath>

#include "prism/numerics/errors.hpp"

namespace prism::inference {

const char* status_name(EnvStatus s) {
  switch (s) {
    case EnvStatus::kRunning: return "running";
    case EnvStatus::kSuccess: return "success";
    case EnvStatus::kFailure: return "failure";
  }
  return "unknown";
}

const char* rule_name(SelectionRule r) {
  switch (r) {
    case SelectionRule::kProxy: return "proxy";
    case SelectionRule::kTiebreak: return "tiebreak";
    case SelectionRule::kRandom: return "random";
  }
  return "unknown";
}

SelectionRule parse_rule(const std::string& name) {
  if (name == "proxy") return SelectionRule::kProxy;
  if (name == "tiebreak") return SelectionRule::kTiebreak;
  if (name == "random") return SelectionRule::kRandom;
  throw DomainError("unknown selection rule '" + name + "' (expected proxy, tiebreak or random)");
}

namespace {

double l2(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("vectors of length " + std::to_string(a.size()) + " and " +
                                                 std::to_string(b.size()));
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

}  // namespace

double proxy_score(const num::Tensor& candidate, const SelectionContext& ctx, ProxyMode mode) {
  const auto first = candidate.row(0);
  if (mode == ProxyMode::kInducedState && ctx.induced_state && ctx.reference_state) {
    const auto next = ctx.induced_state(first);
    if (next) return l2(*next, *ctx.reference_state);
  }
  if (ctx.last_action) return l2(first, *ctx.last_action);
  throw RuleUnavailableError("proxy score needs a last action or an induced-state model");
}

std::size_t tiebreak_select(const model::CandidateSet& candidates, std::span<const double> last_action,
                            std::size_t item) {
  std::size_t best = 0;
  double best_d = 0.0;
  for (std::size_t k = 0; k < candidates.candidates; ++k) {
    const double d = l2(candidates.action(item, k, 0), last_action);
    if (k == 0 || d < best_d) {
      best = k;
      best_d = d;
    }
  }
  return best;
}

std::size_t select_candidate(SelectionRule rule, ProxyMode mode, const model::CandidateSet& candidates,
                             const SelectionContext& ctx, num::Rng& rng) {
  const std::vector<double> zero(candidates.action_dim, 0.0);
  const std::span<const double> last = ctx.last_action ? std::span<const double>(*ctx.last_action) : zero;
  switch (rule) {
    case SelectionRule::kRandom: return rng.below(candidates.candidates);
    case SelectionRule::kTiebreak: return tiebreak_select(candidates, last);
    case SelectionRule::kProxy: break;
  }
  std::size_t best = 0;
  double best_score = 0.0;
  try {
    for (std::size_t k = 0; k < candidates.candidates; ++k) {
      const double s = proxy_score(candidates.sequence(0, k), ctx, mode);
      if (k == 0 || s < best_score) {
        best = k;
        best_score = s;
      }
    }
  } catch (const RuleUnavailableError&) {
    return tiebreak_select(candidates, last);
  }
  return best;
}

model::ObservationBatch window_batch(const std::vector<Frame>& history, std::size_t steps,
                                     const model::ModelConfig& cfg, const std::vector<std::uint8_t>& dropped) {
  if (history.empty()) throw ContractError("window_batch needs at least one frame");
  model::ObservationBatch obs = model::ObservationBatch::zeros(cfg, 1);
  const std::size_t have = history.size();
  for (std::size_t s = 0; s < steps; ++s) {
    // Oldest frames first; pad on the left with the first frame we have.
    const std::size_t back = steps - 1 - s;
    const Frame& f = back < have ? history[have - 1 - back] : history.front();
    for (std::size_t m = 0; m < cfg.modalities.size(); ++m) {
      const bool off = m < dropped.size() && dropped[m] != 0;
      obs.presence.at(s, m) = off ? 0.0 : 1.0;
      if (off) continue;
      if (f.streams[m].size() != cfg.modalities[m].width)
        throw DimensionError("frame stream '" + cfg.modalities[m].name + "' has width " +
                             std::to_string(f.streams[m].size()));
      std::copy(f.streams[m].begin(), f.streams[m].end(), obs.streams[m].row(s).begin());
    }
  }
  return obs;
}

RolloutResult rollout(Environment& env, const model::Policy& policy, const RolloutConfig& cfg) {
  const model::ModelConfig& mc = policy.config();
  if (cfg.candidates == 0) throw DomainError("rollout needs K >= 1");
  if (cfg.chunk == 0 || cfg.chunk > mc.pred_horizon) {
    throw DomainError("chunk length T_a=" + std::to_string(cfg.chunk) + " must lie in [1, T_p=" +
                      std::to_string(mc.pred_horizon) + "]");
  }
  num::Rng latent_rng = num::Rng::substream(cfg.seed, "latents");
  num::Rng select_rng = num::Rng::substream(cfg.seed, "selection");
  const std::size_t da = mc.action_dim, dz = mc.resolved_latent_dim();

  RolloutResult out;
  std::vector<Frame> history{env.observe()};
  std::vector<double> last_action(da, 0.0);
  std::vector<std::vector<double>> executed;
  out.states.push_back(env.state());
  const std::size_t calls_before = policy.generator_calls();

  while (env.status() == EnvStatus::kRunning) {
    const model::ObservationBatch obs = window_batch(history, mc.obs_horizon, mc, cfg.dropped);
    num::Tensor z(num::Shape{cfg.candidates, dz});
    if (!cfg.zero_latents) latent_rng.fill_normal(z.data());
    const model::CandidateSet cands = policy.sample(obs, cfg.candidates, z, cfg.precision);

    SelectionContext ctx;
    ctx.last_action = last_action;
    ctx.reference_state = env.coasting_state();
    ctx.induced_state = [&env](std::span<const double> a) { return env.induced_state(a); };
    const std::size_t pick = select_candidate(cfg.rule, cfg.proxy_mode, cands, ctx, select_rng);

    ReplanRecord rec;
    rec.t = env.steps_taken();
    rec.selected = pick;
    rec.state = env.state();
    for (std::size_t m = 0; m < mc.modalities.size(); ++m) {
      const auto row = obs.streams[m].row(mc.obs_horizon - 1);
      rec.observed.emplace_back(row.begin(), row.end());
    }
    rec.first_actions = num::Tensor(num::Shape{cfg.candidates, da});
    for (std::size_t k = 0; k < cfg.candidates; ++k)
      std::copy_n(cands.action(0, k, 0).begin(), da, rec.first_actions.row(k).begin());
    rec.selected_sequence = cands.sequence(0, pick);

    std::vector<std::vector<double>> chunk;
    for (std::size_t s = 0; s < cfg.chunk && env.status() == EnvStatus::kRunning; ++s) {
      const auto a = rec.selected_sequence.row(s);
      try {
        env.step(a);
      } catch (const std::exception& e) {
        out.status = EnvStatus::kFailure;
        out.cause = std::string("env fault: ") + e.what();
        break;
      }
      chunk.emplace_back(a.begin(), a.end());
      last_action.assign(a.begin(), a.end());
      history.push_back(env.observe());
      if (history.size() > mc.obs_horizon) history.erase(history.begin());
      out.states.push_back(env.state());
    }
    rec.executed = num::Tensor(num::Shape{chunk.size(), da});
    for (std::size_t s = 0; s < chunk.size(); ++s) std::copy(chunk[s].begin(), chunk[s].end(), rec.executed.row(s).begin());
    executed.insert(executed.end(), chunk.begin(), chunk.end());
    out.records.push_back(std::move(rec));
    if (!out.cause.empty()) break;
  }
  if (out.cause.empty()) {
    out.status = env.status();
    out.cause = env.failure_cause();
  }
  out.executed = num::Tensor(num::Shape{executed.size(), da});
  for (std::size_t t = 0; t < executed.size(); ++t) std::copy(executed[t].begin(), executed[t].end(), out.executed.row(t).begin());
  out.generator_calls = policy.generator_calls() - calls_before;
  return out;
}

}  // namespace prism::inference
