#include "prism/model/policy.hpp"

#include <cmath>

#include "prism/numerics/errors.hpp"
#include "prism/numerics/ops.hpp"
#include "prism/numerics/rng.hpp"

namespace prism::model {

namespace {

constexpr double kEmbeddingStd = 0.02;

std::string block_prefix(std::size_t l) { return "gen.block" + std::to_string(l) + "."; }

num::Tensor normal_init(num::Shape shape, num::Rng& rng, double stddev) {
  num::Tensor t(std::move(shape));
  rng.fill_normal(t.data(), 0.0, stddev);
  return t;
}

// Adds a (steps, d) table to every window of a (batch*steps, d) tensor.
num::Var add_per_step(const num::Var& x, const num::Var& table, std::size_t batch) {
  const num::Shape flat = x.shape();
  const num::Var grouped = num::reshape(x, {batch, table.shape()[0], table.shape()[1]});
  return num::reshape(num::add(grouped, table), flat);
}

}  // namespace

std::size_t ModelConfig::modality_index(const std::string& name) const {
  for (std::size_t m = 0; m < modalities.size(); ++m)
    if (modalities[m].name == name) return m;
  throw DomainError("unknown modality '" + name + "'");
}

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* field) {
    if (v == 0) throw DomainError(std::string("model.") + field + " must be positive");
  };
  if (modalities.empty()) throw DomainError("model.modalities must name at least one stream");
  for (const auto& m : modalities) {
    if (m.name.empty() || m.width == 0) throw DomainError("model.modalities entry '" + m.name + "' needs a width");
  }
  positive(obs_horizon, "T_o");
  positive(pred_horizon, "T_p");
  positive(action_dim, "action_dim");
  positive(width, "width");
  positive(layers, "layers");
  positive(modality_hidden, "modality_hidden");
  positive(modality_embed, "modality_embed");
  positive(fusion_hidden, "fusion_hidden");
  attention.validate(width);
}

ObservationBatch ObservationBatch::zeros(const ModelConfig& cfg, std::size_t batch) {
  ObservationBatch obs;
  obs.batch = batch;
  obs.steps = cfg.obs_horizon;
  for (const auto& m : cfg.modalities) obs.streams.emplace_back(num::Shape{batch * cfg.obs_horizon, m.width});
  obs.presence = num::Tensor(num::Shape{batch * cfg.obs_horizon, cfg.modalities.size()}, 1.0);
  return obs;
}

num::Tensor CandidateSet::sequence(std::size_t item, std::size_t k) const {
  num::Tensor out(num::Shape{horizon, action_dim});
  const std::size_t row0 = (item * candidates + k) * horizon;
  std::copy_n(actions.data().begin() + static_cast<std::ptrdiff_t>(row0 * action_dim), horizon * action_dim,
              out.data().begin());
  return out;
}

std::span<const double> CandidateSet::action(std::size_t item, std::size_t k, std::size_t t) const {
  return actions.row((item * candidates + k) * horizon + t);
}

Policy::Policy(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  num::Rng rng = num::Rng::substream(seed, "init");
  const std::size_t d = cfg_.width;

  std::size_t fused = 0;
  for (const auto& m : cfg_.modalities) {
    // Bias-free so that an all-zero stream embeds to exactly zero, the same as
    // a masked-off one.
    const std::string name = "enc." + m.name;
    params_.add(name + ".w1", linattn::kaiming_uniform(m.width, cfg_.modality_hidden, rng, std::sqrt(2.0)));
    params_.add(name + ".w2", linattn::kaiming_uniform(cfg_.modality_hidden, cfg_.modality_embed, rng));
    fused += cfg_.modality_embed;
  }
  params_.add("fuse.w1", linattn::kaiming_uniform(fused, cfg_.fusion_hidden, rng, std::sqrt(2.0)));
  params_.add("fuse.b1", num::Tensor(num::Shape{cfg_.fusion_hidden}));
  params_.add("fuse.w2", linattn::kaiming_uniform(cfg_.fusion_hidden, d, rng));
  params_.add("fuse.b2", num::Tensor(num::Shape{d}));
  params_.add("fuse.pos", normal_init({cfg_.obs_horizon, d}, rng, kEmbeddingStd));

  params_.add("gen.queries", normal_init({cfg_.pred_horizon, d}, rng, kEmbeddingStd));
  params_.add("gen.pos", normal_init({cfg_.pred_horizon, d}, rng, kEmbeddingStd));
  params_.add("gen.latent.w", linattn::kaiming_uniform(cfg_.resolved_latent_dim(), d, rng));
  params_.add("gen.latent.b", num::Tensor(num::Shape{d}));
  for (std::size_t l = 0; l < cfg_.layers; ++l)
    linattn::init_block_params(params_, block_prefix(l), d, cfg_.resolved_ff_hidden(), rng);
  params_.add("gen.ln_out.gamma", num::Tensor(num::Shape{d}, 1.0));
  params_.add("gen.ln_out.beta", num::Tensor(num::Shape{d}));
  params_.add("gen.head.w", linattn::kaiming_uniform(d, cfg_.action_dim, rng));
  params_.add("gen.head.b", num::Tensor(num::Shape{cfg_.action_dim}));

  redraw_features(num::Rng::derive_seed(seed, "features"));
}

void Policy::redraw_features(std::uint64_t seed) {
  feature_seed_ = seed;
  features_.clear();
  for (std::size_t l = 0; l < cfg_.layers; ++l)
    features_.push_back(linattn::draw_block_features(cfg_.width, cfg_.attention, seed, "block" + std::to_string(l)));
}

num::Var Policy::encode(num::Tape& tape, const num::BoundParams& p, const ObservationBatch& obs) const {
  const std::size_t n_mod = cfg_.modalities.size();
  if (obs.streams.size() != n_mod) {
    throw DimensionError("observation has " + std::to_string(obs.streams.size()) + " streams, model expects " +
                         std::to_string(n_mod));
  }
  if (obs.steps != cfg_.obs_horizon) {
    throw DimensionError("observation window of " + std::to_string(obs.steps) + " steps, model expects T_o=" +
                         std::to_string(cfg_.obs_horizon));
  }
  const std::size_t rows = obs.rows();
  if (obs.presence.shape() != num::Shape{rows, n_mod}) {
    throw DimensionError("presence mask " + num::shape_string(obs.presence.shape()) + " for " +
                         std::to_string(rows) + " rows and " + std::to_string(n_mod) + " modalities");
  }
  for (std::size_t r = 0; r < rows; ++r) {
    bool any = false;
    for (std::size_t m = 0; m < n_mod; ++m) any = any || obs.presence.at(r, m) != 0.0;
    if (!any) {
      throw DegenerateInputError("no modality present at timestep " + std::to_string(r % obs.steps) +
                                 " of window " + std::to_string(r / obs.steps));
    }
  }
  ++encoder_calls_;

  std::vector<num::Var> parts;
  for (std::size_t m = 0; m < n_mod; ++m) {
    const auto& spec = cfg_.modalities[m];
    if (obs.streams[m].shape() != num::Shape{rows, spec.width}) {
      throw DimensionError("stream '" + spec.name + "' has shape " + num::shape_string(obs.streams[m].shape()) +
                           ", expected " + num::shape_string({rows, spec.width}));
    }
    const std::string name = "enc." + spec.name;
    const num::Var h = num::gelu(num::matmul(tape.constant(obs.streams[m]), p[name + ".w1"]));
    const num::Var e = num::matmul(h, p[name + ".w2"]);
    num::Tensor gate(num::Shape{rows, cfg_.modality_embed});
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cfg_.modality_embed; ++c) gate.at(r, c) = obs.presence.at(r, m) != 0.0 ? 1.0 : 0.0;
    parts.push_back(num::mul(e, tape.constant(std::move(gate))));
  }
  const num::Var fused = parts.size() == 1 ? parts.front() : num::concat_cols(parts);
  const num::Var hidden = num::gelu(num::linear(fused, p["fuse.w1"], p["fuse.b1"]));
  const num::Var tokens = num::linear(hidden, p["fuse.w2"], p["fuse.b2"]);
  return add_per_step(tokens, p["fuse.pos"], obs.batch);
}

num::Var Policy::generate(num::Tape& tape, const num::BoundParams& p, const num::Var& context, std::size_t batch,
                          std::size_t candidates, const num::Tensor& latents) const {
  const std::size_t d = cfg_.width, tp = cfg_.pred_horizon, to = cfg_.obs_horizon;
  if (candidates == 0) throw DomainError("generate needs K >= 1");
  if (context.value().cols() != d) {
    throw DimensionError("context width " + num::shape_string(context.shape()) + " vs model width " +
                         std::to_string(d));
  }
  if (context.value().rows() != batch * to) {
    throw DimensionError("context " + num::shape_string(context.shape()) + " does not hold " +
                         std::to_string(batch) + " windows of T_o=" + std::to_string(to));
  }
  const std::size_t sequences = batch * candidates;
  if (latents.shape() != num::Shape{sequences, cfg_.resolved_latent_dim()}) {
    throw DimensionError("latents " + num::shape_string(latents.shape()) + ", expected " +
                         num::shape_string({sequences, cfg_.resolved_latent_dim()}));
  }
  ++generator_calls_;

  const num::Var base = num::add(p["gen.queries"], p["gen.pos"]);
  const num::Var projected = num::linear(tape.constant(latents), p["gen.latent.w"], p["gen.latent.b"]);
  std::vector<std::size_t> owner(sequences * tp);
  for (std::size_t r = 0; r < owner.size(); ++r) owner[r] = r / tp;
  num::Var x = add_per_step(num::gather_rows(projected, owner), base, sequences);

  const linattn::SequenceLayout self_layout{tp, tp, 1};
  const linattn::SequenceLayout cross_layout{tp, to, candidates};
  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    x = linattn::attention_block(x, context, self_layout, cross_layout, p, block_prefix(l), features_[l],
                                 cfg_.attention);
  }
  x = num::layer_norm(x, p["gen.ln_out.gamma"], p["gen.ln_out.beta"]);
  return num::tanh(num::linear(x, p["gen.head.w"], p["gen.head.b"]));
}

CandidateSet Policy::sample(const ObservationBatch& obs, std::size_t candidates, const num::Tensor& latents,
                            num::Precision precision) const {
  num::Tape tape(precision);
  num::BoundParams p(tape, params_, false);
  const num::Var context = encode(tape, p, obs);
  const num::Var actions = generate(tape, p, context, obs.batch, candidates, latents);
  CandidateSet out;
  out.batch = obs.batch;
  out.candidates = candidates;
  out.horizon = cfg_.pred_horizon;
  out.action_dim = cfg_.action_dim;
  out.actions = actions.value();
  out.latents = latents;
  return out;
}

std::size_t count_params(const ModelConfig& cfg) {
  const std::size_t d = cfg.width;
  std::size_t total = 0;
  for (const auto& m : cfg.modalities) total += m.width * cfg.modality_hidden + cfg.modality_hidden * cfg.modality_embed;
  const std::size_t fused = cfg.modalities.size() * cfg.modality_embed;
  total += linear_param_count(fused, cfg.fusion_hidden) + linear_param_count(cfg.fusion_hidden, d);
  total += cfg.obs_horizon * d;
  total += 2 * cfg.pred_horizon * d;
  total += linear_param_count(cfg.resolved_latent_dim(), d);
  total += cfg.layers * linattn::block_param_count(d, cfg.resolved_ff_hidden());
  total += 2 * d;
  total += linear_param_count(d, cfg.action_dim);
  return total;
}

}  // namespace prism::model
