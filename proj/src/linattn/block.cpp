#include "prism/linattn/block.hpp"

#include <cmath>

#include "prism/numerics/errors.hpp"
#include "prism/numerics/ops.hpp"

namespace prism::linattn {

num::Tensor kaiming_uniform(std::size_t fan_in, std::size_t fan_out, num::Rng& rng, double gain) {
  num::Tensor w(num::Shape{fan_in, fan_out});
  const double bound = gain * std::sqrt(3.0 / static_cast<double>(fan_in));
  rng.fill_uniform(w.data(), -bound, bound);
  return w;
}

BlockFeatures draw_block_features(std::size_t width, const AttentionConfig& cfg, std::uint64_t root_seed,
                                  const std::string& tag) {
  cfg.validate(width);
  const std::size_t dh = width / cfg.heads;
  BlockFeatures f;
  for (std::size_t h = 0; h < cfg.heads; ++h) {
    const std::string head = "/head" + std::to_string(h);
    f.self_attention.push_back(FeatureMap::draw(dh, cfg.features,
                                                num::Rng::derive_seed(root_seed, tag + "/self" + head),
                                                cfg.scale_logits));
    f.cross_attention.push_back(FeatureMap::draw(dh, cfg.features,
                                                 num::Rng::derive_seed(root_seed, tag + "/cross" + head),
                                                 cfg.scale_logits));
  }
  return f;
}

namespace {

void add_norm(num::ParameterSet& params, const std::string& name, std::size_t width) {
  params.add(name + ".gamma", num::Tensor(num::Shape{width}, 1.0));
  params.add(name + ".beta", num::Tensor(num::Shape{width}, 0.0));
}

void add_feedforward(num::ParameterSet& params, const std::string& name, std::size_t width, std::size_t hidden,
                     num::Rng& rng) {
  params.add(name + ".w1", kaiming_uniform(width, hidden, rng, std::sqrt(2.0)));
  params.add(name + ".b1", num::Tensor(num::Shape{hidden}, 0.0));
  params.add(name + ".w2", num::Tensor(num::Shape{hidden, width}, 0.0));
  params.add(name + ".b2", num::Tensor(num::Shape{width}, 0.0));
}

void add_attention(num::ParameterSet& params, const std::string& name, std::size_t width, num::Rng& rng) {
  params.add(name + ".wq", kaiming_uniform(width, width, rng));
  params.add(name + ".wk", kaiming_uniform(width, width, rng));
  params.add(name + ".wv", kaiming_uniform(width, width, rng));
  params.add(name + ".wo", num::Tensor(num::Shape{width, width}, 0.0));
  params.add(name + ".bo", num::Tensor(num::Shape{width}, 0.0));
}

num::Var norm(const num::Var& x, const num::BoundParams& p, const std::string& name) {
  return num::layer_norm(x, p[name + ".gamma"], p[name + ".beta"]);
}

num::Var feedforward(const num::Var& x, const num::BoundParams& p, const std::string& name) {
  const num::Var h = norm(x, p, name + ".ln");
  const num::Var hidden = num::gelu(num::linear(h, p[name + ".w1"], p[name + ".b1"]));
  return num::add(x, num::linear(hidden, p[name + ".w2"], p[name + ".b2"]));
}

}  // namespace

void init_block_params(num::ParameterSet& params, const std::string& prefix, std::size_t width,
                       std::size_t ff_hidden, num::Rng& rng) {
  add_norm(params, prefix + "ln_self", width);
  add_attention(params, prefix + "self", width, rng);
  add_norm(params, prefix + "ff_self.ln", width);
  add_feedforward(params, prefix + "ff_self", width, ff_hidden, rng);
  add_norm(params, prefix + "ln_cross", width);
  add_norm(params, prefix + "ln_context", width);
  add_attention(params, prefix + "cross", width, rng);
  add_norm(params, prefix + "ff_cross.ln", width);
  add_feedforward(params, prefix + "ff_cross", width, ff_hidden, rng);
}

std::size_t block_param_count(std::size_t width, std::size_t ff_hidden) {
  const std::size_t d = width, f = ff_hidden;
  return 8 * d * d + 4 * d * f + 14 * d + 2 * f;
}

num::Var attention_block(const num::Var& queries, const num::Var& context, const SequenceLayout& self_layout,
                         const SequenceLayout& cross_layout, const num::BoundParams& p, const std::string& prefix,
                         const BlockFeatures& features, const AttentionConfig& cfg) {
  const std::size_t width = queries.value().cols();
  if (context.value().cols() != width) {
    throw DimensionError("attention_block: query width " + num::shape_string(queries.shape()) +
                         " vs context width " + num::shape_string(context.shape()));
  }
  cfg.validate(width);

  num::Var x = queries;
  {
    const num::Var h = norm(x, p, prefix + "ln_self");
    const std::string a = prefix + "self";
    const num::Var att = multihead_linear_attention(num::matmul(h, p[a + ".wq"]), num::matmul(h, p[a + ".wk"]),
                                                    num::matmul(h, p[a + ".wv"]), features.self_attention,
                                                    self_layout, cfg.denom_floor, cfg.key_stabilization);
    x = num::add(x, num::linear(att, p[a + ".wo"], p[a + ".bo"]));
  }
  x = feedforward(x, p, prefix + "ff_self");
  {
    const num::Var h = norm(x, p, prefix + "ln_cross");
    const num::Var c = norm(context, p, prefix + "ln_context");
    const std::string a = prefix + "cross";
    const num::Var att = multihead_linear_attention(num::matmul(h, p[a + ".wq"]), num::matmul(c, p[a + ".wk"]),
                                                    num::matmul(c, p[a + ".wv"]), features.cross_attention,
                                                    cross_layout, cfg.denom_floor, cfg.key_stabilization);
    x = num::add(x, num::linear(att, p[a + ".wo"], p[a + ".bo"]));
  }
  return feedforward(x, p, prefix + "ff_cross");
}

}  // namespace prism::linattn
