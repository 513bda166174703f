#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "prism/linattn/favor.hpp"
#include "prism/numerics/params.hpp"
#include "prism/numerics/rng.hpp"

namespace prism::linattn {

/// Per-head feature maps of one transformer block.
struct BlockFeatures {
  std::vector<FeatureMap> self_attention;
  std::vector<FeatureMap> cross_attention;
};

/// Draw per-head feature maps with seeds derived from (root_seed, tag).
BlockFeatures draw_block_features(std::size_t width, const AttentionConfig& cfg, std::uint64_t root_seed,
                                  const std::string& tag);

/// Register one block's parameters under `prefix` (e.g. "gen.block0.").
/// Output projections of both attentions and of the feedforward are zero, so a
/// fresh block is the identity on its queries.
void init_block_params(num::ParameterSet& params, const std::string& prefix, std::size_t width,
                       std::size_t ff_hidden, num::Rng& rng);

/// Closed-form scalar count of init_block_params: 8d^2 + 4df + 14d + 2f.
std::size_t block_param_count(std::size_t width, std::size_t ff_hidden);

/// One pre-norm decoder block:
///   x += SelfAttn(LN(x));  x += FF(LN(x))
///   x += CrossAttn(LN(x), LN(context));  x += FF(LN(x))
/// Both attentions are unmasked FAVOR+; `self_layout` groups query rows into
/// sequences, `cross_layout` maps query sequences onto context sequences.
num::Var attention_block(const num::Var& queries, const num::Var& context, const SequenceLayout& self_layout,
                         const SequenceLayout& cross_layout, const num::BoundParams& params, const std::string& prefix,
                         const BlockFeatures& features, const AttentionConfig& cfg);

/// Uniform(-b, b) with b = gain * sqrt(3 / fan_in).
num::Tensor kaiming_uniform(std::size_t fan_in, std::size_t fan_out, num::Rng& rng, double gain = 1.0);

}  // namespace prism::linattn
