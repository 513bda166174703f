#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

#include "prism/numerics/tape.hpp"
#include "prism/numerics/tensor.hpp"

namespace prism::linattn {

/// How key features are shifted before exponentiation.
///
/// kUnbiased subtracts the positive-random-feature norm term ||k||^2/2 and one
/// shared maximum per key sequence, so every shift cancels between numerator and
/// denominator and the kernel estimate stays unbiased. kRowMax shifts each key
/// row by its own maximum, the literal stabilization; it rescales each key's
/// weight by a row-dependent factor and is therefore biased.
enum class KeyStabilization { kUnbiased, kRowMax };

/// Fixed Gaussian projection W (head_dim x features) shared by queries and keys of one head.
class FeatureMap {
 public:
  /// Entries are drawn N(0, 1/sqrt(head_dim)) when scale_logits is set (which
  /// matches softmax(QK^T/sqrt(d_h))), otherwise N(0, 1).
  static FeatureMap draw(std::size_t head_dim, std::size_t features, std::uint64_t seed, bool scale_logits = true);
  /// Build from explicit weights with the given per-entry variance.
  static FeatureMap from_weights(num::Tensor weights, double weight_variance);

  const num::Tensor& weights() const { return weights_; }
  std::size_t head_dim() const { return weights_.dim(0); }
  std::size_t features() const { return weights_.dim(1); }
  std::uint64_t seed() const { return seed_; }
  bool scale_logits() const { return scale_logits_; }
  double weight_variance() const { return variance_; }

  /// Redraw W from a new seed; only called explicitly (feature redraw studies).
  void reseed(std::uint64_t seed);

 private:
  num::Tensor weights_;
  std::uint64_t seed_ = 0;
  bool scale_logits_ = true;
  double variance_ = 1.0;
};

struct AttentionConfig {
  std::size_t heads = 8;
  std::size_t features = 512;
  double denom_floor = 1e-6;
  bool scale_logits = true;
  KeyStabilization key_stabilization = KeyStabilization::kUnbiased;

  /// Throws DomainError unless width % heads == 0, features >= 1 and denom_floor > 0.
  void validate(std::size_t width) const;
};

/// exp(XW - rowmax(XW)) / sqrt(m). Every entry lies in (0, 1/sqrt(m)] and the
/// row maximum maps to exactly 1/sqrt(m).
num::Tensor stabilized_features(const num::Tensor& x, const FeatureMap& fm);

struct AuxMemory {
  std::size_t peak_bytes = 0;
};

/// Single-head FAVOR+ attention for one query and one key/value sequence.
///
/// Keys are streamed once into the m x d_v summary phi(K)^T V and the m-vector
/// phi(K)^T 1 (rescaled online when the running key maximum grows), then each
/// query row is resolved against the summary. Auxiliary storage is O(m * d_v)
/// and never depends on the sequence lengths; `aux` receives its size.
num::Tensor linear_attention(const num::Tensor& q, const num::Tensor& k, const num::Tensor& v, const FeatureMap& fm,
                             double denom_floor = 1e-6,
                             KeyStabilization stabilization = KeyStabilization::kUnbiased,
                             AuxMemory* aux = nullptr);

/// softmax(QK^T / sqrt(d_h)) V with rowmax-stabilized softmax (no scaling when
/// scale_logits is false). Materializes the full L_q x L_k weight matrix.
num::Tensor exact_attention(const num::Tensor& q, const num::Tensor& k, const num::Tensor& v,
                            bool scale_logits = true);

/// Row grouping for batched attention. Query rows form consecutive sequences of
/// query_len; key/value rows form sequences of key_len; `queries_per_key`
/// consecutive query sequences attend to the same key sequence (K candidates
/// sharing one context).
struct SequenceLayout {
  std::size_t query_len = 1;
  std::size_t key_len = 1;
  std::size_t queries_per_key = 1;
};

/// Differentiable multi-head FAVOR+ attention over many sequences. q, k, v are
/// row matrices of width heads.size() * head_dim; head h reads columns
/// [h*d_h, (h+1)*d_h). Gradients flow to q, k and v; feature maps are constants.
num::Var multihead_linear_attention(const num::Var& q, const num::Var& k, const num::Var& v,
                                    std::span<const FeatureMap> heads, const SequenceLayout& layout,
                                    double denom_floor = 1e-6,
                                    KeyStabilization stabilization = KeyStabilization::kUnbiased);

}  // namespace prism::linattn
