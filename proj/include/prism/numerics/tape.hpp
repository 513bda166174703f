#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "prism/numerics/tensor.hpp"

namespace prism::num {

enum class Precision { kFloat64, kFloat32 };

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// What a backward rule sees: the upstream gradient, its own output and inputs,
/// and accumulators for the inputs that need gradients.
class BackwardContext {
 public:
  const Tensor& grad_output() const { return *grad_output_; }
  const Tensor& output() const { return *output_; }
  const Tensor& input(std::size_t i) const { return *inputs_[i]; }
  /// Accumulator for input i, or nullptr when that input needs no gradient.
  /// Rules must add into it, never assign: the same node may appear twice.
  Tensor* grad_input(std::size_t i) { return grad_inputs_[i]; }

 private:
  friend class Tape;
  const Tensor* grad_output_ = nullptr;
  const Tensor* output_ = nullptr;
  std::vector<const Tensor*> inputs_;
  std::vector<Tensor*> grad_inputs_;
};

using BackwardFn = std::function<void(BackwardContext&)>;

/// dLoss/dLeaf for every leaf that was registered with requires_grad.
class Gradients {
 public:
  bool has(const Var& leaf) const { return grads_.count(leaf.id()) != 0; }
  /// Throws ContractError for leaves without a materialized gradient.
  const Tensor& of(const Var& leaf) const;
  std::size_t count() const { return grads_.size(); }

 private:
  friend class Tape;
  std::unordered_map<std::size_t, Tensor> grads_;
};

/// Single-use record of differentiable operations.
///
/// Values are appended in execution order; backward() walks them in reverse,
/// visiting each node at most once, then marks the tape consumed. A tape is
/// confined to one thread; independent tapes share nothing.
class Tape {
 public:
  explicit Tape(Precision precision = Precision::kFloat64) : precision_(precision) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Input value; gradients are tracked iff value.requires_grad().
  Var leaf(Tensor value);
  Var constant(Tensor value);

  /// Append an operation result. Throws NumericError naming `op` if any
  /// element is non-finite. In float32 mode the value is rounded first.
  Var record(std::string_view op, Tensor value, std::vector<Var> inputs, BackwardFn backward);

  Gradients backward(const Var& loss);

  Precision precision() const { return precision_; }
  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }
  std::size_t backward_visits() const { return backward_visits_; }

  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }

 private:
  struct Node {
    std::string op;
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    bool is_leaf = false;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
  };

  Var push(Node node);

  Precision precision_;
  std::vector<Node> nodes_;
  bool consumed_ = false;
  std::size_t backward_visits_ = 0;
};

}  // namespace prism::num
