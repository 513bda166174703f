#include "prism/numerics/tape.hpp"

#include "prism/numerics/errors.hpp"

namespace prism::num {

const Tensor& Var::value() const {
  if (!tape_) throw ContractError("use of an unbound Var");
  return tape_->value(id_);
}

bool Var::requires_grad() const { return tape_ && tape_->requires_grad(id_); }

const Tensor& Gradients::of(const Var& leaf) const {
  auto it = grads_.find(leaf.id());
  if (it == grads_.end()) throw ContractError("no gradient materialized for node " + std::to_string(leaf.id()));
  return it->second;
}

Var Tape::push(Node node) {
  if (consumed_) throw ContractError("tape already consumed by backward()");
  if (precision_ == Precision::kFloat32) round_to_float(node.value.data());
  if (!node.value.all_finite()) {
    throw NumericError("non-finite output from op '" + node.op + "' with shape " + shape_string(node.value.shape()));
  }
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::leaf(Tensor value) {
  Node node;
  node.op = "leaf";
  node.requires_grad = value.requires_grad();
  node.is_leaf = true;
  node.value = std::move(value);
  return push(std::move(node));
}

Var Tape::constant(Tensor value) {
  value.set_requires_grad(false);
  return leaf(std::move(value));
}

Var Tape::record(std::string_view op, Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  Node node;
  node.op = std::string(op);
  node.value = std::move(value);
  node.value.set_requires_grad(false);
  for (const Var& in : inputs) {
    if (in.tape_ != this) throw ContractError("op '" + node.op + "' mixes vars from different tapes");
    node.inputs.push_back(in.id_);
    node.requires_grad = node.requires_grad || nodes_[in.id_].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  return push(std::move(node));
}

Gradients Tape::backward(const Var& loss) {
  if (consumed_) throw ContractError("tape already consumed by backward()");
  if (loss.tape_ != this) throw ContractError("loss belongs to a different tape");
  Node& root = nodes_.at(loss.id_);
  if (root.value.size() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " + shape_string(root.value.shape()));
  }
  consumed_ = true;

  Gradients result;
  if (!root.requires_grad) return result;
  root.grad = Tensor(root.value.shape(), 1.0);
  root.has_grad = true;

  for (std::size_t id = loss.id_ + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (!node.has_grad) continue;
    ++backward_visits_;
    if (node.is_leaf) {
      if (node.requires_grad) result.grads_.emplace(id, std::move(node.grad));
      node.has_grad = false;
      continue;
    }
    if (node.backward) {
      BackwardContext ctx;
      ctx.grad_output_ = &node.grad;
      ctx.output_ = &node.value;
      for (std::size_t in : node.inputs) {
        Node& src = nodes_[in];
        ctx.inputs_.push_back(&src.value);
        if (src.requires_grad) {
          if (!src.has_grad) {
            src.grad = Tensor(src.value.shape(), 0.0);
            src.has_grad = true;
          }
          ctx.grad_inputs_.push_back(&src.grad);
        } else {
          ctx.grad_inputs_.push_back(nullptr);
        }
      }
      node.backward(ctx);
    }
    node.grad = Tensor();
    node.has_grad = false;
  }
  return result;
}

}  // namespace prism::num
