#include "prism/numerics/params.hpp"

#include "prism/numerics/errors.hpp"

namespace prism::num {

Tensor& ParameterSet::add(std::string name, Tensor value) {
  if (contains(name)) throw ContractError("duplicate parameter '" + name + "'");
  index_.emplace(name, entries_.size());
  entries_.push_back({std::move(name), std::move(value)});
  return entries_.back().value;
}

bool ParameterSet::contains(std::string_view name) const { return index_.count(std::string(name)) != 0; }

Tensor& ParameterSet::get(std::string_view name) {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw ContractError("unknown parameter '" + std::string(name) + "'");
  return entries_[it->second].value;
}

const Tensor& ParameterSet::get(std::string_view name) const {
  return const_cast<ParameterSet*>(this)->get(name);
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const Entry& e : entries_) n += e.value.size();
  return n;
}

bool operator==(const ParameterSet& a, const ParameterSet& b) {
  if (a.entries_.size() != b.entries_.size()) return false;
  for (std::size_t i = 0; i < a.entries_.size(); ++i) {
    if (a.entries_[i].name != b.entries_[i].name || !(a.entries_[i].value == b.entries_[i].value)) return false;
  }
  return true;
}

BoundParams::BoundParams(Tape& tape, const ParameterSet& params, bool requires_grad) : params_(&params) {
  vars_.reserve(params.size());
  for (const auto& e : params.entries()) {
    Tensor value = e.value;
    value.set_requires_grad(requires_grad);
    index_.emplace(e.name, vars_.size());
    vars_.push_back(tape.leaf(std::move(value)));
  }
}

const Var& BoundParams::operator[](std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw ContractError("unknown parameter '" + std::string(name) + "'");
  return vars_[it->second];
}

std::vector<Tensor> BoundParams::collect(const Gradients& grads) const {
  std::vector<Tensor> out;
  out.reserve(vars_.size());
  for (std::size_t i = 0; i < vars_.size(); ++i) {
    if (grads.has(vars_[i])) {
      out.push_back(grads.of(vars_[i]));
    } else {
      out.emplace_back(params_->entries()[i].value.shape(), 0.0);
    }
  }
  return out;
}

}  // namespace prism::num
