#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "prism/numerics/tape.hpp"

namespace prism::num {

/// Ordered collection of named trainable tensors.
class ParameterSet {
 public:
  struct Entry {
    std::string name;
    Tensor value;
  };

  Tensor& add(std::string name, Tensor value);
  bool contains(std::string_view name) const;
  Tensor& get(std::string_view name);
  const Tensor& get(std::string_view name) const;

  std::size_t size() const { return entries_.size(); }
  /// Total number of scalar parameters.
  std::size_t scalar_count() const;

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }

  friend bool operator==(const ParameterSet& a, const ParameterSet& b);

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// A ParameterSet registered as leaves on one tape.
class BoundParams {
 public:
  BoundParams(Tape& tape, const ParameterSet& params, bool requires_grad = true);

  const Var& operator[](std::string_view name) const;
  /// Gradients in ParameterSet order; parameters the loss never touched get zeros.
  std::vector<Tensor> collect(const Gradients& grads) const;

 private:
  const ParameterSet* params_;
  std::vector<Var> vars_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace prism::num
