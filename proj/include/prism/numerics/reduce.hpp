#pragma once

#include <cstddef>
#include <span>

#include "prism/numerics/tensor.hpp"

namespace prism::num {

Tensor reduce_sum(const Tensor& t, std::size_t axis);
Tensor reduce_mean(const Tensor& t, std::size_t axis);

struct MinWithIndex {
  double value;
  std::size_t index;
};

/// Smallest element and the first index holding it.
MinWithIndex min_with_index(std::span<const double> values);

struct MinWithIndices {
  Tensor values;
  std::vector<std::size_t> indices;
};

/// Per-lane minimum along `axis` with first-index tie breaking.
MinWithIndices min_with_index(const Tensor& t, std::size_t axis);

/// Maximum of each row of the matrix view; shape (rows,).
Tensor max_per_row(const Tensor& t);

/// q-quantile with linear interpolation between order statistics
/// (position q*(n-1) in the sorted sample).
double quantile(std::span<const double> values, double q);
/// Quantile along one axis; the axis is removed from the shape.
Tensor quantile(const Tensor& t, double q, std::size_t axis);

}  // namespace prism::num
