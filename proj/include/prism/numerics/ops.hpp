#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "prism/numerics/tape.hpp"

namespace prism::num {

// Matrix product. `a` is viewed as rows() x cols(); `b` must be rank 2 with
// b.dim(0) == a.cols(). The result keeps a's leading dimensions.
Var matmul(const Var& a, const Var& b);
/// matmul(x, w) + bias, the bias tiled over rows.
Var linear(const Var& x, const Var& w, const Var& bias);

// Binary elementwise ops. `b` may tile `a`: a scalar, or a tensor whose shape
// (ignoring leading 1s) is a suffix of a's shape. The result has a's shape.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);

Var neg(const Var& a);
Var scale(const Var& a, double factor);
Var add_scalar(const Var& a, double offset);
Var exp(const Var& a);
Var log(const Var& a);
Var sqrt(const Var& a);
Var square(const Var& a);
Var tanh(const Var& a);
Var gelu(const Var& a);
/// max(a, lo); the gradient is zero wherever a <= lo.
Var clamp_min(const Var& a, double lo);

Var sum(const Var& a);
Var mean(const Var& a);
/// Sum over one axis; the axis is removed from the shape.
Var sum(const Var& a, std::size_t axis);
Var mean(const Var& a, std::size_t axis);
/// log(sum(exp(row))) for every row of the matrix view; shape (rows,).
Var logsumexp_rows(const Var& a);

Var reshape(const Var& a, Shape shape);
/// Rows of the matrix view, in the given order (repeats allowed). Shape (n, cols).
Var gather_rows(const Var& a, std::span<const std::size_t> rows);
/// Flat elements, in the given order. Shape (n,).
Var gather(const Var& a, std::span<const std::size_t> indices);
/// Column-wise concatenation of matrix views with equal row counts.
Var concat_cols(const std::vector<Var>& parts);
Var slice_cols(const Var& a, std::size_t begin, std::size_t end);

/// Normalize each row to zero mean and unit variance, then scale and shift.
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);

}  // namespace prism::num
