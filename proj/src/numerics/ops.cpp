#include "prism/numerics/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <string>

#include "prism/numerics/errors.hpp"

namespace prism::num {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

ConstMatMap as_matrix(const Tensor& t, std::size_t rows, std::size_t cols) {
  return ConstMatMap(t.data().data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
MatMap as_matrix(Tensor& t, std::size_t rows, std::size_t cols) {
  return MatMap(t.data().data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

Tape& tape_of(const Var& a) {
  if (!a.valid()) throw ContractError("operation on an unbound Var");
  return a.tape();
}

bool tiles(const Shape& a, const Shape& b) {
  std::size_t skip = 0;
  while (skip < b.size() && b[skip] == 1) ++skip;
  const std::size_t n = b.size() - skip;
  if (n > a.size()) return false;
  return std::equal(b.begin() + static_cast<std::ptrdiff_t>(skip), b.end(),
                    a.end() - static_cast<std::ptrdiff_t>(n));
}

void require_tiling(const char* op, const Tensor& a, const Tensor& b) {
  if (!tiles(a.shape(), b.shape())) {
    throw DimensionError(std::string(op) + ": shape " + shape_string(b.shape()) + " does not broadcast to " +
                         shape_string(a.shape()));
  }
}

// Elementwise binary op with b tiled over a. `fwd(x, y)`; `dfa/dfb(x, y, out)`.
template <typename Fwd, typename Da, typename Db>
Var binary(const char* op, const Var& a, const Var& b, Fwd fwd, Da dfa, Db dfb) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_tiling(op, av, bv);
  Tensor out(av.shape());
  const std::size_t nb = bv.size();
  for (std::size_t base = 0; base < av.size(); base += nb) {
    for (std::size_t j = 0; j < nb; ++j) out[base + j] = fwd(av[base + j], bv[j]);
  }
  return tape_of(a).record(op, std::move(out), {a, b}, [dfa, dfb](BackwardContext& ctx) {
    const Tensor& g = ctx.grad_output();
    const Tensor& x = ctx.input(0);
    const Tensor& y = ctx.input(1);
    const Tensor& o = ctx.output();
    const std::size_t nb = y.size();
    if (Tensor* ga = ctx.grad_input(0)) {
      for (std::size_t base = 0; base < g.size(); base += nb) {
        for (std::size_t j = 0; j < nb; ++j) {
          const std::size_t i = base + j;
          (*ga)[i] += g[i] * dfa(x[i], y[j], o[i]);
        }
      }
    }
    if (Tensor* gb = ctx.grad_input(1)) {
      for (std::size_t base = 0; base < g.size(); base += nb) {
        for (std::size_t j = 0; j < nb; ++j) {
          const std::size_t i = base + j;
          (*gb)[j] += g[i] * dfb(x[i], y[j], o[i]);
        }
      }
    }
  });
}

// Elementwise unary op; `df(x, out)` is the local derivative.
template <typename Fwd, typename Df>
Var unary(const char* op, const Var& a, Fwd fwd, Df df) {
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
  return tape_of(a).record(op, std::move(out), {a}, [df](BackwardContext& ctx) {
    Tensor* ga = ctx.grad_input(0);
    if (!ga) return;
    const Tensor& g = ctx.grad_output();
    const Tensor& x = ctx.input(0);
    const Tensor& o = ctx.output();
    for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * df(x[i], o[i]);
  });
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (bv.rank() != 2 || av.rank() == 0 || av.cols() != bv.dim(0)) {
    throw DimensionError("matmul: inner dimensions disagree for " + shape_string(av.shape()) + " x " +
                         shape_string(bv.shape()));
  }
  const std::size_t m = av.rows(), k = av.cols(), n = bv.dim(1);
  Shape shape = av.shape();
  shape.back() = n;
  Tensor out(std::move(shape));
  as_matrix(out, m, n).noalias() = as_matrix(av, m, k) * as_matrix(bv, k, n);
  return tape_of(a).record("matmul", std::move(out), {a, b}, [m, k, n](BackwardContext& ctx) {
    auto g = as_matrix(ctx.grad_output(), m, n);
    if (Tensor* ga = ctx.grad_input(0)) as_matrix(*ga, m, k).noalias() += g * as_matrix(ctx.input(1), k, n).transpose();
    if (Tensor* gb = ctx.grad_input(1)) as_matrix(*gb, k, n).noalias() += as_matrix(ctx.input(0), m, k).transpose() * g;
  });
}

Var linear(const Var& x, const Var& w, const Var& bias) { return add(matmul(x, w), bias); }

Var add(const Var& a, const Var& b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; }, [](double, double, double) { return 1.0; },
      [](double, double, double) { return 1.0; });
}

Var sub(const Var& a, const Var& b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; }, [](double, double, double) { return 1.0; },
      [](double, double, double) { return -1.0; });
}

Var mul(const Var& a, const Var& b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y, double) { return y; },
      [](double x, double, double) { return x; });
}

Var div(const Var& a, const Var& b) {
  return binary(
      "div", a, b, [](double x, double y) { return x / y; }, [](double, double y, double) { return 1.0 / y; },
      [](double, double y, double o) { return -o / y; });
}

Var neg(const Var& a) {
  return unary("neg", a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Var scale(const Var& a, double factor) {
  return unary("scale", a, [factor](double x) { return factor * x; }, [factor](double, double) { return factor; });
}

Var add_scalar(const Var& a, double offset) {
  return unary("add_scalar", a, [offset](double x) { return x + offset; }, [](double, double) { return 1.0; });
}

Var exp(const Var& a) {
  return unary("exp", a, [](double x) { return std::exp(x); }, [](double, double o) { return o; });
}

Var log(const Var& a) {
  return unary("log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var sqrt(const Var& a) {
  return unary("sqrt", a, [](double x) { return std::sqrt(x); }, [](double, double o) { return 0.5 / o; });
}

Var square(const Var& a) {
  return unary("square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var tanh(const Var& a) {
  return unary("tanh", a, [](double x) { return std::tanh(x); }, [](double, double o) { return 1.0 - o * o; });
}

Var gelu(const Var& a) {
  constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double k = 0.044715;
  return unary(
      "gelu", a,
      [](double x) { return 0.5 * x * (1.0 + std::tanh(c * (x + k * x * x * x))); },
      [](double x, double) {
        const double t = std::tanh(c * (x + k * x * x * x));
        return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * c * (1.0 + 3.0 * k * x * x);
      });
}

Var clamp_min(const Var& a, double lo) {
  return unary(
      "clamp_min", a, [lo](double x) { return std::max(x, lo); },
      [lo](double x, double) { return x > lo ? 1.0 : 0.0; });
}

Var sum(const Var& a) {
  const Tensor& av = a.value();
  double s = 0.0;
  for (double v : av.data()) s += v;
  return tape_of(a).record("sum", Tensor::scalar(s), {a}, [](BackwardContext& ctx) {
    Tensor* ga = ctx.grad_input(0);
    if (!ga) return;
    const double g = ctx.grad_output()[0];
    for (double& v : ga->data()) v += g;
  });
}

Var mean(const Var& a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw DomainError("mean over an empty tensor");
  const double count = static_cast<double>(n);
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return tape_of(a).record("mean", Tensor::scalar(s / count), {a}, [count](BackwardContext& ctx) {
    Tensor* ga = ctx.grad_input(0);
    if (!ga) return;
    const double g = ctx.grad_output()[0] / count;
    for (double& v : ga->data()) v += g;
  });
}

Var sum(const Var& a, std::size_t axis) {
  const Tensor& av = a.value();
  if (axis >= av.rank()) {
    throw DomainError("sum: axis " + std::to_string(axis) + " out of range for " + shape_string(av.shape()));
  }
  const Shape& s = av.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t len = s[axis];
  Shape out_shape;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (i != axis) out_shape.push_back(s[i]);
  Tensor out(out_shape);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t l = 0; l < len; ++l)
      for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] += av[(o * len + l) * inner + i];
  return tape_of(a).record("sum_axis", std::move(out), {a}, [outer, len, inner](BackwardContext& ctx) {
    Tensor* ga = ctx.grad_input(0);
    if (!ga) return;
    const Tensor& g = ctx.grad_output();
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t l = 0; l < len; ++l)
        for (std::size_t i = 0; i < inner; ++i) (*ga)[(o * len + l) * inner + i] += g[o * inner + i];
  });
}

Var mean(const Var& a, std::size_t axis) {
  const std::size_t len = a.value().dim(axis);
  if (len == 0) throw DomainError("mean over an empty axis");
  return scale(sum(a, axis), 1.0 / static_cast<double>(len));
}

Var logsumexp_rows(const Var& a) {
  const Tensor& av = a.value();
  const std::size_t rows = av.rows(), cols = av.cols();
  if (cols == 0) throw DomainError("logsumexp over empty rows");
  Tensor out(Shape{rows});
  for (std::size_t r = 0; r < rows; ++r) {
    auto row = av.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double s = 0.0;
    for (double v : row) s += std::exp(v - mx);
    out[r] = mx + std::log(s);
  }
  return tape_of(a).record("logsumexp_rows", std::move(out), {a}, [rows, cols](BackwardContext& ctx) {
    Tensor* ga = ctx.grad_input(0);
    if (!ga) return;
    const Tensor& x = ctx.input(0);
    const Tensor& o = ctx.output();
    const Tensor& g = ctx.grad_output();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) (*ga)[r * cols + c] += g[r] * std::exp(x[r * cols + c] - o[r]);
  });
}

Var reshape(const Var& a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  return tape_of(a).record("reshape", std::move(out), {a}, [](BackwardContext& ctx) {
    Tensor* ga = ctx.grad_input(0);
    if (!ga) return;
    const Tensor& g = ctx.grad_output();
    for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
  });
}

Var gather_rows(const Var& a, std::span<const std::size_t> rows) {
  const Tensor& av = a.value();
  const std::size_t cols = av.cols(), n_rows = av.rows();
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  Tensor out(Shape{idx.size(), cols});
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= n_rows) throw DomainError("gather_rows: row " + std::to_string(idx[r]) + " out of range");
    std::copy_n(av.row(idx[r]).begin(), cols, out.row(r).begin());
  }
  return tape_of(a).record("gather_rows", std::move(out), {a}, [idx = std::move(idx), cols](BackwardContext& ctx) {
    Tensor* ga = ctx.grad_input(0);
    if (!ga) return;
    const Tensor& g = ctx.grad_output();
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t c = 0; c < cols; ++c) (*ga)[idx[r] * cols + c] += g[r * cols + c];
  });
}

Var gather(const Var& a, std::span<const std::size_t> indices) {
  const Tensor& av = a.value();
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  Tensor out(Shape{idx.size()});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= av.size()) throw DomainError("gather: index " + std::to_string(idx[i]) + " out of range");
    out[i] = av[idx[i]];
  }
  return tape_of(a).record("gather", std::move(out), {a}, [idx = std::move(idx)](BackwardContext& ctx) {
    Tensor* ga = ctx.grad_input(0);
    if (!ga) return;
    const Tensor& g = ctx.grad_output();
    for (std::size_t i = 0; i < idx.size(); ++i) (*ga)[idx[i]] += g[i];
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw DomainError("concat_cols of nothing");
  const std::size_t rows = parts.front().value().rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const Var& p : parts) {
    if (p.value().rows() != rows) {
      throw DimensionError("concat_cols: row counts differ, " + shape_string(parts.front().shape()) + " vs " +
                           shape_string(p.shape()));
    }
    widths.push_back(p.value().cols());
    total += widths.back();
  }
  Tensor out(Shape{rows, total});
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const Tensor& v = parts[p].value();
    for (std::size_t r = 0; r < rows; ++r) std::copy_n(v.row(r).begin(), widths[p], out.row(r).begin() + offset);
    offset += widths[p];
  }
  return tape_of(parts.front()).record("concat_cols", std::move(out), parts, [widths, rows, total](BackwardContext& ctx) {
    const Tensor& g = ctx.grad_output();
    std::size_t offset = 0;
    for (std::size_t p = 0; p < widths.size(); ++p) {
      if (Tensor* gp = ctx.grad_input(p)) {
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < widths[p]; ++c) (*gp)[r * widths[p] + c] += g[r * total + offset + c];
      }
      offset += widths[p];
    }
  });
}

Var slice_cols(const Var& a, std::size_t begin, std::size_t end) {
  const Tensor& av = a.value();
  const std::size_t rows = av.rows(), cols = av.cols();
  if (begin > end || end > cols) throw DomainError("slice_cols: bad range for " + shape_string(av.shape()));
  const std::size_t w = end - begin;
  Tensor out(Shape{rows, w});
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(av.row(r).begin() + begin, w, out.row(r).begin());
  return tape_of(a).record("slice_cols", std::move(out), {a}, [rows, cols, begin, w](BackwardContext& ctx) {
    Tensor* ga = ctx.grad_input(0);
    if (!ga) return;
    const Tensor& g = ctx.grad_output();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < w; ++c) (*ga)[r * cols + begin + c] += g[r * w + c];
  });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  const Tensor& xv = x.value();
  const std::size_t rows = xv.rows(), cols = xv.cols();
  if (gamma.value().size() != cols || beta.value().size() != cols) {
    throw DimensionError("layer_norm: affine params " + shape_string(gamma.shape()) + " vs input " +
                         shape_string(xv.shape()));
  }
  const Tensor& gv = gamma.value();
  const Tensor& bv = beta.value();
  Tensor out(xv.shape());
  // Saved per row: normalized values and inverse std.
  auto xhat = std::make_shared<Tensor>(xv.shape());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    auto row = xv.row(r);
    double mu = 0.0;
    for (double v : row) mu += v;
    mu /= static_cast<double>(cols);
    double var = 0.0;
    for (double v : row) var += (v - mu) * (v - mu);
    var /= static_cast<double>(cols);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t c = 0; c < cols; ++c) {
      const double h = (row[c] - mu) * is;
      xhat->at(r, c) = h;
      out.at(r, c) = h * gv[c] + bv[c];
    }
  }
  return tape_of(x).record(
      "layer_norm", std::move(out), {x, gamma, beta}, [xhat, inv_std, rows, cols](BackwardContext& ctx) {
        const Tensor& g = ctx.grad_output();
        const Tensor& gv = ctx.input(1);
        Tensor* gx = ctx.grad_input(0);
        Tensor* gg = ctx.grad_input(1);
        Tensor* gb = ctx.grad_input(2);
        const double n = static_cast<double>(cols);
        for (std::size_t r = 0; r < rows; ++r) {
          double sum_dh = 0.0, sum_dh_h = 0.0;
          for (std::size_t c = 0; c < cols; ++c) {
            const double go = g[r * cols + c];
            const double h = xhat->at(r, c);
            if (gg) (*gg)[c] += go * h;
            if (gb) (*gb)[c] += go;
            const double dh = go * gv[c];
            sum_dh += dh;
            sum_dh_h += dh * h;
          }
          if (!gx) continue;
          const double is = (*inv_std)[r];
          for (std::size_t c = 0; c < cols; ++c) {
            const double dh = g[r * cols + c] * gv[c];
            (*gx)[r * cols + c] += is * (dh - sum_dh / n - xhat->at(r, c) * sum_dh_h / n);
          }
        }
      });
}

}  // namespace prism::num
