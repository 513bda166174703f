#include "prism/numerics/reduce.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "prism/numerics/errors.hpp"

namespace prism::num {
namespace {

struct AxisLayout {
  std::size_t outer = 1;
  std::size_t len = 0;
  std::size_t inner = 1;
  Shape reduced;
};

AxisLayout layout(const Tensor& t, std::size_t axis, const char* op) {
  if (axis >= t.rank()) {
    throw DomainError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for " +
                      shape_string(t.shape()));
  }
  AxisLayout l;
  const Shape& s = t.shape();
  for (std::size_t i = 0; i < axis; ++i) l.outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) l.inner *= s[i];
  l.len = s[axis];
  if (l.len == 0) throw DomainError(std::string(op) + ": empty reduction axis");
  for (std::size_t i = 0; i < s.size(); ++i)
    if (i != axis) l.reduced.push_back(s[i]);
  return l;
}

template <typename Fn>
Tensor reduce_lanes(const Tensor& t, std::size_t axis, const char* op, Fn fn) {
  const AxisLayout l = layout(t, axis, op);
  Tensor out(l.reduced);
  std::vector<double> lane(l.len);
  for (std::size_t o = 0; o < l.outer; ++o) {
    for (std::size_t i = 0; i < l.inner; ++i) {
      for (std::size_t k = 0; k < l.len; ++k) lane[k] = t[(o * l.len + k) * l.inner + i];
      out[o * l.inner + i] = fn(std::span<double>(lane));
    }
  }
  return out;
}

}  // namespace

Tensor reduce_sum(const Tensor& t, std::size_t axis) {
  return reduce_lanes(t, axis, "reduce_sum", [](std::span<double> lane) {
    double s = 0.0;
    for (double v : lane) s += v;
    return s;
  });
}

Tensor reduce_mean(const Tensor& t, std::size_t axis) {
  return reduce_lanes(t, axis, "reduce_mean", [](std::span<double> lane) {
    double s = 0.0;
    for (double v : lane) s += v;
    return s / static_cast<double>(lane.size());
  });
}

MinWithIndex min_with_index(std::span<const double> values) {
  if (values.empty()) throw DomainError("min_with_index: empty input");
  MinWithIndex best{values[0], 0};
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] < best.value) best = {values[i], i};
  }
  return best;
}

MinWithIndices min_with_index(const Tensor& t, std::size_t axis) {
  const AxisLayout l = layout(t, axis, "min_with_index");
  MinWithIndices out{Tensor(l.reduced), std::vector<std::size_t>(l.outer * l.inner)};
  std::vector<double> lane(l.len);
  for (std::size_t o = 0; o < l.outer; ++o) {
    for (std::size_t i = 0; i < l.inner; ++i) {
      for (std::size_t k = 0; k < l.len; ++k) lane[k] = t[(o * l.len + k) * l.inner + i];
      const MinWithIndex m = min_with_index(lane);
      out.values[o * l.inner + i] = m.value;
      out.indices[o * l.inner + i] = m.index;
    }
  }
  return out;
}

Tensor max_per_row(const Tensor& t) {
  if (t.cols() == 0) throw DomainError("max_per_row: empty rows");
  Tensor out(Shape{t.rows()});
  for (std::size_t r = 0; r < t.rows(); ++r) {
    auto row = t.row(r);
    out[r] = *std::max_element(row.begin(), row.end());
  }
  return out;
}

double quantile(std::span<const double> values, double q) {
  if (values.empty()) throw DomainError("quantile: empty input");
  if (!(q > 0.0 && q < 1.0)) throw DomainError("quantile: q must lie in (0, 1), got " + std::to_string(q));
  std::vector<double> sorted(values.begin(), values.end());
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(lo), sorted.end());
  const double lo_value = sorted[lo];
  double hi_value = lo_value;
  if (hi != lo) {
    hi_value = *std::min_element(sorted.begin() + static_cast<std::ptrdiff_t>(hi), sorted.end());
  }
  const double frac = pos - static_cast<double>(lo);
  return lo_value + frac * (hi_value - lo_value);
}

Tensor quantile(const Tensor& t, double q, std::size_t axis) {
  return reduce_lanes(t, axis, "quantile", [q](std::span<double> lane) { return quantile(lane, q); });
}

}  // namespace prism::num
