#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "prism/numerics/params.hpp"

namespace prism::num {

struct GradCheckOptions {
  double step = 1e-5;
  /// Denominator floor for relative error, so tiny gradients are compared absolutely.
  double rel_floor = 1e-6;
  /// Elements probed per parameter; 0 probes all of them.
  std::size_t max_probes = 0;
  std::uint64_t probe_seed = 0;
};

struct GradCheckEntry {
  std::string name;
  std::size_t checked = 0;
  double max_abs_error = 0.0;
  double max_rel_error = 0.0;
  /// Probed elements whose analytic gradient is exactly zero (clamped or unselected).
  std::size_t zero_gradient_count = 0;
  bool boundary = false;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;

  double max_rel_error() const;
  bool passed(double tolerance) const { return max_rel_error() <= tolerance; }
  const GradCheckEntry& entry(const std::string& name) const;
};

/// Scalar objective evaluated on a fresh tape with the parameters bound as leaves.
using ScalarFunction = std::function<Var(Tape&, const BoundParams&)>;

/// Compare reverse-mode gradients against central finite differences.
/// `f` must be deterministic: it is re-evaluated twice per probed element.
GradCheckReport check_gradients(const ScalarFunction& f, const ParameterSet& params,
                                const GradCheckOptions& options = {});

}  // namespace prism::num
