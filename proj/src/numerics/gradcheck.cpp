#include "prism/numerics/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "prism/numerics/errors.hpp"
#include "prism/numerics/rng.hpp"

namespace prism::num {
namespace {

double evaluate(const ScalarFunction& f, const ParameterSet& params) {
  Tape tape;
  BoundParams bound(tape, params, false);
  return f(tape, bound).value().item();
}

}  // namespace

double GradCheckReport::max_rel_error() const {
  double worst = 0.0;
  for (const auto& e : entries) worst = std::max(worst, e.max_rel_error);
  return worst;
}

const GradCheckEntry& GradCheckReport::entry(const std::string& name) const {
  for (const auto& e : entries)
    if (e.name == name) return e;
  throw ContractError("no gradient-check entry for '" + name + "'");
}

GradCheckReport check_gradients(const ScalarFunction& f, const ParameterSet& params, const GradCheckOptions& options) {
  std::vector<Tensor> analytic;
  {
    Tape tape;
    BoundParams bound(tape, params, true);
    const Var loss = f(tape, bound);
    analytic = bound.collect(tape.backward(loss));
  }

  ParameterSet probe = params;
  Rng rng(options.probe_seed);
  GradCheckReport report;
  for (std::size_t p = 0; p < probe.size(); ++p) {
    auto& entry = probe.entries()[p];
    std::vector<std::size_t> order(entry.value.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (options.max_probes != 0 && options.max_probes < order.size()) {
      rng.shuffle(order);
      order.resize(options.max_probes);
    }
    GradCheckEntry result;
    result.name = entry.name;
    for (std::size_t idx : order) {
      const double original = entry.value[idx];
      entry.value[idx] = original + options.step;
      const double up = evaluate(f, probe);
      entry.value[idx] = original - options.step;
      const double down = evaluate(f, probe);
      entry.value[idx] = original;

      const double numeric = (up - down) / (2.0 * options.step);
      const double exact = analytic[p][idx];
      const double abs_err = std::abs(exact - numeric);
      const double denom = std::max({std::abs(exact), std::abs(numeric), options.rel_floor});
      result.max_abs_error = std::max(result.max_abs_error, abs_err);
      result.max_rel_error = std::max(result.max_rel_error, abs_err / denom);
      if (exact == 0.0) ++result.zero_gradient_count;
      ++result.checked;
    }
    result.boundary = result.zero_gradient_count > 0;
    report.entries.push_back(std::move(result));
  }
  return report;
}

}  // namespace prism::num
