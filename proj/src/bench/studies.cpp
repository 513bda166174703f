#include "prism/bench/studies.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

#include "prism/bench/metrics.hpp"
#include "prism/linattn/favor.hpp"
#include "prism/loss/imle.hpp"
#include "prism/numerics/errors.hpp"

namespace prism::bench {

namespace {

constexpr double kZ95 = 1.96;

num::Tensor normal_matrix(std::size_t rows, std::size_t cols, num::Rng& rng, double stddev) {
  num::Tensor t(num::Shape{rows, cols});
  rng.fill_normal(t.data(), 0.0, stddev);
  return t;
}

double sample_variance(const std::vector<double>& v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return s / static_cast<double>(v.size() - 1);
}

double seconds_of(const auto& fn, std::size_t repeats) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < repeats; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  return best;
}

}  // namespace

bool StudyReport::pass() const {
  return std::all_of(checks.begin(), checks.end(), [](const StudyCheck& c) { return c.pass; });
}

nlohmann::json StudyReport::to_json() const {
  nlohmann::json j{{"study", study}, {"params", params}, {"pass", pass()}};
  j["checks"] = nlohmann::json::array();
  for (const auto& c : checks)
    j["checks"].push_back({{"name", c.name}, {"value", c.value}, {"lo", c.lo}, {"hi", c.hi}, {"pass", c.pass}});
  return j;
}

void StudyReport::write_series_csv(std::ostream& out) const {
  for (std::size_t i = 0; i < series_header.size(); ++i) out << (i ? "," : "") << series_header[i];
  out << '\n';
  char buf[64];
  for (const auto& row : series) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", row[i]);
      out << (i ? "," : "") << buf;
    }
    out << '\n';
  }
}

StudyCheck make_check(std::string name, double value, double lo, double hi) {
  return {std::move(name), value, lo, hi, value >= lo && value <= hi};
}

std::size_t required_variance_trials(double lo_factor, double hi_factor) {
  if (!(lo_factor > 0.0 && lo_factor < 1.0 && hi_factor > 1.0)) throw DomainError("variance band must straddle 1");
  const double margin = std::min(-std::log(lo_factor), std::log(hi_factor));
  const double root = 2.0 * kZ95 / margin;
  return static_cast<std::size_t>(std::ceil(root * root)) + 1;
}

std::size_t required_rate_trials(double p, double margin) {
  if (!(margin > 0.0)) throw DomainError("rate margin must be positive");
  const double var = std::max(p * (1.0 - p), 0.01);
  return static_cast<std::size_t>(std::ceil(kZ95 * kZ95 * var / (margin * margin)));
}

std::size_t required_trials(const FavorVarianceOptions&) { return required_variance_trials(0.6, 1.8); }

StudyReport favor_variance_study(const FavorVarianceOptions& opts) {
  if (opts.features.size() < 2) throw DomainError("favor-variance needs at least two feature counts");
  if (opts.draws < 2) throw DomainError("favor-variance needs at least two draws");
  StudyReport rep;
  rep.study = "favor-variance";
  rep.params = {{"features", opts.features}, {"draws", opts.draws},        {"seq_len", opts.seq_len},
                {"head_dim", opts.head_dim}, {"input_scale", opts.input_scale}, {"seed", opts.seed}};
  rep.series_header = {"features", "error_variance", "per_draw_mse", "max_mean_error"};

  num::Rng rng = num::Rng::substream(opts.seed, "favor-variance/input");
  const num::Tensor q = normal_matrix(opts.seq_len, opts.head_dim, rng, opts.input_scale);
  const num::Tensor k = normal_matrix(opts.seq_len, opts.head_dim, rng, opts.input_scale);
  const num::Tensor v = normal_matrix(opts.seq_len, opts.head_dim, rng, 1.0);
  const num::Tensor exact = linattn::exact_attention(q, k, v);
  const std::size_t n = exact.size();

  std::vector<double> variances;
  for (std::size_t m : opts.features) {
    std::vector<double> sum(n, 0.0), sum_sq(n, 0.0);
    for (std::size_t d = 0; d < opts.draws; ++d) {
      const auto fm = linattn::FeatureMap::draw(
          opts.head_dim, m, num::Rng::derive_seed(opts.seed, "favor-variance/m" + std::to_string(m) + "/" + std::to_string(d)));
      const num::Tensor est = linattn::linear_attention(q, k, v, fm);
      for (std::size_t i = 0; i < n; ++i) {
        const double e = est[i] - exact[i];
        sum[i] += e;
        sum_sq[i] += e * e;
      }
    }
    const double draws = static_cast<double>(opts.draws);
    double variance = 0.0, mse = 0.0, worst = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double mean = sum[i] / draws;
      variance += (sum_sq[i] - draws * mean * mean) / (draws - 1.0);
      mse += sum_sq[i] / draws;
      worst = std::max(worst, std::abs(mean));
    }
    variance /= static_cast<double>(n);
    mse /= static_cast<double>(n);
    variances.push_back(variance);
    rep.series.push_back({static_cast<double>(m), variance, mse, worst});
    rep.checks.push_back(make_check("max_mean_error_m" + std::to_string(m), worst, 0.0, opts.mean_tolerance));
  }
  const double expected = static_cast<double>(opts.features.front()) / static_cast<double>(opts.features.back());
  rep.checks.push_back(make_check("variance_ratio_m" + std::to_string(opts.features.back()) + "_over_m" +
                                      std::to_string(opts.features.front()),
                                  variances.back() / variances.front(), 0.6 * expected, 1.8 * expected));
  return rep;
}

std::size_t required_trials(const QuantileVarianceOptions& opts) {
  return required_variance_trials(1.0 / opts.slack, opts.slack);
}

StudyReport quantile_variance_study(const QuantileVarianceOptions& opts) {
  if (opts.sizes.size() < 2) throw DomainError("quantile-variance needs at least two sizes");
  if (opts.repeats < 2) throw DomainError("quantile-variance needs at least two repeats");
  StudyReport rep;
  rep.study = "quantile-variance";
  rep.params = {{"sizes", opts.sizes},         {"repeats", opts.repeats},   {"quantile", opts.quantile},
                {"slack", opts.slack},         {"max_cv", opts.max_cv},     {"sequences", opts.sequences},
                {"sequence_length", opts.sequence_length}, {"seed", opts.seed}};
  rep.series_header = {"entries", "mean_estimate", "variance", "cv"};

  loss::RsState base;
  base.quantile = opts.quantile;
  std::vector<double> variances;
  for (std::size_t n : opts.sizes) {
    // B x K x B with B = K when n is a cube, else a single item.
    auto b = static_cast<std::size_t>(std::llround(std::cbrt(static_cast<double>(n))));
    if (b * b * b != n) b = 0;
    loss::DistanceTensor dt;
    dt.batch = b ? b : 1;
    dt.candidates = b ? b : n;
    dt.cross = num::Tensor(num::Shape{dt.batch, dt.candidates, dt.batch});
    num::Rng rng = num::Rng::substream(opts.seed, "quantile-variance/n" + std::to_string(n));
    std::vector<double> estimates;
    for (std::size_t r = 0; r < opts.repeats; ++r) {
      for (double& x : dt.cross.data()) x = std::exp(rng.normal(-1.5, 0.7));
      estimates.push_back(loss::calibrate(dt, base).last_estimate);
    }
    double mean = 0.0;
    for (double e : estimates) mean += e / static_cast<double>(estimates.size());
    const double var = sample_variance(estimates);
    variances.push_back(var);
    rep.series.push_back({static_cast<double>(n), mean, var, std::sqrt(var) / mean});
  }
  for (std::size_t i = 1; i < opts.sizes.size(); ++i) {
    const double expected = static_cast<double>(opts.sizes[i]) / static_cast<double>(opts.sizes[i - 1]);
    rep.checks.push_back(make_check("variance_ratio_n" + std::to_string(opts.sizes[i - 1]) + "_over_n" +
                                        std::to_string(opts.sizes[i]),
                                    variances[i - 1] / variances[i], expected / opts.slack, expected * opts.slack));
  }
  rep.checks.push_back(make_check("cv_at_n" + std::to_string(opts.sizes.back()), rep.series.back()[3], 0.0, opts.max_cv));

  // Bounds: arbitrary estimates (zero, tiny, huge), momenta and starts.
  num::Rng rng = num::Rng::substream(opts.seed, "quantile-variance/bounds");
  std::size_t violations = 0;
  for (std::size_t s = 0; s < opts.sequences; ++s) {
    loss::RsState st;
    st.momentum = rng.uniform(0.0, 0.999);
    st.eps_rs = rng.uniform(st.eps_min, st.eps_max);
    for (std::size_t t = 0; t < opts.sequence_length; ++t) {
      const double u = rng.uniform();
      const double estimate = u < 0.1 ? 0.0 : u < 0.2 ? 1e6 * rng.uniform() : std::exp(rng.normal(-3.0, 3.0));
      st = loss::calibrate_from_estimate(estimate, st);
      if (!(st.eps_rs >= st.eps_min && st.eps_rs <= st.eps_max)) ++violations;
    }
  }
  rep.checks.push_back(make_check("threshold_bound_violations", static_cast<double>(violations), 0.0, 0.0));
  return rep;
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw DomainError("log-log fit needs two or more points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0 && y[i] > 0.0)) throw DomainError("log-log fit needs positive data");
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(x.size());
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

std::size_t required_trials(const LatencyScalingOptions&) { return 3; }

StudyReport latency_scaling_study(const LatencyScalingOptions& opts) {
  if (opts.lengths.size() < 2) throw DomainError("latency-scaling needs at least two lengths");
  StudyReport rep;
  rep.study = "latency-scaling";
  rep.params = {{"lengths", opts.lengths}, {"repeats", opts.repeats}, {"head_dim", opts.head_dim},
                {"features", opts.features}, {"seed", opts.seed}};
  rep.series_header = {"length", "linear_seconds", "exact_seconds"};
  const auto fm = linattn::FeatureMap::draw(opts.head_dim, opts.features, num::Rng::derive_seed(opts.seed, "features"));
  std::vector<double> lens, lin, ex;
  double sink = 0.0;
  for (std::size_t len : opts.lengths) {
    num::Rng rng = num::Rng::substream(opts.seed, "latency/L" + std::to_string(len));
    const num::Tensor q = normal_matrix(len, opts.head_dim, rng, 0.5);
    const num::Tensor k = normal_matrix(len, opts.head_dim, rng, 0.5);
    const num::Tensor v = normal_matrix(len, opts.head_dim, rng, 1.0);
    const double t_lin = seconds_of([&] { sink += linattn::linear_attention(q, k, v, fm)[0]; }, opts.repeats);
    const double t_ex = seconds_of([&] { sink += linattn::exact_attention(q, k, v)[0]; }, opts.repeats);
    lens.push_back(static_cast<double>(len));
    lin.push_back(t_lin);
    ex.push_back(t_ex);
    rep.series.push_back({static_cast<double>(len), t_lin, t_ex});
  }
  if (!std::isfinite(sink)) throw NumericError("latency study produced non-finite attention outputs");
  rep.checks.push_back(make_check("linear_exponent", loglog_slope(lens, lin), -1e9, opts.max_linear_exponent));
  rep.checks.push_back(make_check("exact_exponent", loglog_slope(lens, ex), opts.min_exact_exponent, 1e9));
  return rep;
}

std::size_t required_trials(const CoverageStudyOptions& opts) {
  return required_rate_trials(opts.threshold, std::max(1.0 - opts.threshold, 0.025));
}

StudyReport coverage_study(const model::Policy& policy, const PushEnvConfig& env, const CoverageStudyOptions& opts) {
  StudyReport rep;
  rep.study = "coverage";
  CoverageOptions co;
  co.candidates = opts.deterministic ? 1 : opts.candidates;
  co.zero_latents = opts.deterministic;
  co.trials = opts.trials;
  co.seed = opts.seed;
  rep.params = {{"candidates", co.candidates}, {"trials", co.trials},          {"x0_lo", co.x0_lo},
                {"x0_hi", co.x0_hi},           {"deterministic", opts.deterministic}, {"seed", opts.seed}};
  rep.series_header = {"candidates", "trials", "coverage"};
  const double cov = coverage_probe(policy, env, co);
  rep.series.push_back({static_cast<double>(co.candidates), static_cast<double>(co.trials), cov});
  rep.checks.push_back(make_check("coverage", cov, opts.threshold, 1.0));
  return rep;
}

}  // namespace prism::bench
