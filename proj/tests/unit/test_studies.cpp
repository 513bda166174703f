#include <cmath>
#include <sstream>

#include "doctest.h"
#include "prism/bench/studies.hpp"
#include "prism/numerics/errors.hpp"

using namespace prism;
using namespace prism::bench;

TEST_CASE("log-log slope recovers exact power laws") {
  const std::vector<double> x{1, 2, 4, 8, 16};
  for (double p : {0.5, 1.0, 2.0, 3.0}) {
    std::vector<double> y;
    for (double v : x) y.push_back(3.0 * std::pow(v, p));
    CHECK(loglog_slope(x, y) == doctest::Approx(p).epsilon(1e-12));
  }
  CHECK_THROWS_AS(loglog_slope({1.0}, {1.0}), DomainError);
  CHECK_THROWS_AS(loglog_slope({1.0, 2.0}, {1.0, 0.0}), DomainError);
}

TEST_CASE("trial-count estimates") {
  // 2 * 1.96 / ln 2 = 5.655..., squared 31.98 -> 32, plus one.
  CHECK(required_variance_trials(0.5, 2.0) == 33);
  // The narrower side of [0.6, 1.8] is ln(1/0.6) = 0.5108.
  const double root = 2.0 * 1.96 / std::log(1.0 / 0.6);
  CHECK(required_variance_trials(0.6, 1.8) == static_cast<std::size_t>(std::ceil(root * root)) + 1);
  CHECK(required_rate_trials(0.5, 0.1) == 97);
  CHECK(required_trials(QuantileVarianceOptions{}) == 33);
  CHECK(required_trials(FavorVarianceOptions{}) <= 500);
  CHECK_THROWS_AS(required_variance_trials(1.2, 2.0), DomainError);
}

TEST_CASE("small favor study passes and reports every feature count") {
  FavorVarianceOptions o;
  o.draws = 200;
  o.seed = 11;
  const StudyReport r = favor_variance_study(o);
  REQUIRE(r.series.size() == 2);
  CHECK(r.series[0][0] == 64.0);
  CHECK(r.series[1][1] < r.series[0][1]);
  CHECK(r.checks.size() == 3);
  CHECK(r.pass());
  std::ostringstream csv;
  r.write_series_csv(csv);
  CHECK(csv.str().rfind("features,error_variance", 0) == 0);
  CHECK(r.to_json()["pass"] == true);
}

TEST_CASE("quantile study on small sizes") {
  QuantileVarianceOptions o;
  o.sizes = {64, 512};
  o.repeats = 100;
  o.max_cv = 1.0;
  o.sequences = 200;
  o.seed = 3;
  const StudyReport r = quantile_variance_study(o);
  REQUIRE(r.series.size() == 2);
  // Quantile of exp(N(-1.5, 0.7)) at 0.275.
  const double q = std::exp(-1.5 + 0.7 * -0.597760);
  CHECK(r.series[1][1] == doctest::Approx(q).epsilon(0.05));
  CHECK(r.checks.back().name == "threshold_bound_violations");
  CHECK(r.checks.back().value == 0.0);
  CHECK(r.pass());
}

TEST_CASE("make_check bounds are inclusive") {
  CHECK(make_check("a", 1.0, 1.0, 2.0).pass);
  CHECK(make_check("a", 2.0, 1.0, 2.0).pass);
  CHECK_FALSE(make_check("a", 2.1, 1.0, 2.0).pass);
  CHECK_FALSE(make_check("a", std::nan(""), 0.0, 1.0).pass);
}
