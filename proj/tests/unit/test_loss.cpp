#include <cmath>
#include <numbers>
#include <sstream>

#include "doctest.h"
#include "prism/loss/imle.hpp"
#include "prism/numerics/errors.hpp"
#include "prism/numerics/gradcheck.hpp"
#include "prism/numerics/ops.hpp"
#include "prism/numerics/reduce.hpp"
#include "prism/numerics/rng.hpp"

using namespace prism;
using namespace prism::loss;
using num::Shape;
using num::Tensor;

namespace {

Tensor random_tensor(Shape shape, num::Rng& rng, double stddev = 0.5) {
  Tensor t(std::move(shape));
  rng.fill_normal(t.data(), 0.0, stddev);
  return t;
}

DistanceTensor from_cross(std::size_t b, std::size_t k, std::vector<double> values) {
  DistanceTensor dt;
  dt.batch = b;
  dt.candidates = k;
  dt.cross = Tensor(Shape{b, k, b}, std::move(values));
  return dt;
}

}  // namespace

TEST_CASE("robust distance examples") {
  const DistanceConfig unit2 = DistanceConfig::uniform(2);
  CHECK(unit2.charbonnier_eps == 1e-6);
  const Tensor a = Tensor::matrix({{0.3, -0.2}, {0.1, 0.9}});
  CHECK(robust_distance(a, a, unit2) == doctest::Approx(2e-6).epsilon(1e-12));

  const Tensor pred = Tensor::matrix({{0.5}, {-0.5}});
  const Tensor target = Tensor::matrix({{0.0}, {0.0}});
  const double expected = std::sqrt(0.25 + 1e-12);  // (1/2)(2 * sqrt(0.25 + eps^2))
  CHECK(robust_distance(pred, target, DistanceConfig::uniform(1)) == doctest::Approx(expected).epsilon(1e-15));
  CHECK(robust_distance(pred, target, DistanceConfig::uniform(1)) == doctest::Approx(0.5));

  CHECK_THROWS_AS(robust_distance(a, pred, unit2), DimensionError);
  DistanceConfig bad = unit2;
  bad.weights[1] = 0.0;
  CHECK_THROWS_AS(robust_distance(a, a, bad), DomainError);
}

TEST_CASE("distance is normalized over the horizon") {
  num::Rng rng(1);
  const Tensor p = random_tensor({3, 2}, rng), t = random_tensor({3, 2}, rng);
  const DistanceConfig cfg = DistanceConfig::uniform(2);
  for (std::size_t r : {2u, 5u}) {
    Tensor pr(Shape{3 * r, 2}), tr(Shape{3 * r, 2});
    for (std::size_t i = 0; i < 6 * r; ++i) {
      pr[i] = p[i % 6];
      tr[i] = t[i % 6];
    }
    CHECK(robust_distance(pr, tr, cfg) == doctest::Approx(robust_distance(p, t, cfg)).epsilon(1e-14));
  }
}

TEST_CASE("per-dimension weights are inverse standard deviations") {
  const Tensor actions = Tensor::matrix({{0.0, 1.0}, {2.0, 1.0}, {4.0, 1.0}});
  const DistanceConfig cfg = DistanceConfig::from_actions(actions);
  CHECK(cfg.weights[0] == doctest::Approx(1.0 / std::sqrt(8.0 / 3.0)));
  CHECK(cfg.weights[1] == doctest::Approx(1e8));
}

TEST_CASE("distance tensor") {
  num::Rng rng(2);
  const std::size_t b = 4, k = 3, tp = 5, da = 2;
  const Tensor cand = random_tensor({b * k * tp, da}, rng);
  const Tensor targets = random_tensor({b * tp, da}, rng);
  DistanceConfig cfg = DistanceConfig::uniform(da);
  cfg.weights = {0.7, 1.6};
  const DistanceTensor dt = distance_tensor(cand, targets, b, k, cfg);
  CHECK(dt.cross.shape() == Shape{b, k, b});

  SUBCASE("pointwise oracle on random triples") {
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t i = rng.below(b), kk = rng.below(k), j = rng.below(b);
      Tensor p(Shape{tp, da}), t(Shape{tp, da});
      for (std::size_t r = 0; r < tp; ++r)
        for (std::size_t c = 0; c < da; ++c) {
          p.at(r, c) = cand.at((i * k + kk) * tp + r, c);
          t.at(r, c) = targets.at(j * tp + r, c);
        }
      CHECK(dt.at(i, kk, j) == robust_distance(p, t, cfg));
    }
  }
  SUBCASE("every entry sits above the Charbonnier floor") {
    for (double v : dt.cross.data()) CHECK(v >= cfg.floor());
  }
  SUBCASE("a duplicated target gives duplicated columns") {
    Tensor dup = targets;
    for (std::size_t r = 0; r < tp; ++r)
      for (std::size_t c = 0; c < da; ++c) dup.at(3 * tp + r, c) = targets.at(1 * tp + r, c);
    const DistanceTensor d2 = distance_tensor(cand, dup, b, k, cfg);
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t kk = 0; kk < k; ++kk) CHECK(d2.at(i, kk, 1) == d2.at(i, kk, 3));
  }
  SUBCASE("single item batch") {
    const DistanceTensor one = distance_tensor(Tensor(Shape{k * tp, da}), Tensor(Shape{tp, da}), 1, k, cfg);
    CHECK(one.cross.shape() == Shape{1, k, 1});
    CHECK(one.diag().data().size() == one.cross.size());
    for (std::size_t kk = 0; kk < k; ++kk) CHECK(one.diag().at(0, kk) == one.cross[kk]);
  }
  SUBCASE("differentiable diagonal agrees with the tensor") {
    num::Tape tape;
    const Tensor d = diag_distances(tape.constant(cand), targets, b, k, cfg).value();
    const Tensor ref = dt.diag();
    for (std::size_t i = 0; i < d.size(); ++i) CHECK(d[i] == doctest::Approx(ref[i]).epsilon(1e-14));
  }
}

TEST_CASE("threshold calibration") {
  RsState s;
  CHECK(s.quantile >= 0.2);
  CHECK(s.quantile <= 0.35);
  CHECK(s.momentum == 0.9);
  CHECK(s.eps_rs == s.eps_min);

  s.eps_rs = 0.2;
  const RsState up = calibrate_from_estimate(0.5, s);
  CHECK(up.eps_rs == 0.2);
  CHECK(up.last_estimate == 0.5);

  s.eps_rs = 0.05;
  CHECK(calibrate_from_estimate(0.05, s).eps_rs == doctest::Approx(0.05).epsilon(1e-15));

  const DistanceTensor dt = from_cross(1, 5, {0.01, 0.02, 0.03, 0.04, 0.05});
  s.eps_rs = 0.02;
  // quantile(q=0.275) over 5 entries: position 1.1 -> 0.021.
  CHECK(calibrate(dt, s).eps_rs == doctest::Approx(0.9 * 0.02 + 0.1 * 0.021).epsilon(1e-14));

  num::Rng rng(3);
  for (int seq = 0; seq < 200; ++seq) {
    RsState st;
    for (int step = 0; step < 50; ++step) {
      st = calibrate_from_estimate(std::exp(rng.normal(-2.0, 3.0)), st);
      CHECK((st.eps_rs >= 1e-4 && st.eps_rs <= 0.2));
    }
  }
}

TEST_CASE("rejection mask") {
  SUBCASE("threshold below the floor rejects nothing") {
    num::Rng rng(4);
    const DistanceConfig cfg = DistanceConfig::uniform(2);
    const Tensor t = random_tensor({3 * 2, 2}, rng);
    Tensor cand(Shape{3 * 2 * 2, 2});
    for (std::size_t ik = 0; ik < 6; ++ik)
      for (std::size_t e = 0; e < 4; ++e) cand[ik * 4 + e] = t[(ik / 2) * 4 + e];
    const DistanceTensor dt = distance_tensor(cand, t, 3, 2, cfg);
    const RejectionMask m = rejection_mask(dt, cfg.floor() * 0.5);
    CHECK(m.rejection_rate() == 0.0);
  }
  SUBCASE("hand-built 2x2x2 tensor") {
    // cross[i,k,j]; only (1,0) has an entry below 0.1, and it is against j=0.
    const DistanceTensor dt = from_cross(2, 2, {0.3, 0.4, 0.2, 0.5, 0.05, 0.6, 0.7, 0.3});
    const RejectionMask m = rejection_mask(dt, 0.1);
    CHECK(m.rejected == std::vector<std::uint8_t>{0, 0, 1, 0});
    CHECK(m.fallback == std::vector<std::uint8_t>{0, 0});
    CHECK(m.rejection_rate() == 0.25);
    // Per-sample scope only compares (1,0) with target 1, so it survives.
    const RejectionMask ps = rejection_mask(dt, 0.1, MaskScope::kPerSample);
    CHECK(ps.rejected == std::vector<std::uint8_t>{0, 0, 0, 0});
  }
  SUBCASE("threshold above everything triggers the fallback") {
    const DistanceTensor dt = from_cross(2, 2, {0.3, 0.4, 0.2, 0.5, 0.05, 0.6, 0.7, 0.3});
    const RejectionMask m = rejection_mask(dt, 1.0);
    CHECK(m.rejection_rate() == 1.0);
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t k = 0; k < 2; ++k) CHECK(m.is_survivor(i, k));
  }
  SUBCASE("scopes coincide for a single item") {
    const DistanceTensor dt = from_cross(1, 3, {0.05, 0.2, 0.01});
    CHECK(rejection_mask(dt, 0.1).rejected == rejection_mask(dt, 0.1, MaskScope::kPerSample).rejected);
  }
  CHECK_THROWS_AS(rejection_mask(from_cross(1, 1, {0.1}), 0.0), DomainError);
}

TEST_CASE("hard loss") {
  const Tensor diag = Tensor::matrix({{0.3, 0.1}, {0.2, 0.4}});
  RejectionMask none;
  none.batch = 2;
  none.candidates = 2;
  none.rejected.assign(4, 0);
  none.fallback.assign(2, 0);
  CHECK(hard_loss(diag, none) == doctest::Approx(0.15).epsilon(1e-15));

  RejectionMask one = none;
  one.candidates = 1;
  one.rejected.assign(2, 0);
  CHECK(hard_loss(Tensor::matrix({{0.3}, {0.5}}), one) == doctest::Approx(0.4));

  num::Tape tape;
  const num::Var d = tape.leaf(Tensor(diag).set_requires_grad());
  const num::Var loss = hard_loss(d, none);
  CHECK(loss.value().item() == doctest::Approx(0.15));
  const num::Gradients g = tape.backward(loss);
  const Tensor& gd = g.of(d);
  CHECK(gd.at(0, 0) == 0.0);
  CHECK(gd.at(1, 1) == 0.0);
  CHECK(gd.at(0, 1) == 0.5);
  CHECK(gd.at(1, 0) == 0.5);
}

TEST_CASE("soft coverage loss") {
  CHECK(soft_loss(Tensor::matrix({{1.0, 2.0}}), 2, 1.0) ==
        doctest::Approx(-std::log(std::exp(-1.0) + std::exp(-2.0))).epsilon(1e-15));
  CHECK(soft_loss(Tensor::matrix({{1.0, 2.0}}), 2, 1.0) == doctest::Approx(0.68674).epsilon(1e-5));

  num::Rng rng(5);
  Tensor diag(Shape{4, 6});
  rng.fill_uniform(diag.data(), 0.0, 1.0);
  double mins = 0.0;
  for (std::size_t i = 0; i < 4; ++i) mins += num::min_with_index(diag.row(i)).value;
  CHECK(soft_loss(diag, 1, 0.1) == doctest::Approx(mins / 4.0 / 0.1).epsilon(1e-13));

  num::Tape tape;
  const num::Var v = soft_loss(tape.constant(diag), 3, 0.1);
  CHECK(v.value().item() == doctest::Approx(soft_loss(diag, 3, 0.1)).epsilon(1e-14));

  CHECK_THROWS_AS(soft_loss(diag, 7, 0.1), DomainError);
  CHECK_THROWS_AS(soft_loss(diag, 2, 0.0), DomainError);

  const auto top = top_k_smallest(std::vector<double>{0.5, 0.1, 0.5, 0.1}, 3);
  CHECK(top == std::vector<std::size_t>{1, 3, 0});
}

TEST_CASE("total loss") {
  num::Tape tape;
  const num::Var hard = tape.constant(Tensor::scalar(0.4));
  const num::Var soft = tape.constant(Tensor::scalar(2.5));
  CHECK(total_loss(hard, soft, 0.0).id() == hard.id());
  const double a = total_loss(hard, soft, 0.02).value().item();
  const double b = total_loss(hard, soft, 0.05).value().item();
  const double ab = total_loss(hard, soft, 0.07).value().item();
  CHECK(a + b - 0.4 == doctest::Approx(ab).epsilon(1e-15));
  CHECK_THROWS_AS(total_loss(hard, soft, -1.0), DomainError);
}

TEST_CASE("objective gradients match finite differences") {
  num::Rng rng(6);
  const std::size_t b = 3, k = 4, tp = 2, da = 2;
  num::ParameterSet params;
  params.add("cand", random_tensor({b * k * tp, da}, rng));
  const Tensor targets = random_tensor({b * tp, da}, rng);
  LossConfig cfg;
  cfg.distance = DistanceConfig::uniform(da);
  cfg.distance.weights = {1.3, 0.8};
  cfg.lambda_soft = 0.5;
  RsState state;
  state.eps_rs = 0.6;  // rejects a share of candidates
  cfg.freeze_threshold = true;
  const num::ScalarFunction f = [&](num::Tape&, const num::BoundParams& p) {
    return imle_objective(p["cand"], targets, b, k, cfg, state).total;
  };
  num::Tape probe;
  const StepLoss sl = imle_objective(probe.constant(params.get("cand")), targets, b, k, cfg, state);
  CHECK(sl.rejection_rate > 0.0);
  CHECK(sl.rejection_rate < 1.0);
  CHECK(num::check_gradients(f, params).max_rel_error() <= 1e-6);
}

TEST_CASE("batch quantile variance shrinks like 1/N") {
  num::Rng rng(7);
  auto variance_at = [&](std::size_t n) {
    std::vector<double> est;
    std::vector<double> draws(n);
    for (int rep = 0; rep < 300; ++rep) {
      for (double& x : draws) x = std::exp(rng.normal(-1.5, 0.7));
      est.push_back(num::quantile(draws, 0.275));
    }
    double mean = 0.0, var = 0.0;
    for (double e : est) mean += e / est.size();
    for (double e : est) var += (e - mean) * (e - mean) / (est.size() - 1);
    return var;
  };
  const double ratio = variance_at(512) / variance_at(4096);
  CHECK(ratio >= 4.0);
  CHECK(ratio <= 16.0);
}

TEST_CASE("distance bounds a kernel density estimate from below") {
  num::Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k = 1 + rng.below(8), dim = 1 + rng.below(4);
    const double sigma = rng.uniform(0.1, 2.0);
    std::vector<double> x(dim), c(k * dim);
    for (double& v : x) v = rng.normal();
    for (double& v : c) v = rng.normal();
    double best = std::numeric_limits<double>::infinity(), density = 0.0;
    const double norm = std::pow(2.0 * std::numbers::pi * sigma * sigma, -0.5 * dim);
    for (std::size_t j = 0; j < k; ++j) {
      double d2 = 0.0;
      for (std::size_t e = 0; e < dim; ++e) d2 += (x[e] - c[j * dim + e]) * (x[e] - c[j * dim + e]);
      best = std::min(best, d2);
      density += norm * std::exp(-d2 / (2 * sigma * sigma)) / static_cast<double>(k);
    }
    const double bound = -best / (2 * sigma * sigma) - std::log(static_cast<double>(k)) + std::log(norm);
    CHECK(std::log(density) >= bound - 1e-12);
  }
}

TEST_CASE("log rows round-trip doubles") {
  std::ostringstream out;
  write_log_header(out);
  write_log_row(out, {3, 0.1, 1.0 / 3.0, 0.2, 1e-4, 0.25, 0.03});
  CHECK(out.str() ==
        "step,hard,soft,total,eps_rs,rejection_rate,eps_tilde\n"
        "3,0.10000000000000001,0.33333333333333331,0.20000000000000001,0.0001,0.25,0.029999999999999999\n");
}
