#include <cmath>
#include <string>
#include <vector>

#include "doctest.h"
#include "prism/numerics/errors.hpp"
#include "prism/numerics/gradcheck.hpp"
#include "prism/numerics/ops.hpp"
#include "prism/numerics/reduce.hpp"
#include "prism/numerics/rng.hpp"

using namespace prism;
using namespace prism::num;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  rng.fill_uniform(t.data(), lo, hi);
  return t;
}

// Reference product, independent of the Eigen-backed kernel.
Tensor naive_matmul(const Tensor& a, const Tensor& b) {
  Tensor out(Shape{a.dim(0), b.dim(1)});
  for (std::size_t i = 0; i < a.dim(0); ++i)
    for (std::size_t j = 0; j < b.dim(1); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.dim(1); ++k) s += a.at(i, k) * b.at(k, j);
      out.at(i, j) = s;
    }
  return out;
}

}  // namespace

TEST_CASE("matmul identity and orthogonal rows") {
  Tape tape;
  const Var eye = tape.constant(Tensor::matrix({{1, 0}, {0, 1}}));
  const Var m = tape.constant(Tensor::matrix({{1, 2}, {3, 4}}));
  CHECK(matmul(eye, m).value() == Tensor::matrix({{1, 2}, {3, 4}}));

  const Var row = tape.constant(Tensor::matrix({{1, 0}}));
  const Var col = tape.constant(Tensor::matrix({{0}, {1}}));
  CHECK(matmul(row, col).value() == Tensor::matrix({{0}}));
}

TEST_CASE("matmul matches a naive triple loop") {
  Rng rng(11);
  const Tensor a = random_tensor({3, 4}, rng);
  const Tensor b = random_tensor({4, 2}, rng);
  Tape tape;
  const Tensor got = matmul(tape.constant(a), tape.constant(b)).value();
  const Tensor want = naive_matmul(a, b);
  for (std::size_t i = 0; i < got.size(); ++i) CHECK(std::abs(got[i] - want[i]) <= 1e-12);
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Tape tape;
  const Var a = tape.constant(Tensor(Shape{2, 3}));
  const Var b = tape.constant(Tensor(Shape{2, 2}));
  try {
    (void)matmul(a, b);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("(2, 3)") != std::string::npos);
    CHECK(msg.find("(2, 2)") != std::string::npos);
  }
}

TEST_CASE("elementwise examples") {
  Tape tape;
  CHECK(exp(tape.constant(Tensor::scalar(0.0))).value().item() == 1.0);
  const double eps = 1e-6;
  const Var x = tape.constant(Tensor::scalar(0.0));
  const Var charb = sqrt(add_scalar(square(x), eps * eps));
  CHECK(charb.value().item() == doctest::Approx(1e-6).epsilon(1e-12));
  CHECK(clamp_min(tape.constant(Tensor::scalar(-3.0)), 0.2).value().item() == 0.2);
}

TEST_CASE("non-finite outputs raise a numeric error naming the op") {
  Tape tape;
  const Var x = tape.constant(Tensor::scalar(-1.0));
  try {
    (void)log(x);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("'log'") != std::string::npos);
  }
  const Var zero = tape.constant(Tensor::scalar(0.0));
  CHECK_THROWS_AS(div(tape.constant(Tensor::scalar(1.0)), zero), NumericError);
}

TEST_CASE("broadcast rejects incompatible shapes") {
  Tape tape;
  const Var a = tape.constant(Tensor(Shape{2, 3}));
  CHECK_NOTHROW(add(a, tape.constant(Tensor(Shape{3}))));
  CHECK_NOTHROW(add(a, tape.constant(Tensor(Shape{1, 3}))));
  CHECK_NOTHROW(add(a, tape.constant(Tensor::scalar(1.0))));
  CHECK_THROWS_AS(add(a, tape.constant(Tensor(Shape{2}))), DimensionError);
}

TEST_CASE("reductions") {
  const std::vector<double> v{0, 1, 2, 3, 4};
  CHECK(quantile(v, 0.5) == 2.0);
  CHECK(quantile(v, 0.3) == doctest::Approx(1.2));

  const std::vector<double> w{0.3, 0.1, 0.1};
  const MinWithIndex m = min_with_index(w);
  CHECK(m.value == 0.1);
  CHECK(m.index == 1);

  const Tensor t = Tensor::matrix({{3, 1, 2}, {0, 5, 5}});
  CHECK(max_per_row(t) == Tensor::vector({3, 5}));
  CHECK(reduce_sum(t, 0) == Tensor::vector({3, 6, 7}));
  CHECK(reduce_mean(t, 1) == Tensor::vector({2, 10.0 / 3.0}));
  const MinWithIndices per_col = min_with_index(t, 0);
  CHECK(per_col.indices == std::vector<std::size_t>{1, 0, 0});
  CHECK(quantile(t, 0.5, 1) == Tensor::vector({2, 5}));
}

TEST_CASE("reduction domain errors") {
  const std::vector<double> empty;
  CHECK_THROWS_AS(quantile(empty, 0.5), DomainError);
  CHECK_THROWS_AS(min_with_index(empty), DomainError);
  const std::vector<double> v{1, 2};
  CHECK_THROWS_AS(quantile(v, 0.0), DomainError);
  CHECK_THROWS_AS(quantile(v, 1.0), DomainError);
  CHECK_THROWS_AS(reduce_sum(Tensor(Shape{2, 0}), 1), DomainError);
  CHECK_THROWS_AS(reduce_sum(Tensor(Shape{2, 2}), 2), DomainError);
}

TEST_CASE("Monte-Carlo quantile of uniform draws") {
  Rng rng(2024);
  std::vector<double> draws(10000);
  rng.fill_uniform(draws, 0.0, 1.0);
  CHECK(std::abs(quantile(draws, 0.3) - 0.3) <= 0.02);
}

TEST_CASE("quantile is monotone in q") {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> draws(1 + rng.below(40));
    rng.fill_normal(draws);
    double q1 = rng.uniform(0.01, 0.99), q2 = rng.uniform(0.01, 0.99);
    if (q1 > q2) std::swap(q1, q2);
    CHECK(quantile(draws, q1) <= quantile(draws, q2));
  }
}

TEST_CASE("backward on simple losses") {
  {
    Tape tape;
    const Var x = tape.leaf(Tensor::vector({0.5, -1.0, 2.0}).set_requires_grad());
    const Gradients g = tape.backward(sum(x));
    CHECK(g.of(x) == Tensor::vector({1, 1, 1}));
  }
  {
    Tape tape;
    const Var x = tape.leaf(Tensor::vector({1, 2}).set_requires_grad());
    const Gradients g = tape.backward(sum(mul(x, x)));
    CHECK(g.of(x) == Tensor::vector({2, 4}));
  }
}

TEST_CASE("backward contract errors") {
  Tape tape;
  const Var x = tape.leaf(Tensor::vector({1, 2}).set_requires_grad());
  CHECK_THROWS_AS(tape.backward(x), ContractError);
  const Var loss = sum(x);
  (void)tape.backward(loss);
  CHECK(tape.consumed());
  CHECK_THROWS_AS(tape.backward(loss), ContractError);
  CHECK_THROWS_AS(tape.constant(Tensor::scalar(1.0)), ContractError);
}

TEST_CASE("leaves without requires_grad never get gradients") {
  Tape tape;
  const Var x = tape.leaf(Tensor::vector({1, 2}).set_requires_grad());
  const Var c = tape.constant(Tensor::vector({3, 4}));
  const Var loss = sum(mul(x, c));
  const Gradients g = tape.backward(loss);
  CHECK(g.has(x));
  CHECK_FALSE(g.has(c));
  CHECK_THROWS_AS(g.of(c), ContractError);
  CHECK(g.of(x) == Tensor::vector({3, 4}));
  CHECK(tape.backward_visits() <= tape.size());
}

TEST_CASE("each node is visited once even with shared subexpressions") {
  Tape tape;
  const Var x = tape.leaf(Tensor::vector({1, 2, 3}).set_requires_grad());
  const Var y = exp(x);
  const Var loss = sum(add(mul(y, y), y));
  const Gradients g = tape.backward(loss);
  CHECK(tape.backward_visits() == tape.size());
  for (std::size_t i = 0; i < 3; ++i) {
    const double e = std::exp(static_cast<double>(i + 1));
    CHECK(g.of(x)[i] == doctest::Approx(2 * e * e + e));
  }
}

TEST_CASE("every differentiable op passes the finite-difference check") {
  Rng rng(99);
  ParameterSet params;
  params.add("a", random_tensor({3, 4}, rng));
  params.add("b", random_tensor({4, 2}, rng));
  params.add("c", random_tensor({3, 2}, rng, 0.5, 1.5));
  params.add("bias", random_tensor({2}, rng));
  params.add("gamma", random_tensor({4}, rng, 0.5, 1.5));
  params.add("beta", random_tensor({4}, rng));
  params.add("pos", random_tensor({3, 4}, rng, 0.5, 2.0));

  const std::vector<std::size_t> rows{2, 0, 2};
  const std::vector<std::size_t> flat{1, 5, 5, 0};
  const ScalarFunction f = [&](Tape&, const BoundParams& p) {
    const Var prod = linear(p["a"], p["b"], p["bias"]);                  // 3x2
    const Var t1 = div(mul(prod, p["c"]), add_scalar(p["c"], 0.3));      // mul, div, add_scalar
    const Var t2 = sub(tanh(t1), gelu(prod));                            // sub, tanh, gelu
    const Var t3 = add(exp(scale(t2, 0.5)), neg(square(prod)));          // exp, scale, neg, square
    const Var t4 = sqrt(add_scalar(square(t3), 1e-3));                   // sqrt
    const Var ln = layer_norm(p["a"], p["gamma"], p["beta"]);            // 3x4
    const Var lg = log(p["pos"]);
    const Var cat = concat_cols({t4, slice_cols(ln, 1, 3), lg});         // 3x8
    const Var g = gather_rows(cat, rows);
    const Var lse = logsumexp_rows(g);
    const Var r = reshape(cat, Shape{2, 12});
    const Var m = mean(sum(r, 0), 0);
    const Var picked = gather(g, flat);
    return add(add(sum(lse), m), mean(mul(picked, picked)));
  };
  const GradCheckReport report = check_gradients(f, params);
  for (const auto& e : report.entries) {
    INFO(e.name);
    CHECK(e.max_rel_error <= 1e-4);
  }
}

TEST_CASE("gradient check of a Charbonnier distance") {
  Rng rng(3);
  ParameterSet params;
  params.add("pred", random_tensor({4, 2}, rng));
  const Tensor target = random_tensor({4, 2}, rng);
  const ScalarFunction f = [&](Tape& tape, const BoundParams& p) {
    const Var diff = sub(p["pred"], tape.constant(target));
    const Var charb = sqrt(add_scalar(square(diff), 1e-12));
    return scale(sum(charb), 1.0 / 4.0);
  };
  const GradCheckReport report = check_gradients(f, params);
  CHECK(report.max_rel_error() <= 1e-6);
}

TEST_CASE("clamped regions report zero gradient and are flagged") {
  ParameterSet params;
  params.add("x", Tensor::vector({-3.0, 0.5, -1.0}));
  const ScalarFunction f = [](Tape&, const BoundParams& p) { return sum(clamp_min(p["x"], 0.2)); };
  const GradCheckReport report = check_gradients(f, params);
  const GradCheckEntry& e = report.entry("x");
  CHECK(e.boundary);
  CHECK(e.zero_gradient_count == 2);
  CHECK(e.max_rel_error <= 1e-8);
}

TEST_CASE("independent tapes over the same inputs agree bitwise") {
  Rng rng(1);
  const Tensor a = random_tensor({5, 3}, rng);
  const Tensor b = random_tensor({3, 3}, rng);
  auto run = [&] {
    Tape tape;
    const Var x = tape.leaf(Tensor(a).set_requires_grad());
    const Var loss = sum(tanh(matmul(x, tape.constant(b))));
    const Gradients g = tape.backward(loss);
    return std::make_pair(loss.value().item(), g.of(x));
  };
  const auto first = run();
  const auto second = run();
  CHECK(first.first == second.first);
  CHECK(first.second == second.second);
}

TEST_CASE("float32 mode rounds recorded values") {
  Tape tape(Precision::kFloat32);
  const Var x = tape.constant(Tensor::scalar(0.1));
  CHECK(x.value().item() == static_cast<double>(0.1f));
  CHECK(scale(x, 3.0).value().item() == static_cast<double>(static_cast<float>(3.0 * static_cast<double>(0.1f))));
}

TEST_CASE("named substreams are independent") {
  Rng a1 = Rng::substream(7, "latents");
  Rng b1 = Rng::substream(7, "shuffle");
  const double a_first = a1.normal();
  (void)b1.normal();
  Rng a2 = Rng::substream(7, "latents");
  CHECK(a2.normal() == a_first);
  Rng c = Rng::substream(7, "latents");
  const std::string saved = c.state();
  const double next = c.uniform();
  Rng d;
  d.restore(saved);
  CHECK(d.uniform() == next);
}
