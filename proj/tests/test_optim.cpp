#include <cmath>

#include "doctest.h"
#include "seqtag/error.hpp"
#include "seqtag/optim.hpp"
#include "seqtag/rng.hpp"

using namespace seqtag;

namespace {

Parameter scalar(double w) {
  Parameter p("w", 1, 1);
  p.value(0, 0) = w;
  return p;
}

// Iterates of f(w) = w^2 from w = w0.
std::vector<double> descend(OptimizerSettings s, int steps, double w0 = 1.0) {
  Parameter p = scalar(w0);
  Optimizer opt(s);
  std::vector<double> out;
  for (int i = 0; i < steps; ++i) {
    p.grad(0, 0) = 2.0 * p.value(0, 0);
    opt.step({&p});
    out.push_back(p.value(0, 0));
  }
  return out;
}

int steps_to_converge(OptimizerSettings s, int limit = 500) {
  const auto path = descend(s, limit);
  for (std::size_t i = 0; i < path.size(); ++i) {
    if (std::abs(path[i]) < 1e-2) return static_cast<int>(i) + 1;
  }
  return -1;
}

}  // namespace

TEST_CASE("SGD step") {
  Parameter p = scalar(1.0);
  p.grad(0, 0) = 2.0;
  Optimizer opt(OptimizerSettings::defaults(OptimizerKind::sgd));
  opt.step({&p}, 0.1);
  CHECK(p.value(0, 0) == doctest::Approx(0.8).epsilon(1e-15));
}

TEST_CASE("Adam first step") {
  Parameter p = scalar(0.0);
  p.grad(0, 0) = 0.5;
  Optimizer opt(OptimizerSettings::defaults(OptimizerKind::adam));
  opt.step({&p});
  CHECK(std::abs(p.value(0, 0) - (-0.001 * 0.5 / (0.5 + 1e-8))) < 1e-9);
}

TEST_CASE("Nadam and Adam differ on the second step") {
  OptimizerSettings adam = OptimizerSettings::defaults(OptimizerKind::adam);
  OptimizerSettings nadam = OptimizerSettings::defaults(OptimizerKind::nadam);
  adam.learning_rate = nadam.learning_rate = 0.002;
  const auto a = descend(adam, 2), n = descend(nadam, 2);
  // Two-step hand computation, f(w) = w^2 from w = 1, lr 0.002.
  CHECK(a[0] == doctest::Approx(0.99800000001).epsilon(1e-13));
  CHECK(a[1] == doctest::Approx(0.9960001053890366).epsilon(1e-13));
  CHECK(n[0] == doctest::Approx(0.9970526315936842).epsilon(1e-13));
  CHECK(n[1] == doctest::Approx(0.9947396597812361).epsilon(1e-13));
  CHECK(a[1] != n[1]);
}

TEST_CASE("non-positive learning rate is rejected") {
  Parameter p = scalar(1.0);
  Optimizer opt(OptimizerSettings::defaults(OptimizerKind::sgd));
  CHECK_THROWS_AS(opt.step({&p}, 0.0), Error);
  CHECK_THROWS_AS(opt.step({&p}, -1.0), Error);
}

TEST_CASE("frozen rows are untouched") {
  Parameter p("e", 2, 2);
  p.value.fill(1.0);
  p.grad.fill(1.0);
  p.frozen_rows = {true, false};
  for (auto kind : {OptimizerKind::sgd, OptimizerKind::adagrad, OptimizerKind::adadelta, OptimizerKind::rmsprop,
                    OptimizerKind::adam, OptimizerKind::nadam}) {
    Optimizer opt(OptimizerSettings::defaults(kind));
    opt.step({&p});
    CHECK(p.value(0, 0) == 1.0);
    CHECK(p.value(0, 1) == 1.0);
    CHECK(p.value(1, 0) < 1.0);
  }
}

TEST_CASE("optimizer steps are deterministic") {
  for (auto kind : {OptimizerKind::adagrad, OptimizerKind::adadelta, OptimizerKind::rmsprop, OptimizerKind::nadam}) {
    const auto s = OptimizerSettings::defaults(kind);
    CHECK(descend(s, 50) == descend(s, 50));
  }
}

TEST_CASE("optimizers descend a quadratic") {
  // SGD and Adadelta converge at their defaults. The adaptive methods with
  // small default rates move roughly lr per step and need a larger rate to
  // cover the distance in 500 steps.
  CHECK(steps_to_converge(OptimizerSettings::defaults(OptimizerKind::sgd)) > 0);
  CHECK(steps_to_converge(OptimizerSettings::defaults(OptimizerKind::adadelta)) > 0);
  for (auto [kind, lr] : {std::pair{OptimizerKind::adagrad, 0.1}, std::pair{OptimizerKind::rmsprop, 0.01},
                          std::pair{OptimizerKind::adam, 0.01}, std::pair{OptimizerKind::nadam, 0.01}}) {
    auto s = OptimizerSettings::defaults(kind);
    s.learning_rate = lr;
    CAPTURE(to_string(kind));
    CHECK(steps_to_converge(s) > 0);
  }
  for (auto kind : {OptimizerKind::adagrad, OptimizerKind::rmsprop, OptimizerKind::adam, OptimizerKind::nadam}) {
    const auto path = descend(OptimizerSettings::defaults(kind), 500);
    CAPTURE(to_string(kind));
    CHECK(std::abs(path.back()) < 1.0);
  }
}

TEST_CASE("clip example") {
  Matrix g = Matrix::from_rows({{2.0, -0.5}});
  apply_policy({&g}, {GradientPolicyKind::clip_elementwise, 1.0});
  CHECK(g == Matrix::from_rows({{1.0, -0.5}}));
  apply_policy({&g}, {GradientPolicyKind::clip_elementwise, 1.0});
  CHECK(g == Matrix::from_rows({{1.0, -0.5}}));
}

TEST_CASE("normalize examples") {
  Matrix g = Matrix::from_rows({{3.0, 4.0}});
  apply_policy({&g}, {GradientPolicyKind::normalize_l2, 1.0});
  CHECK(g(0, 0) == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(g(0, 1) == doctest::Approx(0.8).epsilon(1e-15));
  Matrix h = Matrix::from_rows({{3.0, 4.0}});
  apply_policy({&h}, {GradientPolicyKind::normalize_l2, 5.0});
  CHECK(h == Matrix::from_rows({{3.0, 4.0}}));
}

TEST_CASE("normalized norm is min(norm, tau) and normalization is idempotent") {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    Matrix a(3, 4), b(2, 5);
    const double scale = rng.uniform(0.01, 10.0);
    for (auto& v : a.values()) v = rng.uniform(-scale, scale);
    for (auto& v : b.values()) v = rng.uniform(-scale, scale);
    const double tau = rng.uniform(0.1, 5.0);
    const double before = global_l2_norm({&a, &b});
    apply_policy(std::vector<Matrix*>{&a, &b}, {GradientPolicyKind::normalize_l2, tau});
    CHECK(std::abs(global_l2_norm({&a, &b}) - std::min(before, tau)) < 1e-12);
    const Matrix keep_a = a, keep_b = b;
    apply_policy(std::vector<Matrix*>{&a, &b}, {GradientPolicyKind::normalize_l2, tau});
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a.values()[i] - keep_a.values()[i]) < 1e-12);
    for (std::size_t i = 0; i < b.size(); ++i) CHECK(std::abs(b.values()[i] - keep_b.values()[i]) < 1e-12);
  }
}

TEST_CASE("gradient policies reject bad input") {
  Matrix g = Matrix::from_rows({{1.0, std::nan("")}});
  CHECK_THROWS_AS(apply_policy({&g}, {GradientPolicyKind::clip_elementwise, 1.0}), NumericError);
  Matrix h = Matrix::from_rows({{1.0}});
  CHECK_THROWS_AS(apply_policy({&h}, {GradientPolicyKind::normalize_l2, 0.0}), ConfigError);
  CHECK_THROWS_AS(parse_gradient_policy_kind("scale"), ConfigError);
  CHECK(parse_gradient_policy_kind("normalize") == GradientPolicyKind::normalize_l2);
}

TEST_CASE("increased Adam learning-rate schedule") {
  const auto s = LrSchedule::adam_increased();
  CHECK(s.at(2) == 0.01);
  CHECK(s.at(5) == 0.005);
  CHECK(s.at(9) == 0.001);
  CHECK(s.at(1) == 0.01);
  CHECK(s.at(3) == 0.01);
  CHECK(s.at(4) == 0.005);
  CHECK(s.at(6) == 0.005);
  CHECK(s.at(7) == 0.001);
  CHECK(s.at(1000) == 0.001);
}

TEST_CASE("schedule validation") {
  CHECK_THROWS_AS(LrSchedule({{2, std::nullopt, 0.1}}), ConfigError);
  CHECK_THROWS_AS(LrSchedule({{1, 3, 0.1}}), ConfigError);
  CHECK_THROWS_AS(LrSchedule({{1, 3, 0.1}, {5, std::nullopt, 0.1}}), ConfigError);
  CHECK_THROWS_AS(LrSchedule({{1, std::nullopt, 0.0}}), ConfigError);
  CHECK_NOTHROW(LrSchedule({{1, 2, 0.1}, {3, std::nullopt, 0.01}}));
}

TEST_CASE("optimizer names") {
  for (auto kind : {OptimizerKind::sgd, OptimizerKind::adagrad, OptimizerKind::adadelta, OptimizerKind::rmsprop,
                    OptimizerKind::adam, OptimizerKind::nadam}) {
    CHECK(parse_optimizer_kind(to_string(kind)) == kind);
  }
  CHECK_THROWS_AS(parse_optimizer_kind("lbfgs"), ConfigError);
}
