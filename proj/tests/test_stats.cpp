#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "seqtag/error.hpp"
#include "seqtag/rng.hpp"
#include "seqtag/stats.hpp"

using namespace seqtag;

namespace {

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// One-way ANOVA F on |x - median| written out term by term.
double hand_brown_forsythe_f(const std::vector<std::vector<double>>& groups) {
  std::vector<std::vector<double>> z;
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& g : groups) {
    const double m = median_of(g);
    std::vector<double> d;
    for (double x : g) d.push_back(std::abs(x - m));
    for (double x : d) total += x;
    n += d.size();
    z.push_back(d);
  }
  const double grand = total / static_cast<double>(n);
  double between = 0.0, within = 0.0;
  for (const auto& d : z) {
    double s = 0.0;
    for (double x : d) s += x;
    const double gm = s / static_cast<double>(d.size());
    between += static_cast<double>(d.size()) * (gm - grand) * (gm - grand);
    for (double x : d) within += (x - gm) * (x - gm);
  }
  const double k = static_cast<double>(groups.size());
  return (between / (k - 1.0)) / (within / (static_cast<double>(n) - k));
}

double sse(const std::vector<std::pair<double, double>>& pts, double a, double b, double c) {
  double s = 0.0;
  for (auto [x, y] : pts) {
    const double e = y - (a * x * x + b * x + c);
    s += e * e;
  }
  return s;
}

}  // namespace

TEST_CASE("binomial sign test examples") {
  CHECK(std::abs(binomial_sign_test(9, 10) - 0.021484375) < 1e-12);
  CHECK(std::abs(binomial_sign_test(9, 10) - 0.02148) < 1e-5);
  CHECK(binomial_sign_test(1, 10) == doctest::Approx(0.021484375).epsilon(1e-12));
  CHECK(binomial_sign_test(5, 10) == doctest::Approx(1.0));
  CHECK(binomial_sign_test(0, 0) == 1.0);
  CHECK(binomial_sign_test(3, 17) == doctest::Approx(0.012725830078125).epsilon(1e-10));
  CHECK(binomial_sign_test(219, 230) == doctest::Approx(2.2838858323522388e-51).epsilon(1e-8));
  CHECK(binomial_sign_test(10, 10) == doctest::Approx(2.0 / 1024.0).epsilon(1e-12));
  CHECK_THROWS_AS(binomial_sign_test(11, 10), Error);
}

TEST_CASE("binomial sign test against exact enumeration") {
  for (std::size_t n = 1; n <= 30; ++n) {
    std::vector<double> pmf(n + 1);
    double c = 1.0;
    for (std::size_t k = 0; k <= n; ++k) {
      pmf[k] = c * std::pow(0.5, static_cast<double>(n));
      c = c * static_cast<double>(n - k) / static_cast<double>(k + 1);
    }
    for (std::size_t k = 0; k <= n; ++k) {
      double p = 0.0;
      for (double q : pmf) {
        if (q <= pmf[k] * (1 + 1e-7)) p += q;
      }
      CHECK(binomial_sign_test(k, n) == doctest::Approx(std::min(1.0, p)).epsilon(1e-10));
    }
  }
}

TEST_CASE("F distribution tail") {
  CHECK(f_survival(2.5, 3, 17) == doctest::Approx(0.09428280507894803).epsilon(1e-10));
  CHECK(f_survival(0.3, 1, 4) == doctest::Approx(0.6130111132661794).epsilon(1e-10));
  CHECK(f_survival(40, 2, 100) == doctest::Approx(1.723354985368031e-13).epsilon(1e-8));
  CHECK(f_survival(0.0, 2, 5) == 1.0);
  CHECK(incomplete_beta(2.5, 4.0, 0.3) == doctest::Approx(0.3521975859067672).epsilon(1e-10));
  CHECK(incomplete_beta(2.0, 3.0, 0.0) == 0.0);
  CHECK(incomplete_beta(2.0, 3.0, 1.0) == 1.0);
}

TEST_CASE("Brown-Forsythe matches the hand-evaluated statistic") {
  const std::vector<std::vector<double>> two{{.91, .88, .93, .90, .87, .95}, {.80, .97, .85, .99, .78, .92, .88}};
  const auto r = brown_forsythe(two);
  CHECK(std::abs(r.statistic - hand_brown_forsythe_f(two)) < 1e-6);
  CHECK(r.statistic == doctest::Approx(5.203204195513491).epsilon(1e-10));
  CHECK(r.p_value == doctest::Approx(0.04345566021305362).epsilon(1e-8));
  CHECK(r.df_between == 1.0);
  CHECK(r.df_within == 11.0);

  const std::vector<std::vector<double>> three{{1, 2, 4, 7}, {3, 3.5, 3, 9}, {0, 10, 5, 2.5}};
  const auto t = brown_forsythe(three);
  CHECK(t.statistic == doctest::Approx(hand_brown_forsythe_f(three)).epsilon(1e-12));
  CHECK(t.statistic == doctest::Approx(0.4782016348773842).epsilon(1e-10));
  CHECK(t.p_value == doctest::Approx(0.6347900898131432).epsilon(1e-8));
}

TEST_CASE("Brown-Forsythe edge cases") {
  CHECK_THROWS_AS(brown_forsythe({{1, 2, 3}}), Error);
  CHECK_THROWS_AS(brown_forsythe({{1, 2, 3}, {4}}), Error);
  const auto same = brown_forsythe({{1, 1, 1}, {2, 2, 2}});
  CHECK(same.statistic == 0.0);
  CHECK(same.p_value == 1.0);
  const auto spread = brown_forsythe({{1, 1, 1}, {0, 2, 4}});
  CHECK(spread.statistic == doctest::Approx(hand_brown_forsythe_f({{1, 1, 1}, {0, 2, 4}})));
  CHECK(spread.p_value > 0.0);
}

TEST_CASE("descriptive statistics") {
  CHECK(median({3, 1, 2}) == 2.0);
  CHECK(median({4, 1, 3, 2}) == 2.5);
  CHECK_THROWS_AS(median({}), Error);
  const std::vector<double> v{1, 2, 3, 4};
  CHECK(mean(v) == 2.5);
  CHECK(population_stddev(v) == doctest::Approx(std::sqrt(1.25)).epsilon(1e-15));
  const std::vector<double> one{7};
  CHECK(population_stddev(one) == 0.0);
}

TEST_CASE("poly_fit recovers a planted parabola") {
  const double a = -0.0004, b = 0.1, c = 0.3;
  std::vector<std::pair<double, double>> pts;
  for (double x = 25; x <= 300; x += 25) pts.emplace_back(x, a * x * x + b * x + c);
  const auto f = poly_fit(pts);
  CHECK(std::abs(f.a - a) < 1e-10);
  CHECK(std::abs(f.b - b) < 1e-10);
  CHECK(std::abs(f.c - c) < 1e-10);
  REQUIRE(f.x_opt);
  CHECK(*f.x_opt == doctest::Approx(-f.b / (2 * f.a)).epsilon(1e-14));
  CHECK(*f.x_opt == doctest::Approx(125.0).epsilon(1e-8));
  CHECK(f.gamma25 == doctest::Approx(625 * f.a).epsilon(1e-14));
  CHECK(f(*f.x_opt + 25) - f(*f.x_opt) == doctest::Approx(f.gamma25).epsilon(1e-8));
  CHECK(f.min_x == 25);
  CHECK(f.max_x == 300);
}

TEST_CASE("poly_fit vertex handling") {
  std::vector<std::pair<double, double>> up, far;
  for (double x = 0; x <= 10; x += 1) {
    up.emplace_back(x, x * x);
    far.emplace_back(x, -(x - 50) * (x - 50));
  }
  const auto u = poly_fit(up);
  CHECK_FALSE(u.x_opt);
  CHECK_FALSE(u.x_opt_out_of_range);
  const auto f = poly_fit(far);
  CHECK_FALSE(f.x_opt);
  CHECK(f.x_opt_out_of_range);
  CHECK_THROWS_AS(poly_fit({{1, 1}, {1, 2}, {2, 3}}), Error);
  CHECK_THROWS_AS(poly_fit({{1, 1}, {2, 2}}), Error);
}

TEST_CASE("poly_fit is least squares") {
  Rng rng(1);
  std::vector<std::pair<double, double>> pts;
  for (int i = 0; i < 60; ++i) {
    const double x = rng.uniform(25, 300);
    pts.emplace_back(x, 0.8 - 1e-5 * (x - 150) * (x - 150) + 0.02 * rng.normal());
  }
  const auto f = poly_fit(pts);
  const double best = sse(pts, f.a, f.b, f.c);
  CHECK(f.residual == doctest::Approx(best).epsilon(1e-9));
  for (int trial = 0; trial < 100; ++trial) {
    const double da = f.a * rng.uniform(-0.01, 0.01), db = f.b * rng.uniform(-0.01, 0.01),
                 dc = f.c * rng.uniform(-0.01, 0.01);
    CHECK(sse(pts, f.a + da, f.b + db, f.c + dc) >= best);
  }
}

TEST_CASE("poly_fit finds the optimum of a noisy parabola") {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const double peak = rng.uniform(100, 200);
    std::vector<std::pair<double, double>> pts;
    for (int i = 0; i < 400; ++i) {
      const double x = rng.uniform(25, 300);
      pts.emplace_back(x, 0.9 - 2e-5 * (x - peak) * (x - peak) + 0.005 * rng.normal());
    }
    const auto f = poly_fit(pts);
    REQUIRE(f.x_opt);
    CHECK(std::abs(*f.x_opt - peak) < 5.0);
  }
}
