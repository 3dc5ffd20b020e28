#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace seqtag {

double median(std::vector<double> values);
double mean(std::span<const double> values);
// Population standard deviation (divides by n).
double population_stddev(std::span<const double> values);

// Exact two-sided binomial test against p = 0.5: sums the probabilities of all
// outcomes no more likely than `wins`. n = 0 gives 1.
double binomial_sign_test(std::size_t wins, std::size_t n);

// Regularized incomplete beta I_x(a, b).
double incomplete_beta(double a, double b, double x);
// Upper tail P(F > f) of the F(d1, d2) distribution.
double f_survival(double f, double d1, double d2);

struct BrownForsythe {
  double statistic = 0.0;
  double p_value = 1.0;
  double df_between = 0.0;
  double df_within = 0.0;
};

// One-way ANOVA on absolute deviations from each group's median. Needs at
// least 2 groups of at least 2 values each.
BrownForsythe brown_forsythe(const std::vector<std::vector<double>>& groups);

struct PolyFit {
  double a = 0.0, b = 0.0, c = 0.0;  // p(x) = a x^2 + b x + c
  std::optional<double> x_opt;       // -b / 2a when a < 0 and inside the data range
  bool x_opt_out_of_range = false;   // a < 0 but the vertex lies outside the data
  double gamma25 = 0.0;              // p(x_opt + 25) - p(x_opt) = 625 a
  double residual = 0.0;             // sum of squared errors
  double min_x = 0.0, max_x = 0.0;

  double operator()(double x) const { return (a * x + b) * x + c; }
};

// Least-squares quadratic through (x, y) points; needs 3 distinct x values.
PolyFit poly_fit(const std::vector<std::pair<double, double>>& points);

}  // namespace seqtag
