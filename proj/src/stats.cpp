#include "seqtag/stats.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <set>

#include "seqtag/error.hpp"

namespace seqtag {

double median(std::vector<double> v) {
  if (v.empty()) throw Error("median of an empty sample");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
}

double mean(std::span<const double> v) {
  if (v.empty()) throw Error("mean of an empty sample");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double population_stddev(std::span<const double> v) {
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

double binomial_sign_test(std::size_t wins, std::size_t n) {
  if (wins > n) throw Error("binomial test: wins exceed trials");
  if (n == 0) return 1.0;
  const double dn = static_cast<double>(n);
  auto log_pmf = [&](std::size_t k) {
    const double dk = static_cast<double>(k);
    return std::lgamma(dn + 1) - std::lgamma(dk + 1) - std::lgamma(dn - dk + 1) - dn * std::log(2.0);
  };
  const double observed = log_pmf(wins);
  // Relative slack so outcomes equal in exact arithmetic are counted.
  const double limit = observed + 1e-7;
  double p = 0.0;
  for (std::size_t k = 0; k <= n; ++k) {
    const double lp = log_pmf(k);
    if (lp <= limit) p += std::exp(lp);
  }
  return std::min(1.0, p);
}

namespace {

// Continued fraction for the incomplete beta (modified Lentz).
double beta_cf(double a, double b, double x) {
  constexpr int kMaxIter = 500;
  constexpr double kEps = 1e-15;
  constexpr double kTiny = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double dm = m, m2 = 2.0 * m;
    double aa = dm * (b - dm) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + dm) * (qab + dm) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) return h;
  }
  throw NumericError("incomplete beta continued fraction did not converge");
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) throw Error("incomplete beta needs positive shape parameters");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double log_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_cf(a, b, x) / a;
  return 1.0 - front * beta_cf(b, a, 1.0 - x) / b;
}

double f_survival(double f, double d1, double d2) {
  if (std::isnan(f)) throw NumericError("F statistic is NaN");
  if (f <= 0.0) return 1.0;
  if (std::isinf(f)) return 0.0;
  return incomplete_beta(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f));
}

BrownForsythe brown_forsythe(const std::vector<std::vector<double>>& groups) {
  if (groups.size() < 2) throw Error("Brown-Forsythe test needs at least 2 groups");
  std::vector<std::vector<double>> z;
  std::size_t n = 0;
  for (const auto& g : groups) {
    if (g.size() < 2) throw Error("Brown-Forsythe test needs at least 2 values per group");
    const double med = median(g);
    std::vector<double> dev;
    for (double x : g) dev.push_back(std::abs(x - med));
    z.push_back(std::move(dev));
    n += g.size();
  }
  const std::size_t k = groups.size();
  std::vector<double> all;
  for (const auto& g : z) all.insert(all.end(), g.begin(), g.end());
  const double grand = mean(all);
  double between = 0.0, within = 0.0;
  for (const auto& g : z) {
    const double m = mean(g);
    between += static_cast<double>(g.size()) * (m - grand) * (m - grand);
    for (double x : g) within += (x - m) * (x - m);
  }
  BrownForsythe r;
  r.df_between = static_cast<double>(k - 1);
  r.df_within = static_cast<double>(n - k);
  const double num = between / r.df_between, den = within / r.df_within;
  if (den == 0.0) {
    r.statistic = num == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  } else {
    r.statistic = num / den;
  }
  r.p_value = f_survival(r.statistic, r.df_between, r.df_within);
  return r;
}

PolyFit poly_fit(const std::vector<std::pair<double, double>>& points) {
  std::set<double> distinct;
  for (const auto& [x, y] : points) {
    if (!std::isfinite(x) || !std::isfinite(y)) throw NumericError("poly_fit: non-finite point");
    distinct.insert(x);
  }
  if (distinct.size() < 3) throw Error("poly_fit needs at least 3 distinct x values");

  // Fit in z = (x - shift) / scale for conditioning, then map back.
  const double lo = *distinct.begin(), hi = *distinct.rbegin();
  const double shift = (lo + hi) / 2.0, scale = (hi - lo) / 2.0;
  std::array<double, 5> s{};  // sums of z^0..z^4
  std::array<double, 3> t{};  // sums of y z^0..z^2
  for (const auto& [x, y] : points) {
    const double z = (x - shift) / scale;
    double zp = 1.0;
    for (std::size_t p = 0; p < 5; ++p) {
      s[p] += zp;
      if (p < 3) t[p] += y * zp;
      zp *= z;
    }
  }
  // Unknowns ordered (C, B, A) for y = A z^2 + B z + C.
  std::array<std::array<double, 4>, 3> m{{{s[0], s[1], s[2], t[0]}, {s[1], s[2], s[3], t[1]}, {s[2], s[3], s[4], t[2]}}};
  for (std::size_t col = 0; col < 3; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < 3; ++r) {
      if (std::abs(m[r][col]) > std::abs(m[piv][col])) piv = r;
    }
    if (std::abs(m[piv][col]) < 1e-12 * s[0]) throw NumericError("poly_fit: rank-deficient normal equations");
    std::swap(m[col], m[piv]);
    for (std::size_t r = 0; r < 3; ++r) {
      if (r == col) continue;
      const double f = m[r][col] / m[col][col];
      for (std::size_t k = col; k < 4; ++k) m[r][k] -= f * m[col][k];
    }
  }
  const double C = m[0][3] / m[0][0], B = m[1][3] / m[1][1], A = m[2][3] / m[2][2];

  PolyFit fit;
  fit.a = A / (scale * scale);
  fit.b = B / scale - 2.0 * A * shift / (scale * scale);
  fit.c = A * shift * shift / (scale * scale) - B * shift / scale + C;
  fit.min_x = lo;
  fit.max_x = hi;
  fit.gamma25 = 625.0 * fit.a;
  if (fit.a < 0.0) {
    const double v = -fit.b / (2.0 * fit.a);
    if (v >= lo && v <= hi) {
      fit.x_opt = v;
    } else {
      fit.x_opt_out_of_range = true;
    }
  }
  for (const auto& [x, y] : points) fit.residual += (fit(x) - y) * (fit(x) - y);
  return fit;
}

}  // namespace seqtag
