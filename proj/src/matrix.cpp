#include "seqtag/matrix.hpp"

#include <algorithm>
#include <cmath>

#include "seqtag/error.hpp"

namespace seqtag {

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  Matrix m(r, c);
  std::size_t i = 0;
  for (const auto& row : rows) {
    if (row.size() != c) throw Error("Matrix::from_rows: ragged rows");
    std::copy(row.begin(), row.end(), m.row(i++).begin());
  }
  return m;
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Matrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void require_finite(const Matrix& m, std::string_view what) {
  if (!m.all_finite()) throw NumericError("non-finite value in " + std::string(what));
}

void add_vec_mat(std::span<const double> x, const Matrix& w, std::span<double> y) {
  const std::size_t cols = w.cols();
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    const auto wr = w.row(i);
    for (std::size_t j = 0; j < cols; ++j) y[j] += xi * wr[j];
  }
}

void add_mat_vec(const Matrix& w, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < w.rows(); ++i) {
    const auto wr = w.row(i);
    double acc = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) acc += wr[j] * x[j];
    y[i] += acc;
  }
}

void add_outer(std::span<const double> a, std::span<const double> b, Matrix& w) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double ai = a[i];
    if (ai == 0.0) continue;
    auto wr = w.row(i);
    for (std::size_t j = 0; j < b.size(); ++j) wr[j] += ai * b[j];
  }
}

}  // namespace seqtag
