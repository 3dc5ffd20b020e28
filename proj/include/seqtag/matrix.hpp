#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace seqtag {

// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  void fill(double v);
  bool all_finite() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Throws NumericError naming `what` if any entry is NaN or Inf.
void require_finite(const Matrix& m, std::string_view what);

// A trainable tensor with its gradient buffer. Rows listed in `frozen_rows`
// never receive gradient (used for fixed pre-trained embedding rows).
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  std::vector<bool> frozen_rows;

  Parameter() = default;
  Parameter(std::string n, std::size_t rows, std::size_t cols)
      : name(std::move(n)), value(rows, cols), grad(rows, cols) {}

  bool row_trainable(std::size_t r) const {
    return frozen_rows.empty() || !frozen_rows[r];
  }
  void zero_grad() { grad.fill(0.0); }
};

// y += x * W for a row vector x (len W.rows()) and y (len W.cols()).
void add_vec_mat(std::span<const double> x, const Matrix& w, std::span<double> y);
// y += W * x for x of length W.cols(); y of length W.rows() (multiplies by W transposed
// when W is viewed as in x out).
void add_mat_vec(const Matrix& w, std::span<const double> x, std::span<double> y);
// W += a^T b (outer product, a len W.rows(), b len W.cols()).
void add_outer(std::span<const double> a, std::span<const double> b, Matrix& w);

}  // namespace seqtag
