// Copyright 2026 The LASP Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef LASP_MATRIX_H_
#define LASP_MATRIX_H_

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace lasp {

// Dense row-major matrix of doubles. The storage length always equals
// rows() * cols().
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  // Builds a matrix from nested row lists; all rows must have equal length.
  static Matrix FromRows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix Identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double &operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  const std::vector<double> &storage() const { return data_; }

  // Copies of contiguous row / column ranges.
  Matrix row_block(std::size_t first, std::size_t count) const;
  Matrix col_block(std::size_t first, std::size_t count) const;

  // "rows x cols", used in error messages.
  std::string shape_string() const;

  bool same_shape(const Matrix &other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  friend bool operator==(const Matrix &a, const Matrix &b) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Standard product. Each entry accumulates over the shared dimension in
// ascending order, so results are reproducible bit-for-bit.
Matrix matmul(const Matrix &a, const Matrix &b);

Matrix transpose(const Matrix &a);

// Elementwise product.
Matrix hadamard(const Matrix &a, const Matrix &b);

// diag(w) * a without materializing the diagonal.
Matrix row_scale(const Matrix &a, std::span<const double> w);

Matrix add(const Matrix &a, const Matrix &b);
Matrix subtract(const Matrix &a, const Matrix &b);
Matrix scale(const Matrix &a, double s);

// In-place a += s * b.
void axpy(double s, const Matrix &b, Matrix &a);

// Vertical / horizontal concatenation.
Matrix vstack(std::span<const Matrix> parts);
Matrix hstack(std::span<const Matrix> parts);

double max_abs(const Matrix &a);
double max_abs_diff(const Matrix &a, const Matrix &b);

// Max-norm relative error ||a - ref||_inf / ||ref||_inf. Falls back to the
// absolute error when ref is identically zero.
double relative_error(const Matrix &a, const Matrix &ref);

bool all_finite(const Matrix &a);

}  // namespace lasp

#endif  // LASP_MATRIX_H_
