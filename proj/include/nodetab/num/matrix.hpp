#pragma once

#include <cassert>
#include <cstddef>
#include <memory>
#include <vector>

#include "nodetab/num/error.hpp"

namespace nodetab::num {

// Dense row-major matrix of doubles.  Storage is shared on copy; treat a
// matrix as immutable once it has been handed to another owner.
class Matrix {
public:
  Matrix() : rows_(0), cols_(0) {}
  Matrix(int rows, int cols)
      : rows_(rows), cols_(cols), data_(std::make_shared<std::vector<double>>(size_t(rows) * cols, 0.0)) {
    assert(rows >= 0 && cols >= 0);
  }
  Matrix(int rows, int cols, std::vector<double> values)
      : rows_(rows), cols_(cols), data_(std::make_shared<std::vector<double>>(std::move(values))) {
    assert(size_t(rows) * cols == data_->size());
  }

  static Matrix zeros(int rows, int cols) { return Matrix(rows, cols); }
  static Matrix full(int rows, int cols, double v) {
    Matrix m(rows, cols);
    std::fill(m.data_->begin(), m.data_->end(), v);
    return m;
  }
  static Matrix identity(int n) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) (*m.data_)[size_t(i) * n + i] = 1.0;
    return m;
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  size_t size() const { return size_t(rows_) * cols_; }
  bool empty() const { return size() == 0; }

  const double* data() const { return data_ ? data_->data() : nullptr; }
  double* mut_data() {
    ensure_unique();
    return data_->data();
  }

  double operator()(int r, int c) const {
    assert(r >= 0 && r < rows_ && c >= 0 && c < cols_);
    return (*data_)[size_t(r) * cols_ + c];
  }
  double& at(int r, int c) {
    ensure_unique();
    assert(r >= 0 && r < rows_ && c >= 0 && c < cols_);
    return (*data_)[size_t(r) * cols_ + c];
  }

  bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  Matrix clone() const {
    Matrix m(rows_, cols_);
    if (data_) *m.data_ = *data_;
    return m;
  }

  bool all_finite() const;
  // Throws errc::numeric when a non-finite entry is present.
  void check_finite(const char* where) const;

private:
  void ensure_unique() {
    if (!data_) data_ = std::make_shared<std::vector<double>>(size(), 0.0);
    else if (data_.use_count() > 1) data_ = std::make_shared<std::vector<double>>(*data_);
  }

  int rows_, cols_;
  std::shared_ptr<std::vector<double>> data_;
};

}  // namespace nodetab::num
