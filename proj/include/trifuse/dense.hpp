#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "trifuse/errors.hpp"

namespace trifuse {

// Row-major dense matrix of doubles. All kernels that can overflow check
// their output for non-finite entries and throw numeric_error.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols);
  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  static DenseMatrix identity(std::size_t n);
  static DenseMatrix full(std::size_t rows, std::size_t cols, double value);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& at(std::size_t r, std::size_t c);
  double at(std::size_t r, std::size_t c) const;

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  bool same_shape(const DenseMatrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  std::string shape_str() const;
  bool all_finite() const;
  void ensure_finite(const std::string& label) const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// c = alpha * op(a) * op(b) + beta * c, row-major. Shapes are validated
// against op(a), op(b). Backed by BLAS dgemm when available.
void gemm(bool trans_a, bool trans_b, double alpha, const DenseMatrix& a,
          const DenseMatrix& b, double beta, DenseMatrix& c);

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);
// a * b^T without materialising the transpose.
DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b);
// a^T * b without materialising the transpose.
DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix transpose(const DenseMatrix& a);

DenseMatrix add(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix sub(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix scale(const DenseMatrix& a, double c);
DenseMatrix hadamard(const DenseMatrix& a, const DenseMatrix& b);
// Adds the 1 x cols bias row to every row of a.
DenseMatrix add_row_bias(const DenseMatrix& a, const DenseMatrix& bias);

// max(x, slope * x), applied entrywise; slope is the negative-side gain.
DenseMatrix leaky_relu(const DenseMatrix& x, double slope);
DenseMatrix leaky_relu_grad(const DenseMatrix& x, double slope);
// 1 / (1 + exp(-x)), entrywise, numerically safe for large |x|.
DenseMatrix sigmoid(const DenseMatrix& x);

// sum of squared entrywise differences (squared Frobenius distance).
double sq_frobenius_diff(const DenseMatrix& a, const DenseMatrix& b);
double frobenius_norm(const DenseMatrix& a);
double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b);

// Grouped softmax over a flat score vector: entry i belongs to groups[i] and
// is normalised against exactly the entries sharing its group id. Each group
// is shifted by its max before exponentiation.
std::vector<double> softmax_over_index_groups(const std::vector<double>& scores,
                                              const std::vector<int>& groups);

}  // namespace trifuse
