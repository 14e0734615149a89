#include "trifuse/dense.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#ifdef TRIFUSE_HAVE_CBLAS
#include <cblas.h>
#endif

namespace trifuse {

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), data_(std::move(values)) {
  if (data_.size() != rows * cols) {
    throw validation_error("DenseMatrix: " + std::to_string(data_.size()) +
                           " values for shape " + std::to_string(rows) + "x" +
                           std::to_string(cols));
  }
}

DenseMatrix DenseMatrix::identity(std::size_t n) {
  DenseMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

DenseMatrix DenseMatrix::full(std::size_t rows, std::size_t cols, double value) {
  DenseMatrix m(rows, cols);
  std::fill(m.data_.begin(), m.data_.end(), value);
  return m;
}

double& DenseMatrix::at(std::size_t r, std::size_t c) {
  if (r >= rows_ || c >= cols_) {
    throw validation_error("DenseMatrix::at(" + std::to_string(r) + "," +
                           std::to_string(c) + ") out of range for " + shape_str());
  }
  return data_[r * cols_ + c];
}

double DenseMatrix::at(std::size_t r, std::size_t c) const {
  return const_cast<DenseMatrix*>(this)->at(r, c);
}

std::string DenseMatrix::shape_str() const {
  return std::to_string(rows_) + "x" + std::to_string(cols_);
}

bool DenseMatrix::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void DenseMatrix::ensure_finite(const std::string& label) const {
  if (!all_finite()) {
    throw numeric_error(label + ": non-finite entry in " + shape_str() + " result");
  }
}

namespace {

void check_inner(const char* op, std::size_t a_rows, std::size_t a_cols,
                 std::size_t b_rows, std::size_t b_cols) {
  if (a_cols != b_rows) {
    std::ostringstream msg;
    msg << op << ": inner dimensions " << a_rows << "x" << a_cols << " vs "
        << b_rows << "x" << b_cols;
    throw validation_error(msg.str());
  }
}

#ifndef TRIFUSE_HAVE_CBLAS
// Fallback kernel: blocked i-k-j loop, decent cache behaviour without BLAS.
void gemm_fallback(bool trans_a, bool trans_b, double alpha, const DenseMatrix& a,
                   const DenseMatrix& b, double beta, DenseMatrix& c) {
  const std::size_t m = c.rows();
  const std::size_t n = c.cols();
  const std::size_t kk = trans_a ? a.rows() : a.cols();
  for (double& v : c.values()) v *= beta;
  auto a_at = [&](std::size_t i, std::size_t k) {
    return trans_a ? a(k, i) : a(i, k);
  };
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t k = 0; k < kk; ++k) {
      const double aik = alpha * a_at(i, k);
      if (aik == 0.0) continue;
      if (!trans_b) {
        const double* brow = b.data() + k * n;
        double* crow = c.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
      } else {
        double* crow = c.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += aik * b(j, k);
      }
    }
  }
}
#endif

}  // namespace

void gemm(bool trans_a, bool trans_b, double alpha, const DenseMatrix& a,
          const DenseMatrix& b, double beta, DenseMatrix& c) {
  const std::size_t m = trans_a ? a.cols() : a.rows();
  const std::size_t k = trans_a ? a.rows() : a.cols();
  const std::size_t kb = trans_b ? b.cols() : b.rows();
  const std::size_t n = trans_b ? b.rows() : b.cols();
  check_inner("gemm", m, k, kb, n);
  if (c.rows() != m || c.cols() != n) {
    throw validation_error("gemm: output is " + c.shape_str() + ", expected " +
                           std::to_string(m) + "x" + std::to_string(n));
  }
  if (m == 0 || n == 0) return;
  if (k == 0) {
    for (double& v : c.values()) v *= beta;
    return;
  }
#ifdef TRIFUSE_HAVE_CBLAS
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, static_cast<int>(m),
              static_cast<int>(n), static_cast<int>(k), alpha, a.data(),
              static_cast<int>(a.cols()), b.data(), static_cast<int>(b.cols()),
              beta, c.data(), static_cast<int>(c.cols()));
#else
  gemm_fallback(trans_a, trans_b, alpha, a, b, beta, c);
#endif
  c.ensure_finite("gemm");
}

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  check_inner("matmul", a.rows(), a.cols(), b.rows(), b.cols());
  DenseMatrix c(a.rows(), b.cols());
  gemm(false, false, 1.0, a, b, 0.0, c);
  return c;
}

DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b) {
  check_inner("matmul_nt", a.rows(), a.cols(), b.cols(), b.rows());
  DenseMatrix c(a.rows(), b.rows());
  gemm(false, true, 1.0, a, b, 0.0, c);
  return c;
}

DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b) {
  check_inner("matmul_tn", a.cols(), a.rows(), b.rows(), b.cols());
  DenseMatrix c(a.cols(), b.cols());
  gemm(true, false, 1.0, a, b, 0.0, c);
  return c;
}

DenseMatrix transpose(const DenseMatrix& a) {
  DenseMatrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  }
  return t;
}

namespace {

void check_same_shape(const char* op, const DenseMatrix& a, const DenseMatrix& b) {
  if (!a.same_shape(b)) {
    throw validation_error(std::string(op) + ": shape mismatch " + a.shape_str() +
                           " vs " + b.shape_str());
  }
}

}  // namespace

DenseMatrix add(const DenseMatrix& a, const DenseMatrix& b) {
  check_same_shape("add", a, b);
  DenseMatrix c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c.values()[i] += b.values()[i];
  return c;
}

DenseMatrix sub(const DenseMatrix& a, const DenseMatrix& b) {
  check_same_shape("sub", a, b);
  DenseMatrix c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c.values()[i] -= b.values()[i];
  return c;
}

DenseMatrix scale(const DenseMatrix& a, double c) {
  DenseMatrix out = a;
  for (double& v : out.values()) v *= c;
  return out;
}

DenseMatrix hadamard(const DenseMatrix& a, const DenseMatrix& b) {
  check_same_shape("hadamard", a, b);
  DenseMatrix c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c.values()[i] *= b.values()[i];
  return c;
}

DenseMatrix add_row_bias(const DenseMatrix& a, const DenseMatrix& bias) {
  if (bias.rows() != 1 || bias.cols() != a.cols()) {
    throw validation_error("add_row_bias: bias is " + bias.shape_str() +
                           ", expected 1x" + std::to_string(a.cols()));
  }
  DenseMatrix c = a;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* row = c.data() + i * a.cols();
    for (std::size_t j = 0; j < a.cols(); ++j) row[j] += bias(0, j);
  }
  return c;
}

DenseMatrix leaky_relu(const DenseMatrix& x, double slope) {
  DenseMatrix y = x;
  for (double& v : y.values()) {
    if (v < 0.0) v *= slope;
  }
  return y;
}

DenseMatrix leaky_relu_grad(const DenseMatrix& x, double slope) {
  // Subgradient at exactly 0 is the slope.
  DenseMatrix g(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) {
    g.values()[i] = x.values()[i] <= 0.0 ? slope : 1.0;
  }
  return g;
}

DenseMatrix sigmoid(const DenseMatrix& x) {
  // Clamp into the open interval: exp underflow would otherwise round the
  // output to exactly 0 or 1 for |x| beyond ~37.
  const double lo = std::numeric_limits<double>::min();
  const double hi = 1.0 - std::numeric_limits<double>::epsilon() / 2.0;
  DenseMatrix y = x;
  for (double& v : y.values()) {
    if (v >= 0.0) {
      v = 1.0 / (1.0 + std::exp(-v));
    } else {
      const double e = std::exp(v);
      v = e / (1.0 + e);
    }
    v = std::min(hi, std::max(lo, v));
  }
  return y;
}

double sq_frobenius_diff(const DenseMatrix& a, const DenseMatrix& b) {
  check_same_shape("sq_frobenius_diff", a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.values()[i] - b.values()[i];
    s += d * d;
  }
  if (!std::isfinite(s)) throw numeric_error("sq_frobenius_diff: non-finite sum");
  return s;
}

double frobenius_norm(const DenseMatrix& a) {
  double s = 0.0;
  for (double v : a.values()) s += v * v;
  return std::sqrt(s);
}

double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b) {
  check_same_shape("max_abs_diff", a, b);
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
  }
  return m;
}

std::vector<double> softmax_over_index_groups(const std::vector<double>& scores,
                                              const std::vector<int>& groups) {
  if (scores.size() != groups.size()) {
    throw validation_error("softmax_over_index_groups: " + std::to_string(scores.size()) +
                           " scores vs " + std::to_string(groups.size()) + " group ids");
  }
  int max_group = -1;
  for (int g : groups) {
    if (g < 0) throw validation_error("softmax_over_index_groups: negative group id");
    max_group = std::max(max_group, g);
  }
  std::vector<double> group_max(static_cast<std::size_t>(max_group + 1),
                                -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    group_max[groups[i]] = std::max(group_max[groups[i]], scores[i]);
  }
  std::vector<double> group_sum(static_cast<std::size_t>(max_group + 1), 0.0);
  std::vector<double> out(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out[i] = std::exp(scores[i] - group_max[groups[i]]);
    group_sum[groups[i]] += out[i];
  }
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out[i] /= group_sum[groups[i]];
    if (!std::isfinite(out[i])) {
      throw numeric_error("softmax_over_index_groups: non-finite weight");
    }
  }
  return out;
}

}  // namespace trifuse
