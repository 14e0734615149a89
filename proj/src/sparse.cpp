#include "trifuse/sparse.hpp"

#include <algorithm>
#include <string>

#include "trifuse/errors.hpp"

namespace trifuse {

SparseCsr::SparseCsr(std::size_t rows, std::size_t cols, std::vector<std::size_t> row_ptr,
                     std::vector<int> col_idx, std::vector<double> vals)
    : rows_(rows), cols_(cols), row_ptr_(std::move(row_ptr)),
      col_idx_(std::move(col_idx)), vals_(std::move(vals)) {
  if (row_ptr_.size() != rows_ + 1 || row_ptr_.front() != 0 ||
      row_ptr_.back() != col_idx_.size() || col_idx_.size() != vals_.size()) {
    throw validation_error("SparseCsr: inconsistent CSR arrays");
  }
  for (std::size_t i = 0; i < rows_; ++i) {
    if (row_ptr_[i] > row_ptr_[i + 1]) {
      throw validation_error("SparseCsr: row_ptr not non-decreasing");
    }
    for (std::size_t p = row_ptr_[i]; p < row_ptr_[i + 1]; ++p) {
      if (col_idx_[p] < 0 || static_cast<std::size_t>(col_idx_[p]) >= cols_) {
        throw validation_error("SparseCsr: column index out of range");
      }
      if (p > row_ptr_[i] && col_idx_[p - 1] >= col_idx_[p]) {
        throw validation_error("SparseCsr: columns not strictly sorted in row " +
                               std::to_string(i));
      }
    }
  }
}

SparseCsr SparseCsr::from_triplets(std::size_t rows, std::size_t cols,
                                   std::vector<std::tuple<int, int, double>> triplets) {
  for (const auto& [r, c, v] : triplets) {
    if (r < 0 || static_cast<std::size_t>(r) >= rows || c < 0 ||
        static_cast<std::size_t>(c) >= cols) {
      throw validation_error("from_triplets: coordinate (" + std::to_string(r) + "," +
                             std::to_string(c) + ") out of range for " +
                             std::to_string(rows) + "x" + std::to_string(cols));
    }
  }
  std::sort(triplets.begin(), triplets.end(), [](const auto& a, const auto& b) {
    return std::tie(std::get<0>(a), std::get<1>(a)) <
           std::tie(std::get<0>(b), std::get<1>(b));
  });
  std::vector<std::size_t> row_ptr(rows + 1, 0);
  std::vector<int> col_idx;
  std::vector<double> vals;
  col_idx.reserve(triplets.size());
  vals.reserve(triplets.size());
  for (const auto& [r, c, v] : triplets) {
    col_idx.push_back(c);
    vals.push_back(v);
    row_ptr[static_cast<std::size_t>(r) + 1] += 1;
  }
  // Merge duplicates (sorted order puts them adjacent).
  std::vector<int> mcols;
  std::vector<double> mvals;
  std::vector<std::size_t> mrow_ptr(rows + 1, 0);
  std::size_t p = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t row_end = p + row_ptr[r + 1];
    while (p < row_end) {
      int c = col_idx[p];
      double v = vals[p];
      ++p;
      while (p < row_end && col_idx[p] == c) {
        v += vals[p];
        ++p;
      }
      mcols.push_back(c);
      mvals.push_back(v);
    }
    mrow_ptr[r + 1] = mcols.size();
  }
  return SparseCsr(rows, cols, std::move(mrow_ptr), std::move(mcols), std::move(mvals));
}

DenseMatrix SparseCsr::to_dense() const {
  DenseMatrix d(rows_, cols_);
  for (std::size_t i = 0; i < rows_; ++i) {
    for (std::size_t e = row_ptr_[i]; e < row_ptr_[i + 1]; ++e) {
      d(i, static_cast<std::size_t>(col_idx_[e])) = vals_[e];
    }
  }
  return d;
}

DenseMatrix spmm(const SparseCsr& s, const DenseMatrix& x) {
  if (s.cols() != x.rows()) {
    throw validation_error("spmm: " + std::to_string(s.rows()) + "x" +
                           std::to_string(s.cols()) + " vs " + x.shape_str());
  }
  DenseMatrix y(s.rows(), x.cols());
  const std::size_t n = x.cols();
  for (std::size_t i = 0; i < s.rows(); ++i) {
    double* yrow = y.data() + i * n;
    for (std::size_t e = s.row_ptr()[i]; e < s.row_ptr()[i + 1]; ++e) {
      const double v = s.vals()[e];
      const double* xrow = x.data() + static_cast<std::size_t>(s.col_idx()[e]) * n;
      for (std::size_t j = 0; j < n; ++j) yrow[j] += v * xrow[j];
    }
  }
  y.ensure_finite("spmm");
  return y;
}

DenseMatrix spmm_t(const SparseCsr& s, const DenseMatrix& x) {
  if (s.rows() != x.rows()) {
    throw validation_error("spmm_t: " + std::to_string(s.cols()) + "x" +
                           std::to_string(s.rows()) + " vs " + x.shape_str());
  }
  DenseMatrix y(s.cols(), x.cols());
  const std::size_t n = x.cols();
  for (std::size_t i = 0; i < s.rows(); ++i) {
    const double* xrow = x.data() + i * n;
    for (std::size_t e = s.row_ptr()[i]; e < s.row_ptr()[i + 1]; ++e) {
      const double v = s.vals()[e];
      double* yrow = y.data() + static_cast<std::size_t>(s.col_idx()[e]) * n;
      for (std::size_t j = 0; j < n; ++j) yrow[j] += v * xrow[j];
    }
  }
  y.ensure_finite("spmm_t");
  return y;
}

}  // namespace trifuse
