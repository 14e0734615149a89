#pragma once

#include <cstddef>
#include <tuple>
#include <vector>

#include "trifuse/dense.hpp"

namespace trifuse {

// Directed edges as parallel arrays, sorted by (dst, src). dst doubles as the
// grouping key for attention softmax.
struct EdgeList {
  std::vector<int> src;
  std::vector<int> dst;
  std::size_t size() const { return src.size(); }
};

// Compressed sparse row matrix; column indices sorted within each row.
class SparseCsr {
 public:
  SparseCsr() = default;
  SparseCsr(std::size_t rows, std::size_t cols, std::vector<std::size_t> row_ptr,
            std::vector<int> col_idx, std::vector<double> vals);

  // Duplicate coordinates are summed.
  static SparseCsr from_triplets(std::size_t rows, std::size_t cols,
                                 std::vector<std::tuple<int, int, double>> triplets);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t nnz() const { return vals_.size(); }

  const std::vector<std::size_t>& row_ptr() const { return row_ptr_; }
  const std::vector<int>& col_idx() const { return col_idx_; }
  const std::vector<double>& vals() const { return vals_; }

  DenseMatrix to_dense() const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::size_t> row_ptr_{0};
  std::vector<int> col_idx_;
  std::vector<double> vals_;
};

// s * x for CSR s and dense x.
DenseMatrix spmm(const SparseCsr& s, const DenseMatrix& x);
// s^T * x without materialising the transpose.
DenseMatrix spmm_t(const SparseCsr& s, const DenseMatrix& x);

}  // namespace trifuse
