#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "trifuse/dense.hpp"
#include "trifuse/sparse.hpp"

namespace trifuse {

// Reverse-mode autodiff over DenseMatrix values. A tape is built for one
// forward pass, backward() runs once, then the tape is discarded. Non-matrix
// arguments (sparse operands, edge lists, scalars) enter ops as constants
// captured by the node, so gradients flow only through matrix inputs.
class Tape {
 public:
  using Var = int;

  // Gradient-tracked input (parameters, probe points).
  Var leaf(DenseMatrix value);
  // Input with no gradient tracking.
  Var constant(DenseMatrix value);

  const DenseMatrix& value(Var v) const;
  // Zeros if no gradient reached v. Valid after backward().
  const DenseMatrix& grad(Var v);
  std::size_t size() const { return nodes_.size(); }

  Var matmul(Var a, Var b);
  // a * b^T
  Var matmul_nt(Var a, Var b);
  Var spmm(const SparseCsr& s, Var x);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var scale(Var a, double c);
  Var add_row_bias(Var a, Var bias);
  Var leaky_relu(Var x, double slope);
  Var sigmoid(Var x);
  Var concat_cols(const std::vector<Var>& parts);

  // Per-edge attention pieces. scores/alpha are E x 1 columns aligned with
  // the edge list; groups are destination nodes.
  Var edge_scores(Var q, Var k, const EdgeList& edges, double scale_factor);
  Var edge_softmax(Var scores, const EdgeList& edges);
  Var edge_aggregate(Var alpha, Var v, const EdgeList& edges, std::size_t n_rows);

  // Soft cluster assignment with a Student-t kernel of dof t.
  Var student_t_assign(Var z, Var centroids, double t);
  // sum_ij p_ij * ln(p_ij / q_ij) with constant p; output 1x1.
  Var kl_const_p(const DenseMatrix& p, Var q);
  // Same, with gradients through both arguments.
  Var kl(Var p, Var q);
  // coeff * sum((a - target)^2); output 1x1.
  Var sq_diff_sum(Var a, const DenseMatrix& target, double coeff);
  // sum(w .* a); output 1x1. Contracts a matrix to a scalar probe.
  Var weighted_sum(Var a, const DenseMatrix& w);

  // Seeds the 1x1 root with 1 and accumulates gradients into every
  // reachable gradient-tracked node.
  void backward(Var root);

 private:
  struct Node {
    DenseMatrix value;
    bool requires_grad = false;
    std::function<void(Tape&, const DenseMatrix&)> backprop;
  };

  std::vector<Node> nodes_;
  std::vector<DenseMatrix> grads_;

  Var push(DenseMatrix value, bool requires_grad,
           std::function<void(Tape&, const DenseMatrix&)> backprop);
  bool tracked(Var v) const { return nodes_[static_cast<std::size_t>(v)].requires_grad; }
  void accumulate(Var v, const DenseMatrix& g);
  void check_var(Var v, const char* op) const;
};

}  // namespace trifuse
