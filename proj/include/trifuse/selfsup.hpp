#pragma once

#include <vector>

#include "trifuse/dense.hpp"

namespace trifuse {

// Cluster centers in embedding space plus the Student-t kernel's degrees of
// freedom. One centroid set serves both assignment distributions.
struct Centroids {
  DenseMatrix c;   // k x n_z
  double t = 1.0;  // > 0
};

// Row-normalized Student-t kernel: q_ij proportional to
// (1 + |z_i - c_j|^2 / t)^{-(t+1)/2}. Rows sum to 1, entries positive.
DenseMatrix student_t_assign(const DenseMatrix& z, const Centroids& centroids);

// Sharpened self-supervision target: p_ij = (q_ij^2 / f_j) / row sum, with
// column frequencies f_j = sum_i q_ij. Underflowed f_j are floored at 1e-12
// with a warning on stderr.
DenseMatrix target_distribution(const DenseMatrix& q);

// sum_ij p_ij * ln(p_ij / q_ij), natural log, 0*ln 0 := 0.
double kl_divergence(const DenseMatrix& p, const DenseMatrix& q);

// Analytic gradient of the clustering loss w.r.t. each centroid, with p
// treated as constant:
//   dL/dc_j = -((t+1)/t) * sum_i (1 + |z_i - c_j|^2 / t)^{-1}
//                                 * (p_ij - q_ij) * (z_i - c_j)
DenseMatrix centroid_gradient(const DenseMatrix& z, const Centroids& centroids,
                              const DenseMatrix& p, const DenseMatrix& q);

// Row argmax; exact ties go to the lowest cluster index.
std::vector<int> extract_labels(const DenseMatrix& q);

}  // namespace trifuse
