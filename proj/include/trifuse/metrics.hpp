#pragma once

#include <cstdint>
#include <vector>

#include "trifuse/dense.hpp"

namespace trifuse {

struct KmeansResult {
  DenseMatrix centroids;         // k x d
  std::vector<int> assignments;  // nearest centroid per point
  double wcss = 0.0;             // sum_i |x_i - centroid(assign_i)|^2
  std::vector<double> wcss_trace;  // one entry per Lloyd assignment step
};

// Lloyd's algorithm from distinct-random-data-point initialization, best of
// `restarts` restarts by wcss. Restart r draws from a stream forked from
// `seed` by r, so prefixes of the restart sequence are reproducible. Empty
// clusters are repaired by stealing the point farthest from its centroid.
// Assignment ties go to the lowest centroid index.
KmeansResult kmeans(const DenseMatrix& x, std::size_t k, std::size_t restarts = 20,
                    std::size_t max_iters = 300, std::uint64_t seed = 0);

// Fraction correct under the optimal one-to-one cluster-to-class matching
// (contingency padded square; among ties the lexicographically smallest
// assignment vector is used).
double clustering_accuracy(const std::vector<int>& pred, const std::vector<int>& truth);

// Mutual information normalized by the arithmetic mean of the two label
// entropies. Partitions identical up to relabeling give exactly 1.0; a
// single-class side gives exactly 0.0.
double nmi(const std::vector<int>& pred, const std::vector<int>& truth);

// Pair-counting adjusted Rand index, computed in integer arithmetic up to
// the final division. A degenerate (zero) denominator is defined as 1.0.
double ari(const std::vector<int>& pred, const std::vector<int>& truth);

// Applies the accuracy-optimal cluster-to-class mapping, then averages
// per-class F1 over the observed truth classes; a class never predicted
// contributes its natural F1 of 0.
double macro_f1(const std::vector<int>& pred, const std::vector<int>& truth);

struct MetricsReport {
  double acc = 0.0;
  double nmi = 0.0;
  double ari = 0.0;
  double f1 = 0.0;
};

MetricsReport evaluate_all(const std::vector<int>& pred, const std::vector<int>& truth);

}  // namespace trifuse
