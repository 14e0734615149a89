#include "trifuse/selfsup.hpp"

#include <cmath>
#include <iostream>

#include "trifuse/errors.hpp"
#include "trifuse/tape.hpp"

namespace trifuse {

DenseMatrix student_t_assign(const DenseMatrix& z, const Centroids& centroids) {
  Tape t;
  return t.value(t.student_t_assign(t.constant(z), t.constant(centroids.c), centroids.t));
}

DenseMatrix target_distribution(const DenseMatrix& q) {
  const std::size_t n = q.rows();
  const std::size_t k = q.cols();
  std::vector<double> f(k, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) f[j] += q(i, j);
  }
  for (std::size_t j = 0; j < k; ++j) {
    if (f[j] < 1e-12) {
      std::cerr << "target_distribution: soft cluster " << j
                << " underflowed (f=" << f[j] << "), flooring at 1e-12\n";
      f[j] = 1e-12;
    }
  }
  DenseMatrix p(n, k);
  for (std::size_t i = 0; i < n; ++i) {
    double row_sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      p(i, j) = q(i, j) * q(i, j) / f[j];
      row_sum += p(i, j);
    }
    for (std::size_t j = 0; j < k; ++j) p(i, j) /= row_sum;
  }
  p.ensure_finite("target_distribution");
  return p;
}

double kl_divergence(const DenseMatrix& p, const DenseMatrix& q) {
  if (!p.same_shape(q)) {
    throw validation_error("kl_divergence: shape mismatch " + p.shape_str() + " vs " +
                           q.shape_str());
  }
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double pi = p.values()[i];
    if (pi > 0.0) s += pi * std::log(pi / q.values()[i]);
  }
  if (!std::isfinite(s)) throw numeric_error("kl_divergence: non-finite value");
  return s;
}

DenseMatrix centroid_gradient(const DenseMatrix& z, const Centroids& centroids,
                              const DenseMatrix& p, const DenseMatrix& q) {
  const std::size_t n = z.rows();
  const std::size_t k = centroids.c.rows();
  const std::size_t d = z.cols();
  if (centroids.c.cols() != d || p.rows() != n || p.cols() != k || !p.same_shape(q)) {
    throw validation_error("centroid_gradient: inconsistent shapes");
  }
  const double t = centroids.t;
  DenseMatrix g(k, d);
  for (std::size_t j = 0; j < k; ++j) {
    for (std::size_t i = 0; i < n; ++i) {
      double dist = 0.0;
      for (std::size_t a = 0; a < d; ++a) {
        const double diff = z(i, a) - centroids.c(j, a);
        dist += diff * diff;
      }
      const double w = (p(i, j) - q(i, j)) / (1.0 + dist / t);
      for (std::size_t a = 0; a < d; ++a) {
        g(j, a) += w * (z(i, a) - centroids.c(j, a));
      }
    }
    for (std::size_t a = 0; a < d; ++a) g(j, a) *= -(t + 1.0) / t;
  }
  g.ensure_finite("centroid_gradient");
  return g;
}

std::vector<int> extract_labels(const DenseMatrix& q) {
  std::vector<int> labels(q.rows());
  for (std::size_t i = 0; i < q.rows(); ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < q.cols(); ++j) {
      if (q(i, j) > q(i, best)) best = j;
    }
    labels[i] = static_cast<int>(best);
  }
  return labels;
}

}  // namespace trifuse
