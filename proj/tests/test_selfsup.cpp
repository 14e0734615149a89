#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "trifuse/dense.hpp"
#include "trifuse/rng.hpp"
#include "trifuse/selfsup.hpp"
#include "trifuse/tape.hpp"

using namespace trifuse;

namespace {

DenseMatrix mat(std::size_t r, std::size_t c, std::vector<double> v) {
  return DenseMatrix(r, c, std::move(v));
}

DenseMatrix random_rows(std::size_t r, std::size_t c, Rng& rng) {
  DenseMatrix m(r, c);
  for (double& v : m.values()) v = rng.normal();
  return m;
}

// Random row-stochastic matrix with strictly positive entries.
DenseMatrix random_stochastic(std::size_t r, std::size_t c, Rng& rng) {
  DenseMatrix m(r, c);
  for (std::size_t i = 0; i < r; ++i) {
    double tot = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      m(i, j) = 0.05 + rng.uniform();
      tot += m(i, j);
    }
    for (std::size_t j = 0; j < c; ++j) m(i, j) /= tot;
  }
  return m;
}

}  // namespace

TEST_CASE("equidistant point splits evenly between two centroids") {
  Centroids cents{mat(2, 2, {1, 0, -1, 0}), 1.0};
  const DenseMatrix q = student_t_assign(mat(1, 2, {0, 0}), cents);
  CHECK(q(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(q(0, 1) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("t=1 kernel with squared distances 1 and 3") {
  // (1+1)^-1 = 1/2 and (1+3)^-1 = 1/4 normalize to 2/3, 1/3.
  Centroids cents{mat(2, 1, {1.0, -std::sqrt(3.0)}), 1.0};
  const DenseMatrix q = student_t_assign(mat(1, 1, {0.0}), cents);
  CHECK(q(0, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
  CHECK(q(0, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
}

TEST_CASE("point on a centroid with the other far away") {
  Centroids cents{mat(2, 1, {0.0, 1000.0}), 1.0};
  const DenseMatrix q = student_t_assign(mat(1, 1, {0.0}), cents);
  CHECK(std::abs(q(0, 0) - 1.0) < 1e-5);
}

TEST_CASE("rows sum to 1 and entries stay positive") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    Centroids cents{random_rows(4, 3, rng), trial % 2 == 0 ? 1.0 : 2.5};
    const DenseMatrix q = student_t_assign(random_rows(6, 3, rng), cents);
    for (std::size_t i = 0; i < q.rows(); ++i) {
      double tot = 0.0;
      for (std::size_t j = 0; j < q.cols(); ++j) {
        CHECK(q(i, j) > 0.0);
        tot += q(i, j);
      }
      CHECK(std::abs(tot - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("target of a single row reproduces that row") {
  // With one row the frequency division cancels against itself.
  const DenseMatrix p = target_distribution(mat(1, 2, {0.8, 0.2}));
  CHECK(p(0, 0) == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(p(0, 1) == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("target hand case with uneven column frequencies") {
  const DenseMatrix p = target_distribution(mat(2, 2, {0.9, 0.1, 0.6, 0.4}));
  CHECK(p(0, 0) == doctest::Approx(27.0 / 28.0).epsilon(1e-12));
  CHECK(p(0, 1) == doctest::Approx(1.0 / 28.0).epsilon(1e-12));
  CHECK(p(1, 0) == doctest::Approx(3.0 / 7.0).epsilon(1e-12));
  CHECK(p(1, 1) == doctest::Approx(4.0 / 7.0).epsilon(1e-12));
}

TEST_CASE("uniform assignments are a fixed point of the target") {
  const DenseMatrix q(3, 4, std::vector<double>(12, 0.25));
  const DenseMatrix p = target_distribution(q);
  for (double v : p.values()) CHECK(v == doctest::Approx(0.25).epsilon(1e-14));
}

TEST_CASE("one-hot assignments are an exact fixed point of the target") {
  const DenseMatrix q = mat(3, 2, {1, 0, 0, 1, 1, 0});
  const DenseMatrix p = target_distribution(q);
  CHECK(max_abs_diff(p, q) == 0.0);
}

TEST_CASE("target floors an underflowed column frequency") {
  // Column 1 never receives mass; the floored frequency must not produce
  // NaNs and the row renormalization must still give a distribution.
  const DenseMatrix p = target_distribution(mat(2, 2, {1, 0, 1, 0}));
  CHECK(p(0, 0) == 1.0);
  CHECK(p(0, 1) == 0.0);
  CHECK(p(1, 0) == 1.0);
  CHECK(p(1, 1) == 0.0);
}

TEST_CASE("target rows sum to 1 on random inputs") {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const DenseMatrix p = target_distribution(random_stochastic(5, 3, rng));
    for (std::size_t i = 0; i < p.rows(); ++i) {
      double tot = 0.0;
      for (std::size_t j = 0; j < p.cols(); ++j) tot += p(i, j);
      CHECK(std::abs(tot - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("kl divergence hand values") {
  CHECK(std::abs(kl_divergence(mat(1, 2, {1, 0}), mat(1, 2, {0.5, 0.5})) -
                 std::log(2.0)) < 1e-15);
  const DenseMatrix p = mat(2, 2, {0.3, 0.7, 0.9, 0.1});
  CHECK(kl_divergence(p, p) == 0.0);
}

TEST_CASE("kl divergence is nonnegative on random distribution pairs") {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const DenseMatrix p = random_stochastic(4, 3, rng);
    const DenseMatrix q = random_stochastic(4, 3, rng);
    CHECK(kl_divergence(p, q) >= -1e-12);
  }
}

TEST_CASE("centroid gradient vanishes when target equals assignment") {
  Rng rng(6);
  const DenseMatrix z = random_rows(5, 3, rng);
  Centroids cents{random_rows(2, 3, rng), 1.0};
  const DenseMatrix q = student_t_assign(z, cents);
  const DenseMatrix g = centroid_gradient(z, cents, q, q);
  for (double v : g.values()) CHECK(v == 0.0);
}

TEST_CASE("centroid gradient vanishes when centroids sit on the points") {
  const DenseMatrix z = mat(1, 2, {1.0, 1.0});
  Centroids cents{mat(2, 2, {1, 1, 1, 1}), 1.0};
  const DenseMatrix q = student_t_assign(z, cents);
  const DenseMatrix g = centroid_gradient(z, cents, mat(1, 2, {0.3, 0.7}), q);
  for (double v : g.values()) CHECK(v == 0.0);
}

TEST_CASE("centroid gradient matches central finite differences") {
  Rng rng(7);
  const double h = 1e-5;
  for (int trial = 0; trial < 10; ++trial) {
    const double t = trial % 2 == 0 ? 1.0 : 2.5;
    const DenseMatrix z = random_rows(6, 3, rng);
    Centroids cents{random_rows(4, 3, rng), t};
    const DenseMatrix q = student_t_assign(z, cents);
    const DenseMatrix p = target_distribution(q);
    const DenseMatrix analytic = centroid_gradient(z, cents, p, q);

    DenseMatrix fd(4, 3);
    for (std::size_t j = 0; j < 4; ++j) {
      for (std::size_t d = 0; d < 3; ++d) {
        Centroids up = cents;
        Centroids dn = cents;
        up.c(j, d) += h;
        dn.c(j, d) -= h;
        const double lp = kl_divergence(p, student_t_assign(z, up));
        const double lm = kl_divergence(p, student_t_assign(z, dn));
        fd(j, d) = (lp - lm) / (2.0 * h);
      }
    }
    double max_a = 0.0, max_f = 0.0, max_d = 0.0;
    for (std::size_t idx = 0; idx < fd.values().size(); ++idx) {
      max_a = std::max(max_a, std::abs(analytic.values()[idx]));
      max_f = std::max(max_f, std::abs(fd.values()[idx]));
      max_d = std::max(max_d, std::abs(analytic.values()[idx] - fd.values()[idx]));
    }
    CHECK(max_d / std::max({max_a, max_f, 1e-12}) <= 1e-5);
  }
}

TEST_CASE("centroid gradient matches the tape") {
  Rng rng(8);
  const DenseMatrix z = random_rows(5, 2, rng);
  Centroids cents{random_rows(3, 2, rng), 1.0};
  const DenseMatrix q = student_t_assign(z, cents);
  const DenseMatrix p = target_distribution(q);
  const DenseMatrix analytic = centroid_gradient(z, cents, p, q);

  Tape tape;
  Tape::Var cv = tape.leaf(cents.c);
  Tape::Var qv = tape.student_t_assign(tape.constant(z), cv, cents.t);
  tape.backward(tape.kl_const_p(p, qv));
  CHECK(max_abs_diff(tape.grad(cv), analytic) < 1e-12);
}

TEST_CASE("labels are the row argmax with ties to the lowest index") {
  const DenseMatrix q =
      mat(3, 3, {0.2, 0.5, 0.3, 0.4, 0.4, 0.2, 0.1, 0.2, 0.7});
  const std::vector<int> labels = extract_labels(q);
  REQUIRE(labels.size() == 3);
  CHECK(labels[0] == 1);
  CHECK(labels[1] == 0);
  CHECK(labels[2] == 2);
}

TEST_CASE("labels are invariant under monotone transforms of rows") {
  Rng rng(9);
  DenseMatrix q = random_stochastic(20, 4, rng);
  DenseMatrix mapped = q;
  for (double& v : mapped.values()) v = std::exp(3.0 * v);
  CHECK(extract_labels(q) == extract_labels(mapped));
}

TEST_CASE("target sharpens rows when column frequencies are balanced") {
  // Symmetric q keeps f uniform, so p_ij is proportional to q_ij^2 and the
  // dominant entry grows.
  const DenseMatrix q = mat(2, 2, {0.6, 0.4, 0.4, 0.6});
  const DenseMatrix p = target_distribution(q);
  CHECK(p(0, 0) > q(0, 0));
  CHECK(p(1, 1) > q(1, 1));
  CHECK(p(0, 0) == doctest::Approx(9.0 / 13.0).epsilon(1e-14));
}
