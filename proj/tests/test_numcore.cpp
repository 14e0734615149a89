#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <limits>
#include <vector>

#include "trifuse/dense.hpp"
#include "trifuse/errors.hpp"
#include "trifuse/gradcheck.hpp"
#include "trifuse/rng.hpp"
#include "trifuse/sparse.hpp"
#include "trifuse/tape.hpp"

using namespace trifuse;

namespace {

DenseMatrix mat(std::size_t r, std::size_t c, std::vector<double> v) {
  return DenseMatrix(r, c, std::move(v));
}

DenseMatrix random_mat(std::size_t r, std::size_t c, Rng& rng) {
  DenseMatrix m(r, c);
  for (double& v : m.values()) v = rng.normal();
  return m;
}

// Naive row-major triple loop, the reference for exactness checks.
DenseMatrix naive_matmul(const DenseMatrix& a, const DenseMatrix& b) {
  DenseMatrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      out(i, j) = s;
    }
  }
  return out;
}

}  // namespace

TEST_CASE("matmul hand cases") {
  const DenseMatrix m = mat(2, 2, {7, -3, 0.5, 2});
  CHECK(max_abs_diff(matmul(DenseMatrix::identity(2), m), m) == 0.0);

  const DenseMatrix a = mat(2, 2, {1, 2, 3, 4});
  const DenseMatrix b = mat(2, 1, {0, 1});
  const DenseMatrix ab = matmul(a, b);
  CHECK(ab.rows() == 2);
  CHECK(ab.cols() == 1);
  CHECK(ab(0, 0) == 2.0);
  CHECK(ab(1, 0) == 4.0);

  Rng rng(1);
  const DenseMatrix z = matmul(DenseMatrix(2, 3), random_mat(3, 4, rng));
  for (double v : z.values()) CHECK(v == 0.0);
}

TEST_CASE("matmul shape error names both shapes") {
  const DenseMatrix a(2, 3);
  const DenseMatrix b(4, 2);
  CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("2x3"), validation_error);
  CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("4x2"), validation_error);
}

TEST_CASE("transpose variants agree with explicit transpose") {
  Rng rng(7);
  const DenseMatrix a = random_mat(4, 3, rng);
  const DenseMatrix b = random_mat(5, 3, rng);
  CHECK(max_abs_diff(matmul_nt(a, b), matmul(a, transpose(b))) == 0.0);
  const DenseMatrix c = random_mat(4, 5, rng);
  CHECK(max_abs_diff(matmul_tn(a, c), matmul(transpose(a), c)) == 0.0);
}

TEST_CASE("matmul matches naive product within roundoff") {
  Rng rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    const DenseMatrix a = random_mat(6, 9, rng);
    const DenseMatrix b = random_mat(9, 4, rng);
    CHECK(max_abs_diff(matmul(a, b), naive_matmul(a, b)) < 1e-12);
  }
}

TEST_CASE("spmm hand cases") {
  // Identity sparse.
  SparseCsr eye = SparseCsr::from_triplets(3, 3, {{0, 0, 1.0}, {1, 1, 1.0}, {2, 2, 1.0}});
  Rng rng(3);
  const DenseMatrix m = random_mat(3, 2, rng);
  CHECK(max_abs_diff(spmm(eye, m), m) == 0.0);

  // 2-node normalized single-edge operator times I2.
  SparseCsr ahat = SparseCsr::from_triplets(
      2, 2, {{0, 0, 0.5}, {0, 1, 0.5}, {1, 0, 0.5}, {1, 1, 0.5}});
  const DenseMatrix out = spmm(ahat, DenseMatrix::identity(2));
  for (double v : out.values()) CHECK(v == 0.5);

  // Empty sparse annihilates.
  SparseCsr empty(2, 3, {0, 0, 0}, {}, {});
  const DenseMatrix zero = spmm(empty, random_mat(3, 4, rng));
  for (double v : zero.values()) CHECK(v == 0.0);
}

TEST_CASE("spmm equals the dense product exactly") {
  // Stored entries are visited in column order; the dense reference adds the
  // same terms plus exact zeros, so equality is bitwise.
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 2 + rng.uniform_int(49);
    std::vector<std::tuple<int, int, double>> trip;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (rng.uniform() < 0.15) {
          trip.emplace_back(static_cast<int>(i), static_cast<int>(j), rng.normal());
        }
      }
    }
    SparseCsr s = SparseCsr::from_triplets(n, n, trip);
    const DenseMatrix x = random_mat(n, 3, rng);
    const DenseMatrix dense = s.to_dense();
    CHECK(max_abs_diff(spmm(s, x), naive_matmul(dense, x)) == 0.0);
  }
}

TEST_CASE("leaky_relu values and kink subgradient") {
  const DenseMatrix x = mat(1, 3, {1.0, -1.0, 0.0});
  const DenseMatrix y = leaky_relu(x, 0.01);
  CHECK(y(0, 0) == 1.0);
  CHECK(y(0, 1) == -0.01);
  CHECK(y(0, 2) == 0.0);

  // Subgradient at 0 is the slope, both in the eager grad and on the tape.
  CHECK(leaky_relu_grad(mat(1, 1, {0.0}), 0.25)(0, 0) == 0.25);
  Tape tape;
  Tape::Var v = tape.leaf(mat(1, 1, {0.0}));
  Tape::Var out = tape.leaky_relu(v, 0.25);
  tape.backward(tape.weighted_sum(out, mat(1, 1, {1.0})));
  CHECK(tape.grad(v)(0, 0) == 0.25);
}

TEST_CASE("sigmoid values, saturation, open-interval range") {
  CHECK(sigmoid(mat(1, 1, {0.0}))(0, 0) == 0.5);
  CHECK(std::abs(sigmoid(mat(1, 1, {50.0}))(0, 0) - 1.0) < 1e-12);
  const double s_pos = sigmoid(mat(1, 1, {1.7}))(0, 0);
  const double s_neg = sigmoid(mat(1, 1, {-1.7}))(0, 0);
  CHECK(std::abs(s_neg - (1.0 - s_pos)) < 1e-15);

  // Strictly inside (0,1) even where exp under/overflows.
  for (double v : {-1000.0, -40.0, 40.0, 1000.0}) {
    const double s = sigmoid(mat(1, 1, {v}))(0, 0);
    CHECK(s > 0.0);
    CHECK(s < 1.0);
  }
}

TEST_CASE("grouped softmax hand cases and row sums") {
  std::vector<double> one = softmax_over_index_groups({3.7}, {0});
  CHECK(one[0] == 1.0);

  std::vector<double> sym = softmax_over_index_groups({0.0, 0.0}, {0, 0});
  CHECK(sym[0] == 0.5);
  CHECK(sym[1] == 0.5);

  std::vector<double> sk = softmax_over_index_groups({std::log(2.0), 0.0}, {0, 0});
  CHECK(std::abs(sk[0] - 2.0 / 3.0) < 1e-15);
  CHECK(std::abs(sk[1] - 1.0 / 3.0) < 1e-15);

  // Random groups up to size 64: positive entries, each group sums to 1.
  Rng rng(17);
  std::vector<double> scores;
  std::vector<int> groups;
  int g = 0;
  while (scores.size() < 500) {
    const std::size_t sz = 1 + rng.uniform_int(64);
    for (std::size_t i = 0; i < sz; ++i) {
      scores.push_back(rng.normal(0.0, 3.0));
      groups.push_back(g);
    }
    ++g;
  }
  std::vector<double> soft = softmax_over_index_groups(scores, groups);
  std::vector<double> sums(static_cast<std::size_t>(g), 0.0);
  for (std::size_t i = 0; i < soft.size(); ++i) {
    CHECK(soft[i] > 0.0);
    sums[static_cast<std::size_t>(groups[i])] += soft[i];
  }
  for (double s : sums) CHECK(std::abs(s - 1.0) < 1e-12);

  // Shift invariance within a group.
  std::vector<double> base = softmax_over_index_groups({1.0, -0.5, 2.0}, {0, 0, 0});
  std::vector<double> shifted =
      softmax_over_index_groups({1.0 + 100.0, -0.5 + 100.0, 2.0 + 100.0}, {0, 0, 0});
  for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(base[i] - shifted[i]) < 1e-12);
}

TEST_CASE("rng reproducibility and fork decorrelation") {
  Rng a(42);
  Rng b(42);
  for (int i = 0; i < 10000; ++i) {
    CHECK(a.next_u64() == b.next_u64());
  }
  // Forked streams differ from the parent and from sibling forks.
  Rng parent(42);
  Rng f0 = parent.fork(0);
  Rng f1 = parent.fork(1);
  CHECK(f0.seed() != f1.seed());
  CHECK(f0.next_u64() != f1.next_u64());

  // Distribution helpers are deterministic too.
  Rng c(9);
  Rng d(9);
  for (int i = 0; i < 1000; ++i) {
    CHECK(c.uniform() == d.uniform());
    CHECK(c.normal() == d.normal());
    CHECK(c.uniform_int(17) == d.uniform_int(17));
  }
}

TEST_CASE("rng uniform stays in range") {
  Rng rng(123);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    const std::uint64_t k = rng.uniform_int(7);
    CHECK(k < 7);
  }
}

TEST_CASE("tape add/sub/scale gradients") {
  Tape tape;
  Rng rng(2);
  const DenseMatrix av = random_mat(2, 3, rng);
  const DenseMatrix bv = random_mat(2, 3, rng);
  Tape::Var a = tape.leaf(av);
  Tape::Var b = tape.leaf(bv);
  Tape::Var expr = tape.scale(tape.sub(tape.add(a, b), tape.scale(b, 3.0)), 2.0);
  DenseMatrix w = random_mat(2, 3, rng);
  tape.backward(tape.weighted_sum(expr, w));
  // d/da = 2w, d/db = 2w - 6w = -4w.
  CHECK(max_abs_diff(tape.grad(a), scale(w, 2.0)) < 1e-14);
  CHECK(max_abs_diff(tape.grad(b), scale(w, -4.0)) < 1e-14);
}

TEST_CASE("tape backward requires a scalar root") {
  Tape tape;
  Tape::Var a = tape.leaf(DenseMatrix(2, 2));
  CHECK_THROWS_AS(tape.backward(a), validation_error);
}

TEST_CASE("tape constants receive no gradient") {
  Tape tape;
  const DenseMatrix cv = mat(1, 2, {1.0, 2.0});
  Tape::Var c = tape.constant(cv);
  Tape::Var a = tape.leaf(mat(1, 2, {3.0, 4.0}));
  Tape::Var out = tape.weighted_sum(tape.add(a, c), mat(1, 2, {1.0, 1.0}));
  tape.backward(out);
  for (double v : tape.grad(c).values()) CHECK(v == 0.0);
  for (double v : tape.grad(a).values()) CHECK(v == 1.0);
}

TEST_CASE("finite_diff_check on a hand-built linear op") {
  DifferentiableOp op;
  op.name = "times3";
  op.apply = [](Tape& t, const std::vector<Tape::Var>& in) {
    return t.scale(in[0], 3.0);
  };
  op.sample_inputs = [](Rng& rng) {
    std::vector<DenseMatrix> in;
    in.push_back(random_mat(2, 2, rng));
    return in;
  };
  Rng rng(1);
  GradCheckResult res = finite_diff_check(op, rng, 5);
  CHECK(res.pass);
  CHECK(res.max_rel_err < 1e-8);
}

TEST_CASE("finite_diff_check rejects a corrupted gradient") {
  // Forward value is right but it enters the tape as a constant, so the
  // reported gradient is zero while the finite difference sees slope 2.
  DifferentiableOp bad;
  bad.name = "broken_vjp";
  bad.apply = [](Tape& t, const std::vector<Tape::Var>& in) {
    return t.constant(scale(t.value(in[0]), 2.0));
  };
  bad.sample_inputs = [](Rng& rng) {
    std::vector<DenseMatrix> in;
    in.push_back(random_mat(2, 2, rng));
    return in;
  };
  Rng rng(1);
  GradCheckResult res = finite_diff_check(bad, rng, 5);
  CHECK_FALSE(res.pass);
}

TEST_CASE("gradcheck registry all pass") {
  const std::vector<GradCheckResult> results = run_gradcheck_suite(12345, nullptr);
  CHECK(results.size() >= 15);
  for (const GradCheckResult& r : results) {
    INFO(r.op, " max_rel_err=", r.max_rel_err);
    CHECK(r.pass);
    CHECK(r.max_rel_err <= 1e-4);
  }
}
