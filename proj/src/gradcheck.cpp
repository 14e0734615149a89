#include "trifuse/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <tuple>

namespace trifuse {

namespace {

DenseMatrix sample_normal(Rng& rng, std::size_t r, std::size_t c) {
  DenseMatrix m(r, c);
  for (double& v : m.values()) v = rng.normal();
  return m;
}

// Keeps entries away from 0 so finite differences never straddle a kink.
DenseMatrix sample_away_from_zero(Rng& rng, std::size_t r, std::size_t c,
                                  double margin) {
  DenseMatrix m(r, c);
  for (double& v : m.values()) {
    do {
      v = rng.normal();
    } while (std::abs(v) < margin);
  }
  return m;
}

// Undirected ring over n nodes plus self-loops, sorted by (dst, src).
EdgeList ring_edges(int n) {
  EdgeList e;
  for (int i = 0; i < n; ++i) {
    int nbrs[3] = {(i + n - 1) % n, i, (i + 1) % n};
    std::sort(nbrs, nbrs + 3);
    for (int s : nbrs) {
      e.src.push_back(s);
      e.dst.push_back(i);
    }
  }
  return e;
}

std::vector<DifferentiableOp> build_registry() {
  Rng baked(12345);
  std::vector<DifferentiableOp> ops;

  ops.push_back({"matmul",
                 [](Tape& t, const std::vector<Tape::Var>& v) {
                   return t.matmul(v[0], v[1]);
                 },
                 [](Rng& rng) {
                   return std::vector<DenseMatrix>{sample_normal(rng, 4, 3),
                                                   sample_normal(rng, 3, 5)};
                 }});

  ops.push_back({"matmul_nt",
                 [](Tape& t, const std::vector<Tape::Var>& v) {
                   return t.matmul_nt(v[0], v[1]);
                 },
                 [](Rng& rng) {
                   return std::vector<DenseMatrix>{sample_normal(rng, 4, 3),
                                                   sample_normal(rng, 5, 3)};
                 }});

  {
    std::vector<std::tuple<int, int, double>> trips;
    for (int r = 0; r < 5; ++r) {
      const int c0 = static_cast<int>(baked.uniform_int(4));
      const int c1 = (c0 + 1 + static_cast<int>(baked.uniform_int(3))) % 4;
      trips.emplace_back(r, c0, baked.normal());
      trips.emplace_back(r, c1, baked.normal());
    }
    SparseCsr s = SparseCsr::from_triplets(5, 4, std::move(trips));
    ops.push_back({"spmm",
                   [s](Tape& t, const std::vector<Tape::Var>& v) {
                     return t.spmm(s, v[0]);
                   },
                   [](Rng& rng) {
                     return std::vector<DenseMatrix>{sample_normal(rng, 4, 3)};
                   }});
  }

  ops.push_back({"add",
                 [](Tape& t, const std::vector<Tape::Var>& v) { return t.add(v[0], v[1]); },
                 [](Rng& rng) {
                   return std::vector<DenseMatrix>{sample_normal(rng, 4, 5),
                                                   sample_normal(rng, 4, 5)};
                 }});

  ops.push_back({"sub",
                 [](Tape& t, const std::vector<Tape::Var>& v) { return t.sub(v[0], v[1]); },
                 [](Rng& rng) {
                   return std::vector<DenseMatrix>{sample_normal(rng, 4, 5),
                                                   sample_normal(rng, 4, 5)};
                 }});

  ops.push_back({"scale",
                 [](Tape& t, const std::vector<Tape::Var>& v) {
                   return t.scale(v[0], -1.3);
                 },
                 [](Rng& rng) {
                   return std::vector<DenseMatrix>{sample_normal(rng, 4, 5)};
                 }});

  ops.push_back({"add_row_bias",
                 [](Tape& t, const std::vector<Tape::Var>& v) {
                   return t.add_row_bias(v[0], v[1]);
                 },
                 [](Rng& rng) {
                   return std::vector<DenseMatrix>{sample_normal(rng, 4, 5),
                                                   sample_normal(rng, 1, 5)};
                 }});

  ops.push_back({"leaky_relu",
                 [](Tape& t, const std::vector<Tape::Var>& v) {
                   return t.leaky_relu(v[0], 0.01);
                 },
                 [](Rng& rng) {
                   return std::vector<DenseMatrix>{sample_away_from_zero(rng, 4, 5, 0.05)};
                 }});

  ops.push_back({"sigmoid",
                 [](Tape& t, const std::vector<Tape::Var>& v) { return t.sigmoid(v[0]); },
                 [](Rng& rng) {
                   return std::vector<DenseMatrix>{sample_normal(rng, 4, 5)};
                 }});

  ops.push_back({"concat_cols",
                 [](Tape& t, const std::vector<Tape::Var>& v) {
                   return t.concat_cols({v[0], v[1]});
                 },
                 [](Rng& rng) {
                   return std::vector<DenseMatrix>{sample_normal(rng, 4, 2),
                                                   sample_normal(rng, 4, 3)};
                 }});

  const EdgeList ring = ring_edges(5);
  const double inv_sqrt_d = 1.0 / std::sqrt(3.0);

  ops.push_back({"edge_scores",
                 [ring, inv_sqrt_d](Tape& t, const std::vector<Tape::Var>& v) {
                   return t.edge_scores(v[0], v[1], ring, inv_sqrt_d);
                 },
                 [](Rng& rng) {
                   return std::vector<DenseMatrix>{sample_normal(rng, 5, 3),
                                                   sample_normal(rng, 5, 3)};
                 }});

  ops.push_back({"edge_softmax",
                 [ring](Tape& t, const std::vector<Tape::Var>& v) {
                   return t.edge_softmax(v[0], ring);
                 },
                 [ring](Rng& rng) {
                   return std::vector<DenseMatrix>{sample_normal(rng, ring.size(), 1)};
                 }});

  ops.push_back({"edge_aggregate",
                 [ring](Tape& t, const std::vector<Tape::Var>& v) {
                   return t.edge_aggregate(v[0], v[1], ring, 5);
                 },
                 [ring](Rng& rng) {
                   return std::vector<DenseMatrix>{sample_normal(rng, ring.size(), 1),
                                                   sample_normal(rng, 5, 3)};
                 }});

  ops.push_back({"student_t_assign",
                 [](Tape& t, const std::vector<Tape::Var>& v) {
                   return t.student_t_assign(v[0], v[1], 1.0);
                 },
                 [](Rng& rng) {
                   return std::vector<DenseMatrix>{sample_normal(rng, 6, 4),
                                                   sample_normal(rng, 3, 4)};
                 }});

  ops.push_back({"student_t_assign_t2.5",
                 [](Tape& t, const std::vector<Tape::Var>& v) {
                   return t.student_t_assign(v[0], v[1], 2.5);
                 },
                 [](Rng& rng) {
                   return std::vector<DenseMatrix>{sample_normal(rng, 6, 4),
                                                   sample_normal(rng, 3, 4)};
                 }});

  {
    DenseMatrix p(6, 3);
    for (std::size_t i = 0; i < 6; ++i) {
      double row_sum = 0.0;
      for (std::size_t j = 0; j < 3; ++j) {
        p(i, j) = std::exp(baked.normal());
        row_sum += p(i, j);
      }
      for (std::size_t j = 0; j < 3; ++j) p(i, j) /= row_sum;
    }
    ops.push_back({"kl_const_p_of_assign",
                   [p](Tape& t, const std::vector<Tape::Var>& v) {
                     return t.kl_const_p(p, t.student_t_assign(v[0], v[1], 1.0));
                   },
                   [](Rng& rng) {
                     return std::vector<DenseMatrix>{sample_normal(rng, 6, 4),
                                                     sample_normal(rng, 3, 4)};
                   }});
  }

  ops.push_back({"kl_pair_of_assigns",
                 [](Tape& t, const std::vector<Tape::Var>& v) {
                   return t.kl(t.student_t_assign(v[0], v[2], 1.0),
                               t.student_t_assign(v[1], v[2], 1.0));
                 },
                 [](Rng& rng) {
                   return std::vector<DenseMatrix>{sample_normal(rng, 6, 4),
                                                   sample_normal(rng, 6, 4),
                                                   sample_normal(rng, 3, 4)};
                 }});

  {
    const DenseMatrix target = sample_normal(baked, 4, 5);
    ops.push_back({"sq_diff_sum",
                   [target](Tape& t, const std::vector<Tape::Var>& v) {
                     return t.sq_diff_sum(v[0], target, 0.25);
                   },
                   [](Rng& rng) {
                     return std::vector<DenseMatrix>{sample_normal(rng, 4, 5)};
                   }});
  }

  {
    const DenseMatrix w = sample_normal(baked, 4, 5);
    ops.push_back({"weighted_sum",
                   [w](Tape& t, const std::vector<Tape::Var>& v) {
                     return t.weighted_sum(v[0], w);
                   },
                   [](Rng& rng) {
                     return std::vector<DenseMatrix>{sample_normal(rng, 4, 5)};
                   }});
  }

  return ops;
}

}  // namespace

const std::vector<DifferentiableOp>& op_registry() {
  static const std::vector<DifferentiableOp> registry = build_registry();
  return registry;
}

GradCheckResult finite_diff_check(const DifferentiableOp& op, Rng& rng, int trials,
                                  double step, double tol) {
  double max_rel = 0.0;
  for (int trial = 0; trial < trials; ++trial) {
    std::vector<DenseMatrix> inputs = op.sample_inputs(rng);

    Tape tape;
    std::vector<Tape::Var> vars;
    vars.reserve(inputs.size());
    for (const DenseMatrix& m : inputs) vars.push_back(tape.leaf(m));
    Tape::Var y = op.apply(tape, vars);

    DenseMatrix probe;
    Tape::Var root = y;
    const bool scalar_out = tape.value(y).rows() == 1 && tape.value(y).cols() == 1;
    if (!scalar_out) {
      probe = sample_normal(rng, tape.value(y).rows(), tape.value(y).cols());
      root = tape.weighted_sum(y, probe);
    }
    tape.backward(root);

    std::vector<DenseMatrix> analytic;
    analytic.reserve(vars.size());
    for (Tape::Var v : vars) analytic.push_back(tape.grad(v));

    auto eval = [&op, &probe, scalar_out](const std::vector<DenseMatrix>& ins) {
      Tape t;
      std::vector<Tape::Var> vs;
      vs.reserve(ins.size());
      for (const DenseMatrix& m : ins) vs.push_back(t.constant(m));
      Tape::Var out = op.apply(t, vs);
      const DenseMatrix& ov = t.value(out);
      if (scalar_out) return ov(0, 0);
      double s = 0.0;
      for (std::size_t i = 0; i < ov.size(); ++i) {
        s += ov.values()[i] * probe.values()[i];
      }
      return s;
    };

    for (std::size_t m = 0; m < inputs.size(); ++m) {
      for (std::size_t idx = 0; idx < inputs[m].size(); ++idx) {
        std::vector<DenseMatrix> plus = inputs;
        std::vector<DenseMatrix> minus = inputs;
        plus[m].values()[idx] += step;
        minus[m].values()[idx] -= step;
        const double fd = (eval(plus) - eval(minus)) / (2.0 * step);
        const double ad = analytic[m].values()[idx];
        const double rel =
            std::abs(ad - fd) / std::max({std::abs(ad), std::abs(fd), 1.0});
        max_rel = std::max(max_rel, rel);
      }
    }
  }
  return {op.name, max_rel, max_rel <= tol};
}

std::vector<GradCheckResult> run_gradcheck_suite(std::uint64_t seed, std::ostream* log) {
  std::vector<GradCheckResult> results;
  Rng rng(seed);
  for (const DifferentiableOp& op : op_registry()) {
    GradCheckResult r = finite_diff_check(op, rng);
    if (log) {
      *log << (r.pass ? "pass" : "FAIL") << "  " << r.op
           << "  max_rel_err=" << r.max_rel_err << "\n";
    }
    results.push_back(std::move(r));
  }
  return results;
}

}  // namespace trifuse
