#include "trifuse/tape.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "trifuse/errors.hpp"

namespace trifuse {

namespace {

void check_edges(const EdgeList& e, std::size_t n_src_rows, std::size_t n_dst_rows,
                 const char* op) {
  if (e.src.size() != e.dst.size()) {
    throw validation_error(std::string(op) + ": ragged edge list");
  }
  for (std::size_t i = 0; i < e.size(); ++i) {
    if (e.src[i] < 0 || static_cast<std::size_t>(e.src[i]) >= n_src_rows ||
        e.dst[i] < 0 || static_cast<std::size_t>(e.dst[i]) >= n_dst_rows) {
      throw validation_error(std::string(op) + ": edge endpoint out of range");
    }
  }
}

double safe_log(double x) { return std::log(x < 1e-300 ? 1e-300 : x); }

}  // namespace

Tape::Var Tape::push(DenseMatrix value, bool requires_grad,
                     std::function<void(Tape&, const DenseMatrix&)> backprop) {
  value.ensure_finite("tape node");
  nodes_.push_back(Node{std::move(value), requires_grad, std::move(backprop)});
  return static_cast<Var>(nodes_.size() - 1);
}

void Tape::check_var(Var v, const char* op) const {
  if (v < 0 || static_cast<std::size_t>(v) >= nodes_.size()) {
    throw validation_error(std::string(op) + ": invalid tape var " + std::to_string(v));
  }
}

Tape::Var Tape::leaf(DenseMatrix value) { return push(std::move(value), true, nullptr); }

Tape::Var Tape::constant(DenseMatrix value) {
  return push(std::move(value), false, nullptr);
}

const DenseMatrix& Tape::value(Var v) const {
  check_var(v, "value");
  return nodes_[static_cast<std::size_t>(v)].value;
}

const DenseMatrix& Tape::grad(Var v) {
  check_var(v, "grad");
  if (grads_.size() != nodes_.size()) grads_.resize(nodes_.size());
  DenseMatrix& g = grads_[static_cast<std::size_t>(v)];
  if (g.empty() && !nodes_[static_cast<std::size_t>(v)].value.empty()) {
    g = DenseMatrix(value(v).rows(), value(v).cols());
  }
  return g;
}

void Tape::accumulate(Var v, const DenseMatrix& g) {
  if (!tracked(v)) return;
  if (grads_.size() != nodes_.size()) grads_.resize(nodes_.size());
  DenseMatrix& slot = grads_[static_cast<std::size_t>(v)];
  if (slot.empty()) {
    slot = g;
    return;
  }
  if (!slot.same_shape(g)) {
    throw validation_error("tape: gradient shape mismatch " + slot.shape_str() +
                           " vs " + g.shape_str());
  }
  for (std::size_t i = 0; i < slot.size(); ++i) slot.values()[i] += g.values()[i];
}

void Tape::backward(Var root) {
  check_var(root, "backward");
  const DenseMatrix& rv = value(root);
  if (rv.rows() != 1 || rv.cols() != 1) {
    throw validation_error("backward: root must be 1x1, got " + rv.shape_str());
  }
  grads_.assign(nodes_.size(), DenseMatrix());
  if (!tracked(root)) return;
  grads_[static_cast<std::size_t>(root)] = DenseMatrix(1, 1, {1.0});
  for (Var v = root; v >= 0; --v) {
    Node& node = nodes_[static_cast<std::size_t>(v)];
    DenseMatrix& g = grads_[static_cast<std::size_t>(v)];
    if (!node.backprop || g.empty()) continue;
    g.ensure_finite("tape gradient");
    node.backprop(*this, g);
  }
}

Tape::Var Tape::matmul(Var a, Var b) {
  check_var(a, "matmul");
  check_var(b, "matmul");
  DenseMatrix out = trifuse::matmul(value(a), value(b));
  const bool rg = tracked(a) || tracked(b);
  return push(std::move(out), rg, [a, b](Tape& t, const DenseMatrix& g) {
    if (t.tracked(a)) t.accumulate(a, trifuse::matmul_nt(g, t.value(b)));
    if (t.tracked(b)) t.accumulate(b, matmul_tn(t.value(a), g));
  });
}

Tape::Var Tape::matmul_nt(Var a, Var b) {
  check_var(a, "matmul_nt");
  check_var(b, "matmul_nt");
  DenseMatrix out = trifuse::matmul_nt(value(a), value(b));
  const bool rg = tracked(a) || tracked(b);
  return push(std::move(out), rg, [a, b](Tape& t, const DenseMatrix& g) {
    if (t.tracked(a)) t.accumulate(a, trifuse::matmul(g, t.value(b)));
    if (t.tracked(b)) t.accumulate(b, matmul_tn(g, t.value(a)));
  });
}

Tape::Var Tape::spmm(const SparseCsr& s, Var x) {
  check_var(x, "spmm");
  DenseMatrix out = trifuse::spmm(s, value(x));
  return push(std::move(out), tracked(x), [s, x](Tape& t, const DenseMatrix& g) {
    t.accumulate(x, spmm_t(s, g));
  });
}

Tape::Var Tape::add(Var a, Var b) {
  check_var(a, "add");
  check_var(b, "add");
  DenseMatrix out = trifuse::add(value(a), value(b));
  const bool rg = tracked(a) || tracked(b);
  return push(std::move(out), rg, [a, b](Tape& t, const DenseMatrix& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Tape::Var Tape::sub(Var a, Var b) {
  check_var(a, "sub");
  check_var(b, "sub");
  DenseMatrix out = trifuse::sub(value(a), value(b));
  const bool rg = tracked(a) || tracked(b);
  return push(std::move(out), rg, [a, b](Tape& t, const DenseMatrix& g) {
    t.accumulate(a, g);
    if (t.tracked(b)) t.accumulate(b, trifuse::scale(g, -1.0));
  });
}

Tape::Var Tape::scale(Var a, double c) {
  check_var(a, "scale");
  DenseMatrix out = trifuse::scale(value(a), c);
  return push(std::move(out), tracked(a), [a, c](Tape& t, const DenseMatrix& g) {
    t.accumulate(a, trifuse::scale(g, c));
  });
}

Tape::Var Tape::add_row_bias(Var a, Var bias) {
  check_var(a, "add_row_bias");
  check_var(bias, "add_row_bias");
  DenseMatrix out = trifuse::add_row_bias(value(a), value(bias));
  const bool rg = tracked(a) || tracked(bias);
  return push(std::move(out), rg, [a, bias](Tape& t, const DenseMatrix& g) {
    t.accumulate(a, g);
    if (t.tracked(bias)) {
      DenseMatrix gb(1, g.cols());
      for (std::size_t i = 0; i < g.rows(); ++i) {
        for (std::size_t j = 0; j < g.cols(); ++j) gb(0, j) += g(i, j);
      }
      t.accumulate(bias, gb);
    }
  });
}

Tape::Var Tape::leaky_relu(Var x, double slope) {
  check_var(x, "leaky_relu");
  DenseMatrix out = trifuse::leaky_relu(value(x), slope);
  return push(std::move(out), tracked(x), [x, slope](Tape& t, const DenseMatrix& g) {
    t.accumulate(x, hadamard(g, leaky_relu_grad(t.value(x), slope)));
  });
}

Tape::Var Tape::sigmoid(Var x) {
  check_var(x, "sigmoid");
  DenseMatrix out = trifuse::sigmoid(value(x));
  const Var self = static_cast<Var>(nodes_.size());
  return push(std::move(out), tracked(x), [x, self](Tape& t, const DenseMatrix& g) {
    const DenseMatrix& y = t.value(self);
    DenseMatrix gx = g;
    for (std::size_t i = 0; i < gx.size(); ++i) {
      const double yi = y.values()[i];
      gx.values()[i] *= yi * (1.0 - yi);
    }
    t.accumulate(x, gx);
  });
}

Tape::Var Tape::concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw validation_error("concat_cols: no parts");
  std::size_t rows = 0;
  std::size_t cols = 0;
  bool rg = false;
  for (Var p : parts) {
    check_var(p, "concat_cols");
    if (p == parts.front()) rows = value(p).rows();
    if (value(p).rows() != rows) {
      throw validation_error("concat_cols: row mismatch " + value(p).shape_str());
    }
    cols += value(p).cols();
    rg = rg || tracked(p);
  }
  DenseMatrix out(rows, cols);
  std::size_t off = 0;
  for (Var p : parts) {
    const DenseMatrix& m = value(p);
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < m.cols(); ++j) out(i, off + j) = m(i, j);
    }
    off += m.cols();
  }
  return push(std::move(out), rg, [parts](Tape& t, const DenseMatrix& g) {
    std::size_t off = 0;
    for (Var p : parts) {
      const DenseMatrix& m = t.value(p);
      if (t.tracked(p)) {
        DenseMatrix gp(m.rows(), m.cols());
        for (std::size_t i = 0; i < m.rows(); ++i) {
          for (std::size_t j = 0; j < m.cols(); ++j) gp(i, j) = g(i, off + j);
        }
        t.accumulate(p, gp);
      }
      off += m.cols();
    }
  });
}

Tape::Var Tape::edge_scores(Var q, Var k, const EdgeList& edges, double scale_factor) {
  check_var(q, "edge_scores");
  check_var(k, "edge_scores");
  const DenseMatrix& qv = value(q);
  const DenseMatrix& kv = value(k);
  if (qv.cols() != kv.cols()) {
    throw validation_error("edge_scores: width mismatch " + qv.shape_str() + " vs " +
                           kv.shape_str());
  }
  check_edges(edges, kv.rows(), qv.rows(), "edge_scores");
  const std::size_t d = qv.cols();
  DenseMatrix out(edges.size(), 1);
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const double* qr = qv.data() + static_cast<std::size_t>(edges.dst[e]) * d;
    const double* kr = kv.data() + static_cast<std::size_t>(edges.src[e]) * d;
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += qr[j] * kr[j];
    out(e, 0) = s * scale_factor;
  }
  out.ensure_finite("edge_scores");
  const bool rg = tracked(q) || tracked(k);
  return push(std::move(out), rg,
              [q, k, edges, scale_factor](Tape& t, const DenseMatrix& g) {
                const DenseMatrix& qv = t.value(q);
                const DenseMatrix& kv = t.value(k);
                const std::size_t d = qv.cols();
                DenseMatrix gq(qv.rows(), d);
                DenseMatrix gk(kv.rows(), d);
                for (std::size_t e = 0; e < edges.size(); ++e) {
                  const double ge = g(e, 0) * scale_factor;
                  const std::size_t di = static_cast<std::size_t>(edges.dst[e]);
                  const std::size_t si = static_cast<std::size_t>(edges.src[e]);
                  for (std::size_t j = 0; j < d; ++j) {
                    gq(di, j) += ge * kv(si, j);
                    gk(si, j) += ge * qv(di, j);
                  }
                }
                if (t.tracked(q)) t.accumulate(q, gq);
                if (t.tracked(k)) t.accumulate(k, gk);
              });
}

Tape::Var Tape::edge_softmax(Var scores, const EdgeList& edges) {
  check_var(scores, "edge_softmax");
  const DenseMatrix& sv = value(scores);
  if (sv.cols() != 1 || sv.rows() != edges.size()) {
    throw validation_error("edge_softmax: scores are " + sv.shape_str() + " for " +
                           std::to_string(edges.size()) + " edges");
  }
  std::vector<double> alpha = softmax_over_index_groups(sv.values(), edges.dst);
  DenseMatrix out(edges.size(), 1, std::move(alpha));
  const Var self = static_cast<Var>(nodes_.size());
  return push(std::move(out), tracked(scores),
              [scores, edges, self](Tape& t, const DenseMatrix& g) {
                const DenseMatrix& a = t.value(self);
                int n_groups = 0;
                for (int d : edges.dst) n_groups = std::max(n_groups, d + 1);
                std::vector<double> dot(static_cast<std::size_t>(n_groups), 0.0);
                for (std::size_t e = 0; e < edges.size(); ++e) {
                  dot[edges.dst[e]] += g(e, 0) * a(e, 0);
                }
                DenseMatrix gs(edges.size(), 1);
                for (std::size_t e = 0; e < edges.size(); ++e) {
                  gs(e, 0) = a(e, 0) * (g(e, 0) - dot[edges.dst[e]]);
                }
                t.accumulate(scores, gs);
              });
}

Tape::Var Tape::edge_aggregate(Var alpha, Var v, const EdgeList& edges,
                               std::size_t n_rows) {
  check_var(alpha, "edge_aggregate");
  check_var(v, "edge_aggregate");
  const DenseMatrix& av = value(alpha);
  const DenseMatrix& vv = value(v);
  if (av.cols() != 1 || av.rows() != edges.size()) {
    throw validation_error("edge_aggregate: weights are " + av.shape_str() + " for " +
                           std::to_string(edges.size()) + " edges");
  }
  check_edges(edges, vv.rows(), n_rows, "edge_aggregate");
  const std::size_t d = vv.cols();
  DenseMatrix out(n_rows, d);
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const double w = av(e, 0);
    double* orow = out.data() + static_cast<std::size_t>(edges.dst[e]) * d;
    const double* vrow = vv.data() + static_cast<std::size_t>(edges.src[e]) * d;
    for (std::size_t j = 0; j < d; ++j) orow[j] += w * vrow[j];
  }
  out.ensure_finite("edge_aggregate");
  const bool rg = tracked(alpha) || tracked(v);
  return push(std::move(out), rg, [alpha, v, edges](Tape& t, const DenseMatrix& g) {
    const DenseMatrix& av = t.value(alpha);
    const DenseMatrix& vv = t.value(v);
    const std::size_t d = vv.cols();
    if (t.tracked(alpha)) {
      DenseMatrix ga(edges.size(), 1);
      for (std::size_t e = 0; e < edges.size(); ++e) {
        const double* grow = g.data() + static_cast<std::size_t>(edges.dst[e]) * d;
        const double* vrow = vv.data() + static_cast<std::size_t>(edges.src[e]) * d;
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) s += grow[j] * vrow[j];
        ga(e, 0) = s;
      }
      t.accumulate(alpha, ga);
    }
    if (t.tracked(v)) {
      DenseMatrix gv(vv.rows(), d);
      for (std::size_t e = 0; e < edges.size(); ++e) {
        const double w = av(e, 0);
        const double* grow = g.data() + static_cast<std::size_t>(edges.dst[e]) * d;
        double* vrow = gv.data() + static_cast<std::size_t>(edges.src[e]) * d;
        for (std::size_t j = 0; j < d; ++j) vrow[j] += w * grow[j];
      }
      t.accumulate(v, gv);
    }
  });
}

Tape::Var Tape::student_t_assign(Var z, Var centroids, double t_dof) {
  check_var(z, "student_t_assign");
  check_var(centroids, "student_t_assign");
  const DenseMatrix& zv = value(z);
  const DenseMatrix& cv = value(centroids);
  if (zv.cols() != cv.cols()) {
    throw validation_error("student_t_assign: point width " + zv.shape_str() +
                           " vs centroid width " + cv.shape_str());
  }
  if (t_dof <= 0.0) throw validation_error("student_t_assign: t must be positive");
  const std::size_t n = zv.rows();
  const std::size_t k = cv.rows();
  const std::size_t d = zv.cols();
  const double expo = -(t_dof + 1.0) / 2.0;
  DenseMatrix u(n, k);
  DenseMatrix q(n, k);
  std::vector<double> row_sum(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      double dist = 0.0;
      for (std::size_t a = 0; a < d; ++a) {
        const double diff = zv(i, a) - cv(j, a);
        dist += diff * diff;
      }
      u(i, j) = 1.0 + dist / t_dof;
      q(i, j) = std::pow(u(i, j), expo);
      row_sum[i] += q(i, j);
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) q(i, j) /= row_sum[i];
  }
  q.ensure_finite("student_t_assign");
  const Var self = static_cast<Var>(nodes_.size());
  const bool rg = tracked(z) || tracked(centroids);
  // row_sum after normalisation is 1; cache the pre-normalisation sums.
  return push(std::move(q), rg,
              [z, centroids, t_dof, u, row_sum, self](Tape& t, const DenseMatrix& g) {
                const DenseMatrix& zv = t.value(z);
                const DenseMatrix& cv = t.value(centroids);
                const DenseMatrix& qv = t.value(self);
                const std::size_t n = zv.rows();
                const std::size_t k = cv.rows();
                const std::size_t d = zv.cols();
                DenseMatrix gz(n, d);
                DenseMatrix gc(k, d);
                const bool want_z = t.tracked(z);
                const bool want_c = t.tracked(centroids);
                for (std::size_t i = 0; i < n; ++i) {
                  double r = 0.0;
                  for (std::size_t j = 0; j < k; ++j) r += g(i, j) * qv(i, j);
                  for (std::size_t j = 0; j < k; ++j) {
                    // dL/dw_ij, then chain through w = u^{-(t+1)/2} and
                    // u = 1 + |z_i - c_j|^2 / t.
                    const double dw = (g(i, j) - r) / row_sum[i];
                    const double w = qv(i, j) * row_sum[i];
                    const double du = dw * w * (-(t_dof + 1.0) / 2.0) / u(i, j);
                    const double coef = du * 2.0 / t_dof;
                    for (std::size_t a = 0; a < d; ++a) {
                      const double diff = zv(i, a) - cv(j, a);
                      if (want_z) gz(i, a) += coef * diff;
                      if (want_c) gc(j, a) -= coef * diff;
                    }
                  }
                }
                if (want_z) t.accumulate(z, gz);
                if (want_c) t.accumulate(centroids, gc);
              });
}

Tape::Var Tape::kl_const_p(const DenseMatrix& p, Var q) {
  check_var(q, "kl_const_p");
  const DenseMatrix& qv = value(q);
  if (!p.same_shape(qv)) {
    throw validation_error("kl_const_p: shape mismatch " + p.shape_str() + " vs " +
                           qv.shape_str());
  }
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double pi = p.values()[i];
    if (pi > 0.0) s += pi * (safe_log(pi) - safe_log(qv.values()[i]));
  }
  DenseMatrix out(1, 1, {s});
  out.ensure_finite("kl_const_p");
  return push(std::move(out), tracked(q), [p, q](Tape& t, const DenseMatrix& g) {
    const DenseMatrix& qv = t.value(q);
    const double g0 = g(0, 0);
    DenseMatrix gq(qv.rows(), qv.cols());
    for (std::size_t i = 0; i < gq.size(); ++i) {
      const double denom = qv.values()[i] < 1e-300 ? 1e-300 : qv.values()[i];
      gq.values()[i] = -g0 * p.values()[i] / denom;
    }
    t.accumulate(q, gq);
  });
}

Tape::Var Tape::kl(Var p, Var q) {
  check_var(p, "kl");
  check_var(q, "kl");
  const DenseMatrix& pv = value(p);
  const DenseMatrix& qv = value(q);
  if (!pv.same_shape(qv)) {
    throw validation_error("kl: shape mismatch " + pv.shape_str() + " vs " +
                           qv.shape_str());
  }
  double s = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const double pi = pv.values()[i];
    if (pi > 0.0) s += pi * (safe_log(pi) - safe_log(qv.values()[i]));
  }
  DenseMatrix out(1, 1, {s});
  out.ensure_finite("kl");
  const bool rg = tracked(p) || tracked(q);
  return push(std::move(out), rg, [p, q](Tape& t, const DenseMatrix& g) {
    const DenseMatrix& pv = t.value(p);
    const DenseMatrix& qv = t.value(q);
    const double g0 = g(0, 0);
    if (t.tracked(p)) {
      DenseMatrix gp(pv.rows(), pv.cols());
      for (std::size_t i = 0; i < gp.size(); ++i) {
        gp.values()[i] =
            g0 * (safe_log(pv.values()[i]) - safe_log(qv.values()[i]) + 1.0);
      }
      t.accumulate(p, gp);
    }
    if (t.tracked(q)) {
      DenseMatrix gq(qv.rows(), qv.cols());
      for (std::size_t i = 0; i < gq.size(); ++i) {
        const double denom = qv.values()[i] < 1e-300 ? 1e-300 : qv.values()[i];
        gq.values()[i] = -g0 * pv.values()[i] / denom;
      }
      t.accumulate(q, gq);
    }
  });
}

Tape::Var Tape::sq_diff_sum(Var a, const DenseMatrix& target, double coeff) {
  check_var(a, "sq_diff_sum");
  const DenseMatrix& av = value(a);
  if (!av.same_shape(target)) {
    throw validation_error("sq_diff_sum: shape mismatch " + av.shape_str() + " vs " +
                           target.shape_str());
  }
  DenseMatrix out(1, 1, {coeff * sq_frobenius_diff(av, target)});
  return push(std::move(out), tracked(a), [a, target, coeff](Tape& t, const DenseMatrix& g) {
    const DenseMatrix& av = t.value(a);
    DenseMatrix ga(av.rows(), av.cols());
    const double c = 2.0 * coeff * g(0, 0);
    for (std::size_t i = 0; i < ga.size(); ++i) {
      ga.values()[i] = c * (av.values()[i] - target.values()[i]);
    }
    t.accumulate(a, ga);
  });
}

Tape::Var Tape::weighted_sum(Var a, const DenseMatrix& w) {
  check_var(a, "weighted_sum");
  const DenseMatrix& av = value(a);
  if (!av.same_shape(w)) {
    throw validation_error("weighted_sum: shape mismatch " + av.shape_str() + " vs " +
                           w.shape_str());
  }
  double s = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) s += av.values()[i] * w.values()[i];
  DenseMatrix out(1, 1, {s});
  out.ensure_finite("weighted_sum");
  return push(std::move(out), tracked(a), [a, w](Tape& t, const DenseMatrix& g) {
    t.accumulate(a, trifuse::scale(w, g(0, 0)));
  });
}

}  // namespace trifuse
