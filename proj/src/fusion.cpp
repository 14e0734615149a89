#include "trifuse/fusion.hpp"

#include <cmath>
#include <cstddef>

#include "trifuse/errors.hpp"

namespace trifuse {

void ModelConfig::validate() const {
  if (std::abs(lambda + theta + gamma - 1.0) > 1e-9) {
    throw validation_error("branch weights lambda+theta+gamma must sum to 1, got " +
                           std::to_string(lambda + theta + gamma));
  }
  if (!(eps >= 0.0 && eps <= 1.0)) {
    throw validation_error("eps must lie in [0,1], got " + std::to_string(eps));
  }
  if (!(alpha >= 0.0) || !(beta >= 0.0) || !(delta >= 0.0)) {
    throw validation_error("alpha, beta, delta must be >= 0");
  }
  if (!(t > 0.0)) {
    throw validation_error("Student-t degrees of freedom must be > 0, got " +
                           std::to_string(t));
  }
  if (depth == 0) throw validation_error("depth must be >= 1");
  if (heads == 0) throw validation_error("heads must be >= 1");
  if (n_z == 0) throw validation_error("n_z must be >= 1");
  if (dims.size() != depth + 1) {
    throw validation_error("dims has " + std::to_string(dims.size()) +
                           " entries; expected depth+1 = " +
                           std::to_string(depth + 1));
  }
  if (dims.back() != n_z) {
    throw validation_error("dims must end at n_z = " + std::to_string(n_z) +
                           ", got " + std::to_string(dims.back()));
  }
  for (std::size_t d : dims) {
    if (d == 0) throw validation_error("dims entries must be positive");
  }
}

ModelVars lift_params(Tape& tape, const ModelParams& p, bool tracked) {
  ModelVars v;
  v.ae = lift(tape, p.ae, tracked);
  v.gcn = lift(tape, p.gcn, tracked);
  v.gt = lift(tape, p.gt, tracked);
  v.centroids = tracked ? tape.leaf(p.centroids.c) : tape.constant(p.centroids.c);
  return v;
}

namespace {

void check_simplex(double lambda, double theta, double gamma) {
  if (std::abs(lambda + theta + gamma - 1.0) > 1e-9) {
    throw validation_error("branch weights lambda+theta+gamma must sum to 1, got " +
                           std::to_string(lambda + theta + gamma));
  }
}

}  // namespace

Tape::Var enhance_t(Tape& tape, const SparseCsr& norm_adj, Tape::Var z_gcn,
                    Tape::Var h, Tape::Var z_t, double lambda, double theta,
                    double gamma) {
  check_simplex(lambda, theta, gamma);
  Tape::Var mix = tape.add(tape.scale(z_gcn, lambda), tape.scale(h, theta));
  mix = tape.add(mix, tape.scale(z_t, gamma));
  return tape.spmm(norm_adj, mix);
}

DenseMatrix enhance(const SparseCsr& norm_adj, const DenseMatrix& z_gcn,
                    const DenseMatrix& h, const DenseMatrix& z_t, double lambda,
                    double theta, double gamma) {
  Tape tape;
  return tape.value(enhance_t(tape, norm_adj, tape.constant(z_gcn),
                              tape.constant(h), tape.constant(z_t), lambda, theta,
                              gamma));
}

ForwardVars forward_on_tape(Tape& tape, const Graph& graph, const ModelVars& vars,
                            const ModelConfig& cfg, const DenseMatrix* p_override) {
  cfg.validate();
  if (graph.features.cols() != cfg.dims.front()) {
    throw validation_error("graph feature width " +
                           std::to_string(graph.features.cols()) +
                           " does not match dims[0] = " +
                           std::to_string(cfg.dims.front()));
  }

  ForwardVars f;
  Tape::Var x = tape.constant(graph.features);
  const EdgeList edges = graph.directed_edges();

  AeForwardVars ae = ae_forward_t(tape, vars.ae, x);
  f.ae_hidden = ae.hidden;
  f.x_hat = ae.x_hat;

  f.z_gcn = gcn_encode_fused_t(tape, graph.norm_adj, x, f.ae_hidden, vars.gcn,
                               cfg.residual, cfg.eps);
  f.z_t = gt_encode_fused_t(tape, edges, graph.n_nodes, x, f.ae_hidden, vars.gt,
                            cfg.eps, cfg.attention_norm);

  f.z_l = enhance_t(tape, graph.norm_adj, f.z_gcn.back(), f.ae_hidden.back(),
                    f.z_t.back(), cfg.lambda, cfg.theta, cfg.gamma);

  switch (cfg.recon_branch) {
    case ReconBranch::gcn:
      f.z_hat_g = gcn_decode_t(tape, graph.norm_adj, f.z_gcn.back(), vars.gcn,
                               cfg.residual);
      break;
    case ReconBranch::transformer:
      f.z_hat_g = gt_decode_t(tape, edges, graph.n_nodes, f.z_t.back(), vars.gt,
                              cfg.attention_norm);
      break;
    case ReconBranch::averaged: {
      Tape::Var zg = gcn_decode_t(tape, graph.norm_adj, f.z_gcn.back(), vars.gcn,
                                  cfg.residual);
      Tape::Var zt = gt_decode_t(tape, edges, graph.n_nodes, f.z_t.back(), vars.gt,
                                 cfg.attention_norm);
      f.z_hat_g = tape.scale(tape.add(zg, zt), 0.5);
      break;
    }
  }

  f.a_hat = tape.sigmoid(tape.matmul_nt(f.z_hat_g, f.z_hat_g));

  f.q = tape.student_t_assign(f.z_l, vars.centroids, cfg.t);
  f.q_prime = tape.student_t_assign(f.ae_hidden.back(), vars.centroids, cfg.t);
  f.p = p_override != nullptr ? *p_override : target_distribution(tape.value(f.q));
  return f;
}

LossVars objective_on_tape(Tape& tape, const Graph& graph, const ForwardVars& fwd,
                           const ModelConfig& cfg) {
  const double n = static_cast<double>(graph.n_nodes);
  if (graph.n_nodes == 0) throw validation_error("objective needs a nonempty graph");
  const DenseMatrix ax = spmm(graph.norm_adj, graph.features);

  // Builds one loss component and rethrows any numeric failure with the
  // component's name attached.
  auto named = [&](const char* component, auto&& make) -> Tape::Var {
    try {
      Tape::Var v = make();
      if (!tape.value(v).all_finite()) {
        throw numeric_error("value is non-finite");
      }
      return v;
    } catch (const numeric_error& e) {
      throw numeric_error(std::string("loss component ") + component + ": " +
                          e.what());
    }
  };

  LossVars loss;
  loss.loss_w = named("loss_w",
                      [&] { return tape.sq_diff_sum(fwd.z_hat_g, ax, 1.0 / n); });
  loss.loss_e = named("loss_e", [&] {
    return tape.sq_diff_sum(fwd.a_hat, graph.adj.to_dense(), 1.0 / (n * n));
  });
  loss.l_gfn = named("loss_gfn", [&] {
    return tape.add(loss.loss_w, tape.scale(loss.loss_e, cfg.delta));
  });
  const DenseMatrix& ae_target =
      cfg.ae_recon_target == AeReconTarget::smoothed ? ax : graph.features;
  loss.l_ae = named("loss_ae",
                    [&] { return tape.sq_diff_sum(fwd.x_hat, ae_target, 1.0 / n); });
  loss.l_clu = named("loss_clu", [&] { return tape.kl_const_p(fwd.p, fwd.q); });
  loss.l_con = named("loss_con", [&] { return tape.kl(fwd.q, fwd.q_prime); });

  // Fixed reduction order so repeated runs agree bitwise.
  loss.total = named("total", [&] {
    Tape::Var acc = tape.add(loss.l_gfn, loss.l_ae);
    acc = tape.add(acc, tape.scale(loss.l_clu, cfg.alpha));
    return tape.add(acc, tape.scale(loss.l_con, cfg.beta));
  });
  return loss;
}

ForwardOutputs forward(const Graph& graph, const ModelParams& params,
                       const ModelConfig& cfg) {
  Tape tape;
  ModelVars vars = lift_params(tape, params, false);
  ForwardVars f = forward_on_tape(tape, graph, vars, cfg);
  ForwardOutputs out;
  for (Tape::Var v : f.ae_hidden) out.ae_hidden.push_back(tape.value(v));
  out.x_hat = tape.value(f.x_hat);
  for (Tape::Var v : f.z_gcn) out.z_gcn.push_back(tape.value(v));
  for (Tape::Var v : f.z_t) out.z_t.push_back(tape.value(v));
  out.z_l = tape.value(f.z_l);
  out.z_hat_g = tape.value(f.z_hat_g);
  out.a_hat = tape.value(f.a_hat);
  out.q = tape.value(f.q);
  out.q_prime = tape.value(f.q_prime);
  out.p = f.p;
  return out;
}

LossComponents objective(const ForwardOutputs& out, const Graph& graph,
                         const ModelConfig& cfg) {
  // Rebuilt on a constant tape so the value matches the training-path
  // arithmetic exactly.
  Tape tape;
  ForwardVars f;
  f.x_hat = tape.constant(out.x_hat);
  f.z_hat_g = tape.constant(out.z_hat_g);
  f.a_hat = tape.constant(out.a_hat);
  f.q = tape.constant(out.q);
  f.q_prime = tape.constant(out.q_prime);
  f.p = out.p;
  LossVars v = objective_on_tape(tape, graph, f, cfg);
  LossComponents c;
  c.total = tape.value(v.total)(0, 0);
  c.l_gfn = tape.value(v.l_gfn)(0, 0);
  c.l_ae = tape.value(v.l_ae)(0, 0);
  c.l_clu = tape.value(v.l_clu)(0, 0);
  c.l_con = tape.value(v.l_con)(0, 0);
  c.loss_w = tape.value(v.loss_w)(0, 0);
  c.loss_e = tape.value(v.loss_e)(0, 0);
  return c;
}

}  // namespace trifuse
