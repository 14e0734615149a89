#include "trifuse/gcn.hpp"

#include <cmath>
#include <string>

#include "trifuse/errors.hpp"

namespace trifuse {

namespace {

DenseMatrix init_weight(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  DenseMatrix w(fan_in, fan_out);
  for (double& v : w.values()) v = rng.uniform(-bound, bound);
  return w;
}

void check_eps(double eps) {
  if (!(eps >= 0.0 && eps <= 1.0)) {
    throw validation_error("mixing coefficient eps must lie in [0,1], got " +
                           std::to_string(eps));
  }
}

}  // namespace

GcnParams GcnParams::init(const std::vector<std::size_t>& dims, bool residual,
                          Rng& rng) {
  if (dims.size() < 2) {
    throw validation_error("GcnParams: dims needs at least [d0, n_z]");
  }
  GcnParams p;
  p.dims = dims;
  p.residual = residual;
  const std::size_t depth = dims.size() - 1;
  for (std::size_t l = 0; l < depth; ++l) {
    p.enc_w.push_back(init_weight(dims[l], dims[l + 1], rng));
  }
  for (std::size_t l = 0; l < depth; ++l) {
    p.dec_w.push_back(init_weight(dims[depth - l], dims[depth - l - 1], rng));
  }
  return p;
}

GcnVars lift(Tape& tape, const GcnParams& p, bool tracked) {
  GcnVars v;
  auto put = [&](const DenseMatrix& m) {
    return tracked ? tape.leaf(m) : tape.constant(m);
  };
  for (const auto& w : p.enc_w) v.enc_w.push_back(put(w));
  for (const auto& w : p.dec_w) v.dec_w.push_back(put(w));
  return v;
}

Tape::Var gcn_layer_t(Tape& tape, const SparseCsr& norm_adj, Tape::Var h,
                      Tape::Var w, double slope, bool residual) {
  Tape::Var pre = tape.spmm(norm_adj, tape.matmul(h, w));
  if (residual && tape.value(h).cols() == tape.value(pre).cols()) {
    pre = tape.add(pre, h);
  }
  return tape.leaky_relu(pre, slope);
}

DenseMatrix gcn_layer(const SparseCsr& norm_adj, const DenseMatrix& h,
                      const DenseMatrix& w, double slope, bool residual) {
  Tape tape;
  return tape.value(gcn_layer_t(tape, norm_adj, tape.constant(h), tape.constant(w),
                                slope, residual));
}

std::vector<Tape::Var> gcn_encode_fused_t(Tape& tape, const SparseCsr& norm_adj,
                                          Tape::Var x,
                                          const std::vector<Tape::Var>& ae_hidden,
                                          const GcnVars& vars, bool residual,
                                          double eps, double slope) {
  check_eps(eps);
  const std::size_t depth = vars.enc_w.size();
  if (ae_hidden.size() < depth) {
    throw validation_error("gcn_encode_fused: " + std::to_string(ae_hidden.size()) +
                           " AE hiddens for depth " + std::to_string(depth));
  }
  std::vector<Tape::Var> z;
  z.reserve(depth);
  z.push_back(gcn_layer_t(tape, norm_adj, x, vars.enc_w[0], slope, residual));
  for (std::size_t l = 1; l < depth; ++l) {
    Tape::Var mixed = tape.add(tape.scale(ae_hidden[l - 1], eps),
                               tape.scale(z[l - 1], 1.0 - eps));
    z.push_back(gcn_layer_t(tape, norm_adj, mixed, vars.enc_w[l], slope, residual));
  }
  return z;
}

std::vector<DenseMatrix> gcn_encode_fused(const SparseCsr& norm_adj,
                                          const DenseMatrix& x,
                                          const std::vector<DenseMatrix>& ae_hidden,
                                          const GcnParams& params, double eps,
                                          double slope) {
  Tape tape;
  GcnVars vars = lift(tape, params, false);
  std::vector<Tape::Var> hv;
  for (const auto& h : ae_hidden) hv.push_back(tape.constant(h));
  std::vector<Tape::Var> zv = gcn_encode_fused_t(tape, norm_adj, tape.constant(x), hv,
                                                 vars, params.residual, eps, slope);
  std::vector<DenseMatrix> z;
  for (Tape::Var v : zv) z.push_back(tape.value(v));
  return z;
}

Tape::Var gcn_decode_t(Tape& tape, const SparseCsr& norm_adj, Tape::Var z,
                       const GcnVars& vars, bool residual, double slope) {
  Tape::Var h = z;
  for (std::size_t l = 0; l < vars.dec_w.size(); ++l) {
    h = gcn_layer_t(tape, norm_adj, h, vars.dec_w[l], slope, residual);
  }
  return h;
}

DenseMatrix gcn_decode(const SparseCsr& norm_adj, const DenseMatrix& z,
                       const GcnParams& params, double slope) {
  Tape tape;
  GcnVars vars = lift(tape, params, false);
  return tape.value(gcn_decode_t(tape, norm_adj, tape.constant(z), vars,
                                 params.residual, slope));
}

}  // namespace trifuse
