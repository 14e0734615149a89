#include "trifuse/autoencoder.hpp"

#include <cmath>
#include <string>

#include "trifuse/errors.hpp"
#include "trifuse/optim.hpp"

namespace trifuse {

namespace {

DenseMatrix init_weight(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  DenseMatrix w(fan_in, fan_out);
  for (double& v : w.values()) v = rng.uniform(-bound, bound);
  return w;
}

}  // namespace

AeParams AeParams::init(const std::vector<std::size_t>& dims, Rng& rng) {
  if (dims.size() < 2) {
    throw validation_error("AeParams: dims needs at least [d0, n_z]");
  }
  AeParams p;
  p.dims = dims;
  const std::size_t depth = dims.size() - 1;
  for (std::size_t l = 0; l < depth; ++l) {
    p.enc_w.push_back(init_weight(dims[l], dims[l + 1], rng));
    p.enc_b.emplace_back(1, dims[l + 1]);
  }
  for (std::size_t l = 0; l < depth; ++l) {
    p.dec_w.push_back(init_weight(dims[depth - l], dims[depth - l - 1], rng));
    p.dec_b.emplace_back(1, dims[depth - l - 1]);
  }
  return p;
}

AeVars lift(Tape& tape, const AeParams& p, bool tracked) {
  AeVars v;
  auto put = [&](const DenseMatrix& m) {
    return tracked ? tape.leaf(m) : tape.constant(m);
  };
  for (const auto& w : p.enc_w) v.enc_w.push_back(put(w));
  for (const auto& b : p.enc_b) v.enc_b.push_back(put(b));
  for (const auto& w : p.dec_w) v.dec_w.push_back(put(w));
  for (const auto& b : p.dec_b) v.dec_b.push_back(put(b));
  return v;
}

AeForwardVars ae_forward_t(Tape& tape, const AeVars& vars, Tape::Var x, double slope) {
  AeForwardVars out;
  Tape::Var h = x;
  for (std::size_t l = 0; l < vars.enc_w.size(); ++l) {
    h = tape.leaky_relu(
        tape.add_row_bias(tape.matmul(h, vars.enc_w[l]), vars.enc_b[l]), slope);
    out.hidden.push_back(h);
  }
  for (std::size_t l = 0; l < vars.dec_w.size(); ++l) {
    h = tape.leaky_relu(
        tape.add_row_bias(tape.matmul(h, vars.dec_w[l]), vars.dec_b[l]), slope);
  }
  out.x_hat = h;
  return out;
}

AeForwardOut ae_forward(const AeParams& p, const DenseMatrix& x, double slope) {
  Tape tape;
  AeVars vars = lift(tape, p, false);
  AeForwardVars fwd = ae_forward_t(tape, vars, tape.constant(x), slope);
  AeForwardOut out;
  for (Tape::Var h : fwd.hidden) out.hidden.push_back(tape.value(h));
  out.x_hat = tape.value(fwd.x_hat);
  return out;
}

double ae_recon_loss(const DenseMatrix& x, const DenseMatrix& x_hat) {
  return sq_frobenius_diff(x, x_hat) / (2.0 * static_cast<double>(x.rows()));
}

PretrainResult pretrain_ae(const Graph& graph, const std::vector<std::size_t>& dims,
                           double lr, std::size_t epochs, std::uint64_t seed) {
  if (dims.empty() || dims.front() != graph.features.cols()) {
    throw validation_error("pretrain_ae: dims[0] must equal feature width");
  }
  Rng rng(seed);
  PretrainResult result;
  result.params = AeParams::init(dims, rng);
  AeParams& p = result.params;

  std::vector<ParamRef> refs;
  for (std::size_t l = 0; l < p.depth(); ++l) {
    refs.push_back({"ae.enc_w[" + std::to_string(l) + "]", &p.enc_w[l]});
    refs.push_back({"ae.enc_b[" + std::to_string(l) + "]", &p.enc_b[l]});
    refs.push_back({"ae.dec_w[" + std::to_string(l) + "]", &p.dec_w[l]});
    refs.push_back({"ae.dec_b[" + std::to_string(l) + "]", &p.dec_b[l]});
  }
  AdamState adam;
  adam.init(refs);
  const double inv_2n = 1.0 / (2.0 * static_cast<double>(graph.features.rows()));

  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    Tape tape;
    AeVars vars = lift(tape, p, true);
    AeForwardVars fwd = ae_forward_t(tape, vars, tape.constant(graph.features));
    Tape::Var loss = tape.sq_diff_sum(fwd.x_hat, graph.features, inv_2n);
    const double loss_val = tape.value(loss)(0, 0);
    if (!std::isfinite(loss_val)) {
      throw numeric_error("pretrain_ae: non-finite loss at epoch " +
                          std::to_string(epoch));
    }
    result.loss_history.push_back(loss_val);
    tape.backward(loss);
    std::vector<DenseMatrix> grads;
    for (std::size_t l = 0; l < p.depth(); ++l) {
      grads.push_back(tape.grad(vars.enc_w[l]));
      grads.push_back(tape.grad(vars.enc_b[l]));
      grads.push_back(tape.grad(vars.dec_w[l]));
      grads.push_back(tape.grad(vars.dec_b[l]));
    }
    adam_step(refs, grads, adam, lr);
  }
  if (epochs > 0) {
    AeForwardOut out = ae_forward(p, graph.features);
    result.loss_history.push_back(ae_recon_loss(graph.features, out.x_hat));
  }
  return result;
}

}  // namespace trifuse
