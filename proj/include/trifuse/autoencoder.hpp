#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "trifuse/dense.hpp"
#include "trifuse/graph.hpp"
#include "trifuse/rng.hpp"
#include "trifuse/tape.hpp"

namespace trifuse {

inline constexpr double kDefaultLeakySlope = 0.01;

// Fully-connected autoencoder. Encoder widths follow dims
// [d0, h1, ..., n_z]; decoder widths are the exact reverse. Every layer
// applies LeakyReLU.
struct AeParams {
  std::vector<DenseMatrix> enc_w, dec_w;  // enc_w[l]: dims[l] x dims[l+1]
  std::vector<DenseMatrix> enc_b, dec_b;  // 1 x output width
  std::vector<std::size_t> dims;

  std::size_t depth() const { return enc_w.size(); }
  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases.
  static AeParams init(const std::vector<std::size_t>& dims, Rng& rng);
};

// Tape-side parameter handles.
struct AeVars {
  std::vector<Tape::Var> enc_w, dec_w, enc_b, dec_b;
};
AeVars lift(Tape& tape, const AeParams& p, bool tracked);

struct AeForwardVars {
  std::vector<Tape::Var> hidden;  // H^(1..depth)
  Tape::Var x_hat;
};
AeForwardVars ae_forward_t(Tape& tape, const AeVars& vars, Tape::Var x,
                           double slope = kDefaultLeakySlope);

struct AeForwardOut {
  std::vector<DenseMatrix> hidden;
  DenseMatrix x_hat;
};
AeForwardOut ae_forward(const AeParams& p, const DenseMatrix& x,
                        double slope = kDefaultLeakySlope);

// (1/2N) * sum of squared entries of (x - x_hat); the pretraining objective.
double ae_recon_loss(const DenseMatrix& x, const DenseMatrix& x_hat);

struct PretrainResult {
  AeParams params;
  std::vector<double> loss_history;  // entry e: loss before update e, plus final
};

// Full-batch Adam on the reconstruction loss. Initialization and training
// are both driven by `seed`.
PretrainResult pretrain_ae(const Graph& graph, const std::vector<std::size_t>& dims,
                           double lr, std::size_t epochs, std::uint64_t seed);

}  // namespace trifuse
