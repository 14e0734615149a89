#pragma once

#include <vector>

#include "trifuse/autoencoder.hpp"
#include "trifuse/dense.hpp"
#include "trifuse/rng.hpp"
#include "trifuse/sparse.hpp"
#include "trifuse/tape.hpp"

namespace trifuse {

// Graph-convolution branch. Bias-free layers; widths mirror the AE dims so
// layer-wise mixing is shape-valid. The residual variant adds the layer's
// input to the pre-activation on width-preserving layers.
struct GcnParams {
  std::vector<DenseMatrix> enc_w, dec_w;
  std::vector<std::size_t> dims;
  bool residual = false;

  std::size_t depth() const { return enc_w.size(); }
  static GcnParams init(const std::vector<std::size_t>& dims, bool residual, Rng& rng);
};

struct GcnVars {
  std::vector<Tape::Var> enc_w, dec_w;
};
GcnVars lift(Tape& tape, const GcnParams& p, bool tracked);

// LeakyReLU(norm_adj * h * w); with residual, LeakyReLU(norm_adj * h * w + h)
// when h and the output share a width.
DenseMatrix gcn_layer(const SparseCsr& norm_adj, const DenseMatrix& h,
                      const DenseMatrix& w, double slope = kDefaultLeakySlope,
                      bool residual = false);
Tape::Var gcn_layer_t(Tape& tape, const SparseCsr& norm_adj, Tape::Var h,
                      Tape::Var w, double slope, bool residual);

// Encoder stack with AE-hidden mixing: layer 1 reads x; the input to layer
// l+1 is eps*H^(l) + (1-eps)*Z^(l).
std::vector<Tape::Var> gcn_encode_fused_t(Tape& tape, const SparseCsr& norm_adj,
                                          Tape::Var x,
                                          const std::vector<Tape::Var>& ae_hidden,
                                          const GcnVars& vars, bool residual,
                                          double eps,
                                          double slope = kDefaultLeakySlope);
std::vector<DenseMatrix> gcn_encode_fused(const SparseCsr& norm_adj,
                                          const DenseMatrix& x,
                                          const std::vector<DenseMatrix>& ae_hidden,
                                          const GcnParams& params, double eps,
                                          double slope = kDefaultLeakySlope);

// Mirrored unfused stack from the branch bottleneck back to d0.
Tape::Var gcn_decode_t(Tape& tape, const SparseCsr& norm_adj, Tape::Var z,
                       const GcnVars& vars, bool residual,
                       double slope = kDefaultLeakySlope);
DenseMatrix gcn_decode(const SparseCsr& norm_adj, const DenseMatrix& z,
                       const GcnParams& params, double slope = kDefaultLeakySlope);

}  // namespace trifuse
