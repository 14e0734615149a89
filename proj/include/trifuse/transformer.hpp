#pragma once

#include <utility>
#include <vector>

#include "trifuse/autoencoder.hpp"
#include "trifuse/dense.hpp"
#include "trifuse/rng.hpp"
#include "trifuse/sparse.hpp"
#include "trifuse/tape.hpp"

namespace trifuse {

// How per-edge attention scores become weights: softmax over each target
// node's in-neighborhood (convex combination) or an entrywise logistic.
enum class AttentionNorm { softmax, sigmoid };

// Graph-transformer branch. Each layer holds per-head query/key/value
// projections (d_in x d_head, d_head = d_out/heads) plus a skip projection
// W_skip (d_in x d_out). Attention runs over the raw directed edge set; a
// node's own features enter only through the skip term.
struct GtHead {
  DenseMatrix w_query, w_key, w_value;
};
struct GtLayer {
  std::vector<GtHead> heads;
  DenseMatrix w_skip;
};
struct GtParams {
  std::vector<GtLayer> enc, dec;
  std::vector<std::size_t> dims;
  std::size_t heads = 1;

  std::size_t depth() const { return enc.size(); }
  static GtParams init(const std::vector<std::size_t>& dims, std::size_t heads,
                       Rng& rng);
};

struct GtLayerVars {
  struct HeadVars {
    Tape::Var w_query, w_key, w_value;
  };
  std::vector<HeadVars> heads;
  Tape::Var w_skip;
};
struct GtVars {
  std::vector<GtLayerVars> enc, dec;
};
GtVars lift(Tape& tape, const GtParams& p, bool tracked);

// Per-edge attention weights, one E x 1 column per head, aligned with the
// edge list.
struct AttentionWeights {
  std::vector<DenseMatrix> per_head;
};

// One attention layer before the activation:
//   x'_i = W_skip x_i + concat over heads of sum_j alpha_ij (W_value x_j)
// with alpha from scores (W_q x_i) . (W_k x_j) / sqrt(d_head).
struct AttnCoreVars {
  Tape::Var pre;                   // N x d_out, pre-activation
  std::vector<Tape::Var> alpha;    // per head, E x 1
};
AttnCoreVars attention_core_t(Tape& tape, const EdgeList& edges, std::size_t n_nodes,
                              Tape::Var x, const GtLayerVars& layer,
                              AttentionNorm norm);
Tape::Var attention_layer_t(Tape& tape, const EdgeList& edges, std::size_t n_nodes,
                            Tape::Var x, const GtLayerVars& layer, AttentionNorm norm,
                            double slope = kDefaultLeakySlope);

std::pair<DenseMatrix, AttentionWeights> attention_core(
    const EdgeList& edges, std::size_t n_nodes, const DenseMatrix& x,
    const GtLayer& layer, AttentionNorm norm = AttentionNorm::softmax);
std::pair<DenseMatrix, AttentionWeights> attention_layer(
    const EdgeList& edges, std::size_t n_nodes, const DenseMatrix& x,
    const GtLayer& layer, AttentionNorm norm = AttentionNorm::softmax,
    double slope = kDefaultLeakySlope);

// Encoder stack with AE-hidden mixing, same contract shape as the GCN branch.
std::vector<Tape::Var> gt_encode_fused_t(Tape& tape, const EdgeList& edges,
                                         std::size_t n_nodes, Tape::Var x,
                                         const std::vector<Tape::Var>& ae_hidden,
                                         const GtVars& vars, double eps,
                                         AttentionNorm norm,
                                         double slope = kDefaultLeakySlope);
std::vector<DenseMatrix> gt_encode_fused(const EdgeList& edges, std::size_t n_nodes,
                                         const DenseMatrix& x,
                                         const std::vector<DenseMatrix>& ae_hidden,
                                         const GtParams& params, double eps,
                                         AttentionNorm norm = AttentionNorm::softmax,
                                         double slope = kDefaultLeakySlope);

Tape::Var gt_decode_t(Tape& tape, const EdgeList& edges, std::size_t n_nodes,
                      Tape::Var z, const GtVars& vars, AttentionNorm norm,
                      double slope = kDefaultLeakySlope);
DenseMatrix gt_decode(const EdgeList& edges, std::size_t n_nodes, const DenseMatrix& z,
                      const GtParams& params,
                      AttentionNorm norm = AttentionNorm::softmax,
                      double slope = kDefaultLeakySlope);

}  // namespace trifuse
