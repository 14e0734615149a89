#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "trifuse/autoencoder.hpp"
#include "trifuse/gcn.hpp"
#include "trifuse/graph.hpp"
#include "trifuse/selfsup.hpp"
#include "trifuse/tape.hpp"
#include "trifuse/transformer.hpp"

namespace trifuse {

// Which branch reconstructs the smoothed features for the graph loss.
enum class ReconBranch { gcn, transformer, averaged };
// What the autoencoder head reconstructs inside the joint objective.
enum class AeReconTarget { smoothed, raw };

// Hyperparameters of the fused three-branch model and its objective.
struct ModelConfig {
  double eps = 0.5;             // AE-hidden mixing weight in [0,1]
  double lambda = 1.0 / 3.0;    // GCN weight in the enhanced representation
  double theta = 1.0 / 3.0;     // AE weight
  double gamma = 1.0 / 3.0;     // transformer weight
  double delta = 0.1;           // adjacency-loss weight
  double alpha = 0.1;           // clustering-loss weight
  double beta = 0.1;            // consistency-loss weight
  double t = 1.0;               // Student-t degrees of freedom
  std::size_t depth = 3;        // encoder layer count; dims.size() == depth+1
  std::size_t heads = 1;
  bool residual = false;        // GCN-only pre-activation skip
  ReconBranch recon_branch = ReconBranch::gcn;
  AeReconTarget ae_recon_target = AeReconTarget::smoothed;
  AttentionNorm attention_norm = AttentionNorm::softmax;
  std::vector<std::size_t> dims;  // [d0, hidden..., n_z]
  std::size_t n_z = 10;

  void validate() const;  // throws validation_error on any violation
};

// All trainable state of one model instance.
struct ModelParams {
  AeParams ae;
  GcnParams gcn;
  GtParams gt;
  Centroids centroids;  // k x n_z; shared by Q and Q'
};

struct ModelVars {
  AeVars ae;
  GcnVars gcn;
  GtVars gt;
  Tape::Var centroids;
};
ModelVars lift_params(Tape& tape, const ModelParams& p, bool tracked);

// Z_L = norm_adj * (lambda*z_gcn + theta*h + gamma*z_t); the three weights
// must sum to 1 within 1e-9.
Tape::Var enhance_t(Tape& tape, const SparseCsr& norm_adj, Tape::Var z_gcn,
                    Tape::Var h, Tape::Var z_t, double lambda, double theta,
                    double gamma);
DenseMatrix enhance(const SparseCsr& norm_adj, const DenseMatrix& z_gcn,
                    const DenseMatrix& h, const DenseMatrix& z_t, double lambda,
                    double theta, double gamma);

struct ForwardVars {
  std::vector<Tape::Var> ae_hidden;  // H^(1..depth)
  Tape::Var x_hat;                   // AE reconstruction, N x d0
  std::vector<Tape::Var> z_gcn;      // GCN layers
  std::vector<Tape::Var> z_t;        // transformer layers
  Tape::Var z_l;                     // enhanced representation, N x n_z
  Tape::Var z_hat_g;                 // graph reconstruction, N x d0
  Tape::Var a_hat;                   // sigmoid(z_hat_g z_hat_g^T), N x N
  Tape::Var q;                       // assignments from z_l
  Tape::Var q_prime;                 // assignments from the AE bottleneck
  DenseMatrix p;                     // sharpened target, constant per step
};

// One full forward pass on an existing tape. p_override, when given,
// replaces the freshly sharpened target (used to hold P fixed across
// finite-difference probes).
ForwardVars forward_on_tape(Tape& tape, const Graph& graph, const ModelVars& vars,
                            const ModelConfig& cfg,
                            const DenseMatrix* p_override = nullptr);

struct LossVars {
  Tape::Var total, l_gfn, l_ae, l_clu, l_con, loss_w, loss_e;
};
LossVars objective_on_tape(Tape& tape, const Graph& graph, const ForwardVars& fwd,
                           const ModelConfig& cfg);

struct ForwardOutputs {
  std::vector<DenseMatrix> ae_hidden;
  DenseMatrix x_hat;
  std::vector<DenseMatrix> z_gcn;
  std::vector<DenseMatrix> z_t;
  DenseMatrix z_l;
  DenseMatrix z_hat_g;
  DenseMatrix a_hat;
  DenseMatrix q, q_prime, p;
};
ForwardOutputs forward(const Graph& graph, const ModelParams& params,
                       const ModelConfig& cfg);

struct LossComponents {
  double total = 0.0;
  double l_gfn = 0.0;   // loss_w + delta * loss_e
  double l_ae = 0.0;    // (1/N) * |x_hat - target|_F^2
  double l_clu = 0.0;   // KL(P || Q), P constant
  double l_con = 0.0;   // KL(Q || Q')
  double loss_w = 0.0;  // (1/N) * |z_hat_g - norm_adj*X|_F^2
  double loss_e = 0.0;  // (1/N^2) * |a_hat - A|_F^2
};
LossComponents objective(const ForwardOutputs& out, const Graph& graph,
                         const ModelConfig& cfg);

}  // namespace trifuse
