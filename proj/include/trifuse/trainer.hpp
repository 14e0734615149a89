#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "trifuse/fusion.hpp"
#include "trifuse/graph.hpp"
#include "trifuse/metrics.hpp"
#include "trifuse/optim.hpp"

namespace trifuse {

enum class LrDecay { none, step };

std::string to_string(LrDecay v);
std::string to_string(ReconBranch v);
std::string to_string(AeReconTarget v);
std::string to_string(AttentionNorm v);
LrDecay lr_decay_from_string(const std::string& s);
ReconBranch recon_branch_from_string(const std::string& s);
AeReconTarget ae_recon_target_from_string(const std::string& s);
AttentionNorm attention_norm_from_string(const std::string& s);

struct PretrainConfig {
  double lr = 1e-3;
  std::size_t epochs = 50;

  bool operator==(const PretrainConfig&) const = default;
};

struct PathsConfig {
  std::string features;
  std::string edges;
  std::string labels;   // "" when the dataset is unlabeled
  std::string out_dir;

  bool operator==(const PathsConfig&) const = default;
};

// Full training recipe. JSON configs carry exactly these fields; unknown or
// missing keys are rejected.
struct TrainConfig {
  std::size_t epochs = 200;
  double lr = 1e-3;
  LrDecay lr_decay = LrDecay::none;
  double alpha = 0.1;
  double beta = 0.1;
  double lambda = 1.0 / 3.0;
  double theta = 1.0 / 3.0;
  double gamma = 1.0 / 3.0;
  double eps = 0.5;
  double delta = 0.1;
  double t = 1.0;
  std::size_t n_z = 10;
  std::size_t depth = 3;
  std::size_t heads = 1;
  bool residual = false;
  ReconBranch recon_branch = ReconBranch::gcn;
  AeReconTarget ae_recon_target = AeReconTarget::smoothed;
  AttentionNorm attention_norm = AttentionNorm::softmax;
  std::uint64_t seed = 0;
  std::size_t kmeans_restarts = 20;
  PretrainConfig pretrain;
  PathsConfig paths;

  bool operator==(const TrainConfig&) const = default;

  void validate() const;
  // The per-model view: canonical layer widths for the given input width.
  ModelConfig model_config(std::size_t d0) const;
};

// [d0] + the last (depth-1) of the canonical hidden widths 500,500,2000 +
// [n_z]; depth must be in [1,4].
std::vector<std::size_t> canonical_dims(std::size_t d0, std::size_t depth,
                                        std::size_t n_z);

TrainConfig parse_train_config(const std::string& json_text);
TrainConfig load_train_config(const std::string& path);
std::string serialize_train_config(const TrainConfig& cfg);

// Per-dataset configurations from the published parameter table.
std::vector<std::string> preset_names();
TrainConfig preset_config(const std::string& name);

// base * 0.1^floor(epoch/20) for step decay; base otherwise.
double effective_lr(double base, LrDecay decay, std::size_t epoch);

struct EpochLog {
  std::size_t epoch = 0;
  LossComponents loss;
  bool has_metrics = false;
  MetricsReport metrics;
};

struct TrainResult {
  std::vector<int> labels;      // from Q' (or KMeans when epochs == 0)
  std::vector<EpochLog> history;  // rows 0..epochs; empty when epochs == 0
  ModelParams params;
  DenseMatrix q, q_prime;       // final assignment matrices (empty if epochs==0)
  KmeansResult kmeans;          // centroid initialization result
};

// Canonical parameter walk; refs and vars line up index-for-index so tape
// gradients can be fed straight into the optimizer.
std::vector<ParamRef> param_refs(ModelParams& p);
std::vector<Tape::Var> param_vars(const ModelVars& v);

// Pretrain (unless weights are supplied), initialize branches, seed
// centroids with KMeans on the AE bottleneck, then run the joint loop.
TrainResult train(const Graph& graph, const TrainConfig& cfg,
                  const AeParams* pretrained_ae = nullptr);

// Label-file pair -> all four metrics.
MetricsReport evaluate(const std::string& pred_path, const std::string& truth_path);
std::vector<int> load_labels_file(const std::string& path);

// Text weight files: named matrices at 17 significant digits (exact
// round-trip for doubles).
void save_ae_weights(const AeParams& p, const std::string& path);
AeParams load_ae_weights(const std::string& path);
void save_gcn_weights(const GcnParams& p, const std::string& path);
void save_gt_weights(const GtParams& p, const std::string& path);
void save_centroids(const Centroids& c, const std::string& path);

// history.csv, labels.txt, summary.json, and weight files under
// cfg.paths.out_dir.
void write_train_artifacts(const Graph& graph, const TrainConfig& cfg,
                           const TrainResult& result, bool labels_from_q = false);
void write_history_csv(const std::vector<EpochLog>& history, const std::string& path);

// Registered-op finite-difference checks plus the end-to-end objective
// gradient on a fixed 6-node instance. True iff everything passes.
bool gradcheck_suite(std::ostream& log);

}  // namespace trifuse
