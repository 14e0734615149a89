#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "trifuse/autoencoder.hpp"
#include "trifuse/errors.hpp"
#include "trifuse/graph.hpp"
#include "trifuse/trainer.hpp"

namespace {

using namespace trifuse;

void print_metrics(const MetricsReport& m) {
  std::printf("acc=%.6f\n", m.acc);
  std::printf("nmi=%.6f\n", m.nmi);
  std::printf("ari=%.6f\n", m.ari);
  std::printf("f1=%.6f\n", m.f1);
}

// Cluster count for training: explicit --clusters wins; otherwise inferred
// from the labels file.
std::size_t resolve_clusters(std::size_t requested, const std::string& labels_path) {
  if (requested > 0) return requested;
  if (labels_path.empty()) {
    throw validation_error(
        "--clusters is required when the config names no labels file");
  }
  int max_label = -1;
  for (int y : load_labels_file(labels_path)) {
    if (y < 0) {
      throw validation_error("labels file contains a negative label");
    }
    max_label = std::max(max_label, y);
  }
  if (max_label < 1) {
    throw validation_error("labels file must name at least 2 classes");
  }
  return static_cast<std::size_t>(max_label) + 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Attributed-graph clustering with a fused three-branch encoder"};
  app.require_subcommand(1);

  // gen-sbm
  auto* gen = app.add_subcommand(
      "gen-sbm", "Generate a stochastic block model dataset on disk");
  std::size_t blocks = 3, per_block = 30, feat_dim = 16;
  double p_in = 0.5, p_out = 0.02, separation = 3.0, noise_sd = 0.5;
  std::uint64_t gen_seed = 0;
  std::string gen_out = "sbm";
  gen->add_option("--blocks", blocks, "Number of blocks")->capture_default_str();
  gen->add_option("--per-block", per_block, "Nodes per block")->capture_default_str();
  gen->add_option("--p-in", p_in, "Within-block edge probability")
      ->capture_default_str();
  gen->add_option("--p-out", p_out, "Cross-block edge probability")
      ->capture_default_str();
  gen->add_option("--feat-dim", feat_dim, "Feature dimensionality")
      ->capture_default_str();
  gen->add_option("--separation", separation, "Block centroid separation")
      ->capture_default_str();
  gen->add_option("--noise-sd", noise_sd, "Feature noise standard deviation")
      ->capture_default_str();
  gen->add_option("--seed", gen_seed, "RNG seed")->capture_default_str();
  gen->add_option("--out-dir", gen_out, "Output directory")->capture_default_str();
  gen->callback([&] {
    Graph g = generate_sbm(blocks, per_block, p_in, p_out, feat_dim, separation,
                           noise_sd, gen_seed);
    std::filesystem::create_directories(gen_out);
    save_graph(g, gen_out + "/features.txt", gen_out + "/edges.txt",
               gen_out + "/labels.txt");
    std::printf("wrote %zu nodes, %zu undirected edges, %zu blocks to %s\n",
                g.n_nodes, g.edges.size(), blocks, gen_out.c_str());
  });

  // pretrain
  auto* pre = app.add_subcommand(
      "pretrain", "Pretrain the autoencoder alone and save its weights");
  std::string pre_config, pre_out;
  bool pre_standardize = false;
  pre->add_option("--config", pre_config, "Training config JSON")->required();
  pre->add_option("--out", pre_out,
                  "Weights file (default <out_dir>/ae_pretrained.txt)");
  pre->add_flag("--standardize", pre_standardize,
                "Standardize feature columns on load");
  pre->callback([&] {
    TrainConfig cfg = load_train_config(pre_config);
    Graph g = load_graph(cfg.paths.features, cfg.paths.edges, "", 0,
                         pre_standardize);
    const std::vector<std::size_t> dims =
        canonical_dims(g.features.cols(), cfg.depth, cfg.n_z);
    // Same derived stream the joint trainer uses, so a saved pretrain is
    // interchangeable with the in-process one.
    PretrainResult r = pretrain_ae(g, dims, cfg.pretrain.lr, cfg.pretrain.epochs,
                                   Rng(cfg.seed).fork(0).seed());
    std::string out = pre_out;
    if (out.empty()) {
      const std::string dir =
          cfg.paths.out_dir.empty() ? "." : cfg.paths.out_dir;
      std::filesystem::create_directories(dir);
      out = dir + "/ae_pretrained.txt";
    }
    save_ae_weights(r.params, out);
    std::printf("pretrained %zu epochs; loss %.6g -> %.6g; weights in %s\n",
                cfg.pretrain.epochs, r.loss_history.empty() ? 0.0 : r.loss_history.front(),
                r.loss_history.empty() ? 0.0 : r.loss_history.back(), out.c_str());
  });

  // train
  auto* tr = app.add_subcommand("train", "Joint training of all three branches");
  std::string tr_config, tr_preset, tr_features, tr_edges, tr_labels, tr_out_dir;
  std::string tr_ae_weights;
  std::size_t tr_clusters = 0;
  bool tr_final_from_q = false, tr_standardize = false, tr_dump = false;
  auto* tr_config_opt =
      tr->add_option("--config", tr_config, "Training config JSON file");
  tr->add_option("--preset", tr_preset,
                 "Named preset configuration (e.g. acm, dblp, usps)")
      ->excludes(tr_config_opt);
  tr->add_option("--features", tr_features, "Override features path");
  tr->add_option("--edges", tr_edges, "Override edges path");
  tr->add_option("--labels", tr_labels, "Override labels path");
  tr->add_option("--out-dir", tr_out_dir, "Override output directory");
  tr->add_option("--clusters", tr_clusters,
                 "Cluster count (default: inferred from labels)");
  tr->add_option("--ae-weights", tr_ae_weights,
                 "Load pretrained autoencoder weights instead of pretraining");
  tr->add_flag("--final-from-q", tr_final_from_q,
               "Take final labels from Q instead of Q'");
  tr->add_flag("--standardize", tr_standardize,
               "Standardize feature columns on load");
  tr->add_flag("--dump-config", tr_dump,
               "Print the effective config as JSON and exit");
  tr->callback([&] {
    TrainConfig cfg;
    if (!tr_config.empty()) {
      cfg = load_train_config(tr_config);
    } else if (!tr_preset.empty()) {
      cfg = preset_config(tr_preset);
    } else {
      throw validation_error("train needs --config or --preset");
    }
    if (!tr_features.empty()) cfg.paths.features = tr_features;
    if (!tr_edges.empty()) cfg.paths.edges = tr_edges;
    if (!tr_labels.empty()) cfg.paths.labels = tr_labels;
    if (!tr_out_dir.empty()) cfg.paths.out_dir = tr_out_dir;
    cfg.validate();
    if (tr_dump) {
      std::cout << serialize_train_config(cfg);
      return;
    }
    if (cfg.paths.features.empty() || cfg.paths.edges.empty()) {
      throw validation_error("config must name features and edges paths");
    }
    const std::size_t k = resolve_clusters(tr_clusters, cfg.paths.labels);
    Graph g = load_graph(cfg.paths.features, cfg.paths.edges, cfg.paths.labels, k,
                         tr_standardize);

    AeParams ae;
    const AeParams* pretrained = nullptr;
    if (!tr_ae_weights.empty()) {
      ae = load_ae_weights(tr_ae_weights);
      pretrained = &ae;
    }
    TrainResult result = train(g, cfg, pretrained);
    write_train_artifacts(g, cfg, result, tr_final_from_q);

    const std::string dir = cfg.paths.out_dir.empty() ? "." : cfg.paths.out_dir;
    if (!result.history.empty()) {
      std::printf("loss %.6g -> %.6g over %zu epochs\n",
                  result.history.front().loss.total,
                  result.history.back().loss.total, cfg.epochs);
    }
    if (g.labels.has_value()) {
      std::vector<int> labels = result.labels;
      if (tr_final_from_q && result.q.rows() > 0) labels = extract_labels(result.q);
      print_metrics(evaluate_all(labels, *g.labels));
    }
    std::printf("artifacts in %s\n", dir.c_str());
  });

  // eval
  auto* ev = app.add_subcommand("eval", "Score predicted labels against truth");
  std::string ev_pred, ev_truth;
  ev->add_option("--pred", ev_pred, "Predicted labels file")->required();
  ev->add_option("--truth", ev_truth, "Ground-truth labels file")->required();
  ev->callback([&] { print_metrics(evaluate(ev_pred, ev_truth)); });

  // gradcheck
  auto* gc = app.add_subcommand(
      "gradcheck", "Finite-difference verification of every gradient path");
  gc->callback([&] {
    if (!gradcheck_suite(std::cout)) {
      throw numeric_error("gradient check failed");
    }
    std::printf("all gradient checks passed\n");
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  } catch (const validation_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const numeric_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
