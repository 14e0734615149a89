#include "trifuse/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <utility>

#include <json.hpp>

#include "trifuse/errors.hpp"
#include "trifuse/gradcheck.hpp"
#include "trifuse/selfsup.hpp"

namespace trifuse {

std::string to_string(LrDecay v) {
  return v == LrDecay::none ? "none" : "step";
}
std::string to_string(ReconBranch v) {
  switch (v) {
    case ReconBranch::gcn: return "gcn";
    case ReconBranch::transformer: return "transformer";
    case ReconBranch::averaged: return "averaged";
  }
  return "gcn";
}
std::string to_string(AeReconTarget v) {
  return v == AeReconTarget::smoothed ? "smoothed" : "raw";
}
std::string to_string(AttentionNorm v) {
  return v == AttentionNorm::softmax ? "softmax" : "sigmoid";
}

LrDecay lr_decay_from_string(const std::string& s) {
  if (s == "none") return LrDecay::none;
  if (s == "step") return LrDecay::step;
  throw validation_error("lr_decay must be \"none\" or \"step\", got \"" + s + "\"");
}
ReconBranch recon_branch_from_string(const std::string& s) {
  if (s == "gcn") return ReconBranch::gcn;
  if (s == "transformer") return ReconBranch::transformer;
  if (s == "averaged") return ReconBranch::averaged;
  throw validation_error(
      "recon_branch must be \"gcn\", \"transformer\" or \"averaged\", got \"" + s +
      "\"");
}
AeReconTarget ae_recon_target_from_string(const std::string& s) {
  if (s == "smoothed") return AeReconTarget::smoothed;
  if (s == "raw") return AeReconTarget::raw;
  throw validation_error("ae_recon_target must be \"smoothed\" or \"raw\", got \"" +
                         s + "\"");
}
AttentionNorm attention_norm_from_string(const std::string& s) {
  if (s == "softmax") return AttentionNorm::softmax;
  if (s == "sigmoid") return AttentionNorm::sigmoid;
  throw validation_error("attention_norm must be \"softmax\" or \"sigmoid\", got \"" +
                         s + "\"");
}

std::vector<std::size_t> canonical_dims(std::size_t d0, std::size_t depth,
                                        std::size_t n_z) {
  if (depth < 1 || depth > 4) {
    throw validation_error("depth must be in [1,4], got " + std::to_string(depth));
  }
  if (d0 == 0) throw validation_error("input width d0 must be positive");
  if (n_z == 0) throw validation_error("n_z must be positive");
  static const std::size_t hidden[3] = {500, 500, 2000};
  std::vector<std::size_t> dims{d0};
  for (std::size_t i = 4 - depth; i < 3; ++i) dims.push_back(hidden[i]);
  dims.push_back(n_z);
  return dims;
}

void TrainConfig::validate() const {
  if (std::abs(lambda + theta + gamma - 1.0) > 1e-9) {
    throw validation_error("branch weights lambda+theta+gamma must sum to 1, got " +
                           std::to_string(lambda + theta + gamma));
  }
  if (lr < 0.0 || pretrain.lr < 0.0) {
    throw validation_error("learning rates must be >= 0");
  }
  if (!(t > 0.0)) {
    throw validation_error("Student-t degrees of freedom must be > 0, got " +
                           std::to_string(t));
  }
  if (!(eps >= 0.0 && eps <= 1.0)) {
    throw validation_error("eps must lie in [0,1], got " + std::to_string(eps));
  }
  if (alpha < 0.0 || beta < 0.0 || delta < 0.0) {
    throw validation_error("alpha, beta, delta must be >= 0");
  }
  if (depth < 1 || depth > 4) {
    throw validation_error("depth must be in [1,4], got " + std::to_string(depth));
  }
  if (heads == 0) throw validation_error("heads must be >= 1");
  if (n_z == 0) throw validation_error("n_z must be >= 1");
  if (kmeans_restarts == 0) throw validation_error("kmeans_restarts must be >= 1");
}

ModelConfig TrainConfig::model_config(std::size_t d0) const {
  ModelConfig mc;
  mc.eps = eps;
  mc.lambda = lambda;
  mc.theta = theta;
  mc.gamma = gamma;
  mc.delta = delta;
  mc.alpha = alpha;
  mc.beta = beta;
  mc.t = t;
  mc.depth = depth;
  mc.heads = heads;
  mc.residual = residual;
  mc.recon_branch = recon_branch;
  mc.ae_recon_target = ae_recon_target;
  mc.attention_norm = attention_norm;
  mc.dims = canonical_dims(d0, depth, n_z);
  mc.n_z = n_z;
  return mc;
}

namespace {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

const std::set<std::string>& top_level_keys() {
  static const std::set<std::string> keys = {
      "epochs",       "lr",           "lr_decay",        "alpha",
      "beta",         "lambda",       "theta",           "gamma",
      "eps",          "delta",        "t",               "n_z",
      "depth",        "heads",        "residual",        "recon_branch",
      "ae_recon_target", "attention_norm", "seed",       "kmeans_restarts",
      "pretrain",     "paths"};
  return keys;
}

void check_keys(const json& obj, const std::set<std::string>& allowed,
                const std::string& where) {
  for (const auto& item : obj.items()) {
    if (allowed.find(item.key()) == allowed.end()) {
      throw validation_error("unknown config key \"" + item.key() + "\"" + where);
    }
  }
  for (const std::string& key : allowed) {
    if (!obj.contains(key)) {
      throw validation_error("missing config key \"" + key + "\"" + where);
    }
  }
}

double get_number(const json& obj, const char* key) {
  const json& v = obj.at(key);
  if (!v.is_number()) {
    throw validation_error(std::string("config key \"") + key + "\" must be a number");
  }
  return v.get<double>();
}

std::size_t get_count(const json& obj, const char* key) {
  const json& v = obj.at(key);
  if (!v.is_number_integer() && !v.is_number_unsigned()) {
    throw validation_error(std::string("config key \"") + key +
                           "\" must be a non-negative integer");
  }
  if (v.is_number_integer() && v.get<long long>() < 0) {
    throw validation_error(std::string("config key \"") + key +
                           "\" must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

std::string get_string(const json& obj, const char* key) {
  const json& v = obj.at(key);
  if (!v.is_string()) {
    throw validation_error(std::string("config key \"") + key + "\" must be a string");
  }
  return v.get<std::string>();
}

bool get_bool(const json& obj, const char* key) {
  const json& v = obj.at(key);
  if (!v.is_boolean()) {
    throw validation_error(std::string("config key \"") + key +
                           "\" must be a boolean");
  }
  return v.get<bool>();
}

}  // namespace

TrainConfig parse_train_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const std::exception& e) {
    throw validation_error(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw validation_error("config must be a JSON object");
  check_keys(j, top_level_keys(), "");

  TrainConfig c;
  c.epochs = get_count(j, "epochs");
  c.lr = get_number(j, "lr");
  c.lr_decay = lr_decay_from_string(get_string(j, "lr_decay"));
  c.alpha = get_number(j, "alpha");
  c.beta = get_number(j, "beta");
  c.lambda = get_number(j, "lambda");
  c.theta = get_number(j, "theta");
  c.gamma = get_number(j, "gamma");
  c.eps = get_number(j, "eps");
  c.delta = get_number(j, "delta");
  c.t = get_number(j, "t");
  c.n_z = get_count(j, "n_z");
  c.depth = get_count(j, "depth");
  c.heads = get_count(j, "heads");
  c.residual = get_bool(j, "residual");
  c.recon_branch = recon_branch_from_string(get_string(j, "recon_branch"));
  c.ae_recon_target = ae_recon_target_from_string(get_string(j, "ae_recon_target"));
  c.attention_norm = attention_norm_from_string(get_string(j, "attention_norm"));
  c.seed = static_cast<std::uint64_t>(get_count(j, "seed"));
  c.kmeans_restarts = get_count(j, "kmeans_restarts");

  const json& pre = j.at("pretrain");
  if (!pre.is_object()) throw validation_error("config key \"pretrain\" must be an object");
  check_keys(pre, {"lr", "epochs"}, " in \"pretrain\"");
  c.pretrain.lr = get_number(pre, "lr");
  c.pretrain.epochs = get_count(pre, "epochs");

  const json& paths = j.at("paths");
  if (!paths.is_object()) throw validation_error("config key \"paths\" must be an object");
  check_keys(paths, {"features", "edges", "labels", "out_dir"}, " in \"paths\"");
  c.paths.features = get_string(paths, "features");
  c.paths.edges = get_string(paths, "edges");
  c.paths.labels = get_string(paths, "labels");
  c.paths.out_dir = get_string(paths, "out_dir");

  c.validate();
  return c;
}

TrainConfig load_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw validation_error("cannot open config file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_train_config(buf.str());
}

std::string serialize_train_config(const TrainConfig& c) {
  ordered_json j;
  j["epochs"] = c.epochs;
  j["lr"] = c.lr;
  j["lr_decay"] = to_string(c.lr_decay);
  j["alpha"] = c.alpha;
  j["beta"] = c.beta;
  j["lambda"] = c.lambda;
  j["theta"] = c.theta;
  j["gamma"] = c.gamma;
  j["eps"] = c.eps;
  j["delta"] = c.delta;
  j["t"] = c.t;
  j["n_z"] = c.n_z;
  j["depth"] = c.depth;
  j["heads"] = c.heads;
  j["residual"] = c.residual;
  j["recon_branch"] = to_string(c.recon_branch);
  j["ae_recon_target"] = to_string(c.ae_recon_target);
  j["attention_norm"] = to_string(c.attention_norm);
  j["seed"] = c.seed;
  j["kmeans_restarts"] = c.kmeans_restarts;
  j["pretrain"] = ordered_json{{"lr", c.pretrain.lr}, {"epochs", c.pretrain.epochs}};
  j["paths"] = ordered_json{{"features", c.paths.features},
                            {"edges", c.paths.edges},
                            {"labels", c.paths.labels},
                            {"out_dir", c.paths.out_dir}};
  return j.dump(2) + "\n";
}

namespace {

TrainConfig make_preset(std::size_t epochs, double alpha, double beta,
                        std::size_t n_z, double lr, double lambda, double theta,
                        double gamma, double eps) {
  TrainConfig c;
  c.epochs = epochs;
  c.alpha = alpha;
  c.beta = beta;
  c.n_z = n_z;
  c.lr = lr;
  c.lambda = lambda;
  c.theta = theta;
  c.gamma = gamma;
  c.eps = eps;
  c.depth = 4;  // published architecture: 500-500-2000-n_z
  return c;
}

const std::map<std::string, TrainConfig>& preset_table() {
  static const std::map<std::string, TrainConfig> presets = {
      {"acm", make_preset(200, 0.12, 0.1, 10, 5e-5, 0.5, 0.4, 0.1, 0.5)},
      {"dblp", make_preset(200, 0.1, 0.12, 10, 2e-3, 0.3, 0.4, 0.3, 0.5)},
      {"citeseer", make_preset(200, 0.15, 0.3, 10, 4e-5, 0.3, 0.5, 0.2, 0.3)},
      {"cora", make_preset(400, 0.1, 0.12, 10, 1e-4, 0.1, 0.4, 0.5, 0.5)},
      {"hhar", make_preset(600, 0.3, 0.1, 20, 1e-4, 0.1, 0.4, 0.5, 0.5)},
      {"reuters", make_preset(200, 0.3, 0.15, 20, 1e-4, 0.5, 0.1, 0.4, 0.9)},
      {"usps", make_preset(400, 0.1, 0.1, 10, 1e-3, 0.2, 0.3, 0.5, 0.5)},
  };
  return presets;
}

}  // namespace

std::vector<std::string> preset_names() {
  std::vector<std::string> names;
  for (const auto& kv : preset_table()) names.push_back(kv.first);
  return names;
}

TrainConfig preset_config(const std::string& name) {
  auto it = preset_table().find(name);
  if (it == preset_table().end()) {
    std::string known;
    for (const auto& kv : preset_table()) {
      if (!known.empty()) known += ", ";
      known += kv.first;
    }
    throw validation_error("unknown preset \"" + name + "\"; available: " + known);
  }
  return it->second;
}

double effective_lr(double base, LrDecay decay, std::size_t epoch) {
  if (decay == LrDecay::none) return base;
  return base * std::pow(0.1, static_cast<double>(epoch / 20));
}

std::vector<ParamRef> param_refs(ModelParams& p) {
  std::vector<ParamRef> refs;
  auto add = [&](std::string name, DenseMatrix& m) {
    refs.push_back({std::move(name), &m});
  };
  for (std::size_t l = 0; l < p.ae.enc_w.size(); ++l) {
    add("ae.enc_w" + std::to_string(l), p.ae.enc_w[l]);
  }
  for (std::size_t l = 0; l < p.ae.enc_b.size(); ++l) {
    add("ae.enc_b" + std::to_string(l), p.ae.enc_b[l]);
  }
  for (std::size_t l = 0; l < p.ae.dec_w.size(); ++l) {
    add("ae.dec_w" + std::to_string(l), p.ae.dec_w[l]);
  }
  for (std::size_t l = 0; l < p.ae.dec_b.size(); ++l) {
    add("ae.dec_b" + std::to_string(l), p.ae.dec_b[l]);
  }
  for (std::size_t l = 0; l < p.gcn.enc_w.size(); ++l) {
    add("gcn.enc_w" + std::to_string(l), p.gcn.enc_w[l]);
  }
  for (std::size_t l = 0; l < p.gcn.dec_w.size(); ++l) {
    add("gcn.dec_w" + std::to_string(l), p.gcn.dec_w[l]);
  }
  auto add_gt = [&](const char* side, std::vector<GtLayer>& layers) {
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const std::string base = std::string("gt.") + side + std::to_string(l);
      for (std::size_t h = 0; h < layers[l].heads.size(); ++h) {
        const std::string hp = base + ".head" + std::to_string(h);
        add(hp + ".w_query", layers[l].heads[h].w_query);
        add(hp + ".w_key", layers[l].heads[h].w_key);
        add(hp + ".w_value", layers[l].heads[h].w_value);
      }
      add(base + ".w_skip", layers[l].w_skip);
    }
  };
  add_gt("enc", p.gt.enc);
  add_gt("dec", p.gt.dec);
  add("centroids", p.centroids.c);
  return refs;
}

std::vector<Tape::Var> param_vars(const ModelVars& v) {
  std::vector<Tape::Var> vars;
  for (Tape::Var x : v.ae.enc_w) vars.push_back(x);
  for (Tape::Var x : v.ae.enc_b) vars.push_back(x);
  for (Tape::Var x : v.ae.dec_w) vars.push_back(x);
  for (Tape::Var x : v.ae.dec_b) vars.push_back(x);
  for (Tape::Var x : v.gcn.enc_w) vars.push_back(x);
  for (Tape::Var x : v.gcn.dec_w) vars.push_back(x);
  auto add_gt = [&](const std::vector<GtLayerVars>& layers) {
    for (const GtLayerVars& layer : layers) {
      for (const GtLayerVars::HeadVars& head : layer.heads) {
        vars.push_back(head.w_query);
        vars.push_back(head.w_key);
        vars.push_back(head.w_value);
      }
      vars.push_back(layer.w_skip);
    }
  };
  add_gt(v.gt.enc);
  add_gt(v.gt.dec);
  vars.push_back(v.centroids);
  return vars;
}

namespace {

LossComponents components_of(const Tape& tape, const LossVars& v) {
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

std::string abort_message(std::size_t epoch, const char* what,
                          const std::vector<EpochLog>& history) {
  std::string msg =
      "training aborted at epoch " + std::to_string(epoch) + ": " + what;
  if (!history.empty()) {
    const LossComponents& c = history.back().loss;
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "; last finite loss: total=%g gfn=%g ae=%g clu=%g con=%g",
                  c.total, c.l_gfn, c.l_ae, c.l_clu, c.l_con);
    msg += buf;
  }
  return msg;
}

}  // namespace

TrainResult train(const Graph& graph, const TrainConfig& cfg,
                  const AeParams* pretrained_ae) {
  cfg.validate();
  if (graph.n_nodes == 0) throw validation_error("train: graph has no nodes");
  if (graph.n_clusters < 2) {
    throw validation_error("train: need at least 2 clusters, got " +
                           std::to_string(graph.n_clusters));
  }
  ModelConfig mc = cfg.model_config(graph.features.cols());
  mc.validate();

  const Rng master(cfg.seed);
  ModelParams params;
  if (pretrained_ae != nullptr) {
    if (pretrained_ae->dims != mc.dims) {
      throw validation_error(
          "pretrained autoencoder widths do not match the configured "
          "architecture");
    }
    params.ae = *pretrained_ae;
  } else {
    params.ae = pretrain_ae(graph, mc.dims, cfg.pretrain.lr, cfg.pretrain.epochs,
                            master.fork(0).seed())
                    .params;
  }
  Rng gcn_rng = master.fork(1);
  Rng gt_rng = master.fork(2);
  params.gcn = GcnParams::init(mc.dims, cfg.residual, gcn_rng);
  params.gt = GtParams::init(mc.dims, cfg.heads, gt_rng);

  AeForwardOut ae0 = ae_forward(params.ae, graph.features);
  TrainResult result;
  result.kmeans = kmeans(ae0.hidden.back(), graph.n_clusters, cfg.kmeans_restarts,
                         300, master.fork(3).seed());
  params.centroids = Centroids{result.kmeans.centroids, cfg.t};

  if (cfg.epochs == 0) {
    result.labels = result.kmeans.assignments;
    result.params = std::move(params);
    return result;
  }

  std::vector<ParamRef> refs = param_refs(params);
  AdamState adam;
  adam.init(refs);

  auto log_epoch = [&](std::size_t epoch, const Tape& tape, const LossVars& lv,
                       Tape::Var q_prime) {
    EpochLog row;
    row.epoch = epoch;
    row.loss = components_of(tape, lv);
    if (graph.labels.has_value()) {
      row.has_metrics = true;
      row.metrics = evaluate_all(extract_labels(tape.value(q_prime)), *graph.labels);
    }
    result.history.push_back(std::move(row));
  };

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    try {
      Tape tape;
      ModelVars vars = lift_params(tape, params, true);
      ForwardVars fwd = forward_on_tape(tape, graph, vars, mc);
      LossVars lv = objective_on_tape(tape, graph, fwd, mc);
      log_epoch(epoch, tape, lv, fwd.q_prime);
      tape.backward(lv.total);
      std::vector<Tape::Var> vlist = param_vars(vars);
      std::vector<DenseMatrix> grads;
      grads.reserve(vlist.size());
      for (Tape::Var v : vlist) grads.push_back(tape.grad(v));
      adam_step(refs, grads, adam, effective_lr(cfg.lr, cfg.lr_decay, epoch));
    } catch (const numeric_error& err) {
      throw numeric_error(abort_message(epoch, err.what(), result.history));
    }
  }

  try {
    Tape tape;
    ModelVars vars = lift_params(tape, params, false);
    ForwardVars fwd = forward_on_tape(tape, graph, vars, mc);
    LossVars lv = objective_on_tape(tape, graph, fwd, mc);
    log_epoch(cfg.epochs, tape, lv, fwd.q_prime);
    result.q = tape.value(fwd.q);
    result.q_prime = tape.value(fwd.q_prime);
  } catch (const numeric_error& err) {
    throw numeric_error(abort_message(cfg.epochs, err.what(), result.history));
  }
  result.labels = extract_labels(result.q_prime);
  result.params = std::move(params);
  return result;
}

std::vector<int> load_labels_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw validation_error("cannot open labels file " + path);
  std::vector<int> labels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    int value = 0;
    if (!(ls >> value)) {
      std::string rest;
      ls.clear();
      if (ls >> rest) {
        throw validation_error(path + ":" + std::to_string(line_no) +
                               ": expected an integer label");
      }
      continue;  // blank or comment-only line
    }
    std::string extra;
    if (ls >> extra) {
      throw validation_error(path + ":" + std::to_string(line_no) +
                             ": expected one label per line");
    }
    labels.push_back(value);
  }
  return labels;
}

MetricsReport evaluate(const std::string& pred_path, const std::string& truth_path) {
  const std::vector<int> pred = load_labels_file(pred_path);
  const std::vector<int> truth = load_labels_file(truth_path);
  if (pred.size() != truth.size()) {
    throw validation_error("label files disagree on length: " +
                           std::to_string(pred.size()) + " vs " +
                           std::to_string(truth.size()));
  }
  return evaluate_all(pred, truth);
}

namespace {

void write_matrix_block(std::ostream& out, const std::string& name,
                        const DenseMatrix& m) {
  out << "matrix " << name << " " << m.rows() << " " << m.cols() << "\n";
  char buf[40];
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", m(r, c));
      out << (c == 0 ? "" : " ") << buf;
    }
    out << "\n";
  }
}

std::vector<std::pair<std::string, DenseMatrix>> read_matrix_blocks(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw validation_error("cannot open weights file " + path);
  std::vector<std::pair<std::string, DenseMatrix>> blocks;
  std::string tag;
  while (in >> tag) {
    if (tag != "matrix") {
      throw validation_error(path + ": expected \"matrix\" header, got \"" + tag +
                             "\"");
    }
    std::string name;
    std::size_t rows = 0, cols = 0;
    if (!(in >> name >> rows >> cols)) {
      throw validation_error(path + ": malformed matrix header");
    }
    DenseMatrix m(rows, cols);
    for (double& v : m.values()) {
      if (!(in >> v)) {
        throw validation_error(path + ": matrix \"" + name + "\" is truncated");
      }
    }
    blocks.emplace_back(std::move(name), std::move(m));
  }
  return blocks;
}

void write_weight_file(const std::string& path,
                       const std::vector<std::pair<std::string, const DenseMatrix*>>&
                           mats) {
  std::ofstream out(path);
  if (!out) throw validation_error("cannot write weights file " + path);
  for (const auto& [name, m] : mats) write_matrix_block(out, name, *m);
  if (!out) throw validation_error("failed writing weights file " + path);
}

}  // namespace

void save_ae_weights(const AeParams& p, const std::string& path) {
  std::vector<std::pair<std::string, const DenseMatrix*>> mats;
  for (std::size_t l = 0; l < p.enc_w.size(); ++l) {
    mats.emplace_back("enc_w" + std::to_string(l), &p.enc_w[l]);
    mats.emplace_back("enc_b" + std::to_string(l), &p.enc_b[l]);
  }
  for (std::size_t l = 0; l < p.dec_w.size(); ++l) {
    mats.emplace_back("dec_w" + std::to_string(l), &p.dec_w[l]);
    mats.emplace_back("dec_b" + std::to_string(l), &p.dec_b[l]);
  }
  write_weight_file(path, mats);
}

AeParams load_ae_weights(const std::string& path) {
  AeParams p;
  std::map<std::string, DenseMatrix> by_name;
  for (auto& [name, m] : read_matrix_blocks(path)) {
    if (!by_name.emplace(name, std::move(m)).second) {
      throw validation_error(path + ": duplicate matrix \"" + name + "\"");
    }
  }
  auto take = [&](const std::string& name) {
    auto it = by_name.find(name);
    if (it == by_name.end()) {
      throw validation_error(path + ": missing matrix \"" + name + "\"");
    }
    DenseMatrix m = std::move(it->second);
    by_name.erase(it);
    return m;
  };
  for (std::size_t l = 0; by_name.count("enc_w" + std::to_string(l)) != 0; ++l) {
    p.enc_w.push_back(take("enc_w" + std::to_string(l)));
    p.enc_b.push_back(take("enc_b" + std::to_string(l)));
  }
  for (std::size_t l = 0; by_name.count("dec_w" + std::to_string(l)) != 0; ++l) {
    p.dec_w.push_back(take("dec_w" + std::to_string(l)));
    p.dec_b.push_back(take("dec_b" + std::to_string(l)));
  }
  if (!by_name.empty()) {
    throw validation_error(path + ": unexpected matrix \"" +
                           by_name.begin()->first + "\"");
  }
  if (p.enc_w.empty() || p.dec_w.size() != p.enc_w.size()) {
    throw validation_error(path + ": incomplete autoencoder weight set");
  }
  p.dims.push_back(p.enc_w.front().rows());
  for (const DenseMatrix& w : p.enc_w) p.dims.push_back(w.cols());
  return p;
}

void save_gcn_weights(const GcnParams& p, const std::string& path) {
  std::vector<std::pair<std::string, const DenseMatrix*>> mats;
  for (std::size_t l = 0; l < p.enc_w.size(); ++l) {
    mats.emplace_back("enc_w" + std::to_string(l), &p.enc_w[l]);
  }
  for (std::size_t l = 0; l < p.dec_w.size(); ++l) {
    mats.emplace_back("dec_w" + std::to_string(l), &p.dec_w[l]);
  }
  write_weight_file(path, mats);
}

void save_gt_weights(const GtParams& p, const std::string& path) {
  std::vector<std::pair<std::string, const DenseMatrix*>> mats;
  auto add_side = [&](const char* side, const std::vector<GtLayer>& layers) {
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const std::string base = std::string(side) + std::to_string(l);
      for (std::size_t h = 0; h < layers[l].heads.size(); ++h) {
        const std::string hp = base + ".head" + std::to_string(h);
        mats.emplace_back(hp + ".w_query", &layers[l].heads[h].w_query);
        mats.emplace_back(hp + ".w_key", &layers[l].heads[h].w_key);
        mats.emplace_back(hp + ".w_value", &layers[l].heads[h].w_value);
      }
      mats.emplace_back(base + ".w_skip", &layers[l].w_skip);
    }
  };
  add_side("enc", p.enc);
  add_side("dec", p.dec);
  write_weight_file(path, mats);
}

void save_centroids(const Centroids& c, const std::string& path) {
  write_weight_file(path, {{"centroids", &c.c}});
}

void write_history_csv(const std::vector<EpochLog>& history,
                       const std::string& path) {
  std::ofstream out(path);
  if (!out) throw validation_error("cannot write " + path);
  out << "epoch,loss,loss_gfn,loss_ae,loss_clu,loss_con,acc,nmi,ari,f1\n";
  char buf[40];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out << "," << buf;
  };
  for (const EpochLog& row : history) {
    out << row.epoch;
    put(row.loss.total);
    put(row.loss.l_gfn);
    put(row.loss.l_ae);
    put(row.loss.l_clu);
    put(row.loss.l_con);
    if (row.has_metrics) {
      put(row.metrics.acc);
      put(row.metrics.nmi);
      put(row.metrics.ari);
      put(row.metrics.f1);
    } else {
      out << ",,,,";
    }
    out << "\n";
  }
  if (!out) throw validation_error("failed writing " + path);
}

void write_train_artifacts(const Graph& graph, const TrainConfig& cfg,
                           const TrainResult& result, bool labels_from_q) {
  const std::string dir = cfg.paths.out_dir.empty() ? "." : cfg.paths.out_dir;
  std::filesystem::create_directories(dir);

  write_history_csv(result.history, dir + "/history.csv");

  std::vector<int> labels = result.labels;
  if (labels_from_q) {
    if (result.q.rows() == 0) {
      throw validation_error(
          "labels from Q requested, but no assignment matrix exists (epochs=0)");
    }
    labels = extract_labels(result.q);
  }
  {
    std::ofstream out(dir + "/labels.txt");
    if (!out) throw validation_error("cannot write " + dir + "/labels.txt");
    for (int v : labels) out << v << "\n";
  }

  ordered_json summary;
  summary["config"] = ordered_json::parse(serialize_train_config(cfg));
  summary["n_nodes"] = graph.n_nodes;
  summary["n_clusters"] = graph.n_clusters;
  summary["labels_from"] =
      result.q.rows() == 0 ? "kmeans" : (labels_from_q ? "q" : "q_prime");
  if (!result.history.empty()) {
    const LossComponents& c = result.history.back().loss;
    summary["final_loss"] = ordered_json{
        {"total", c.total},   {"loss_gfn", c.l_gfn}, {"loss_ae", c.l_ae},
        {"loss_clu", c.l_clu}, {"loss_con", c.l_con}, {"loss_w", c.loss_w},
        {"loss_e", c.loss_e}};
  }
  if (graph.labels.has_value()) {
    MetricsReport m = evaluate_all(labels, *graph.labels);
    summary["metrics"] = ordered_json{
        {"acc", m.acc}, {"nmi", m.nmi}, {"ari", m.ari}, {"f1", m.f1}};
  }
  {
    std::ofstream out(dir + "/summary.json");
    if (!out) throw validation_error("cannot write " + dir + "/summary.json");
    out << summary.dump(2) << "\n";
  }

  save_ae_weights(result.params.ae, dir + "/ae_weights.txt");
  save_gcn_weights(result.params.gcn, dir + "/gcn_weights.txt");
  save_gt_weights(result.params.gt, dir + "/gt_weights.txt");
  save_centroids(result.params.centroids, dir + "/centroids.txt");
}

namespace {

Graph fixed_gradcheck_graph() {
  Rng rng(777);
  DenseMatrix x(6, 4);
  for (double& v : x.values()) v = rng.normal();
  std::vector<std::pair<int, int>> edges = {{0, 1}, {0, 2}, {1, 2}, {2, 3},
                                            {3, 4}, {4, 5}, {1, 4}};
  return make_graph(std::move(x), std::move(edges),
                    std::vector<int>{0, 0, 0, 1, 1, 1}, 2);
}

bool e2e_objective_check(std::ostream& log, AttentionNorm norm) {
  const Graph g = fixed_gradcheck_graph();
  ModelConfig mc;
  mc.eps = 0.5;
  mc.lambda = 0.3;
  mc.theta = 0.45;
  mc.gamma = 0.25;
  mc.delta = 0.1;
  mc.alpha = 0.2;
  mc.beta = 0.15;
  mc.t = 1.0;
  mc.depth = 2;
  mc.heads = 1;
  mc.residual = false;
  mc.recon_branch = ReconBranch::averaged;  // exercises both decoders
  mc.ae_recon_target = AeReconTarget::smoothed;
  mc.attention_norm = norm;
  mc.dims = {4, 5, 3};
  mc.n_z = 3;

  const Rng master(4242);
  ModelParams params;
  Rng r0 = master.fork(0);
  Rng r1 = master.fork(1);
  Rng r2 = master.fork(2);
  Rng r3 = master.fork(3);
  params.ae = AeParams::init(mc.dims, r0);
  params.gcn = GcnParams::init(mc.dims, mc.residual, r1);
  params.gt = GtParams::init(mc.dims, mc.heads, r2);
  DenseMatrix c(2, 3);
  for (double& v : c.values()) v = r3.normal();
  params.centroids = Centroids{std::move(c), mc.t};

  // Freeze the target distribution at the base point so finite differences
  // probe the same per-step objective the tape differentiates.
  const DenseMatrix p_base = forward(g, params, mc).p;

  Tape tape;
  ModelVars vars = lift_params(tape, params, true);
  ForwardVars fwd = forward_on_tape(tape, g, vars, mc, &p_base);
  LossVars lv = objective_on_tape(tape, g, fwd, mc);
  tape.backward(lv.total);
  std::vector<Tape::Var> vlist = param_vars(vars);
  std::vector<DenseMatrix> grads;
  grads.reserve(vlist.size());
  for (Tape::Var v : vlist) grads.push_back(tape.grad(v));

  auto loss_at = [&]() {
    Tape probe;
    ModelVars cv = lift_params(probe, params, false);
    ForwardVars f2 = forward_on_tape(probe, g, cv, mc, &p_base);
    LossVars l2 = objective_on_tape(probe, g, f2, mc);
    return probe.value(l2.total)(0, 0);
  };

  std::vector<ParamRef> refs = param_refs(params);
  const double h = 1e-5;
  double max_rel = 0.0;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    std::vector<double>& vals = refs[i].value->values();
    for (std::size_t idx = 0; idx < vals.size(); ++idx) {
      const double orig = vals[idx];
      vals[idx] = orig + h;
      const double up = loss_at();
      vals[idx] = orig - h;
      const double down = loss_at();
      vals[idx] = orig;
      const double fd = (up - down) / (2.0 * h);
      const double ad = grads[i].values()[idx];
      const double rel = std::abs(ad - fd) /
                         std::max({std::abs(ad), std::abs(fd), 1.0});
      max_rel = std::max(max_rel, rel);
    }
  }
  const bool pass = max_rel <= 1e-4;
  log << (pass ? "pass" : "FAIL") << " e2e_objective_" << to_string(norm)
      << " max_rel_err=" << max_rel << "\n";
  return pass;
}

}  // namespace

bool gradcheck_suite(std::ostream& log) {
  bool all = true;
  for (const GradCheckResult& r : run_gradcheck_suite(12345, &log)) {
    all = all && r.pass;
  }
  all = e2e_objective_check(log, AttentionNorm::softmax) && all;
  all = e2e_objective_check(log, AttentionNorm::sigmoid) && all;
  return all;
}

}  // namespace trifuse
