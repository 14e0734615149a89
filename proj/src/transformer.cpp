#include "trifuse/transformer.hpp"

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

// Draw order per layer: each head's query, key, value, then the skip weight.
GtLayer init_layer(std::size_t d_in, std::size_t d_out, std::size_t heads, Rng& rng) {
  if (heads == 0) throw validation_error("GtParams: heads must be >= 1");
  if (d_out % heads != 0) {
    throw validation_error("GtParams: layer width " + std::to_string(d_out) +
                           " not divisible by " + std::to_string(heads) + " heads");
  }
  const std::size_t d_head = d_out / heads;
  GtLayer layer;
  for (std::size_t h = 0; h < heads; ++h) {
    GtHead head;
    head.w_query = init_weight(d_in, d_head, rng);
    head.w_key = init_weight(d_in, d_head, rng);
    head.w_value = init_weight(d_in, d_head, rng);
    layer.heads.push_back(std::move(head));
  }
  layer.w_skip = init_weight(d_in, d_out, rng);
  return layer;
}

void check_eps(double eps) {
  if (!(eps >= 0.0 && eps <= 1.0)) {
    throw validation_error("mixing coefficient eps must lie in [0,1], got " +
                           std::to_string(eps));
  }
}

}  // namespace

GtParams GtParams::init(const std::vector<std::size_t>& dims, std::size_t heads,
                        Rng& rng) {
  if (dims.size() < 2) {
    throw validation_error("GtParams: dims needs at least [d0, n_z]");
  }
  GtParams p;
  p.dims = dims;
  p.heads = heads;
  const std::size_t depth = dims.size() - 1;
  for (std::size_t l = 0; l < depth; ++l) {
    p.enc.push_back(init_layer(dims[l], dims[l + 1], heads, rng));
  }
  for (std::size_t l = 0; l < depth; ++l) {
    p.dec.push_back(init_layer(dims[depth - l], dims[depth - l - 1], heads, rng));
  }
  return p;
}

GtVars lift(Tape& tape, const GtParams& p, bool tracked) {
  GtVars v;
  auto put = [&](const DenseMatrix& m) {
    return tracked ? tape.leaf(m) : tape.constant(m);
  };
  auto lift_layers = [&](const std::vector<GtLayer>& layers) {
    std::vector<GtLayerVars> out;
    for (const GtLayer& layer : layers) {
      GtLayerVars lv;
      for (const GtHead& head : layer.heads) {
        lv.heads.push_back({put(head.w_query), put(head.w_key), put(head.w_value)});
      }
      lv.w_skip = put(layer.w_skip);
      out.push_back(std::move(lv));
    }
    return out;
  };
  v.enc = lift_layers(p.enc);
  v.dec = lift_layers(p.dec);
  return v;
}

AttnCoreVars attention_core_t(Tape& tape, const EdgeList& edges, std::size_t n_nodes,
                              Tape::Var x, const GtLayerVars& layer,
                              AttentionNorm norm) {
  if (layer.heads.empty()) throw validation_error("attention layer has no heads");
  const std::size_t d_in = tape.value(x).cols();
  const std::size_t skip_in = tape.value(layer.w_skip).rows();
  if (d_in != skip_in) {
    throw validation_error("attention input width " + std::to_string(d_in) +
                           " does not match layer input width " +
                           std::to_string(skip_in));
  }
  const std::size_t d_head = tape.value(layer.heads[0].w_query).cols();
  const double scale = 1.0 / std::sqrt(static_cast<double>(d_head));

  AttnCoreVars out;
  std::vector<Tape::Var> head_outs;
  for (const GtLayerVars::HeadVars& head : layer.heads) {
    Tape::Var q = tape.matmul(x, head.w_query);
    Tape::Var k = tape.matmul(x, head.w_key);
    Tape::Var v = tape.matmul(x, head.w_value);
    Tape::Var scores = tape.edge_scores(q, k, edges, scale);
    Tape::Var alpha = norm == AttentionNorm::softmax
                          ? tape.edge_softmax(scores, edges)
                          : tape.sigmoid(scores);
    out.alpha.push_back(alpha);
    head_outs.push_back(tape.edge_aggregate(alpha, v, edges, n_nodes));
  }
  Tape::Var agg =
      head_outs.size() == 1 ? head_outs[0] : tape.concat_cols(head_outs);
  out.pre = tape.add(tape.matmul(x, layer.w_skip), agg);
  return out;
}

Tape::Var attention_layer_t(Tape& tape, const EdgeList& edges, std::size_t n_nodes,
                            Tape::Var x, const GtLayerVars& layer, AttentionNorm norm,
                            double slope) {
  return tape.leaky_relu(attention_core_t(tape, edges, n_nodes, x, layer, norm).pre,
                         slope);
}

namespace {

GtLayerVars lift_single(Tape& tape, const GtLayer& layer) {
  GtLayerVars lv;
  for (const GtHead& head : layer.heads) {
    lv.heads.push_back({tape.constant(head.w_query), tape.constant(head.w_key),
                        tape.constant(head.w_value)});
  }
  lv.w_skip = tape.constant(layer.w_skip);
  return lv;
}

}  // namespace

std::pair<DenseMatrix, AttentionWeights> attention_core(
    const EdgeList& edges, std::size_t n_nodes, const DenseMatrix& x,
    const GtLayer& layer, AttentionNorm norm) {
  Tape tape;
  GtLayerVars lv = lift_single(tape, layer);
  AttnCoreVars core =
      attention_core_t(tape, edges, n_nodes, tape.constant(x), lv, norm);
  AttentionWeights w;
  for (Tape::Var a : core.alpha) w.per_head.push_back(tape.value(a));
  return {tape.value(core.pre), std::move(w)};
}

std::pair<DenseMatrix, AttentionWeights> attention_layer(
    const EdgeList& edges, std::size_t n_nodes, const DenseMatrix& x,
    const GtLayer& layer, AttentionNorm norm, double slope) {
  Tape tape;
  GtLayerVars lv = lift_single(tape, layer);
  AttnCoreVars core =
      attention_core_t(tape, edges, n_nodes, tape.constant(x), lv, norm);
  AttentionWeights w;
  for (Tape::Var a : core.alpha) w.per_head.push_back(tape.value(a));
  return {tape.value(tape.leaky_relu(core.pre, slope)), std::move(w)};
}

std::vector<Tape::Var> gt_encode_fused_t(Tape& tape, const EdgeList& edges,
                                         std::size_t n_nodes, Tape::Var x,
                                         const std::vector<Tape::Var>& ae_hidden,
                                         const GtVars& vars, double eps,
                                         AttentionNorm norm, double slope) {
  check_eps(eps);
  const std::size_t depth = vars.enc.size();
  if (ae_hidden.size() < depth) {
    throw validation_error("gt_encode_fused: " + std::to_string(ae_hidden.size()) +
                           " AE hiddens for depth " + std::to_string(depth));
  }
  std::vector<Tape::Var> z;
  z.reserve(depth);
  z.push_back(attention_layer_t(tape, edges, n_nodes, x, vars.enc[0], norm, slope));
  for (std::size_t l = 1; l < depth; ++l) {
    Tape::Var mixed = tape.add(tape.scale(ae_hidden[l - 1], eps),
                               tape.scale(z[l - 1], 1.0 - eps));
    z.push_back(
        attention_layer_t(tape, edges, n_nodes, mixed, vars.enc[l], norm, slope));
  }
  return z;
}

std::vector<DenseMatrix> gt_encode_fused(const EdgeList& edges, std::size_t n_nodes,
                                         const DenseMatrix& x,
                                         const std::vector<DenseMatrix>& ae_hidden,
                                         const GtParams& params, double eps,
                                         AttentionNorm norm, double slope) {
  Tape tape;
  GtVars vars = lift(tape, params, false);
  std::vector<Tape::Var> hv;
  for (const auto& h : ae_hidden) hv.push_back(tape.constant(h));
  std::vector<Tape::Var> zv = gt_encode_fused_t(tape, edges, n_nodes,
                                                tape.constant(x), hv, vars, eps, norm,
                                                slope);
  std::vector<DenseMatrix> z;
  for (Tape::Var v : zv) z.push_back(tape.value(v));
  return z;
}

Tape::Var gt_decode_t(Tape& tape, const EdgeList& edges, std::size_t n_nodes,
                      Tape::Var z, const GtVars& vars, AttentionNorm norm,
                      double slope) {
  Tape::Var h = z;
  for (std::size_t l = 0; l < vars.dec.size(); ++l) {
    h = attention_layer_t(tape, edges, n_nodes, h, vars.dec[l], norm, slope);
  }
  return h;
}

DenseMatrix gt_decode(const EdgeList& edges, std::size_t n_nodes, const DenseMatrix& z,
                      const GtParams& params, AttentionNorm norm, double slope) {
  Tape tape;
  GtVars vars = lift(tape, params, false);
  return tape.value(
      gt_decode_t(tape, edges, n_nodes, tape.constant(z), vars, norm, slope));
}

}  // namespace trifuse
