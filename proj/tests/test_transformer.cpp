#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numeric>
#include <vector>

#include "trifuse/dense.hpp"
#include "trifuse/errors.hpp"
#include "trifuse/graph.hpp"
#include "trifuse/rng.hpp"
#include "trifuse/transformer.hpp"

using namespace trifuse;

namespace {

DenseMatrix mat(std::size_t r, std::size_t c, std::vector<double> v) {
  return DenseMatrix(r, c, std::move(v));
}

DenseMatrix random_mat(std::size_t r, std::size_t c, Rng& rng) {
  DenseMatrix m(r, c);
  for (double& v : m.values()) v = rng.normal();
  return m;
}

GtLayer zero_layer(std::size_t d_in, std::size_t d_out, std::size_t heads) {
  GtLayer layer;
  const std::size_t d_head = d_out / heads;
  for (std::size_t h = 0; h < heads; ++h) {
    GtHead head;
    head.w_query = DenseMatrix(d_in, d_head);
    head.w_key = DenseMatrix(d_in, d_head);
    head.w_value = DenseMatrix(d_in, d_head);
    layer.heads.push_back(std::move(head));
  }
  layer.w_skip = DenseMatrix(d_in, d_out);
  return layer;
}

// Explicit-loop attention reference: per head, per destination node, softmax
// over its in-edges of (W_q x_dst) . (W_k x_src) / sqrt(d_head), then the
// alpha-weighted sum of W_v x_src, heads concatenated, plus W_skip x_dst.
DenseMatrix dense_attention_reference(const EdgeList& edges, std::size_t n,
                                      const DenseMatrix& x, const GtLayer& layer,
                                      AttentionNorm norm) {
  const std::size_t heads = layer.heads.size();
  const std::size_t d_head = layer.heads[0].w_value.cols();
  DenseMatrix out = matmul(x, layer.w_skip);
  for (std::size_t h = 0; h < heads; ++h) {
    const DenseMatrix q = matmul(x, layer.heads[h].w_query);
    const DenseMatrix k = matmul(x, layer.heads[h].w_key);
    const DenseMatrix v = matmul(x, layer.heads[h].w_value);
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(d_head));
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<std::size_t> in_edges;
      for (std::size_t e = 0; e < edges.size(); ++e) {
        if (static_cast<std::size_t>(edges.dst[e]) == i) in_edges.push_back(e);
      }
      if (in_edges.empty()) continue;
      std::vector<double> scores;
      for (std::size_t e : in_edges) {
        double s = 0.0;
        const std::size_t j = static_cast<std::size_t>(edges.src[e]);
        for (std::size_t c = 0; c < d_head; ++c) s += q(i, c) * k(j, c);
        scores.push_back(s * inv_sqrt);
      }
      std::vector<double> alpha(scores.size());
      if (norm == AttentionNorm::softmax) {
        double mx = scores[0];
        for (double s : scores) mx = std::max(mx, s);
        double tot = 0.0;
        for (std::size_t e = 0; e < scores.size(); ++e) {
          alpha[e] = std::exp(scores[e] - mx);
          tot += alpha[e];
        }
        for (double& a : alpha) a /= tot;
      } else {
        for (std::size_t e = 0; e < scores.size(); ++e) {
          alpha[e] = 1.0 / (1.0 + std::exp(-scores[e]));
        }
      }
      for (std::size_t e = 0; e < in_edges.size(); ++e) {
        const std::size_t j = static_cast<std::size_t>(edges.src[in_edges[e]]);
        for (std::size_t c = 0; c < d_head; ++c) {
          out(i, h * d_head + c) += alpha[e] * v(j, c);
        }
      }
    }
  }
  return out;
}

}  // namespace

TEST_CASE("single neighbor gets attention weight 1") {
  // Edge 1 -> 0 only.
  EdgeList edges;
  edges.src = {1};
  edges.dst = {0};
  Rng rng(1);
  GtLayer layer = zero_layer(3, 2, 1);
  for (auto* w : {&layer.heads[0].w_query, &layer.heads[0].w_key, &layer.heads[0].w_value}) {
    for (double& v : w->values()) v = rng.normal();
  }
  const auto [pre, weights] = attention_core(edges, 2, random_mat(2, 3, rng), layer);
  REQUIRE(weights.per_head.size() == 1);
  REQUIRE(weights.per_head[0].rows() == 1);
  CHECK(weights.per_head[0](0, 0) == 1.0);
}

TEST_CASE("no neighbors leaves only the skip term") {
  EdgeList edges;  // empty
  GtLayer layer = zero_layer(2, 2, 1);
  layer.w_skip = DenseMatrix::identity(2);
  const DenseMatrix x = mat(2, 2, {1.5, -0.5, 0.25, 2.0});
  const auto [pre, weights] = attention_core(edges, 2, x, layer);
  CHECK(max_abs_diff(pre, x) == 0.0);
}

TEST_CASE("two nodes swap values under uniform attention") {
  // Both directions, W_q = W_k = 0 (uniform scores), W_v = I, W_skip = 0:
  // each node receives exactly the other's features, pre-activation.
  EdgeList edges;
  edges.src = {1, 0};
  edges.dst = {0, 1};
  GtLayer layer = zero_layer(2, 2, 1);
  layer.heads[0].w_value = DenseMatrix::identity(2);
  const DenseMatrix x = mat(2, 2, {1.0, 2.0, 3.0, 4.0});
  const auto [pre, weights] = attention_core(edges, 2, x, layer);
  CHECK(weights.per_head[0](0, 0) == 1.0);
  CHECK(weights.per_head[0](1, 0) == 1.0);
  CHECK(pre(0, 0) == 3.0);
  CHECK(pre(0, 1) == 4.0);
  CHECK(pre(1, 0) == 1.0);
  CHECK(pre(1, 1) == 2.0);
}

TEST_CASE("attention weights sum to 1 per destination per head") {
  Rng rng(5);
  const Graph g = generate_sbm(2, 5, 0.7, 0.3, 4, 2.0, 0.5, 13);
  const EdgeList edges = g.directed_edges();
  GtParams p = GtParams::init({4, 4}, 2, rng);
  const auto [pre, weights] = attention_core(edges, g.n_nodes, g.features, p.enc[0]);
  REQUIRE(weights.per_head.size() == 2);
  for (const DenseMatrix& alpha : weights.per_head) {
    std::vector<double> sums(g.n_nodes, 0.0);
    std::vector<bool> has(g.n_nodes, false);
    for (std::size_t e = 0; e < edges.size(); ++e) {
      sums[static_cast<std::size_t>(edges.dst[e])] += alpha(e, 0);
      has[static_cast<std::size_t>(edges.dst[e])] = true;
    }
    for (std::size_t i = 0; i < g.n_nodes; ++i) {
      if (has[i]) CHECK(std::abs(sums[i] - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("sigmoid attention normalizes each edge independently") {
  EdgeList edges;
  edges.src = {1, 2};
  edges.dst = {0, 0};
  Rng rng(6);
  GtLayer layer = zero_layer(3, 3, 1);
  for (double& v : layer.heads[0].w_query.values()) v = rng.normal();
  for (double& v : layer.heads[0].w_key.values()) v = rng.normal();
  const DenseMatrix x = random_mat(3, 3, rng);

  const auto [pre, weights] =
      attention_core(edges, 3, x, layer, AttentionNorm::sigmoid);
  const DenseMatrix q = matmul(x, layer.heads[0].w_query);
  const DenseMatrix k = matmul(x, layer.heads[0].w_key);
  const double inv_sqrt = 1.0 / std::sqrt(3.0);
  for (std::size_t e = 0; e < 2; ++e) {
    double s = 0.0;
    for (std::size_t c = 0; c < 3; ++c) {
      s += q(0, c) * k(static_cast<std::size_t>(edges.src[e]), c);
    }
    const double expected = 1.0 / (1.0 + std::exp(-s * inv_sqrt));
    CHECK(std::abs(weights.per_head[0](e, 0) - expected) < 1e-12);
  }
}

TEST_CASE("attention matches the explicit-loop reference") {
  Rng rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    const Graph g = generate_sbm(2, 3, 0.8, 0.4, 4, 2.0, 0.5, 50 + trial);
    const EdgeList edges = g.directed_edges();
    for (std::size_t heads : {std::size_t{1}, std::size_t{2}}) {
      GtParams p = GtParams::init({4, 4}, heads, rng);
      for (AttentionNorm norm : {AttentionNorm::softmax, AttentionNorm::sigmoid}) {
        const auto [pre, weights] =
            attention_core(edges, g.n_nodes, g.features, p.enc[0], norm);
        const DenseMatrix ref =
            dense_attention_reference(edges, g.n_nodes, g.features, p.enc[0], norm);
        CHECK(max_abs_diff(pre, ref) < 1e-12);
      }
    }
  }
}

TEST_CASE("layer output is the leaky relu of the core") {
  Rng rng(8);
  const Graph g = generate_sbm(2, 4, 0.7, 0.2, 3, 2.0, 0.4, 61);
  const EdgeList edges = g.directed_edges();
  GtParams p = GtParams::init({3, 2}, 1, rng);
  const auto [pre, w1] = attention_core(edges, g.n_nodes, g.features, p.enc[0]);
  const auto [act, w2] = attention_layer(edges, g.n_nodes, g.features, p.enc[0]);
  CHECK(max_abs_diff(act, leaky_relu(pre, kDefaultLeakySlope)) == 0.0);
}

TEST_CASE("all-zero weights give zero output") {
  const Graph g = generate_sbm(2, 4, 0.7, 0.2, 3, 2.0, 0.4, 67);
  GtLayer layer = zero_layer(3, 2, 1);
  const auto [pre, weights] =
      attention_core(g.directed_edges(), g.n_nodes, g.features, layer);
  for (double v : pre.values()) CHECK(v == 0.0);
}

TEST_CASE("decoder depth 1 with identity skip on an edgeless graph") {
  GtParams p;
  p.dims = {2, 2};
  p.heads = 1;
  GtLayer enc = zero_layer(2, 2, 1);
  GtLayer dec = zero_layer(2, 2, 1);
  dec.w_skip = DenseMatrix::identity(2);
  p.enc.push_back(enc);
  p.dec.push_back(dec);
  EdgeList edges;  // no edges
  const DenseMatrix z = mat(2, 2, {1.0, -1.0, 0.5, -0.25});
  const DenseMatrix out = gt_decode(edges, 2, z, p);
  CHECK(max_abs_diff(out, leaky_relu(z, kDefaultLeakySlope)) == 0.0);
}

TEST_CASE("decoder mirrors widths back to d0") {
  Rng rng(9);
  const Graph g = generate_sbm(2, 5, 0.6, 0.2, 5, 2.0, 0.4, 71);
  GtParams p = GtParams::init({5, 4, 2}, 1, rng);
  const DenseMatrix out =
      gt_decode(g.directed_edges(), g.n_nodes, random_mat(10, 2, rng), p);
  CHECK(out.rows() == 10);
  CHECK(out.cols() == 5);
}

TEST_CASE("encoder fusion mixes AE hiddens from layer 2") {
  Rng rng(10);
  const Graph g = generate_sbm(2, 5, 0.6, 0.2, 4, 2.0, 0.4, 73);
  const EdgeList edges = g.directed_edges();
  GtParams p = GtParams::init({4, 3, 2}, 1, rng);
  std::vector<DenseMatrix> hidden{random_mat(10, 3, rng), random_mat(10, 2, rng)};

  // eps = 0: layer 2 reads the transformer's own layer-1 output.
  const std::vector<DenseMatrix> z0 =
      gt_encode_fused(edges, g.n_nodes, g.features, hidden, p, 0.0);
  const auto [l1, w1] = attention_layer(edges, g.n_nodes, g.features, p.enc[0]);
  CHECK(max_abs_diff(z0[0], l1) == 0.0);
  const auto [l2, w2] = attention_layer(edges, g.n_nodes, l1, p.enc[1]);
  CHECK(max_abs_diff(z0[1], l2) == 0.0);

  // eps = 1: layer 2 reads only the AE hidden.
  const std::vector<DenseMatrix> z1 =
      gt_encode_fused(edges, g.n_nodes, g.features, hidden, p, 1.0);
  const auto [l2h, w3] = attention_layer(edges, g.n_nodes, hidden[0], p.enc[1]);
  CHECK(max_abs_diff(z1[1], l2h) == 0.0);
}

TEST_CASE("head count must divide the output width") {
  Rng rng(11);
  CHECK_THROWS_AS(GtParams::init({4, 5}, 2, rng), validation_error);
  CHECK_THROWS_AS(GtParams::init({4, 4}, 0, rng), validation_error);
  CHECK_NOTHROW(GtParams::init({4, 4}, 2, rng));
}

TEST_CASE("multi-head output concatenates per-head blocks") {
  // Heads with distinct W_v write to disjoint column blocks.
  EdgeList edges;
  edges.src = {1};
  edges.dst = {0};
  GtLayer layer = zero_layer(2, 4, 2);
  layer.heads[0].w_value = mat(2, 2, {1, 0, 0, 1});
  layer.heads[1].w_value = mat(2, 2, {2, 0, 0, 2});
  const DenseMatrix x = mat(2, 2, {0, 0, 3.0, 5.0});
  const auto [pre, weights] = attention_core(edges, 2, x, layer);
  CHECK(pre(0, 0) == 3.0);
  CHECK(pre(0, 1) == 5.0);
  CHECK(pre(0, 2) == 6.0);
  CHECK(pre(0, 3) == 10.0);
}

TEST_CASE("permutation equivariance of one attention layer") {
  Rng rng(12);
  for (int trial = 0; trial < 3; ++trial) {
    const Graph g = generate_sbm(2, 3, 0.8, 0.4, 4, 2.0, 0.5, 80 + trial);
    GtParams p = GtParams::init({4, 4}, 2, rng);

    std::vector<std::size_t> perm(g.n_nodes);
    std::iota(perm.begin(), perm.end(), 0);
    Rng shuffler(trial + 1);
    shuffler.shuffle(perm);

    DenseMatrix px(g.n_nodes, 4);
    for (std::size_t i = 0; i < g.n_nodes; ++i) {
      for (std::size_t c = 0; c < 4; ++c) px(perm[i], c) = g.features(i, c);
    }
    std::vector<std::pair<int, int>> pedges;
    for (auto [u, v] : g.edges) {
      pedges.emplace_back(static_cast<int>(perm[static_cast<std::size_t>(u)]),
                          static_cast<int>(perm[static_cast<std::size_t>(v)]));
    }
    const Graph pg = make_graph(px, pedges, std::nullopt, 0);

    const auto [out, w1] =
        attention_layer(g.directed_edges(), g.n_nodes, g.features, p.enc[0]);
    const auto [pout, w2] =
        attention_layer(pg.directed_edges(), pg.n_nodes, pg.features, p.enc[0]);
    for (std::size_t i = 0; i < g.n_nodes; ++i) {
      for (std::size_t c = 0; c < 4; ++c) {
        CHECK(std::abs(out(i, c) - pout(perm[i], c)) < 1e-12);
      }
    }
  }
}
