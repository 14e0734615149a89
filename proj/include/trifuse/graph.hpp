#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "trifuse/dense.hpp"
#include "trifuse/sparse.hpp"

namespace trifuse {

// Attributed graph: node features, undirected 0/1 adjacency (no self-loops),
// its normalized propagation operator, and optional ground-truth labels.
struct Graph {
  std::size_t n_nodes = 0;
  DenseMatrix features;                      // N x d0
  std::vector<std::pair<int, int>> edges;    // undirected, deduplicated, u < v
  std::optional<std::vector<int>> labels;    // class per node, in [0, k)
  SparseCsr adj;                             // symmetric 0/1, zero diagonal
  SparseCsr norm_adj;                        // self-looped, degree-normalized
  std::size_t n_clusters = 0;

  // Directed edge list (both directions of every undirected edge, no
  // self-loops) sorted by (dst, src); the attention message-passing index.
  EdgeList directed_edges() const;
};

// D^{-1/2} (A + I) D^{-1/2}: adds self-loops, then normalizes entry (i,j)
// to 1/sqrt(dhat_i * dhat_j) where dhat = 1 + degree.
SparseCsr normalize_adjacency(const SparseCsr& adj);

// Text loaders; '#'-prefixed and blank lines are ignored in every file.
// standardize rescales each feature column to mean 0, sd 1.
Graph load_graph(const std::string& features_path, const std::string& edges_path,
                 const std::string& labels_path, std::size_t k,
                 bool standardize = false);
Graph make_graph(DenseMatrix features, std::vector<std::pair<int, int>> edges,
                 std::optional<std::vector<int>> labels, std::size_t k);
void save_graph(const Graph& g, const std::string& features_path,
                const std::string& edges_path, const std::string& labels_path);

// Stochastic block model with block-centroid features: within-block edges
// Bernoulli(p_in), cross-block Bernoulli(p_out); node features are the
// block's one-hot-like direction scaled by feat_separation plus
// Gaussian(0, noise_sd^2) noise; labels are block ids.
Graph generate_sbm(std::size_t blocks, std::size_t nodes_per_block, double p_in,
                   double p_out, std::size_t feat_dim, double feat_separation,
                   double noise_sd, std::uint64_t seed);

}  // namespace trifuse
