#include "trifuse/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

#include "trifuse/errors.hpp"
#include "trifuse/rng.hpp"

namespace trifuse {

EdgeList Graph::directed_edges() const {
  // CSR row i lists the in-neighborhood sources for target i in sorted order.
  EdgeList e;
  e.src.reserve(adj.nnz());
  e.dst.reserve(adj.nnz());
  for (std::size_t i = 0; i < adj.rows(); ++i) {
    for (std::size_t p = adj.row_ptr()[i]; p < adj.row_ptr()[i + 1]; ++p) {
      e.src.push_back(adj.col_idx()[p]);
      e.dst.push_back(static_cast<int>(i));
    }
  }
  return e;
}

SparseCsr normalize_adjacency(const SparseCsr& adj) {
  if (adj.rows() != adj.cols()) {
    throw validation_error("normalize_adjacency: matrix is " +
                           std::to_string(adj.rows()) + "x" + std::to_string(adj.cols()));
  }
  const std::size_t n = adj.rows();
  // Symmetry and zero-diagonal check against the transposed entry set.
  std::vector<std::tuple<int, int, double>> entries;
  entries.reserve(adj.nnz());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = adj.row_ptr()[i]; p < adj.row_ptr()[i + 1]; ++p) {
      if (static_cast<std::size_t>(adj.col_idx()[p]) == i) {
        throw validation_error("normalize_adjacency: self-loop at node " +
                               std::to_string(i));
      }
      entries.emplace_back(static_cast<int>(i), adj.col_idx()[p], adj.vals()[p]);
    }
  }
  std::set<std::pair<int, int>> pattern;
  for (const auto& [i, j, v] : entries) pattern.emplace(i, j);
  for (const auto& [i, j, v] : entries) {
    if (!pattern.count({j, i})) {
      throw validation_error("normalize_adjacency: entry (" + std::to_string(i) + "," +
                             std::to_string(j) + ") has no symmetric partner");
    }
  }
  std::vector<double> dhat(n, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    dhat[i] += static_cast<double>(adj.row_ptr()[i + 1] - adj.row_ptr()[i]);
  }
  std::vector<std::tuple<int, int, double>> out;
  out.reserve(entries.size() + n);
  for (const auto& [i, j, v] : entries) {
    out.emplace_back(i, j, 1.0 / std::sqrt(dhat[static_cast<std::size_t>(i)] *
                                           dhat[static_cast<std::size_t>(j)]));
  }
  for (std::size_t i = 0; i < n; ++i) {
    out.emplace_back(static_cast<int>(i), static_cast<int>(i),
                     1.0 / std::sqrt(dhat[i] * dhat[i]));
  }
  return SparseCsr::from_triplets(n, n, std::move(out));
}

namespace {

// Strips comments; returns false for lines with no content.
bool content_line(const std::string& line, std::string& out) {
  out = line;
  if (!out.empty() && out.back() == '\r') out.pop_back();
  const std::size_t first = out.find_first_not_of(" \t");
  if (first == std::string::npos || out[first] == '#') return false;
  return true;
}

// One data row plus the 1-based file line it came from (for error messages).
struct NumberedRow {
  std::size_t line_no;
  std::vector<double> values;
};

std::vector<NumberedRow> parse_rows(const std::string& path, const char* what) {
  std::ifstream in(path);
  if (!in) throw validation_error(std::string(what) + " file not readable: " + path);
  std::vector<NumberedRow> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string content;
    if (!content_line(line, content)) continue;
    std::istringstream ss(content);
    std::vector<double> row;
    double v;
    while (ss >> v) row.push_back(v);
    std::string trailing;
    if (!ss.eof() && ss.fail()) {
      ss.clear();
      ss >> trailing;
      throw validation_error(path + ": line " + std::to_string(line_no) +
                             ": unparseable token '" + trailing + "'");
    }
    if (!rows.empty() && row.size() != rows.front().values.size()) {
      throw validation_error(path + ": line " + std::to_string(line_no) +
                             ": expected " + std::to_string(rows.front().values.size()) +
                             " values, got " + std::to_string(row.size()));
    }
    rows.push_back({line_no, std::move(row)});
  }
  return rows;
}

}  // namespace

Graph make_graph(DenseMatrix features, std::vector<std::pair<int, int>> edges,
                 std::optional<std::vector<int>> labels, std::size_t k) {
  Graph g;
  g.n_nodes = features.rows();
  g.features = std::move(features);
  g.n_clusters = k;
  const std::size_t n = g.n_nodes;

  std::set<std::pair<int, int>> unique;
  for (auto [u, v] : edges) {
    if (u < 0 || v < 0 || static_cast<std::size_t>(u) >= n ||
        static_cast<std::size_t>(v) >= n) {
      throw validation_error("edge (" + std::to_string(u) + "," + std::to_string(v) +
                             ") out of range for " + std::to_string(n) + " nodes");
    }
    if (u == v) {
      throw validation_error("self-loop on node " + std::to_string(u) +
                             " not allowed");
    }
    unique.emplace(std::min(u, v), std::max(u, v));
  }
  g.edges.assign(unique.begin(), unique.end());

  if (labels) {
    if (labels->size() != n) {
      throw validation_error("labels: " + std::to_string(labels->size()) +
                             " entries for " + std::to_string(n) + " nodes");
    }
    for (std::size_t i = 0; i < n; ++i) {
      const int y = (*labels)[i];
      if (y < 0 || static_cast<std::size_t>(y) >= k) {
        throw validation_error("label " + std::to_string(y) + " at node " +
                               std::to_string(i) + " outside [0," + std::to_string(k) +
                               ")");
      }
    }
    g.labels = std::move(labels);
  }

  std::vector<std::tuple<int, int, double>> trips;
  trips.reserve(2 * g.edges.size());
  for (auto [u, v] : g.edges) {
    trips.emplace_back(u, v, 1.0);
    trips.emplace_back(v, u, 1.0);
  }
  g.adj = SparseCsr::from_triplets(n, n, std::move(trips));
  g.norm_adj = normalize_adjacency(g.adj);
  return g;
}

Graph load_graph(const std::string& features_path, const std::string& edges_path,
                 const std::string& labels_path, std::size_t k, bool standardize) {
  std::vector<NumberedRow> feat_rows = parse_rows(features_path, "features");
  if (feat_rows.empty()) {
    throw validation_error("features file has no data rows: " + features_path);
  }
  const std::size_t n = feat_rows.size();
  const std::size_t d = feat_rows.front().values.size();
  DenseMatrix x(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) x(i, j) = feat_rows[i].values[j];
  }
  if (standardize) {
    for (std::size_t j = 0; j < d; ++j) {
      double mean = 0.0;
      for (std::size_t i = 0; i < n; ++i) mean += x(i, j);
      mean /= static_cast<double>(n);
      double var = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double c = x(i, j) - mean;
        var += c * c;
      }
      const double sd = std::sqrt(var / static_cast<double>(n));
      const double inv = 1.0 / (sd < 1e-12 ? 1e-12 : sd);
      for (std::size_t i = 0; i < n; ++i) x(i, j) = (x(i, j) - mean) * inv;
    }
  }

  std::vector<NumberedRow> edge_rows = parse_rows(edges_path, "edges");
  std::vector<std::pair<int, int>> edges;
  for (const NumberedRow& row : edge_rows) {
    const std::string where = edges_path + ": line " + std::to_string(row.line_no);
    const auto& v = row.values;
    if (v.size() != 2 || v[0] != std::floor(v[0]) || v[1] != std::floor(v[1])) {
      throw validation_error(where + ": expected two integers");
    }
    const int a = static_cast<int>(v[0]);
    const int b = static_cast<int>(v[1]);
    if (a < 0 || b < 0 || static_cast<std::size_t>(a) >= n ||
        static_cast<std::size_t>(b) >= n) {
      throw validation_error(where + ": edge (" + std::to_string(a) + "," +
                             std::to_string(b) + ") out of range for " +
                             std::to_string(n) + " nodes");
    }
    if (a == b) throw validation_error(where + ": self-loop not allowed");
    edges.emplace_back(a, b);
  }

  std::optional<std::vector<int>> labels;
  if (!labels_path.empty()) {
    std::vector<NumberedRow> label_rows = parse_rows(labels_path, "labels");
    std::vector<int> y;
    y.reserve(label_rows.size());
    for (const NumberedRow& row : label_rows) {
      const std::string where = labels_path + ": line " + std::to_string(row.line_no);
      if (row.values.size() != 1 || row.values[0] != std::floor(row.values[0])) {
        throw validation_error(where + ": expected one integer");
      }
      const int lab = static_cast<int>(row.values[0]);
      if (lab < 0 || static_cast<std::size_t>(lab) >= k) {
        throw validation_error(where + ": label " + std::to_string(lab) +
                               " outside [0," + std::to_string(k) + ")");
      }
      y.push_back(lab);
    }
    labels = std::move(y);
  }
  return make_graph(std::move(x), std::move(edges), std::move(labels), k);
}

void save_graph(const Graph& g, const std::string& features_path,
                const std::string& edges_path, const std::string& labels_path) {
  {
    std::ofstream out(features_path);
    if (!out) throw validation_error("cannot write " + features_path);
    char buf[32];
    for (std::size_t i = 0; i < g.features.rows(); ++i) {
      for (std::size_t j = 0; j < g.features.cols(); ++j) {
        std::snprintf(buf, sizeof(buf), "%.17g", g.features(i, j));
        out << (j ? " " : "") << buf;
      }
      out << "\n";
    }
  }
  {
    std::ofstream out(edges_path);
    if (!out) throw validation_error("cannot write " + edges_path);
    for (auto [u, v] : g.edges) out << u << " " << v << "\n";
  }
  if (!labels_path.empty() && g.labels) {
    std::ofstream out(labels_path);
    if (!out) throw validation_error("cannot write " + labels_path);
    for (int y : *g.labels) out << y << "\n";
  }
}

Graph generate_sbm(std::size_t blocks, std::size_t nodes_per_block, double p_in,
                   double p_out, std::size_t feat_dim, double feat_separation,
                   double noise_sd, std::uint64_t seed) {
  if (!(p_out >= 0.0 && p_out <= p_in && p_in <= 1.0)) {
    throw validation_error("generate_sbm: need 0 <= p_out <= p_in <= 1, got p_in=" +
                           std::to_string(p_in) + " p_out=" + std::to_string(p_out));
  }
  if (blocks < 1 || nodes_per_block < 1 || feat_dim < 1) {
    throw validation_error("generate_sbm: blocks, nodes_per_block, feat_dim must be >= 1");
  }
  const std::size_t n = blocks * nodes_per_block;
  Rng rng(seed);

  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i / nodes_per_block);

  std::vector<std::pair<int, int>> edges;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double p = labels[i] == labels[j] ? p_in : p_out;
      if (rng.bernoulli(p)) edges.emplace_back(static_cast<int>(i), static_cast<int>(j));
    }
  }

  // Block b points along axis b mod feat_dim, sign flipped on each wrap.
  DenseMatrix x(n, feat_dim);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t b = static_cast<std::size_t>(labels[i]);
    const std::size_t axis = b % feat_dim;
    const double sign = (b / feat_dim) % 2 == 0 ? 1.0 : -1.0;
    for (std::size_t j = 0; j < feat_dim; ++j) {
      const double centroid = j == axis ? sign * feat_separation : 0.0;
      x(i, j) = centroid + (noise_sd > 0.0 ? rng.normal(0.0, noise_sd) : 0.0);
    }
  }
  return make_graph(std::move(x), std::move(edges), labels, blocks);
}

}  // namespace trifuse
