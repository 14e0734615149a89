#include "trifuse/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "trifuse/errors.hpp"
#include "trifuse/rng.hpp"

namespace trifuse {

namespace {

double sq_dist(const double* a, const double* b, std::size_t d) {
  double s = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double diff = a[i] - b[i];
    s += diff * diff;
  }
  return s;
}

KmeansResult lloyd_once(const DenseMatrix& x, std::size_t k, std::size_t max_iters,
                        Rng& rng) {
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();

  // Distinct data points as initial centroids (partial Fisher-Yates).
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < k; ++i) {
    std::swap(idx[i], idx[i + rng.uniform_int(n - i)]);
  }
  DenseMatrix centroids(k, d);
  for (std::size_t j = 0; j < k; ++j) {
    for (std::size_t a = 0; a < d; ++a) centroids(j, a) = x(idx[j], a);
  }

  KmeansResult result;
  std::vector<int> assign(n, -1);
  std::vector<int> prev;
  for (std::size_t iter = 0; iter < max_iters; ++iter) {
    prev = assign;
    double wcss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double best_d = sq_dist(x.data() + i * d, centroids.data(), d);
      for (std::size_t j = 1; j < k; ++j) {
        const double dist = sq_dist(x.data() + i * d, centroids.data() + j * d, d);
        if (dist < best_d) {
          best_d = dist;
          best = j;
        }
      }
      assign[i] = static_cast<int>(best);
      wcss += best_d;
    }
    result.wcss_trace.push_back(wcss);
    if (assign == prev) break;

    std::vector<std::size_t> counts(k, 0);
    DenseMatrix sums(k, d);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t j = static_cast<std::size_t>(assign[i]);
      counts[j] += 1;
      for (std::size_t a = 0; a < d; ++a) sums(j, a) += x(i, a);
    }
    for (std::size_t j = 0; j < k; ++j) {
      if (counts[j] == 0) continue;
      for (std::size_t a = 0; a < d; ++a) {
        centroids(j, a) = sums(j, a) / static_cast<double>(counts[j]);
      }
    }
    // Empty-cluster repair: the point farthest from its own (fresh) centroid
    // becomes the empty cluster's centroid.
    for (std::size_t j = 0; j < k; ++j) {
      if (counts[j] != 0) continue;
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t ji = static_cast<std::size_t>(assign[i]);
        if (counts[ji] <= 1) continue;  // don't empty another cluster
        const double dist = sq_dist(x.data() + i * d, centroids.data() + ji * d, d);
        if (dist > far_d) {
          far_d = dist;
          far = i;
        }
      }
      counts[static_cast<std::size_t>(assign[far])] -= 1;
      assign[far] = static_cast<int>(j);
      counts[j] = 1;
      for (std::size_t a = 0; a < d; ++a) centroids(j, a) = x(far, a);
    }
  }
  result.centroids = std::move(centroids);
  result.assignments = std::move(assign);
  result.wcss = result.wcss_trace.empty() ? 0.0 : result.wcss_trace.back();
  return result;
}

}  // namespace

KmeansResult kmeans(const DenseMatrix& x, std::size_t k, std::size_t restarts,
                    std::size_t max_iters, std::uint64_t seed) {
  if (k == 0 || k > x.rows()) {
    throw validation_error("kmeans: k=" + std::to_string(k) + " for " +
                           std::to_string(x.rows()) + " points");
  }
  if (restarts < 1) throw validation_error("kmeans: restarts must be >= 1");
  Rng master(seed);
  KmeansResult best;
  best.wcss = std::numeric_limits<double>::infinity();
  bool have = false;
  for (std::size_t r = 0; r < restarts; ++r) {
    Rng rng = master.fork(r);
    KmeansResult cur = lloyd_once(x, k, max_iters, rng);
    if (!have || cur.wcss < best.wcss) {
      best = std::move(cur);
      have = true;
    }
  }
  return best;
}

namespace {

struct Contingency {
  std::vector<std::vector<long long>> n;  // kp x kt
  std::vector<long long> row;             // pred marginals
  std::vector<long long> col;             // truth marginals
  long long total = 0;
};

Contingency contingency(const std::vector<int>& pred, const std::vector<int>& truth,
                        const char* op) {
  if (pred.size() != truth.size()) {
    throw validation_error(std::string(op) + ": length mismatch " +
                           std::to_string(pred.size()) + " vs " +
                           std::to_string(truth.size()));
  }
  if (pred.empty()) throw validation_error(std::string(op) + ": empty labels");
  int kp = 0;
  int kt = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] < 0 || truth[i] < 0) {
      throw validation_error(std::string(op) + ": negative label");
    }
    kp = std::max(kp, pred[i] + 1);
    kt = std::max(kt, truth[i] + 1);
  }
  Contingency c;
  c.n.assign(kp, std::vector<long long>(kt, 0));
  c.row.assign(kp, 0);
  c.col.assign(kt, 0);
  c.total = static_cast<long long>(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    c.n[pred[i]][truth[i]] += 1;
    c.row[pred[i]] += 1;
    c.col[truth[i]] += 1;
  }
  return c;
}

// Hungarian algorithm (potentials form) minimizing total cost on a square
// matrix; returns row -> column assignment.
std::vector<int> hungarian_min(const std::vector<std::vector<long long>>& cost) {
  const int n = static_cast<int>(cost.size());
  const long long inf = std::numeric_limits<long long>::max() / 4;
  std::vector<long long> u(n + 1, 0), v(n + 1, 0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<long long> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const int i0 = p[j0];
      long long delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const long long cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> match(n, -1);
  for (int j = 1; j <= n; ++j) {
    if (p[j] != 0) match[p[j] - 1] = j - 1;
  }
  return match;
}

// Optimal cluster -> class matching on the padded square contingency.
// Returns the mapping (length kp, -1 for clusters matched to padding) and
// the matched count. For sizes <= 8 the lexicographically smallest optimal
// assignment vector is chosen by enumeration; larger tables use the
// Hungarian algorithm.
std::pair<std::vector<int>, long long> optimal_mapping(const Contingency& c) {
  const int kp = static_cast<int>(c.n.size());
  const int kt = static_cast<int>(c.n[0].size());
  const int m = std::max(kp, kt);
  auto count_at = [&](int p, int t) -> long long {
    return (p < kp && t < kt) ? c.n[p][t] : 0;
  };
  std::vector<int> best_perm;
  if (m <= 8) {
    std::vector<int> perm(m);
    std::iota(perm.begin(), perm.end(), 0);
    long long best = -1;
    do {
      long long s = 0;
      for (int p = 0; p < m; ++p) s += count_at(p, perm[p]);
      if (s > best) {
        best = s;
        best_perm = perm;
      }
    } while (std::next_permutation(perm.begin(), perm.end()));
  } else {
    long long max_count = 0;
    for (int p = 0; p < kp; ++p) {
      for (int t = 0; t < kt; ++t) max_count = std::max(max_count, c.n[p][t]);
    }
    std::vector<std::vector<long long>> cost(m, std::vector<long long>(m, max_count));
    for (int p = 0; p < m; ++p) {
      for (int t = 0; t < m; ++t) cost[p][t] = max_count - count_at(p, t);
    }
    best_perm = hungarian_min(cost);
  }
  long long matched = 0;
  std::vector<int> mapping(kp, -1);
  for (int p = 0; p < kp; ++p) {
    if (best_perm[p] < kt) mapping[p] = best_perm[p];
    matched += count_at(p, best_perm[p]);
  }
  return {mapping, matched};
}

}  // namespace

double clustering_accuracy(const std::vector<int>& pred, const std::vector<int>& truth) {
  const Contingency c = contingency(pred, truth, "clustering_accuracy");
  const auto [mapping, matched] = optimal_mapping(c);
  return static_cast<double>(matched) / static_cast<double>(c.total);
}

double nmi(const std::vector<int>& pred, const std::vector<int>& truth) {
  const Contingency c = contingency(pred, truth, "nmi");
  const std::size_t kp = c.n.size();
  const std::size_t kt = c.n[0].size();
  auto nonzero_classes = [](const std::vector<long long>& marg) {
    std::size_t z = 0;
    for (long long v : marg) z += v > 0 ? 1 : 0;
    return z;
  };
  if (nonzero_classes(c.row) <= 1 || nonzero_classes(c.col) <= 1) return 0.0;

  // Identical up to relabeling: no row and no column holds two nonzeros,
  // i.e. observed clusters and classes are in bijection. Exact 1.0.
  bool bijective = true;
  for (std::size_t i = 0; i < kp && bijective; ++i) {
    std::size_t nz = 0;
    for (std::size_t j = 0; j < kt; ++j) nz += c.n[i][j] > 0 ? 1 : 0;
    bijective = nz <= 1;
  }
  for (std::size_t j = 0; j < kt && bijective; ++j) {
    std::size_t nz = 0;
    for (std::size_t i = 0; i < kp; ++i) nz += c.n[i][j] > 0 ? 1 : 0;
    bijective = nz <= 1;
  }
  if (bijective) return 1.0;

  const double n = static_cast<double>(c.total);
  double mi = 0.0;
  for (std::size_t i = 0; i < kp; ++i) {
    for (std::size_t j = 0; j < kt; ++j) {
      if (c.n[i][j] == 0) continue;
      const double nij = static_cast<double>(c.n[i][j]);
      mi += (nij / n) * std::log((n * nij) / (static_cast<double>(c.row[i]) *
                                              static_cast<double>(c.col[j])));
    }
  }
  auto entropy = [n](const std::vector<long long>& marg) {
    double h = 0.0;
    for (long long v : marg) {
      if (v == 0) continue;
      const double p = static_cast<double>(v) / n;
      h -= p * std::log(p);
    }
    return h;
  };
  return mi / (0.5 * (entropy(c.row) + entropy(c.col)));
}

double ari(const std::vector<int>& pred, const std::vector<int>& truth) {
  const Contingency c = contingency(pred, truth, "ari");
  if (c.total < 2) throw validation_error("ari: need at least 2 points");
  auto comb2 = [](long long x) { return x * (x - 1) / 2; };
  long long sij = 0;
  for (const auto& row : c.n) {
    for (long long v : row) sij += comb2(v);
  }
  long long sa = 0;
  for (long long v : c.row) sa += comb2(v);
  long long sb = 0;
  for (long long v : c.col) sb += comb2(v);
  const long long total = comb2(c.total);
  // index - expected over max - expected, multiplied through by 2*total.
  const long long num = 2 * total * sij - 2 * sa * sb;
  const long long den = total * (sa + sb) - 2 * sa * sb;
  if (den == 0) return 1.0;
  return static_cast<double>(num) / static_cast<double>(den);
}

double macro_f1(const std::vector<int>& pred, const std::vector<int>& truth) {
  const Contingency c = contingency(pred, truth, "macro_f1");
  const auto [mapping, matched] = optimal_mapping(c);
  (void)matched;
  std::vector<int> mapped(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) mapped[i] = mapping[pred[i]];

  const std::size_t kt = c.col.size();
  double f1_sum = 0.0;
  std::size_t n_classes = 0;
  for (std::size_t cls = 0; cls < kt; ++cls) {
    if (c.col[cls] == 0) continue;  // only observed truth classes
    ++n_classes;
    long long tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const bool p = mapped[i] == static_cast<int>(cls);
      const bool t = truth[i] == static_cast<int>(cls);
      if (p && t) ++tp;
      if (p && !t) ++fp;
      if (!p && t) ++fn;
    }
    const long long den = 2 * tp + fp + fn;
    f1_sum += den == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(den);
  }
  return f1_sum / static_cast<double>(n_classes);
}

MetricsReport evaluate_all(const std::vector<int>& pred, const std::vector<int>& truth) {
  MetricsReport r;
  r.acc = clustering_accuracy(pred, truth);
  r.nmi = nmi(pred, truth);
  r.ari = ari(pred, truth);
  r.f1 = macro_f1(pred, truth);
  return r;
}

}  // namespace trifuse
