#ifndef SURVCLUST_LEAF_CLUSTERING_HPP_
#define SURVCLUST_LEAF_CLUSTERING_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "survclust/core.hpp"
#include "survclust/error.hpp"
#include "survclust/kaplan_meier.hpp"
#include "survclust/parallel.hpp"
#include "survclust/survival_tree.hpp"
#include "survclust/two_sample_tests.hpp"

namespace survclust {

using Matrix = Eigen::MatrixXd;
/// Disjoint blocks of vertex indices, each sorted, ordered by first member.
using Partition = std::vector<std::vector<std::size_t>>;

/// Complete graph over tree leaves; weights(i, j) is the Kuiper p-value
/// between the survival curves of leaves i and j.
struct LeafGraph {
  Matrix weights;
  std::size_t size() const { return static_cast<std::size_t>(weights.rows()); }
};

inline LeafGraph build_leaf_graph(const SurvivalTree &tree, Parallelism par = {}) {
  const std::size_t n = tree.leaf_count();
  const auto idx = [](std::size_t i) { return static_cast<Eigen::Index>(i); };
  LeafGraph graph{Matrix::Identity(idx(n), idx(n))};
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
  }
  std::vector<double> p(pairs.size());
  parallel_for(pairs.size(), par, [&](std::size_t k) {
    p[k] = kuiper_test(tree.leaf(pairs[k].first).curve, tree.leaf(pairs[k].second).curve).p_value;
  });
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    graph.weights(idx(pairs[k].first), idx(pairs[k].second)) = p[k];
    graph.weights(idx(pairs[k].second), idx(pairs[k].first)) = p[k];
  }
  return graph;
}

/// Entries below `floor` are raised to it so the matrix is strictly positive.
inline Matrix floor_weights(const Matrix &w, double floor = 1e-12) {
  return w.cwiseMax(floor);
}

namespace detail {

inline double max_sum_deviation(const Matrix &m) {
  const double row_dev = (m.rowwise().sum().array() - 1.0).abs().maxCoeff();
  const double col_dev = (m.colwise().sum().array() - 1.0).abs().maxCoeff();
  return std::max(row_dev, col_dev);
}

// diag(x) W diag(x), mirrored so the result is exactly symmetric.
inline Matrix symmetric_scale(const Matrix &w, const Eigen::VectorXd &x) {
  Matrix m(w.rows(), w.cols());
  for (Eigen::Index j = 0; j < w.cols(); ++j) {
    for (Eigen::Index i = 0; i <= j; ++i) m(i, j) = m(j, i) = x(i) * w(i, j) * x(j);
  }
  return m;
}

}  // namespace detail

/// Scales `w` to a doubly stochastic matrix, stopping once every row and
/// column sums to 1 within `tol`. General input alternates row and column
/// normalisation. Symmetric input is scaled as diag(x) W diag(x) with the
/// damped update x <- sqrt(x / (W x)); it reaches the same fixed point, and
/// unlike the alternating form it does not stall when the graph is nearly
/// disconnected.
inline Matrix sinkhorn_knopp(const Matrix &w, double tol = 1e-8, std::size_t max_iter = 10000) {
  if (w.rows() != w.cols()) throw Error(ErrorCode::kInvalidConfig, "matrix must be square");
  if ((w.array() < 0.0).any()) throw Error(ErrorCode::kInvalidConfig, "matrix must be nonnegative");
  double worst = 0.0;
  if (w == w.transpose()) {
    Eigen::VectorXd x = Eigen::VectorXd::Ones(w.rows());
    for (std::size_t it = 0; it < max_iter; ++it) {
      const Eigen::VectorXd wx = w * x;
      if ((wx.array() <= 0.0).any()) {
        throw Error(ErrorCode::kNonConvergence, "matrix has an all-zero row");
      }
      x = x.cwiseQuotient(wx).cwiseSqrt();
      Matrix m = detail::symmetric_scale(w, x);
      worst = detail::max_sum_deviation(m);
      if (worst <= tol) return m;
    }
  } else {
    Matrix m = w;
    for (std::size_t it = 0; it < max_iter; ++it) {
      const Eigen::VectorXd rows = m.rowwise().sum();
      if ((rows.array() <= 0.0).any()) {
        throw Error(ErrorCode::kNonConvergence, "matrix has an all-zero row");
      }
      m = rows.cwiseInverse().asDiagonal() * m;
      const Eigen::RowVectorXd cols = m.colwise().sum();
      if ((cols.array() <= 0.0).any()) {
        throw Error(ErrorCode::kNonConvergence, "matrix has an all-zero column");
      }
      m = m * cols.cwiseInverse().asDiagonal();
      worst = detail::max_sum_deviation(m);
      if (worst <= tol) return m;
    }
  }
  throw Error(ErrorCode::kNonConvergence,
              "Sinkhorn-Knopp hit the iteration cap; worst row/column deviation " +
                  std::to_string(worst));
}

struct MclConfig {
  int expansion = 2;
  double inflation = 2.0;
  double prune_tol = 1e-8;
  double conv_tol = 1e-9;
  std::size_t max_iter = 200;

  friend bool operator==(const MclConfig &, const MclConfig &) = default;
};

namespace detail {

inline void normalize_columns(Matrix &m) {
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    const double s = m.col(c).sum();
    if (s > 0.0) m.col(c) /= s;
  }
}

inline Matrix mcl_step(const Matrix &m, const MclConfig &config) {
  Matrix next = m;
  for (int e = 1; e < config.expansion; ++e) next = next * m;
  next = next.array().pow(config.inflation).matrix();
  normalize_columns(next);
  next = (next.array() < config.prune_tol).select(0.0, next);
  normalize_columns(next);
  return next;
}

// Clusters of a converged MCL matrix. Attractors are vertices with positive
// self-flow; attractors exchanging flow form one system. Every other vertex
// joins the attractor holding the largest entry of its column (lowest index
// on ties).
inline Partition read_clusters(const Matrix &m) {
  const auto n = static_cast<std::size_t>(m.rows());
  const auto idx = [](std::size_t i) { return static_cast<Eigen::Index>(i); };
  std::vector<std::size_t> attractors;
  for (std::size_t i = 0; i < n; ++i) {
    if (m(idx(i), idx(i)) > 0.0) attractors.push_back(i);
  }

  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  const auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  const auto unite = [&](std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  };

  for (const auto a : attractors) {
    for (const auto b : attractors) {
      if (a < b && (m(idx(a), idx(b)) > 0.0 || m(idx(b), idx(a)) > 0.0)) unite(a, b);
    }
  }
  for (std::size_t v = 0; v < n; ++v) {
    if (attractors.empty()) break;
    if (m(idx(v), idx(v)) > 0.0) continue;
    std::size_t best = attractors.front();
    for (const auto a : attractors) {
      if (m(idx(a), idx(v)) > m(idx(best), idx(v))) best = a;
    }
    unite(v, best);
  }

  Partition out;
  std::vector<std::size_t> block_of(n, n);
  for (std::size_t v = 0; v < n; ++v) {
    const auto root = find(v);
    if (block_of[root] == n) {
      block_of[root] = out.size();
      out.emplace_back();
    }
    out[block_of[root]].push_back(v);
  }
  return out;
}

}  // namespace detail

/// Markov Cluster algorithm on a column-stochastic matrix.
inline Partition mcl(const Matrix &m, const MclConfig &config = {}) {
  if (m.rows() != m.cols()) throw Error(ErrorCode::kInvalidConfig, "matrix must be square");
  if (config.expansion < 1 || !(config.inflation > 0.0)) {
    throw Error(ErrorCode::kInvalidConfig, "expansion must be >= 1 and inflation > 0");
  }
  Matrix current = m;
  detail::normalize_columns(current);
  for (std::size_t it = 0; it < config.max_iter; ++it) {
    Matrix next = detail::mcl_step(current, config);
    const double change = (next - current).cwiseAbs().maxCoeff();
    current = std::move(next);
    if (change < config.conv_tol) return detail::read_clusters(current);
  }
  throw Error(ErrorCode::kNonConvergence, "MCL did not converge in " +
                                              std::to_string(config.max_iter) + " iterations");
}

/// Final model: leaves of the tree grouped into k survival clusters.
struct ClusterModel {
  SurvivalTree tree;
  std::vector<std::size_t> leaf_to_cluster;
  std::size_t k = 0;
  std::vector<SurvivalCurve> cluster_curves;
  std::vector<std::size_t> cluster_sizes;
};

/// Training outcomes grouped by the leaf each subject routes to.
inline std::vector<std::vector<TimeEvent>> leaf_samples(const SurvivalTree &tree,
                                                        const SurvivalDataset &data) {
  std::vector<std::vector<TimeEvent>> out(tree.leaf_count());
  for (const auto &s : data.subjects) out[assign_leaf(tree, s)].push_back(s.outcome());
  return out;
}

namespace detail {

inline std::vector<TimeEvent> pooled(const std::vector<std::vector<TimeEvent>> &per_leaf,
                                     const std::vector<std::size_t> &leaves) {
  std::vector<TimeEvent> out;
  for (const auto l : leaves) out.insert(out.end(), per_leaf[l].begin(), per_leaf[l].end());
  return out;
}

}  // namespace detail

/// Brings an MCL leaf partition to exactly k clusters. Too many clusters:
/// repeatedly merge the pair whose pooled populations are most similar
/// (highest Kuiper p-value, then smallest Kuiper lambda, then lowest index
/// pair). Too few: rerun MCL on `balanced` with inflation raised in steps of
/// 0.25 up to 10 and take the first run with at least k clusters.
inline ClusterModel coarsen_to_k(Partition partition, const Matrix &balanced,
                                 const SurvivalTree &tree,
                                 const std::vector<std::vector<TimeEvent>> &per_leaf,
                                 std::size_t k, const MclConfig &mcl_config = {}) {
  if (k < 1) throw Error(ErrorCode::kInvalidCount, "k must be >= 1");
  const std::size_t n_leaves = tree.leaf_count();
  if (per_leaf.size() != n_leaves) {
    throw Error(ErrorCode::kInvalidConfig, "per-leaf samples do not match the tree");
  }
  if (partition.size() < k) {
    if (n_leaves < k) {
      throw Error(ErrorCode::kUnreachableK, "tree has " + std::to_string(n_leaves) +
                                                " leaves, fewer than k = " + std::to_string(k));
    }
    bool reached = false;
    for (int step = 1;; ++step) {
      MclConfig sweep = mcl_config;
      sweep.inflation = mcl_config.inflation + 0.25 * step;
      if (sweep.inflation > 10.0 + 1e-12) break;
      try {
        auto candidate = mcl(balanced, sweep);
        if (candidate.size() >= k) {
          partition = std::move(candidate);
          reached = true;
          break;
        }
      } catch (const Error &e) {
        if (e.code() != ErrorCode::kNonConvergence) throw;
      }
    }
    if (!reached) {
      throw Error(ErrorCode::kUnreachableK,
                  "inflation sweep found no partition with " + std::to_string(k) + " clusters");
    }
  }

  std::vector<SurvivalCurve> curves;
  for (const auto &block : partition) curves.push_back(km_fit(detail::pooled(per_leaf, block)));

  while (partition.size() > k) {
    std::size_t best_i = 0;
    std::size_t best_j = 1;
    TestResult best{};
    double best_lambda = 0.0;
    bool first = true;
    for (std::size_t i = 0; i < partition.size(); ++i) {
      for (std::size_t j = i + 1; j < partition.size(); ++j) {
        const auto r = kuiper_test(curves[i], curves[j]);
        const double lambda = detail::kuiper_lambda(r);
        if (first || r.p_value > best.p_value ||
            (r.p_value == best.p_value && lambda < best_lambda)) {
          best = r;
          best_lambda = lambda;
          best_i = i;
          best_j = j;
          first = false;
        }
      }
    }
    auto &into = partition[best_i];
    into.insert(into.end(), partition[best_j].begin(), partition[best_j].end());
    std::sort(into.begin(), into.end());
    partition.erase(partition.begin() + static_cast<std::ptrdiff_t>(best_j));
    curves.erase(curves.begin() + static_cast<std::ptrdiff_t>(best_j));
    curves[best_i] = km_fit(detail::pooled(per_leaf, into));
  }

  // Dense relabelling by lowest member leaf.
  std::vector<std::size_t> order(partition.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return partition[a].front() < partition[b].front();
  });

  ClusterModel model;
  model.tree = tree;
  model.k = partition.size();
  model.leaf_to_cluster.assign(n_leaves, 0);
  for (std::size_t label = 0; label < order.size(); ++label) {
    const auto &block = partition[order[label]];
    std::size_t size = 0;
    for (const auto leaf : block) {
      model.leaf_to_cluster[leaf] = label;
      size += per_leaf[leaf].size();
    }
    model.cluster_curves.push_back(curves[order[label]]);
    model.cluster_sizes.push_back(size);
  }
  return model;
}

inline std::size_t cluster_assign(const ClusterModel &model, const Subject &subject,
                                  RoutingOptions options = {}) {
  return model.leaf_to_cluster[assign_leaf(model.tree, subject, options)];
}

struct ClusteringConfig {
  std::optional<std::size_t> k;  // keep the MCL partition when unset
  MclConfig mcl;
  double weight_floor = 1e-12;
  double sinkhorn_tol = 1e-8;
  std::size_t sinkhorn_max_iter = 10000;
};

/// Every intermediate of the leaf clustering, for reporting.
struct ClusterFit {
  LeafGraph graph;
  Matrix balanced;
  Partition mcl_partition;
  ClusterModel model;
};

inline ClusterFit cluster_leaves(const SurvivalTree &tree, const SurvivalDataset &training,
                                 const ClusteringConfig &config = {}, Parallelism par = {}) {
  ClusterFit fit;
  fit.graph = build_leaf_graph(tree, par);
  fit.balanced = sinkhorn_knopp(floor_weights(fit.graph.weights, config.weight_floor),
                                config.sinkhorn_tol, config.sinkhorn_max_iter);
  fit.mcl_partition = mcl(fit.balanced, config.mcl);
  const auto per_leaf = leaf_samples(tree, training);
  const std::size_t k = config.k.value_or(fit.mcl_partition.size());
  fit.model = coarsen_to_k(fit.mcl_partition, fit.balanced, tree, per_leaf, k, config.mcl);
  return fit;
}

}  // namespace survclust

#endif  // SURVCLUST_LEAF_CLUSTERING_HPP_
