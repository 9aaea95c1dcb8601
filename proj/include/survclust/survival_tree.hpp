#ifndef SURVCLUST_SURVIVAL_TREE_HPP_
#define SURVCLUST_SURVIVAL_TREE_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "survclust/core.hpp"
#include "survclust/error.hpp"
#include "survclust/kaplan_meier.hpp"
#include "survclust/parallel.hpp"
#include "survclust/two_sample_tests.hpp"

namespace survclust {

/// Attribute-value test. Numeric: value < threshold. Categorical: value == level.
/// Subjects passing the test go to the left child.
struct SplitTest {
  enum class Kind { kLessThan, kEquals };
  Kind kind = Kind::kLessThan;
  double threshold = 0.0;
  std::size_t category = 0;

  bool passes(double value) const {
    if (kind == Kind::kLessThan) return value < threshold;
    return value == static_cast<double>(category);
  }

  friend bool operator==(const SplitTest &, const SplitTest &) = default;
};

struct SplitCandidate {
  std::size_t feature = 0;
  SplitTest test;
  double p_value = 1.0;
  double statistic = 0.0;
  // Argument of the Kuiper tail function. p is monotone decreasing in it, so
  // it orders candidates whose p-values underflow to the same value.
  double lambda = 0.0;

  bool passes(const Subject &s) const { return test.passes(s.values[feature]); }
};

struct TreeConfig {
  double alpha = 0.05;
  std::size_t min_leaf_subjects = 50;
  std::size_t min_leaf_events = 5;
  std::size_t max_depth = 12;
  std::size_t max_numeric_thresholds = 32;

  void validate() const {
    if (!(alpha > 0.0 && alpha <= 1.0)) {
      throw Error(ErrorCode::kInvalidAlpha, "alpha must lie in (0, 1]");
    }
    if (min_leaf_subjects == 0 || min_leaf_events == 0 || max_depth == 0 ||
        max_numeric_thresholds == 0) {
      throw Error(ErrorCode::kInvalidConfig, "tree size limits must be positive");
    }
  }

  friend bool operator==(const TreeConfig &, const TreeConfig &) = default;
};

struct TreeNode {
  std::size_t id = 0;
  std::size_t depth = 0;
  std::size_t n_subjects = 0;
  std::size_t n_events = 0;
  std::optional<SplitCandidate> split;  // set for internal nodes
  // Number of split candidates tested at this node (the Bonferroni family).
  std::size_t n_candidates = 0;
  std::size_t left = 0;
  std::size_t right = 0;
  std::size_t leaf_id = 0;  // meaningful for leaves only
  SurvivalCurve curve;      // leaves only

  bool is_leaf() const { return !split.has_value(); }
};

struct SurvivalTree {
  FeatureSchema schema;
  TreeConfig config;
  std::vector<TreeNode> nodes;  // nodes[0] is the root
  std::vector<std::size_t> leaves;  // node index of each leaf, left to right

  std::size_t leaf_count() const { return leaves.size(); }
  const TreeNode &leaf(std::size_t leaf_id) const { return nodes[leaves[leaf_id]]; }

  std::size_t depth() const {
    std::size_t d = 0;
    for (const auto &n : nodes) d = std::max(d, n.depth);
    return d;
  }
  std::size_t internal_count() const { return nodes.size() - leaves.size(); }
};

namespace detail {

struct SideCounts {
  std::size_t subjects = 0;
  std::size_t events = 0;
};

inline bool sides_allowed(SideCounts left, SideCounts total, const TreeConfig &config) {
  const SideCounts right{total.subjects - left.subjects, total.events - left.events};
  return left.subjects >= config.min_leaf_subjects && right.subjects >= config.min_leaf_subjects &&
         left.events >= config.min_leaf_events && right.events >= config.min_leaf_events;
}

inline double kuiper_lambda(const TestResult &r) {
  const double root = std::sqrt(r.effective_n);
  return (root + 0.155 + 0.24 / root) * r.statistic;
}

// Indices into `distinct` (sorted unique values) of the midpoints to keep.
// Below the cap every midpoint is kept; above it, the midpoints sitting just
// above equally spaced quantiles of the (non-unique) value distribution.
inline std::vector<std::size_t> threshold_positions(const std::vector<double> &sorted_values,
                                                    const std::vector<double> &distinct,
                                                    std::size_t cap) {
  const std::size_t n_mid = distinct.size() - 1;
  std::vector<std::size_t> picks;
  if (n_mid <= cap) {
    for (std::size_t i = 0; i < n_mid; ++i) picks.push_back(i);
    return picks;
  }
  const std::size_t n = sorted_values.size();
  for (std::size_t q = 1; q <= cap; ++q) {
    const std::size_t rank = std::min(n - 1, q * n / (cap + 1));
    const double v = sorted_values[rank];
    auto pos = static_cast<std::size_t>(
        std::lower_bound(distinct.begin(), distinct.end(), v) - distinct.begin());
    if (pos >= n_mid) pos = n_mid - 1;
    picks.push_back(pos);
  }
  std::sort(picks.begin(), picks.end());
  picks.erase(std::unique(picks.begin(), picks.end()), picks.end());
  return picks;
}

}  // namespace detail

/// Candidate attribute-value tests for the subjects in `data`, in schema order
/// and then ascending threshold / category index. Candidates that would leave
/// either side below the configured leaf minima are dropped.
inline std::vector<SplitCandidate> enumerate_splits(const DatasetView &data,
                                                    const TreeConfig &config) {
  std::vector<SplitCandidate> out;
  if (data.empty()) return out;
  const auto &schema = data.schema();
  const detail::SideCounts total{data.size(), data.event_count()};

  for (std::size_t f = 0; f < schema.size(); ++f) {
    if (schema[f].is_categorical()) {
      std::vector<detail::SideCounts> per_level(schema[f].categories.size());
      for (std::size_t i = 0; i < data.size(); ++i) {
        auto &c = per_level[data[i].category(f)];
        ++c.subjects;
        c.events += data[i].event ? 1 : 0;
      }
      for (std::size_t level = 0; level < per_level.size(); ++level) {
        if (per_level[level].subjects == 0) continue;
        if (!detail::sides_allowed(per_level[level], total, config)) continue;
        SplitCandidate c;
        c.feature = f;
        c.test = {SplitTest::Kind::kEquals, 0.0, level};
        out.push_back(c);
      }
      continue;
    }

    // (value, event) sorted by value so that side counts are prefix sums.
    std::vector<std::pair<double, bool>> pairs;
    pairs.reserve(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
      pairs.emplace_back(data[i].values[f], data[i].event);
    }
    std::sort(pairs.begin(), pairs.end());
    std::vector<double> sorted_values;
    sorted_values.reserve(pairs.size());
    std::vector<std::size_t> events_prefix(pairs.size() + 1, 0);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      sorted_values.push_back(pairs[i].first);
      events_prefix[i + 1] = events_prefix[i] + (pairs[i].second ? 1 : 0);
    }
    std::vector<double> distinct = sorted_values;
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    if (distinct.size() < 2) continue;

    for (const auto pos :
         detail::threshold_positions(sorted_values, distinct, config.max_numeric_thresholds)) {
      const double theta = distinct[pos] + (distinct[pos + 1] - distinct[pos]) / 2.0;
      const auto below = static_cast<std::size_t>(
          std::lower_bound(sorted_values.begin(), sorted_values.end(), theta) -
          sorted_values.begin());
      const detail::SideCounts left{below, events_prefix[below]};
      if (!detail::sides_allowed(left, total, config)) continue;
      SplitCandidate c;
      c.feature = f;
      c.test = {SplitTest::Kind::kLessThan, theta, 0};
      out.push_back(c);
    }
  }
  return out;
}

/// Fills p_value / statistic for every candidate: Kaplan-Meier curves of the
/// two induced subsets compared with the Kuiper test.
inline std::vector<SplitCandidate> evaluate_splits(const DatasetView &data,
                                                   std::vector<SplitCandidate> candidates,
                                                   Parallelism par = {}) {
  // Sorting once by time lets every candidate build both child samples
  // already in time order.
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return data[a].time < data[b].time; });

  parallel_for(candidates.size(), par, [&](std::size_t ci) {
    auto &c = candidates[ci];
    std::vector<TimeEvent> left;
    std::vector<TimeEvent> right;
    for (const auto i : order) {
      const Subject &s = data[i];
      (c.passes(s) ? left : right).push_back(s.outcome());
    }
    const auto curve_l = detail::km_fit_sorted(left);
    const auto curve_r = detail::km_fit_sorted(right);
    const auto r = kuiper_test(curve_l, curve_r);
    c.statistic = r.statistic;
    c.p_value = r.p_value;
    c.lambda = detail::kuiper_lambda(r);
  });
  return candidates;
}

/// Index of the most significant evaluated candidate: lowest p-value, then
/// largest Kuiper lambda, then earliest in enumeration order.
inline std::optional<std::size_t> most_significant(const std::vector<SplitCandidate> &evaluated) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < evaluated.size(); ++i) {
    if (!best) {
      best = i;
      continue;
    }
    const auto &a = evaluated[i];
    const auto &b = evaluated[*best];
    if (a.p_value < b.p_value || (a.p_value == b.p_value && a.lambda > b.lambda)) best = i;
  }
  return best;
}

inline std::optional<SplitCandidate> best_split(const DatasetView &data,
                                                std::vector<SplitCandidate> candidates,
                                                const TreeConfig &config, Parallelism par = {}) {
  if (candidates.empty()) return std::nullopt;
  const double threshold = bonferroni_threshold(config.alpha, candidates.size());
  const auto evaluated = evaluate_splits(data, std::move(candidates), par);
  const auto best = most_significant(evaluated);
  if (!best || !(evaluated[*best].p_value < threshold)) return std::nullopt;
  return evaluated[*best];
}

namespace detail {

class TreeBuilder {
 public:
  TreeBuilder(SurvivalTree &tree, Parallelism par) : tree_(tree), par_(par) {}

  std::size_t build(const DatasetView &data, std::size_t depth) {
    const std::size_t index = tree_.nodes.size();
    tree_.nodes.emplace_back();
    {
      auto &node = tree_.nodes[index];
      node.id = index;
      node.depth = depth;
      node.n_subjects = data.size();
      node.n_events = data.event_count();
    }
    const auto &config = tree_.config;
    const auto &node = tree_.nodes[index];

    std::optional<SplitCandidate> chosen;
    std::size_t tested = 0;
    if (depth < config.max_depth && node.n_subjects >= 2 * config.min_leaf_subjects &&
        node.n_events >= 2 * config.min_leaf_events) {
      auto candidates = enumerate_splits(data, config);
      tested = candidates.size();
      chosen = best_split(data, std::move(candidates), config, par_);
    }
    tree_.nodes[index].n_candidates = tested;

    if (!chosen) {
      auto &leaf = tree_.nodes[index];
      leaf.leaf_id = tree_.leaves.size();
      leaf.curve = km_fit(data);
      tree_.leaves.push_back(index);
      return index;
    }

    const auto split = *chosen;
    tree_.nodes[index].split = split;
    const auto left_view = subset(data, [&](const Subject &s) { return split.passes(s); });
    const auto right_view = subset(data, [&](const Subject &s) { return !split.passes(s); });
    const auto left = build(left_view, depth + 1);
    const auto right = build(right_view, depth + 1);
    tree_.nodes[index].left = left;
    tree_.nodes[index].right = right;
    return index;
  }

 private:
  SurvivalTree &tree_;
  Parallelism par_;
};

}  // namespace detail

inline SurvivalTree grow_tree(const SurvivalDataset &data, const TreeConfig &config,
                              Parallelism par = {}) {
  config.validate();
  const DatasetView root(data);
  if (root.event_count() == 0) {
    throw Error(ErrorCode::kNoEventsAtRoot, "dataset has no observed deaths");
  }
  const auto report = validate_dataset(data);
  if (!report.ok()) {
    const auto &v = report.violations.front();
    throw Error(ErrorCode::kInvalidDataset,
                (v.subject_id.empty() ? std::string() : "subject '" + v.subject_id + "': ") +
                    v.reason);
  }
  SurvivalTree tree;
  tree.schema = data.schema;
  tree.config = config;
  detail::TreeBuilder(tree, par).build(root, 0);
  return tree;
}

struct RoutingOptions {
  // Route a categorical value that is not a known level (encoded as a
  // negative index) to the child that received more training subjects.
  bool unknown_as_majority_child = false;
};

inline std::size_t assign_leaf(const SurvivalTree &tree, const Subject &subject,
                               RoutingOptions options = {}) {
  const auto &schema = tree.schema;
  if (subject.values.size() != schema.size()) {
    throw Error(ErrorCode::kSchemaMismatch, "subject '" + subject.id + "' has " +
                                                std::to_string(subject.values.size()) +
                                                " values, schema has " +
                                                std::to_string(schema.size()));
  }
  std::size_t at = 0;
  while (!tree.nodes[at].is_leaf()) {
    const auto &node = tree.nodes[at];
    const auto &split = *node.split;
    const double v = subject.values[split.feature];
    const auto &feature = schema[split.feature];
    if (std::isnan(v)) {
      throw Error(ErrorCode::kSchemaMismatch,
                  "subject '" + subject.id + "' is missing '" + feature.name + "'");
    }
    if (feature.is_categorical() &&
        (v < 0.0 || v >= static_cast<double>(feature.categories.size()))) {
      if (!options.unknown_as_majority_child) {
        throw Error(ErrorCode::kSchemaMismatch, "subject '" + subject.id +
                                                    "' has an unknown level for '" +
                                                    feature.name + "'");
      }
      const auto &l = tree.nodes[node.left];
      const auto &r = tree.nodes[node.right];
      at = l.n_subjects >= r.n_subjects ? node.left : node.right;
      continue;
    }
    at = split.test.passes(v) ? node.left : node.right;
  }
  return tree.nodes[at].leaf_id;
}

}  // namespace survclust

#endif  // SURVCLUST_SURVIVAL_TREE_HPP_
