#ifndef SURVCLUST_PIPELINE_HPP_
#define SURVCLUST_PIPELINE_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "survclust/core.hpp"
#include "survclust/evaluation.hpp"
#include "survclust/io.hpp"
#include "survclust/leaf_clustering.hpp"
#include "survclust/survival_tree.hpp"
#include "survclust/two_sample_tests.hpp"

namespace survclust {

struct FitConfig {
  TreeConfig tree;
  ClusteringConfig clustering;
};

struct FitResult {
  SurvivalTree tree;
  ClusterFit clusters;
};

/// Tree growth followed by leaf clustering.
inline FitResult fit_model(const SurvivalDataset &data, const FitConfig &config,
                           Parallelism par = {}) {
  FitResult out;
  out.tree = grow_tree(data, config.tree, par);
  out.clusters = cluster_leaves(out.tree, data, config.clustering, par);
  return out;
}

inline std::vector<std::size_t> assign_all(const ClusterModel &model, const SurvivalDataset &data) {
  std::vector<std::size_t> labels;
  labels.reserve(data.size());
  for (const auto &s : data.subjects) labels.push_back(cluster_assign(model, s));
  return labels;
}

struct EvaluationConfig {
  double t0 = 0.0;
  double t1 = 0.0;
  double train_fraction = 0.7;
  std::uint64_t seed = 0;
};

struct EvaluationReport {
  std::size_t k = 0;
  std::vector<std::size_t> cluster_counts;
  std::optional<LogRankResult> logrank;
  std::string logrank_note;
  std::optional<HazardRatioResult> hazard_ratio;
  // Baseline cluster of the hazard ratio: the one with the lower hazard, so
  // the reported ratio is >= 1.
  std::size_t hazard_ratio_reference = 0;
  std::string hazard_ratio_note;
  std::optional<ClassificationReport> classification;
  std::string classification_note;
  std::size_t n_eligible = 0;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
};

/// Log-rank across clusters, hazard ratio for two clusters, and the
/// survive-to-t1 classification task with cluster labels as the only
/// features, trained / scored on a seeded split of the eligible subjects.
inline EvaluationReport evaluate_model(const ClusterModel &model, const SurvivalDataset &data,
                                       const EvaluationConfig &config) {
  if (!(config.train_fraction > 0.0 && config.train_fraction < 1.0)) {
    throw Error(ErrorCode::kInvalidConfig, "split fraction must lie in (0, 1)");
  }
  EvaluationReport report;
  report.k = model.k;
  const auto labels = assign_all(model, data);
  report.cluster_counts.assign(model.k, 0);
  std::vector<std::vector<TimeEvent>> groups(model.k);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    ++report.cluster_counts[labels[i]];
    groups[labels[i]].push_back(data.subjects[i].outcome());
  }

  std::vector<std::vector<TimeEvent>> populated;
  for (auto &g : groups) {
    if (!g.empty()) populated.push_back(g);
  }
  if (model.k < 2) {
    report.logrank_note = "k<2";
  } else if (populated.size() < 2) {
    report.logrank_note = "fewer than two populated clusters";
  } else {
    try {
      report.logrank = logrank_test(populated);
    } catch (const Error &e) {
      report.logrank_note = e.what();
    }
  }

  if (model.k == 2) {
    std::vector<GroupedOutcome> grouped;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const auto &s = data.subjects[i];
      grouped.push_back({s.time, s.event, static_cast<int>(labels[i])});
    }
    try {
      auto hr = cox_hazard_ratio(grouped);
      if (hr.beta < 0.0) {
        for (auto &g : grouped) g.group = 1 - g.group;
        hr = cox_hazard_ratio(grouped);
        report.hazard_ratio_reference = 1;
      }
      report.hazard_ratio = hr;
    } catch (const Error &e) {
      report.hazard_ratio_note = e.what();
    }
  } else {
    report.hazard_ratio_note = "hazard ratio reported for k=2 only";
  }

  const auto eligible = survival_labels(data, config.t0, config.t1);
  report.n_eligible = eligible.size();
  std::vector<std::size_t> order(eligible.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(config.seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<std::size_t>(
      std::llround(config.train_fraction * static_cast<double>(eligible.size())));
  std::vector<std::size_t> train_clusters;
  std::vector<std::size_t> test_clusters;
  std::vector<bool> train_labels;
  std::vector<bool> test_labels;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto &e = eligible[order[i]];
    if (i < n_train) {
      train_clusters.push_back(labels[e.row]);
      train_labels.push_back(e.alive_at_t1);
    } else {
      test_clusters.push_back(labels[e.row]);
      test_labels.push_back(e.alive_at_t1);
    }
  }
  report.n_train = train_clusters.size();
  report.n_test = test_clusters.size();
  if (test_clusters.empty()) {
    report.classification_note = "no held-out subjects";
    return report;
  }
  try {
    const auto fitted = logistic_fit(one_hot(train_clusters, model.k), train_labels);
    report.classification = classify_and_score(fitted, one_hot(test_clusters, model.k), test_labels);
  } catch (const Error &e) {
    report.classification_note = e.what();
  }
  return report;
}

inline json hazard_ratio_to_json(const HazardRatioResult &hr) {
  return {{"beta", hr.beta},         {"hazard_ratio", hr.hazard_ratio},
          {"std_err", hr.std_err},   {"ci95", {hr.ci_low, hr.ci_high}},
          {"iterations", hr.iterations}, {"diverged", hr.diverged}};
}

inline json classification_to_json(const ClassificationReport &r) {
  return {{"precision", r.precision},
          {"recall", r.recall},
          {"f_measure", r.f_measure},
          {"accuracy", r.accuracy},
          {"fpr", r.fpr},
          {"counts", {{"tp", r.counts.tp}, {"fp", r.counts.fp}, {"tn", r.counts.tn}, {"fn", r.counts.fn}}}};
}

inline json report_to_json(const EvaluationReport &r) {
  json j;
  j["k"] = r.k;
  j["cluster_counts"] = r.cluster_counts;
  if (r.logrank) {
    j["logrank"] = {{"chi2", r.logrank->statistic},
                    {"p", r.logrank->p_value},
                    {"df", r.logrank->degrees_of_freedom},
                    {"observed", r.logrank->observed},
                    {"expected", r.logrank->expected}};
  } else {
    j["logrank"] = {{"skipped", r.logrank_note}};
  }
  if (r.hazard_ratio) {
    j["hazard_ratio"] = hazard_ratio_to_json(*r.hazard_ratio);
    j["hazard_ratio"]["reference_cluster"] = r.hazard_ratio_reference;
  } else {
    j["hazard_ratio"] = {{"skipped", r.hazard_ratio_note}};
  }
  json row = {{"n_eligible", r.n_eligible}, {"n_train", r.n_train}, {"n_test", r.n_test}};
  if (r.classification) {
    row.update(classification_to_json(*r.classification));
  } else {
    row["skipped"] = r.classification_note;
  }
  j["classification"] = {{std::to_string(r.k), std::move(row)}};
  return j;
}

}  // namespace survclust

#endif  // SURVCLUST_PIPELINE_HPP_
