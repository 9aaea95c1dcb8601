#ifndef SURVCLUST_EVALUATION_HPP_
#define SURVCLUST_EVALUATION_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "survclust/core.hpp"
#include "survclust/error.hpp"

namespace survclust {

// ---------------------------------------------------------------------------
// Cox proportional hazards, single binary covariate.

struct GroupedOutcome {
  double time = 0.0;
  bool event = false;
  int group = 0;  // 0 or 1
};

struct HazardRatioResult {
  double beta = 0.0;
  double hazard_ratio = 1.0;
  double std_err = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  int iterations = 0;
  bool diverged = false;
};

/// Newton-Raphson on the Breslow partial likelihood, starting at beta = 0.
/// Only the order of the times and their ties enter the computation.
inline HazardRatioResult cox_hazard_ratio(std::span<const GroupedOutcome> samples) {
  std::size_t events[2] = {0, 0};
  for (const auto &s : samples) {
    if (s.group != 0 && s.group != 1) {
      throw Error(ErrorCode::kInvalidConfig, "group must be 0 or 1");
    }
    if (s.event) ++events[s.group];
  }
  if (events[0] == 0 || events[1] == 0) {
    throw Error(ErrorCode::kNoEvents, "both groups need at least one event");
  }

  // Distinct times in descending order: risk-set sums accumulate as the scan
  // moves to earlier times.
  std::vector<GroupedOutcome> sorted(samples.begin(), samples.end());
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const GroupedOutcome &a, const GroupedOutcome &b) { return a.time > b.time; });
  struct Tie {
    double n0 = 0.0;  // subjects with this exact time, group 0
    double n1 = 0.0;
    double d = 0.0;   // deaths
    double d1 = 0.0;  // deaths in group 1
  };
  std::vector<Tie> ties;
  for (std::size_t i = 0; i < sorted.size();) {
    Tie t;
    const double time = sorted[i].time;
    for (; i < sorted.size() && sorted[i].time == time; ++i) {
      (sorted[i].group == 1 ? t.n1 : t.n0) += 1.0;
      if (sorted[i].event) {
        t.d += 1.0;
        if (sorted[i].group == 1) t.d1 += 1.0;
      }
    }
    ties.push_back(t);
  }

  const auto score_info = [&](double beta) {
    const double w = std::exp(beta);
    double r0 = 0.0;
    double r1 = 0.0;
    double score = 0.0;
    double info = 0.0;
    for (const auto &t : ties) {
      r0 += t.n0;
      r1 += t.n1;
      if (t.d == 0.0) continue;
      const double s0 = r0 + r1 * w;
      const double mean = r1 * w / s0;
      score += t.d1 - t.d * mean;
      info += t.d * mean * (1.0 - mean);
    }
    return std::pair{score, info};
  };

  HazardRatioResult result;
  double beta = 0.0;
  double info = 0.0;
  for (int it = 1; it <= 50; ++it) {
    const auto [u, i] = score_info(beta);
    info = i;
    result.iterations = it;
    if (!(info > 0.0)) {
      result.diverged = true;
      break;
    }
    const double step = u / info;
    beta += step;
    if (std::abs(beta) > 20.0) {
      result.diverged = true;
      break;
    }
    if (std::abs(step) < 1e-10) break;
  }
  if (!result.diverged) info = score_info(beta).second;
  result.beta = beta;
  result.hazard_ratio = std::exp(beta);
  result.std_err = info > 0.0 ? 1.0 / std::sqrt(info) : std::numeric_limits<double>::infinity();
  result.ci_low = std::exp(beta - 1.96 * result.std_err);
  result.ci_high = std::exp(beta + 1.96 * result.std_err);
  return result;
}

// ---------------------------------------------------------------------------
// Survive-the-horizon labels.

struct SurvivalLabel {
  std::size_t row = 0;  // index into dataset.subjects
  std::string id;
  bool alive_at_t1 = false;
};

/// Subjects alive strictly after t0 whose status at t1 is known: death
/// before t1 -> false, observed until at least t1 -> true. Censoring inside
/// (t0, t1) leaves the outcome undetermined and the subject is skipped.
inline std::vector<SurvivalLabel> survival_labels(const SurvivalDataset &dataset, double t0,
                                                  double t1) {
  if (!(t0 > 0.0 && t1 > t0)) throw Error(ErrorCode::kInvalidHorizons, "need 0 < t0 < t1");
  std::vector<SurvivalLabel> out;
  for (std::size_t r = 0; r < dataset.subjects.size(); ++r) {
    const auto &s = dataset.subjects[r];
    if (!(s.time > t0)) continue;
    if (s.time >= t1) {
      out.push_back({r, s.id, true});
    } else if (s.event) {
      out.push_back({r, s.id, false});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Logistic regression on one-hot cluster labels.

/// One-hot rows: column c is 1 iff the label equals c.
inline Eigen::MatrixXd one_hot(std::span<const std::size_t> labels, std::size_t k) {
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(labels.size()),
                                            static_cast<Eigen::Index>(k));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(labels[i])) = 1.0;
  }
  return x;
}

struct LogisticConfig {
  double ridge = 1e-6;
  double tol = 1e-8;
  int max_iter = 100;
};

/// Weight vector: element 0 is the intercept, then one weight per column.
struct LogisticModel {
  Eigen::VectorXd weights;
  int iterations = 0;

  double probability(const Eigen::Ref<const Eigen::RowVectorXd> &x) const {
    const double z = weights(0) + x.dot(weights.tail(weights.size() - 1));
    return 1.0 / (1.0 + std::exp(-z));
  }
};

namespace detail {

inline double log1pexp(double z) {
  return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

}  // namespace detail

/// IRLS maximisation of the log-likelihood with an L2 penalty on the
/// non-intercept weights.
inline LogisticModel logistic_fit(const Eigen::MatrixXd &features, const std::vector<bool> &labels,
                                  const LogisticConfig &config = {}) {
  const auto n = features.rows();
  if (static_cast<std::size_t>(n) != labels.size()) {
    throw Error(ErrorCode::kInvalidConfig, "feature rows and labels differ in length");
  }
  const auto positives = std::count(labels.begin(), labels.end(), true);
  if (positives == 0 || positives == static_cast<std::ptrdiff_t>(labels.size())) {
    throw Error(ErrorCode::kSingleClass, "labels contain a single class");
  }
  const auto p = features.cols() + 1;
  Eigen::MatrixXd x(n, p);
  x.col(0).setOnes();
  x.rightCols(p - 1) = features;
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) y(i) = labels[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
  Eigen::VectorXd penalty = Eigen::VectorXd::Constant(p, config.ridge);
  penalty(0) = 0.0;

  const auto objective = [&](const Eigen::VectorXd &w) {
    const Eigen::VectorXd z = x * w;
    double ll = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) ll += y(i) * z(i) - detail::log1pexp(z(i));
    return ll - 0.5 * w.dot(penalty.asDiagonal() * w);
  };

  LogisticModel model;
  model.weights = Eigen::VectorXd::Zero(p);
  double previous = objective(model.weights);
  for (int it = 1; it <= config.max_iter; ++it) {
    const Eigen::VectorXd z = x * model.weights;
    Eigen::VectorXd mu(n);
    Eigen::VectorXd w(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      mu(i) = 1.0 / (1.0 + std::exp(-z(i)));
      w(i) = std::max(mu(i) * (1.0 - mu(i)), 1e-12);
    }
    const Eigen::VectorXd gradient = x.transpose() * (y - mu) - penalty.cwiseProduct(model.weights);
    Eigen::MatrixXd hessian = x.transpose() * w.asDiagonal() * x;
    hessian.diagonal() += penalty;
    const Eigen::VectorXd step = hessian.ldlt().solve(gradient);

    // Step halving keeps the penalised likelihood monotone.
    double scale = 1.0;
    Eigen::VectorXd next = model.weights + step;
    double current = objective(next);
    while (current < previous && scale > 1e-8) {
      scale /= 2.0;
      next = model.weights + scale * step;
      current = objective(next);
    }
    model.weights = next;
    model.iterations = it;
    const double change = std::abs(current - previous);
    previous = current;
    if (change < config.tol) break;
  }
  return model;
}

// ---------------------------------------------------------------------------
// Threshold metrics.

struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;

  std::size_t total() const { return tp + fp + tn + fn; }
};

struct ClassificationReport {
  double precision = 0.0;
  double recall = 0.0;
  double f_measure = 0.0;
  double accuracy = 0.0;
  double fpr = 0.0;
  ConfusionCounts counts;
};

namespace detail {
inline double ratio(double num, double den) { return den > 0.0 ? num / den : 0.0; }
}  // namespace detail

/// Metrics from confusion counts; an empty denominator yields 0.
inline ClassificationReport metrics_from_counts(const ConfusionCounts &c) {
  ClassificationReport r;
  r.counts = c;
  const auto tp = static_cast<double>(c.tp);
  const auto fp = static_cast<double>(c.fp);
  const auto tn = static_cast<double>(c.tn);
  const auto fn = static_cast<double>(c.fn);
  r.precision = detail::ratio(tp, tp + fp);
  r.recall = detail::ratio(tp, tp + fn);
  r.f_measure = detail::ratio(2.0 * r.precision * r.recall, r.precision + r.recall);
  r.accuracy = detail::ratio(tp + tn, static_cast<double>(c.total()));
  r.fpr = detail::ratio(fp, fp + tn);
  return r;
}

inline ClassificationReport classify_and_score(const LogisticModel &model,
                                               const Eigen::MatrixXd &features,
                                               const std::vector<bool> &labels,
                                               double threshold = 0.5) {
  if (static_cast<std::size_t>(features.rows()) != labels.size() ||
      features.cols() + 1 != model.weights.size()) {
    throw Error(ErrorCode::kInvalidConfig, "feature / label / weight shapes disagree");
  }
  ConfusionCounts c;
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    const bool predicted = model.probability(features.row(i)) >= threshold;
    const bool actual = labels[static_cast<std::size_t>(i)];
    if (predicted && actual) ++c.tp;
    if (predicted && !actual) ++c.fp;
    if (!predicted && !actual) ++c.tn;
    if (!predicted && actual) ++c.fn;
  }
  return metrics_from_counts(c);
}

}  // namespace survclust

#endif  // SURVCLUST_EVALUATION_HPP_
