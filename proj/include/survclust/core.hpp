#ifndef SURVCLUST_CORE_HPP_
#define SURVCLUST_CORE_HPP_

#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "survclust/error.hpp"

namespace survclust {

enum class FeatureKind { kNumeric, kCategorical };

struct Feature {
  std::string name;
  FeatureKind kind = FeatureKind::kNumeric;
  // Level order is significant: it fixes category indices and therefore the
  // order in which split candidates are enumerated.
  std::vector<std::string> categories;

  bool is_categorical() const { return kind == FeatureKind::kCategorical; }
};

class FeatureSchema {
 public:
  FeatureSchema() = default;

  explicit FeatureSchema(std::vector<Feature> features)
      : features_(std::move(features)) {
    std::unordered_set<std::string> seen;
    for (const auto &f : features_) {
      if (f.name.empty()) {
        throw Error(ErrorCode::kInvalidSchema, "feature with empty name");
      }
      if (!seen.insert(f.name).second) {
        throw Error(ErrorCode::kInvalidSchema, "duplicate feature '" + f.name + "'");
      }
      if (f.is_categorical()) {
        if (f.categories.empty()) {
          throw Error(ErrorCode::kInvalidSchema,
                      "categorical feature '" + f.name + "' has no categories");
        }
        std::unordered_set<std::string> levels(f.categories.begin(), f.categories.end());
        if (levels.size() != f.categories.size()) {
          throw Error(ErrorCode::kInvalidSchema,
                      "categorical feature '" + f.name + "' has duplicate categories");
        }
      } else if (!f.categories.empty()) {
        throw Error(ErrorCode::kInvalidSchema,
                    "numeric feature '" + f.name + "' lists categories");
      }
    }
  }

  std::size_t size() const { return features_.size(); }
  const Feature &operator[](std::size_t i) const { return features_[i]; }
  const std::vector<Feature> &features() const { return features_; }

  std::optional<std::size_t> index_of(const std::string &name) const {
    for (std::size_t i = 0; i < features_.size(); ++i) {
      if (features_[i].name == name) return i;
    }
    return std::nullopt;
  }

  std::optional<std::size_t> category_index(std::size_t feature,
                                            const std::string &level) const {
    const auto &cats = features_[feature].categories;
    for (std::size_t i = 0; i < cats.size(); ++i) {
      if (cats[i] == level) return i;
    }
    return std::nullopt;
  }

  friend bool operator==(const FeatureSchema &a, const FeatureSchema &b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (a[i].name != b[i].name || a[i].kind != b[i].kind ||
          a[i].categories != b[i].categories) {
        return false;
      }
    }
    return true;
  }

 private:
  std::vector<Feature> features_;
};

/// (time, event) pair; event == true means the death was observed, false
/// means the subject was right-censored at `time`.
struct TimeEvent {
  double time = 0.0;
  bool event = false;
};

/// One individual. Numeric features hold their value; categorical features
/// hold the category index as a double (always an exact small integer).
struct Subject {
  std::string id;
  std::vector<double> values;
  double time = 0.0;
  bool event = false;

  TimeEvent outcome() const { return {time, event}; }
  std::size_t category(std::size_t feature) const {
    return static_cast<std::size_t>(values[feature]);
  }
};

struct SurvivalDataset {
  FeatureSchema schema;
  std::vector<Subject> subjects;

  std::size_t size() const { return subjects.size(); }
};

struct Violation {
  std::string subject_id;  // empty for dataset-level violations
  std::string reason;
};

struct ValidationReport {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
};

/// Checks a single subject against the schema. Returns the first problem, if
/// any.
inline std::optional<std::string> check_subject(const FeatureSchema &schema,
                                                const Subject &s) {
  if (!std::isfinite(s.time)) return "non-finite time";
  if (s.time < 0.0) return "negative time";
  if (s.values.size() != schema.size()) return "value count does not match schema";
  for (std::size_t f = 0; f < schema.size(); ++f) {
    const double v = s.values[f];
    if (std::isnan(v)) return "missing value for feature '" + schema[f].name + "'";
    if (!std::isfinite(v)) return "non-finite value for feature '" + schema[f].name + "'";
    if (schema[f].is_categorical()) {
      if (v < 0.0 || v != std::floor(v) ||
          v >= static_cast<double>(schema[f].categories.size())) {
        return "category index out of range for feature '" + schema[f].name + "'";
      }
    }
  }
  return std::nullopt;
}

inline ValidationReport validate_dataset(const SurvivalDataset &dataset) {
  ValidationReport report;
  std::unordered_set<std::string> ids;
  bool any_event = false;
  for (const auto &s : dataset.subjects) {
    if (auto problem = check_subject(dataset.schema, s)) {
      report.violations.push_back({s.id, *problem});
    }
    if (s.id.empty()) report.violations.push_back({s.id, "empty id"});
    if (!ids.insert(s.id).second) report.violations.push_back({s.id, "duplicate id"});
    any_event = any_event || s.event;
  }
  if (!any_event) report.violations.push_back({"", "no observed events"});
  return report;
}

/// Read-only selection of rows from a dataset. The referenced dataset must
/// outlive the view.
class DatasetView {
 public:
  DatasetView() = default;

  explicit DatasetView(const SurvivalDataset &dataset)
      : dataset_(&dataset), rows_(dataset.size()) {
    std::iota(rows_.begin(), rows_.end(), std::size_t{0});
  }

  DatasetView(const SurvivalDataset &dataset, std::vector<std::size_t> rows)
      : dataset_(&dataset), rows_(std::move(rows)) {}

  const SurvivalDataset &dataset() const { return *dataset_; }
  const FeatureSchema &schema() const { return dataset_->schema; }
  const std::vector<std::size_t> &rows() const { return rows_; }

  std::size_t size() const { return rows_.size(); }
  bool empty() const { return rows_.empty(); }
  const Subject &operator[](std::size_t i) const { return dataset_->subjects[rows_[i]]; }

  std::size_t event_count() const {
    std::size_t d = 0;
    for (auto r : rows_) d += dataset_->subjects[r].event ? 1 : 0;
    return d;
  }

  std::vector<TimeEvent> outcomes() const {
    std::vector<TimeEvent> out;
    out.reserve(rows_.size());
    for (auto r : rows_) out.push_back(dataset_->subjects[r].outcome());
    return out;
  }

 private:
  const SurvivalDataset *dataset_ = nullptr;
  std::vector<std::size_t> rows_;
};

template <typename Predicate>
DatasetView subset(const DatasetView &view, Predicate &&pred) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < view.size(); ++i) {
    if (pred(view[i])) rows.push_back(view.rows()[i]);
  }
  return DatasetView(view.dataset(), std::move(rows));
}

template <typename Predicate>
DatasetView subset(const SurvivalDataset &dataset, Predicate &&pred) {
  return subset(DatasetView(dataset), std::forward<Predicate>(pred));
}

inline std::vector<TimeEvent> outcomes(const SurvivalDataset &dataset) {
  return DatasetView(dataset).outcomes();
}

}  // namespace survclust

#endif  // SURVCLUST_CORE_HPP_
