#ifndef SURVCLUST_INGEST_HPP_
#define SURVCLUST_INGEST_HPP_

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "survclust/core.hpp"
#include "survclust/error.hpp"

namespace survclust {

enum class Direction { kSent, kReceived };

struct Activity {
  double timestamp = 0.0;
  Direction direction = Direction::kSent;
  std::string partner_id;
};

struct UserActivity {
  std::string user_id;
  double join_time = 0.0;
  std::vector<Activity> activity;  // ascending timestamps
};

struct ActivityLog {
  std::vector<UserActivity> users;
  double study_end = 0.0;
};

inline void validate_log(const ActivityLog &log) {
  std::set<std::string> ids;
  for (const auto &u : log.users) {
    if (!ids.insert(u.user_id).second) {
      throw Error(ErrorCode::kInvalidLog, "duplicate user '" + u.user_id + "'");
    }
    if (!std::isfinite(u.join_time) || u.join_time > log.study_end) {
      throw Error(ErrorCode::kInvalidLog, "user '" + u.user_id + "' joins after study end");
    }
    double previous = u.join_time;
    for (const auto &a : u.activity) {
      if (a.timestamp < previous) {
        throw Error(ErrorCode::kInvalidLog,
                    "user '" + u.user_id + "' has activity before joining or out of order");
      }
      if (a.timestamp > log.study_end) {
        throw Error(ErrorCode::kInvalidLog, "user '" + u.user_id + "' has activity after study end");
      }
      previous = a.timestamp;
    }
  }
}

struct Discard {
  std::string user_id;
  std::string reason;
};

struct IngestResult {
  SurvivalDataset dataset;
  std::vector<Discard> discarded;
};

/// Lifetimes from activity: a user silent for at least `cutoff` before the
/// study end is dead with lifetime join -> last activity; otherwise censored
/// at the study end. Users observed for less than `cutoff` and users dead
/// with zero lifetime are discarded. Output rows are ordered by user id.
inline IngestResult activity_to_survival(const ActivityLog &log, double cutoff,
                                         const FeatureSchema &schema,
                                         const std::map<std::string, std::vector<double>> &profiles) {
  if (!(cutoff > 0.0) || !std::isfinite(cutoff)) {
    throw Error(ErrorCode::kInvalidCutoff, "cutoff must be positive");
  }
  validate_log(log);

  std::vector<const UserActivity *> users;
  for (const auto &u : log.users) users.push_back(&u);
  std::sort(users.begin(), users.end(),
            [](const UserActivity *a, const UserActivity *b) { return a->user_id < b->user_id; });

  IngestResult out;
  out.dataset.schema = schema;
  for (const auto *u : users) {
    const double last = u->activity.empty() ? u->join_time : u->activity.back().timestamp;
    const double observed = log.study_end - u->join_time;
    Subject s;
    s.id = u->user_id;
    if (log.study_end - last >= cutoff) {
      s.time = last - u->join_time;
      s.event = true;
      if (s.time == 0.0) {
        out.discarded.push_back({u->user_id, "zero lifetime"});
        continue;
      }
    } else if (observed < cutoff) {
      out.discarded.push_back({u->user_id, "observation window shorter than cutoff"});
      continue;
    } else {
      s.time = observed;
      s.event = false;
    }
    const auto profile = profiles.find(u->user_id);
    if (profile == profiles.end()) {
      throw Error(ErrorCode::kInvalidLog, "no profile for user '" + u->user_id + "'");
    }
    s.values = profile->second;
    if (auto problem = check_subject(schema, s)) {
      throw Error(ErrorCode::kSchemaMismatch, "user '" + u->user_id + "': " + *problem);
    }
    out.dataset.subjects.push_back(std::move(s));
  }
  return out;
}

struct ActivityFeatures {
  double comments_sent = 0.0;
  double comments_received = 0.0;
  double partners = 0.0;
  double days_active = 0.0;  // distinct floor(timestamp) values
};

inline const std::vector<std::string> &activity_feature_names() {
  static const std::vector<std::string> names = {"comments_sent", "comments_received",
                                                 "partners", "days_active"};
  return names;
}

/// Activity counts in the half-open window [join, join + window).
inline std::map<std::string, ActivityFeatures> early_window_features(const ActivityLog &log,
                                                                     double window) {
  if (!(window > 0.0)) throw Error(ErrorCode::kInvalidConfig, "window must be positive");
  std::map<std::string, ActivityFeatures> out;
  for (const auto &u : log.users) {
    ActivityFeatures f;
    std::set<std::string> partners;
    std::set<double> days;
    const double end = u.join_time + window;
    for (const auto &a : u.activity) {
      if (a.timestamp < u.join_time || a.timestamp >= end) continue;
      (a.direction == Direction::kSent ? f.comments_sent : f.comments_received) += 1.0;
      partners.insert(a.partner_id);
      days.insert(std::floor(a.timestamp));
    }
    f.partners = static_cast<double>(partners.size());
    f.days_active = static_cast<double>(days.size());
    out[u.user_id] = f;
  }
  return out;
}

/// Appends the activity features as numeric columns after the profile
/// features. Users without activity records get zeros.
inline std::pair<FeatureSchema, std::map<std::string, std::vector<double>>> merge_activity_features(
    const FeatureSchema &profile_schema, const std::map<std::string, std::vector<double>> &profiles,
    const std::map<std::string, ActivityFeatures> &activity) {
  auto features = profile_schema.features();
  for (const auto &name : activity_feature_names()) {
    features.push_back({name, FeatureKind::kNumeric, {}});
  }
  std::map<std::string, std::vector<double>> merged;
  for (const auto &[id, values] : profiles) {
    ActivityFeatures f;
    if (const auto it = activity.find(id); it != activity.end()) f = it->second;
    auto row = values;
    row.insert(row.end(), {f.comments_sent, f.comments_received, f.partners, f.days_active});
    merged.emplace(id, std::move(row));
  }
  return {FeatureSchema(std::move(features)), std::move(merged)};
}

}  // namespace survclust

#endif  // SURVCLUST_INGEST_HPP_
