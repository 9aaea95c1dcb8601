#ifndef SURVCLUST_KAPLAN_MEIER_HPP_
#define SURVCLUST_KAPLAN_MEIER_HPP_

#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

#include "survclust/core.hpp"
#include "survclust/error.hpp"

namespace survclust {

/// Product-limit survival estimate. A right-continuous step function equal to
/// 1 before the first death time and to `survival[j]` on
/// [event_times[j], event_times[j + 1]).
struct SurvivalCurve {
  std::vector<double> event_times;
  std::vector<double> survival;
  std::size_t n_events = 0;
  std::size_t n_subjects = 0;

  friend bool operator==(const SurvivalCurve &, const SurvivalCurve &) = default;
};

namespace detail {

// Expects `sorted` in ascending time order. Within one run of consecutive
// deaths the product (n_j - d_j) / n_j telescopes, so the estimate is
// computed as base * (at_risk_now / at_risk_at_block_start) and only censoring
// starts a new block. This keeps uncensored samples bit-identical to the
// empirical survival fraction.
inline SurvivalCurve km_fit_sorted(std::span<const TimeEvent> sorted) {
  if (sorted.empty()) throw Error(ErrorCode::kEmptySample, "no subjects");
  SurvivalCurve curve;
  curve.n_subjects = sorted.size();

  std::size_t at_risk = sorted.size();
  double block_base = 1.0;
  std::size_t block_n = at_risk;
  std::size_t block_deaths = 0;

  std::size_t i = 0;
  while (i < sorted.size()) {
    const double t = sorted[i].time;
    std::size_t deaths = 0;
    std::size_t censored = 0;
    for (; i < sorted.size() && sorted[i].time == t; ++i) {
      if (sorted[i].event) {
        ++deaths;
      } else {
        ++censored;
      }
    }
    if (deaths > 0) {
      block_deaths += deaths;
      const double s =
          block_base * (static_cast<double>(block_n - block_deaths) / static_cast<double>(block_n));
      curve.event_times.push_back(t);
      curve.survival.push_back(s);
      curve.n_events += deaths;
    }
    at_risk -= deaths + censored;
    if (censored > 0) {
      block_base = curve.survival.empty() ? 1.0 : curve.survival.back();
      block_n = at_risk;
      block_deaths = 0;
    }
  }
  if (curve.n_events == 0) throw Error(ErrorCode::kNoEvents, "sample has no observed deaths");
  return curve;
}

inline void sort_by_time(std::vector<TimeEvent> &samples) {
  std::stable_sort(samples.begin(), samples.end(),
                   [](const TimeEvent &a, const TimeEvent &b) { return a.time < b.time; });
}

}  // namespace detail

inline SurvivalCurve km_fit(std::span<const TimeEvent> samples) {
  std::vector<TimeEvent> sorted(samples.begin(), samples.end());
  detail::sort_by_time(sorted);
  return detail::km_fit_sorted(sorted);
}

inline SurvivalCurve km_fit(const DatasetView &view) {
  const auto samples = view.outcomes();
  return km_fit(samples);
}

inline double km_eval(const SurvivalCurve &curve, double t) {
  const auto it = std::upper_bound(curve.event_times.begin(), curve.event_times.end(), t);
  if (it == curve.event_times.begin()) return 1.0;
  return curve.survival[static_cast<std::size_t>(it - curve.event_times.begin()) - 1];
}

}  // namespace survclust

#endif  // SURVCLUST_KAPLAN_MEIER_HPP_
