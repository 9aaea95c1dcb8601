#ifndef SURVCLUST_SYNTH_HPP_
#define SURVCLUST_SYNTH_HPP_

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "survclust/core.hpp"
#include "survclust/error.hpp"

namespace survclust {

struct SynthGroup {
  double weight = 1.0;
  double hazard_rate = 1.0;
};

/// Normal(means[g], sd) for a subject of group g.
struct NumericSignature {
  std::vector<double> means;
  double sd = 1.0;
};

/// probabilities[g][level] for a subject of group g.
struct CategoricalSignature {
  std::vector<std::string> levels;
  std::vector<std::vector<double>> probabilities;
};

struct FeatureSignature {
  std::string name;
  std::variant<NumericSignature, CategoricalSignature> distribution;
};

struct SynthConfig {
  std::vector<SynthGroup> groups;
  std::vector<FeatureSignature> signatures;
  std::size_t n_subjects = 1000;
  double entry_window = 5.0;
  double study_duration = 1e9;
  std::size_t noise_features = 0;
  std::uint64_t seed = 0;

  void validate() const {
    if (groups.empty()) throw Error(ErrorCode::kInvalidConfig, "at least one group required");
    double total = 0.0;
    for (const auto &g : groups) {
      if (!(g.weight >= 0.0)) throw Error(ErrorCode::kInvalidConfig, "weights must be >= 0");
      if (!(g.hazard_rate > 0.0)) throw Error(ErrorCode::kInvalidConfig, "rates must be > 0");
      total += g.weight;
    }
    if (std::abs(total - 1.0) > 1e-9) {
      throw Error(ErrorCode::kInvalidConfig, "group weights must sum to 1");
    }
    if (n_subjects < 1) throw Error(ErrorCode::kInvalidConfig, "n_subjects must be >= 1");
    if (!(entry_window >= 0.0) || !(study_duration > entry_window)) {
      throw Error(ErrorCode::kInvalidConfig, "need 0 <= entry_window < study_duration");
    }
    for (const auto &sig : signatures) {
      if (const auto *num = std::get_if<NumericSignature>(&sig.distribution)) {
        if (num->means.size() != groups.size() || !(num->sd > 0.0)) {
          throw Error(ErrorCode::kInvalidConfig, "bad numeric signature '" + sig.name + "'");
        }
      } else {
        const auto &cat = std::get<CategoricalSignature>(sig.distribution);
        if (cat.levels.empty() || cat.probabilities.size() != groups.size()) {
          throw Error(ErrorCode::kInvalidConfig, "bad categorical signature '" + sig.name + "'");
        }
        for (const auto &row : cat.probabilities) {
          double s = 0.0;
          for (const double p : row) s += p;
          if (row.size() != cat.levels.size() || std::abs(s - 1.0) > 1e-9) {
            throw Error(ErrorCode::kInvalidConfig,
                        "level probabilities of '" + sig.name + "' must sum to 1");
          }
        }
      }
    }
  }
};

struct SynthResult {
  SurvivalDataset dataset;
  std::vector<std::size_t> truth;  // planted group per subject
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace detail

inline FeatureSchema synth_schema(const SynthConfig &config) {
  std::vector<Feature> features;
  for (const auto &sig : config.signatures) {
    if (const auto *cat = std::get_if<CategoricalSignature>(&sig.distribution)) {
      features.push_back({sig.name, FeatureKind::kCategorical, cat->levels});
    } else {
      features.push_back({sig.name, FeatureKind::kNumeric, {}});
    }
  }
  for (std::size_t j = 0; j < config.noise_features; ++j) {
    features.push_back({"noise" + std::to_string(j), FeatureKind::kNumeric, {}});
  }
  return FeatureSchema(std::move(features));
}

/// Each subject draws from its own generator seeded by (seed, index), so the
/// output does not depend on generation order.
inline SynthResult generate(const SynthConfig &config) {
  config.validate();
  SynthResult out;
  out.dataset.schema = synth_schema(config);
  out.dataset.subjects.resize(config.n_subjects);
  out.truth.resize(config.n_subjects);

  const int width = std::max<int>(6, static_cast<int>(std::to_string(config.n_subjects).size()));
  for (std::size_t i = 0; i < config.n_subjects; ++i) {
    std::mt19937_64 rng(detail::splitmix64(config.seed ^ detail::splitmix64(i)));
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    std::size_t group = config.groups.size() - 1;
    double u = unit(rng);
    for (std::size_t g = 0; g < config.groups.size(); ++g) {
      if (u < config.groups[g].weight) {
        group = g;
        break;
      }
      u -= config.groups[g].weight;
    }
    const double lifetime =
        std::exponential_distribution<double>(config.groups[group].hazard_rate)(rng);
    const double entry = config.entry_window * unit(rng);
    const double censor_at = config.study_duration - entry;

    Subject &s = out.dataset.subjects[i];
    char id[32];
    std::snprintf(id, sizeof(id), "s%0*zu", width, i);
    s.id = id;
    s.event = lifetime <= censor_at;
    s.time = s.event ? lifetime : censor_at;
    for (const auto &sig : config.signatures) {
      if (const auto *num = std::get_if<NumericSignature>(&sig.distribution)) {
        s.values.push_back(std::normal_distribution<double>(num->means[group], num->sd)(rng));
      } else {
        const auto &probs = std::get<CategoricalSignature>(sig.distribution).probabilities[group];
        std::discrete_distribution<std::size_t> pick(probs.begin(), probs.end());
        s.values.push_back(static_cast<double>(pick(rng)));
      }
    }
    std::normal_distribution<double> noise(0.0, 1.0);
    for (std::size_t j = 0; j < config.noise_features; ++j) s.values.push_back(noise(rng));
    out.truth[i] = group;
  }
  return out;
}

/// Expected fraction of censored subjects: entry ~ U[0, W], censoring at
/// D - entry, so P(censored | rate r) = exp(-r D) (exp(r W) - 1) / (r W).
inline double expected_censoring(const SynthConfig &config) {
  double total = 0.0;
  const double w = config.entry_window;
  const double d = config.study_duration;
  for (const auto &g : config.groups) {
    const double r = g.hazard_rate;
    const double p = w > 0.0 ? std::exp(-r * d) * std::expm1(r * w) / (r * w) : std::exp(-r * d);
    total += g.weight * p;
  }
  return total;
}

/// Study duration giving the requested expected censoring fraction.
inline double study_duration_for_censoring(SynthConfig config, double fraction) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw Error(ErrorCode::kInvalidConfig, "censoring fraction must lie in (0, 1)");
  }
  double lo = config.entry_window * (1.0 + 1e-12) + 1e-12;
  config.study_duration = lo;
  if (const double most = expected_censoring(config); most < fraction) {
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "censoring fraction %.3g unreachable; at most %.3g with entry window %g", fraction,
                  most, config.entry_window);
    throw Error(ErrorCode::kInvalidConfig, buf);
  }
  double hi = lo + 1.0;
  config.study_duration = hi;
  while (expected_censoring(config) > fraction) {
    hi = lo + 2.0 * (hi - lo);
    config.study_duration = hi;
  }
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    config.study_duration = mid;
    (expected_censoring(config) > fraction ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

struct PlantedOptions {
  std::vector<double> rates;    // one per group
  std::vector<double> weights;  // empty: equal weights
  std::size_t n_subjects = 1000;
  std::size_t signature_features = 5;
  std::size_t noise_features = 20;
  double purity = 0.9;  // P(signature level == own group) for categorical signatures
  double separation = 2.0;  // spacing of group means, in units of sd, for numeric signatures
  double entry_window = 5.0;
  std::optional<double> censoring;  // target expected fraction; none = no censoring
  std::uint64_t seed = 0;
};

/// Planted-group configuration: even-numbered signature features are
/// categorical (one level per group), odd-numbered ones numeric with means
/// `separation` apart.
inline SynthConfig planted_config(const PlantedOptions &opt) {
  const std::size_t g = opt.rates.size();
  if (g == 0) throw Error(ErrorCode::kInvalidConfig, "at least one rate required");
  if (!opt.weights.empty() && opt.weights.size() != g) {
    throw Error(ErrorCode::kInvalidConfig, "weights and rates differ in length");
  }
  if (!(opt.purity > 0.0 && opt.purity <= 1.0)) {
    throw Error(ErrorCode::kInvalidConfig, "purity must lie in (0, 1]");
  }
  SynthConfig config;
  for (std::size_t i = 0; i < g; ++i) {
    config.groups.push_back(
        {opt.weights.empty() ? 1.0 / static_cast<double>(g) : opt.weights[i], opt.rates[i]});
  }
  for (std::size_t j = 0; j < opt.signature_features; ++j) {
    FeatureSignature sig;
    sig.name = "sig" + std::to_string(j);
    if (j % 2 == 0) {
      CategoricalSignature cat;
      for (std::size_t l = 0; l < g; ++l) cat.levels.push_back("L" + std::to_string(l));
      for (std::size_t grp = 0; grp < g; ++grp) {
        std::vector<double> row(g, g > 1 ? (1.0 - opt.purity) / static_cast<double>(g - 1) : 0.0);
        row[grp] = g > 1 ? opt.purity : 1.0;
        cat.probabilities.push_back(std::move(row));
      }
      sig.distribution = std::move(cat);
    } else {
      NumericSignature num;
      for (std::size_t grp = 0; grp < g; ++grp) {
        num.means.push_back(opt.separation * static_cast<double>(grp));
      }
      num.sd = 1.0;
      sig.distribution = std::move(num);
    }
    config.signatures.push_back(std::move(sig));
  }
  config.n_subjects = opt.n_subjects;
  config.noise_features = opt.noise_features;
  config.entry_window = opt.entry_window;
  config.seed = opt.seed;
  config.validate();
  if (opt.censoring) config.study_duration = study_duration_for_censoring(config, *opt.censoring);
  return config;
}

}  // namespace survclust

#endif  // SURVCLUST_SYNTH_HPP_
