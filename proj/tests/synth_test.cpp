#include <gtest/gtest.h>

#include <cmath>

#include "survclust/kaplan_meier.hpp"
#include "survclust/synth.hpp"
#include "survclust/two_sample_tests.hpp"

namespace survclust {
namespace {

SynthConfig single_group(double rate, std::size_t n, std::uint64_t seed) {
  SynthConfig c;
  c.groups = {{1.0, rate}};
  c.n_subjects = n;
  c.seed = seed;
  return c;
}

TEST(Generate, MeanLifetimeMatchesRate) {
  const double rate = 0.5;
  const auto r = generate(single_group(rate, 20000, 1));
  double sum = 0.0;
  for (const auto &s : r.dataset.subjects) {
    ASSERT_TRUE(s.event);
    sum += s.time;
  }
  const double n = static_cast<double>(r.dataset.size());
  const double se = (1.0 / rate) / std::sqrt(n);
  EXPECT_NEAR(sum / n, 1.0 / rate, 3.0 * se);
}

TEST(Generate, PlantedGroupsHaveDistinctCurves) {
  SynthConfig c;
  c.groups = {{0.5, 1.0}, {0.5, 0.2}};
  c.n_subjects = 1000;
  c.seed = 2;
  const auto r = generate(c);
  std::vector<std::vector<TimeEvent>> by_group(2);
  for (std::size_t i = 0; i < r.dataset.size(); ++i) {
    by_group[r.truth[i]].push_back(r.dataset.subjects[i].outcome());
  }
  const auto p = kuiper_test(km_fit(by_group[0]), km_fit(by_group[1])).p_value;
  EXPECT_LT(p, 1e-6);
}

TEST(Generate, SameSeedSameData) {
  PlantedOptions opt;
  opt.rates = {1.0, 0.3};
  opt.n_subjects = 500;
  opt.censoring = 0.3;
  opt.seed = 9;
  const auto a = generate(planted_config(opt));
  const auto b = generate(planted_config(opt));
  ASSERT_EQ(a.dataset.size(), b.dataset.size());
  for (std::size_t i = 0; i < a.dataset.size(); ++i) {
    const auto &x = a.dataset.subjects[i];
    const auto &y = b.dataset.subjects[i];
    EXPECT_EQ(x.id, y.id);
    EXPECT_EQ(x.time, y.time);
    EXPECT_EQ(x.event, y.event);
    EXPECT_EQ(x.values, y.values);
  }
  EXPECT_EQ(a.truth, b.truth);
  opt.seed = 10;
  EXPECT_NE(generate(planted_config(opt)).dataset.subjects[0].time, a.dataset.subjects[0].time);
}

TEST(Generate, SubjectsDoNotDependOnPopulationSize) {
  const auto small = generate(single_group(1.0, 10, 4));
  const auto large = generate(single_group(1.0, 100, 4));
  for (std::size_t i = 0; i < 10; ++i) {
    EXPECT_EQ(small.dataset.subjects[i].time, large.dataset.subjects[i].time);
  }
}

TEST(Generate, CensoringGrowsAsStudyShortens) {
  auto c = single_group(0.5, 4000, 5);
  c.entry_window = 2.0;
  double previous = -1.0;
  for (const double d : {20.0, 8.0, 5.0, 3.0, 2.5}) {
    c.study_duration = d;
    const auto r = generate(c);
    double censored = 0.0;
    for (const auto &s : r.dataset.subjects) censored += s.event ? 0.0 : 1.0;
    const double fraction = censored / static_cast<double>(r.dataset.size());
    EXPECT_GE(fraction, previous);
    previous = fraction;
  }
}

TEST(Generate, CensoringFractionHitsTarget) {
  PlantedOptions opt;
  opt.rates = {1.0, 0.4, 0.1};
  opt.n_subjects = 20000;
  opt.censoring = 0.3;
  opt.seed = 6;
  const auto config = planted_config(opt);
  EXPECT_NEAR(expected_censoring(config), 0.3, 1e-9);
  const auto r = generate(config);
  double censored = 0.0;
  for (const auto &s : r.dataset.subjects) censored += s.event ? 0.0 : 1.0;
  const double n = static_cast<double>(r.dataset.size());
  EXPECT_NEAR(censored / n, 0.3, 3.0 * std::sqrt(0.3 * 0.7 / n));
}

TEST(Generate, GroupProportionsMatchWeights) {
  SynthConfig c;
  c.groups = {{0.2, 1.0}, {0.5, 1.0}, {0.3, 1.0}};
  c.n_subjects = 10000;
  c.seed = 7;
  const auto r = generate(c);
  std::vector<double> counts(3, 0.0);
  for (const auto g : r.truth) counts[g] += 1.0;
  const double n = 10000.0;
  for (std::size_t g = 0; g < 3; ++g) {
    const double w = c.groups[g].weight;
    EXPECT_NEAR(counts[g] / n, w, 3.0 * std::sqrt(w * (1.0 - w) / n));
  }
}

TEST(PlantedConfig, SignatureLayout) {
  PlantedOptions opt;
  opt.rates = {1.0, 0.5, 0.1};
  opt.signature_features = 3;
  opt.noise_features = 2;
  const auto schema = synth_schema(planted_config(opt));
  ASSERT_EQ(schema.size(), 5u);
  EXPECT_TRUE(schema[0].is_categorical());
  EXPECT_EQ(schema[0].categories, (std::vector<std::string>{"L0", "L1", "L2"}));
  EXPECT_FALSE(schema[1].is_categorical());
  EXPECT_TRUE(schema[2].is_categorical());
  EXPECT_EQ(schema[3].name, "noise0");
}

TEST(PlantedConfig, CategoricalSignatureFollowsPurity) {
  PlantedOptions opt;
  opt.rates = {1.0, 0.2};
  opt.n_subjects = 10000;
  opt.signature_features = 1;
  opt.noise_features = 0;
  opt.purity = 0.8;
  opt.seed = 8;
  const auto r = generate(planted_config(opt));
  double agree = 0.0;
  for (std::size_t i = 0; i < r.dataset.size(); ++i) {
    agree += r.dataset.subjects[i].values[0] == static_cast<double>(r.truth[i]) ? 1.0 : 0.0;
  }
  EXPECT_NEAR(agree / 10000.0, 0.8, 3.0 * std::sqrt(0.8 * 0.2 / 10000.0));
}

TEST(SynthConfig, Validation) {
  SynthConfig c;
  EXPECT_THROW(c.validate(), Error);
  c.groups = {{0.6, 1.0}, {0.6, 1.0}};
  EXPECT_THROW(c.validate(), Error);
  c.groups = {{1.0, 0.0}};
  EXPECT_THROW(c.validate(), Error);
  c.groups = {{1.0, 1.0}};
  c.n_subjects = 0;
  EXPECT_THROW(c.validate(), Error);
  c.n_subjects = 5;
  c.study_duration = 1.0;
  EXPECT_THROW(c.validate(), Error);
  PlantedOptions opt;
  opt.rates = {1.0};
  opt.censoring = 1.5;
  EXPECT_THROW(planted_config(opt), Error);
}

}  // namespace
}  // namespace survclust
