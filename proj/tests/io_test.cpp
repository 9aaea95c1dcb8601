#include <gtest/gtest.h>

#include <filesystem>
#include <random>
#include <sstream>

#include "survclust/io.hpp"
#include "survclust/leaf_clustering.hpp"

namespace survclust {
namespace {

FeatureSchema mixed_schema() {
  return FeatureSchema({{"age", FeatureKind::kNumeric, {}},
                        {"sex", FeatureKind::kCategorical, {"M", "F"}},
                        {"city", FeatureKind::kCategorical, {"a,b", "c\"d", "e"}}});
}

SurvivalDataset random_mixed(std::size_t n, std::uint64_t seed) {
  SurvivalDataset d;
  d.schema = mixed_schema();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double age = 18.0 + 50.0 * u(rng);
    const double sex = u(rng) < 0.5 ? 0.0 : 1.0;
    const double city = std::floor(3.0 * u(rng));
    const double rate = (age < 40.0 ? 1.0 : 0.2) * (sex == 0.0 ? 1.0 : 0.3);
    const double t = std::exponential_distribution<double>(rate)(rng);
    d.subjects.push_back({"id" + std::to_string(i), {age, sex, city}, t, u(rng) < 0.85});
  }
  return d;
}

SurvivalDataset roundtrip(const SurvivalDataset &d) {
  std::ostringstream out;
  write_subjects_csv(out, d);
  std::istringstream in(out.str());
  return read_subjects_csv(in, d.schema);
}

TEST(Csv, SplitHandlesQuotes) {
  EXPECT_EQ(split_csv_line("a,\"b,c\",\"d\"\"e\","),
            (std::vector<std::string>{"a", "b,c", "d\"e", ""}));
  EXPECT_EQ(split_csv_line("x,y\r"), (std::vector<std::string>{"x", "y"}));
}

TEST(Csv, NumbersRoundTripExactly) {
  for (const double v : {0.1, 1.0 / 3.0, 1e-300, 123456789.123456789, -2.5}) {
    EXPECT_EQ(parse_number(format_number(v), "v"), v);
  }
  EXPECT_THROW(parse_number("1.5x", "v"), Error);
  EXPECT_THROW(parse_number("", "v"), Error);
}

TEST(Schema, JsonRoundTrip) {
  const auto s = mixed_schema();
  EXPECT_EQ(schema_from_json(schema_to_json(s)), s);
  EXPECT_THROW(schema_from_json(json::parse(R"({"features":[{"name":"x","kind":"weird"}]})")),
               Error);
}

TEST(SubjectCsv, RoundTrip) {
  const auto d = random_mixed(200, 1);
  const auto back = roundtrip(d);
  ASSERT_EQ(back.size(), d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    EXPECT_EQ(back.subjects[i].id, d.subjects[i].id);
    EXPECT_EQ(back.subjects[i].time, d.subjects[i].time);
    EXPECT_EQ(back.subjects[i].event, d.subjects[i].event);
    EXPECT_EQ(back.subjects[i].values, d.subjects[i].values);
  }
}

TEST(SubjectCsv, ColumnOrderIsFree) {
  std::istringstream in("sex,event,city,id,age,time\nF,1,e,x,30.5,2\n");
  const auto d = read_subjects_csv(in, mixed_schema());
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d.subjects[0].values, (std::vector<double>{30.5, 1.0, 2.0}));
  EXPECT_EQ(d.subjects[0].time, 2.0);
}

void expect_error_mentioning(const std::string &csv, const std::string &needle, ErrorCode code) {
  std::istringstream in(csv);
  try {
    read_subjects_csv(in, mixed_schema());
    FAIL() << "no error for: " << csv;
  } catch (const Error &e) {
    EXPECT_EQ(e.code(), code);
    EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
  }
}

TEST(SubjectCsv, Errors) {
  expect_error_mentioning("id,time,event,age,sex\n", "city", ErrorCode::kSchemaMismatch);
  expect_error_mentioning("id,time,event,age,sex,city,zip\n", "zip", ErrorCode::kSchemaMismatch);
  expect_error_mentioning("id,time,event,age,sex,city\nx,1,1,30,X,e\n", "sex",
                          ErrorCode::kSchemaMismatch);
  expect_error_mentioning("id,time,event,age,sex,city\nx,1,2,30,M,e\n", "event", ErrorCode::kParse);
  expect_error_mentioning("id,time,event,age,sex,city\nx,1,1,old,M,e\n", "age", ErrorCode::kParse);
  expect_error_mentioning("id,time,event,age,sex,city\nx,1,1,30\n", "line 2", ErrorCode::kParse);
  expect_error_mentioning("", "header", ErrorCode::kParse);
}

TEST(SubjectCsv, UnknownLevelsCanBeAllowed) {
  std::istringstream in("id,age,sex,city\nx,30,X,e\n");
  SubjectCsvOptions options;
  options.require_outcome = false;
  options.allow_unknown_levels = true;
  const auto schema = mixed_schema();
  SubjectCsvReader reader(in, schema, options);
  EXPECT_FALSE(reader.has_outcome());
  Subject s;
  ASSERT_TRUE(reader.next(s));
  EXPECT_EQ(s.values[1], -1.0);
  EXPECT_FALSE(reader.next(s));
}

TEST(Profiles, ReadAndActivityLog) {
  const FeatureSchema schema({{"sex", FeatureKind::kCategorical, {"M", "F"}}});
  std::istringstream profiles_in("user_id,join_time,sex\nb,2,F\na,0,M\n");
  const auto profiles = read_profiles_csv(profiles_in, schema);
  EXPECT_EQ(profiles.values.at("b"), (std::vector<double>{1.0}));
  std::istringstream activity_in(
      "user_id,timestamp,direction,partner_id\n"
      "a,5,sent,b\n"
      "a,3,received,b\n"
      "b,30,sent,a\n");
  const auto log = read_activity_csv(activity_in, profiles, 20.0);
  EXPECT_EQ(log.study_end, 20.0);
  ASSERT_EQ(log.users.size(), 2u);
  EXPECT_EQ(log.users[0].user_id, "a");
  ASSERT_EQ(log.users[0].activity.size(), 2u);
  EXPECT_EQ(log.users[0].activity[0].timestamp, 3.0);
  EXPECT_TRUE(log.users[1].activity.empty());  // after the study end

  std::istringstream unknown("user_id,timestamp,direction,partner_id\nzz,1,sent,a\n");
  EXPECT_THROW(read_activity_csv(unknown, profiles, std::nullopt), Error);
  std::istringstream bad_dir("user_id,timestamp,direction,partner_id\na,1,up,b\n");
  EXPECT_THROW(read_activity_csv(bad_dir, profiles, std::nullopt), Error);
}

TEST(TreeJson, RoundTripPreservesRouting) {
  const auto d = random_mixed(3000, 2);
  const auto tree = grow_tree(d, TreeConfig{});
  ASSERT_GT(tree.leaf_count(), 2u);
  const auto text = tree_to_json(tree).dump();
  const auto back = tree_from_json(json::parse(text), d.schema);
  ASSERT_EQ(back.nodes.size(), tree.nodes.size());
  EXPECT_EQ(back.leaves, tree.leaves);
  EXPECT_EQ(back.config, tree.config);
  for (const auto &s : d.subjects) EXPECT_EQ(assign_leaf(back, s), assign_leaf(tree, s));
  for (std::size_t l = 0; l < tree.leaf_count(); ++l) {
    EXPECT_EQ(back.leaf(l).curve.survival, tree.leaf(l).curve.survival);
    EXPECT_EQ(back.leaf(l).n_events, tree.leaf(l).n_events);
  }
  EXPECT_EQ(tree_to_json(back).dump(), text);
}

TEST(ModelJson, RoundTrip) {
  const auto d = random_mixed(3000, 3);
  const auto tree = grow_tree(d, TreeConfig{});
  ClusteringConfig config;
  config.k = 2;
  const auto model = cluster_leaves(tree, d, config).model;
  const auto text = model_to_json(model).dump();
  const auto back = model_from_json(json::parse(text));
  EXPECT_EQ(back.k, model.k);
  EXPECT_EQ(back.leaf_to_cluster, model.leaf_to_cluster);
  EXPECT_EQ(back.cluster_sizes, model.cluster_sizes);
  EXPECT_EQ(back.tree.schema, d.schema);
  for (const auto &s : d.subjects) EXPECT_EQ(cluster_assign(back, s), cluster_assign(model, s));
  EXPECT_EQ(model_to_json(back).dump(), text);
}

TEST(ModelJson, RejectsInconsistentDocuments) {
  const auto d = random_mixed(2000, 4);
  const auto model = cluster_leaves(grow_tree(d, TreeConfig{}), d).model;
  auto j = model_to_json(model);
  j["format"] = "something-else";
  EXPECT_THROW(model_from_json(j), Error);
  j = model_to_json(model);
  j["leaf_to_cluster"].push_back(0);
  EXPECT_THROW(model_from_json(j), Error);
  j = model_to_json(model);
  j["tree"]["nodes"][0]["left"] = 9999;
  EXPECT_THROW(model_from_json(j), Error);
}

TEST(Files, AtomicWriteAndMissingFile) {
  const auto dir = std::filesystem::temp_directory_path() / "survclust_io_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "out.txt";
  write_file_atomic(path, "first");
  write_file_atomic(path, "second");
  EXPECT_EQ(read_file(path), "second");
  EXPECT_FALSE(std::filesystem::exists(dir / "out.txt.tmp"));
  try {
    read_file(dir / "missing.txt");
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.code(), ErrorCode::kIo);
  }
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace survclust
