#include <gtest/gtest.h>
#include <sys/wait.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "survclust/io.hpp"
#include "survclust/leaf_clustering.hpp"

namespace survclust {
namespace {

namespace fs = std::filesystem;

struct Run {
  int exit_code = -1;
  std::string output;
};

Run run(const std::string &args, const std::string &env = "") {
  const std::string cmd = env + " " + SURVCLUST_CLI + " " + args + " 2>&1";
  Run r;
  FILE *pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  while (const auto n = fread(buf, 1, sizeof(buf), pipe)) r.output.append(buf, n);
  const int status = pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::map<std::string, std::string> read_pairs(const fs::path &path) {
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  std::map<std::string, std::string> out;
  while (std::getline(in, line)) {
    const auto fields = split_csv_line(line);
    out[fields.at(0)] = fields.at(1);
  }
  return out;
}

// Fraction of subjects whose cluster matches their planted group under the
// best one-to-one relabelling.
double best_agreement(const std::map<std::string, std::string> &truth,
                      const std::map<std::string, std::string> &clusters, std::size_t k) {
  std::vector<std::vector<double>> table(k, std::vector<double>(k, 0.0));
  for (const auto &[id, g] : truth) {
    table[std::stoul(g)][std::stoul(clusters.at(id))] += 1.0;
  }
  std::vector<std::size_t> perm(k);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  double best = 0.0;
  do {
    double hits = 0.0;
    for (std::size_t g = 0; g < k; ++g) hits += table[g][perm[g]];
    best = std::max(best, hits);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best / static_cast<double>(truth.size());
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::path(::testing::TempDir()) /
           ("survclust_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string &name) const { return (dir_ / name).string(); }

  std::string data_flags(const std::string &sim) const {
    return "--data " + path(sim + "/subjects.csv") + " --schema " + path(sim + "/schema.json");
  }

  fs::path dir_;
};

TEST_F(Cli, SimulateWritesThreeDeterministicFiles) {
  ASSERT_EQ(run("simulate --groups 3 --n 5000 --seed 7 --out " + path("a")).exit_code, 0);
  ASSERT_EQ(run("simulate --groups 3 --n 5000 --seed 7 --out " + path("b")).exit_code, 0);
  for (const auto *f : {"subjects.csv", "schema.json", "labels.csv"}) {
    ASSERT_TRUE(fs::exists(path(std::string("a/") + f))) << f;
    EXPECT_EQ(read_file(path(std::string("a/") + f)), read_file(path(std::string("b/") + f))) << f;
  }
  const auto schema = read_schema(path("a/schema.json"));
  EXPECT_EQ(read_subjects_csv(fs::path(path("a/subjects.csv")), schema).size(), 5000u);
}

TEST_F(Cli, SimulateRejectsBadWeights) {
  const auto r = run("simulate --groups 2 --weights 0.5,0.6 --out " + path("w"));
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.output.find("--weights"), std::string::npos) << r.output;
  EXPECT_EQ(run("simulate --groups 2 --n 0 --out " + path("n")).exit_code, 2);
  EXPECT_EQ(run("simulate --bogus").exit_code, 2);
}

TEST_F(Cli, FitRecoversTwoPlantedGroups) {
  ASSERT_EQ(run("simulate --groups 2 --rates 1,0.2 --n 4000 --seed 3 --out " + path("s")).exit_code,
            0);
  const auto fit = run("fit " + data_flags("s") + " --k 2 --out " + path("m.json"));
  ASSERT_EQ(fit.exit_code, 0) << fit.output;
  EXPECT_NE(fit.output.find("leaves"), std::string::npos);
  const auto pred = run("predict --model " + path("m.json") + " --data " + path("s/subjects.csv") +
                        " --out " + path("p.csv"));
  ASSERT_EQ(pred.exit_code, 0) << pred.output;
  EXPECT_GE(best_agreement(read_pairs(path("s/labels.csv")), read_pairs(path("p.csv")), 2), 0.9);
}

TEST_F(Cli, FitIsByteIdenticalAcrossRunsAndThreadCounts) {
  ASSERT_EQ(run("simulate --groups 3 --n 3000 --seed 5 --out " + path("s")).exit_code, 0);
  const auto flags = "fit " + data_flags("s") + " --k 3 --out ";
  ASSERT_EQ(run(flags + path("a.json"), "SURVCLUST_THREADS=1").exit_code, 0);
  ASSERT_EQ(run(flags + path("b.json"), "SURVCLUST_THREADS=1").exit_code, 0);
  ASSERT_EQ(run(flags + path("c.json"), "SURVCLUST_THREADS=4").exit_code, 0);
  ASSERT_EQ(run(flags + path("d.json"), "SURVCLUST_THREADS=0").exit_code, 0);
  const auto a = read_file(path("a.json"));
  EXPECT_EQ(a, read_file(path("b.json")));
  EXPECT_EQ(a, read_file(path("c.json")));
  EXPECT_EQ(a, read_file(path("d.json")));
}

TEST_F(Cli, ClosedBonferroniGateGivesSingleLeaf) {
  ASSERT_EQ(
      run("simulate --groups 1 --rates 1 --n 2000 --seed 8 --censoring 0.15 --out " + path("s"))
          .exit_code,
      0);
  const auto one = run("fit " + data_flags("s") + " --alpha 1e-12 --out " + path("m.json"));
  ASSERT_EQ(one.exit_code, 0) << one.output;
  const auto model = model_from_json(parse_json(read_file(path("m.json")), "model"));
  EXPECT_EQ(model.tree.leaf_count(), 1u);
  EXPECT_EQ(model.k, 1u);
  const auto two = run("fit " + data_flags("s") + " --alpha 1e-12 --k 2 --out " + path("m2.json"));
  EXPECT_EQ(two.exit_code, 3) << two.output;
  EXPECT_FALSE(fs::exists(path("m2.json")));
}

TEST_F(Cli, EvaluateSingleClusterSkipsLogRank) {
  ASSERT_EQ(
      run("simulate --groups 1 --rates 1 --n 1000 --seed 9 --censoring 0 --out " + path("s")).exit_code,
      0);
  ASSERT_EQ(run("fit " + data_flags("s") + " --alpha 1e-12 --out " + path("m.json")).exit_code, 0);
  const auto r = run("evaluate --model " + path("m.json") + " " + data_flags("s") +
                     " --t0 0.3 --t1 1 --seed 2 --out " + path("r.json"));
  ASSERT_EQ(r.exit_code, 0) << r.output;
  const auto report = parse_json(read_file(path("r.json")), "report");
  EXPECT_EQ(report["logrank"]["skipped"], "k<2");
  EXPECT_TRUE(report["classification"]["1"].contains("accuracy"));
}

TEST_F(Cli, EvaluateReportsHazardRatioNearPlantedRatio) {
  ASSERT_EQ(run("simulate --groups 2 --rates 0.3,0.1 --n 10000 --seed 11 --out " + path("s"))
                .exit_code,
            0);
  ASSERT_EQ(run("fit " + data_flags("s") + " --k 2 --out " + path("m.json")).exit_code, 0);
  const auto r = run("evaluate --model " + path("m.json") + " " + data_flags("s") +
                     " --t0 1 --t1 5 --seed 2 --out " + path("r.json"));
  ASSERT_EQ(r.exit_code, 0) << r.output;
  EXPECT_NE(r.output.find("Proposed (k = 2)"), std::string::npos);
  const auto report = parse_json(read_file(path("r.json")), "report");
  const double hr = report["hazard_ratio"]["hazard_ratio"];
  EXPECT_GE(hr, 2.6);
  EXPECT_LE(hr, 3.4);
  EXPECT_GT(double(report["logrank"]["chi2"]), 0.0);
}

TEST_F(Cli, PredictReproducesTrainingPartition) {
  ASSERT_EQ(run("simulate --groups 3 --n 3000 --seed 12 --out " + path("s")).exit_code, 0);
  ASSERT_EQ(run("fit " + data_flags("s") + " --k 3 --out " + path("m.json")).exit_code, 0);
  ASSERT_EQ(run("predict --model " + path("m.json") + " --data " + path("s/subjects.csv") +
                " --out " + path("p.csv"))
                .exit_code,
            0);
  const auto model = model_from_json(parse_json(read_file(path("m.json")), "model"));
  const auto data = read_subjects_csv(fs::path(path("s/subjects.csv")), model.tree.schema);
  const auto predicted = read_pairs(path("p.csv"));
  ASSERT_EQ(predicted.size(), data.size());
  std::vector<std::size_t> sizes(model.k, 0);
  for (const auto &s : data.subjects) {
    const auto c = cluster_assign(model, s);
    EXPECT_EQ(predicted.at(s.id), std::to_string(c));
    ++sizes[c];
  }
  EXPECT_EQ(sizes, model.cluster_sizes);
}

TEST_F(Cli, PredictHeaderOnlyInput) {
  ASSERT_EQ(run("simulate --groups 2 --n 2000 --seed 13 --out " + path("s")).exit_code, 0);
  ASSERT_EQ(run("fit " + data_flags("s") + " --k 2 --out " + path("m.json")).exit_code, 0);
  const auto full = read_file(path("s/subjects.csv"));
  write_file_atomic(path("empty.csv"), full.substr(0, full.find('\n') + 1));
  const auto r = run("predict --model " + path("m.json") + " --data " + path("empty.csv") +
                     " --out " + path("p.csv"));
  EXPECT_EQ(r.exit_code, 0) << r.output;
  EXPECT_EQ(read_file(path("p.csv")), "id,cluster\n");
}

TEST_F(Cli, PredictValidationAndIoErrors) {
  ASSERT_EQ(run("simulate --groups 2 --n 2000 --seed 14 --out " + path("s")).exit_code, 0);
  ASSERT_EQ(run("fit " + data_flags("s") + " --k 2 --out " + path("m.json")).exit_code, 0);
  const auto model = " --model " + path("m.json") + " --out " + path("p.csv");

  // Replace the first categorical value of the first row with an unknown level.
  auto csv = read_file(path("s/subjects.csv"));
  const auto row = csv.find('\n') + 1;
  const auto level = csv.find(",L", row);
  csv.replace(level + 1, 2, "ZZ");
  write_file_atomic(path("unknown.csv"), csv);
  const auto strict = run("predict --data " + path("unknown.csv") + model);
  EXPECT_EQ(strict.exit_code, 2);
  EXPECT_NE(strict.output.find("sig0"), std::string::npos) << strict.output;
  EXPECT_EQ(run("predict --unknown-as-majority-child --data " + path("unknown.csv") + model)
                .exit_code,
            0);

  auto renamed = read_file(path("s/subjects.csv"));
  renamed.replace(renamed.find("sig1"), 4, "zzz1");
  write_file_atomic(path("renamed.csv"), renamed);
  const auto mismatch = run("predict --data " + path("renamed.csv") + model);
  EXPECT_EQ(mismatch.exit_code, 2);
  EXPECT_NE(mismatch.output.find("zzz1"), std::string::npos) << mismatch.output;

  EXPECT_EQ(run("predict --data " + path("missing.csv") + model).exit_code, 1);
  EXPECT_EQ(run("predict --data " + path("s/subjects.csv") + " --model " + path("none.json") +
                " --out " + path("p.csv"))
                .exit_code,
            1);
}

TEST_F(Cli, FitFromActivityLogs) {
  std::ofstream profiles(path("profiles.csv"));
  std::ofstream activity(path("activity.csv"));
  profiles << "user_id,join_time,sex\n";
  activity << "user_id,timestamp,direction,partner_id\n";
  for (int i = 0; i < 400; ++i) {
    const std::string id = "u" + std::to_string(i);
    const bool f = i % 2 == 1;
    profiles << id << ',' << (i % 5) << ',' << (f ? "F" : "M") << '\n';
    // Women stay active for longer.
    const int last = (i % 5) + 1 + (f ? 8 + i % 7 : i % 4);
    for (int t = i % 5; t <= last; ++t) activity << id << ',' << t + 0.5 << ",sent,u0\n";
  }
  profiles.close();
  activity.close();
  write_file_atomic(path("schema.json"),
                    R"({"features":[{"name":"sex","kind":"categorical","categories":["M","F"]}]})");
  const auto flags = "--activity " + path("activity.csv") + " --profiles " + path("profiles.csv") +
                     " --schema " + path("schema.json") + " --cutoff 6 --window 2 --study-end 40";
  const auto fit = run("fit " + flags + " --min-leaf-subjects 20 --out " + path("m.json"));
  ASSERT_EQ(fit.exit_code, 0) << fit.output;
  const auto model = model_from_json(parse_json(read_file(path("m.json")), "model"));
  EXPECT_EQ(model.tree.schema.size(), 5u);
  EXPECT_GE(model.tree.leaf_count(), 2u);
  const auto eval = run("evaluate --model " + path("m.json") + " " + flags +
                        " --t0 2 --t1 8 --seed 1");
  EXPECT_EQ(eval.exit_code, 0) << eval.output;
  EXPECT_EQ(run("fit " + flags + " --cutoff -1 --out " + path("x.json")).exit_code, 2);
}

}  // namespace
}  // namespace survclust
