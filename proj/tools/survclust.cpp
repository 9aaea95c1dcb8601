// survclust: survival-supervised clustering from the command line.
//
//   survclust simulate --groups 3 --n 5000 --seed 7 --out dir/
//   survclust fit      --data subjects.csv --schema schema.json --k 3 --out model.json
//   survclust evaluate --model model.json --data subjects.csv --schema schema.json --t0 1 --t1 3
//   survclust predict  --model model.json --data new.csv --out labels.csv
//
// Exit codes: 0 success, 1 I/O, 2 validation, 3 infeasible request.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "survclust/survclust.hpp"

namespace fs = std::filesystem;
using namespace survclust;

namespace {

constexpr int kExitIo = 1;
constexpr int kExitValidation = 2;
constexpr int kExitInfeasible = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataFlags {
  std::string data;
  std::string schema;
  std::string activity;
  std::string profiles;
  std::optional<double> cutoff;
  std::optional<double> window;
  std::optional<double> study_end;

  void add_to(CLI::App *cmd) {
    cmd->add_option("--data", data, "Subject CSV (id,time,event,features...)");
    cmd->add_option("--schema", schema, "Feature schema JSON")->required();
    cmd->add_option("--activity", activity, "Activity CSV (user_id,timestamp,direction,partner_id)");
    cmd->add_option("--profiles", profiles, "Profile CSV (user_id,join_time,features...)");
    cmd->add_option("--cutoff", cutoff, "Inactivity period after which a user counts as dead");
    cmd->add_option("--window", window, "Early-activity feature window");
    cmd->add_option("--study-end", study_end, "Study end time (default: latest timestamp)");
  }

  SurvivalDataset load() const {
    const auto profile_schema = read_schema(schema);
    if (!data.empty()) {
      if (!activity.empty() || !profiles.empty()) {
        throw UsageError("--data cannot be combined with --activity/--profiles");
      }
      return read_subjects_csv(fs::path(data), profile_schema);
    }
    if (activity.empty() || profiles.empty()) {
      throw UsageError("either --data or both --activity and --profiles are required");
    }
    if (!cutoff) throw UsageError("--cutoff is required with --activity");
    if (!window) throw UsageError("--window is required with --activity");
    std::ifstream pin(profiles);
    if (!pin) throw Error(ErrorCode::kIo, "cannot open '" + profiles + "'");
    const auto table = read_profiles_csv(pin, profile_schema);
    std::ifstream ain(activity);
    if (!ain) throw Error(ErrorCode::kIo, "cannot open '" + activity + "'");
    const auto log = read_activity_csv(ain, table, study_end);
    const auto [schema_all, values] =
        merge_activity_features(profile_schema, table.values, early_window_features(log, *window));
    auto result = activity_to_survival(log, *cutoff, schema_all, values);
    if (!result.discarded.empty()) {
      std::cerr << "discarded " << result.discarded.size() << " users without usable lifetimes\n";
    }
    return std::move(result.dataset);
  }
};

std::vector<double> default_rates(std::size_t groups) {
  // Log-spaced from 1.0 down to 0.1.
  std::vector<double> rates;
  for (std::size_t g = 0; g < groups; ++g) {
    const double frac = groups > 1 ? static_cast<double>(g) / static_cast<double>(groups - 1) : 0.0;
    rates.push_back(std::pow(10.0, -frac));
  }
  return rates;
}

int run_simulate(std::size_t groups, const PlantedOptions &base, const std::vector<double> &rates,
                 const std::vector<double> &weights, double censoring, const std::string &out_dir) {
  if (groups < 1) throw UsageError("--groups must be >= 1");
  PlantedOptions opt = base;
  opt.rates = rates.empty() ? default_rates(groups) : rates;
  if (opt.rates.size() != groups) throw UsageError("--rates must list one rate per group");
  if (!weights.empty()) {
    if (weights.size() != groups) throw UsageError("--weights must list one weight per group");
    double total = 0.0;
    for (const double w : weights) total += w;
    if (std::abs(total - 1.0) > 1e-9) throw UsageError("--weights must sum to 1");
  }
  opt.weights = weights;
  if (censoring > 0.0) opt.censoring = censoring;
  const auto result = generate(planted_config(opt));

  const fs::path dir(out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create '" + dir.string() + "'");
  std::ostringstream subjects;
  write_subjects_csv(subjects, result.dataset);
  write_file_atomic(dir / "subjects.csv", subjects.str());
  write_file_atomic(dir / "schema.json", schema_to_json(result.dataset.schema).dump(2) + "\n");
  std::ostringstream labels;
  labels << "id,group\n";
  for (std::size_t i = 0; i < result.truth.size(); ++i) {
    labels << result.dataset.subjects[i].id << ',' << result.truth[i] << '\n';
  }
  write_file_atomic(dir / "labels.csv", labels.str());
  std::size_t events = 0;
  for (const auto &s : result.dataset.subjects) events += s.event ? 1 : 0;
  std::cout << "wrote " << result.dataset.size() << " subjects (" << events << " events) to "
            << dir.string() << "\n";
  return 0;
}

int run_fit(const DataFlags &flags, const FitConfig &config, const std::string &out) {
  const auto data = flags.load();
  const auto fit = fit_model(data, config, Parallelism::from_env());
  write_file_atomic(out, model_to_json(fit.clusters.model).dump(1) + "\n");

  const auto &tree = fit.tree;
  std::cout << "subjects: " << data.size() << "\n";
  std::cout << "leaves: " << tree.leaf_count() << "  internal nodes: " << tree.internal_count()
            << "  depth: " << tree.depth() << "\n";
  std::cout << "mcl clusters: " << fit.clusters.mcl_partition.size()
            << "  final k: " << fit.clusters.model.k << "\n";
  std::cout << "cluster sizes:";
  for (const auto n : fit.clusters.model.cluster_sizes) std::cout << ' ' << n;
  std::cout << "\n";
  if (tree.internal_count() > 0) {
    double lo = 1.0;
    double hi = 0.0;
    for (const auto &n : tree.nodes) {
      if (n.is_leaf()) continue;
      lo = std::min(lo, n.split->p_value);
      hi = std::max(hi, n.split->p_value);
    }
    std::printf("split p-values: min %.3g  max %.3g\n", lo, hi);
  }
  return 0;
}

int run_evaluate(const DataFlags &flags, const std::string &model_path,
                 const EvaluationConfig &config, const std::string &out) {
  const auto model = model_from_json(parse_json(read_file(model_path), model_path));
  const auto data = flags.load();
  if (!(data.schema == model.tree.schema)) {
    throw Error(ErrorCode::kSchemaMismatch, "data schema differs from the model's schema");
  }
  const auto report = evaluate_model(model, data, config);
  const auto j = report_to_json(report);
  if (!out.empty()) write_file_atomic(out, j.dump(2) + "\n");

  if (report.logrank) {
    std::printf("log-rank chi2 = %.4f (df %d, p = %.4g)\n", report.logrank->statistic,
                report.logrank->degrees_of_freedom, report.logrank->p_value);
  } else {
    std::printf("log-rank skipped: %s\n", report.logrank_note.c_str());
  }
  if (report.hazard_ratio) {
    const auto &hr = *report.hazard_ratio;
    std::printf("hazard ratio = %.4f (95%% CI %.4f - %.4f, baseline cluster %zu)%s\n",
                hr.hazard_ratio, hr.ci_low, hr.ci_high, report.hazard_ratio_reference,
                hr.diverged ? " [diverged]" : "");
  }
  std::printf("%-24s %9s %9s %9s %9s %9s\n", "", "Precision", "Recall", "F-measure", "Accuracy",
              "FPR");
  if (report.classification) {
    const auto &c = *report.classification;
    const std::string row = "Proposed (k = " + std::to_string(report.k) + ")";
    std::printf("%-24s %9.3f %9.3f %9.3f %9.3f %9.3f\n", row.c_str(), c.precision, c.recall,
                c.f_measure, c.accuracy, c.fpr);
  } else {
    std::printf("classification skipped: %s\n", report.classification_note.c_str());
  }
  return 0;
}

int run_predict(const std::string &model_path, const std::string &data_path,
                const std::string &out, bool unknown_as_majority) {
  const auto model = model_from_json(parse_json(read_file(model_path), model_path));
  std::ifstream in(data_path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open '" + data_path + "'");
  SubjectCsvReader reader(in, model.tree.schema, {false, unknown_as_majority});
  const fs::path target(out);
  auto tmp = target;
  tmp += ".tmp";
  {
    std::ofstream sink(tmp, std::ios::binary | std::ios::trunc);
    if (!sink) throw Error(ErrorCode::kIo, "cannot write '" + tmp.string() + "'");
    sink << "id,cluster\n";
    Subject s;
    const RoutingOptions routing{unknown_as_majority};
    while (reader.next(s)) sink << csv_field(s.id) << ',' << cluster_assign(model, s, routing) << '\n';
    if (!sink) throw Error(ErrorCode::kIo, "write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot rename into '" + target.string() + "'");
  return 0;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"survclust: survival-supervised clustering"};
  app.require_subcommand(1);

  // simulate
  auto *simulate = app.add_subcommand("simulate", "Generate planted survival groups");
  std::size_t sim_groups = 2;
  PlantedOptions planted;
  std::vector<double> sim_rates;
  std::vector<double> sim_weights;
  double sim_censoring = 0.3;
  std::string sim_out;
  simulate->add_option("--groups", sim_groups, "Number of planted groups");
  simulate->add_option("--n", planted.n_subjects, "Number of subjects");
  simulate->add_option("--seed", planted.seed, "Random seed");
  simulate->add_option("--rates", sim_rates, "Hazard rate per group")->delimiter(',');
  simulate->add_option("--weights", sim_weights, "Group weights (sum to 1)")->delimiter(',');
  simulate->add_option("--signature", planted.signature_features, "Signature feature count");
  simulate->add_option("--noise", planted.noise_features, "Noise feature count");
  simulate->add_option("--purity", planted.purity, "Categorical signature purity");
  simulate->add_option("--separation", planted.separation, "Numeric signature mean spacing");
  simulate->add_option("--entry-window", planted.entry_window, "Entry time window");
  simulate->add_option("--censoring", sim_censoring, "Expected censoring fraction (0 = none)");
  simulate->add_option("--out", sim_out, "Output directory")->required();

  // fit
  auto *fit = app.add_subcommand("fit", "Grow the survival tree and cluster its leaves");
  DataFlags fit_data;
  fit_data.add_to(fit);
  FitConfig fit_config;
  std::optional<std::size_t> fit_k;
  std::string fit_out;
  fit->add_option("--alpha", fit_config.tree.alpha, "Significance level")->capture_default_str();
  fit->add_option("--k", fit_k, "Number of clusters (default: MCL's own count)");
  fit->add_option("--inflation", fit_config.clustering.mcl.inflation, "MCL inflation")
      ->capture_default_str();
  fit->add_option("--min-leaf-subjects", fit_config.tree.min_leaf_subjects)->capture_default_str();
  fit->add_option("--min-leaf-events", fit_config.tree.min_leaf_events)->capture_default_str();
  fit->add_option("--max-depth", fit_config.tree.max_depth)->capture_default_str();
  fit->add_option("--max-thresholds", fit_config.tree.max_numeric_thresholds)->capture_default_str();
  fit->add_option("--out,--model", fit_out, "Model JSON output path")->required();

  // evaluate
  auto *evaluate = app.add_subcommand("evaluate", "Log-rank, hazard ratio and classification task");
  DataFlags eval_data;
  eval_data.add_to(evaluate);
  std::string eval_model;
  std::string eval_out;
  EvaluationConfig eval_config;
  evaluate->add_option("--model", eval_model, "Model JSON")->required();
  evaluate->add_option("--t0", eval_config.t0, "Feature horizon")->required();
  evaluate->add_option("--t1", eval_config.t1, "Outcome horizon")->required();
  evaluate->add_option("--split", eval_config.train_fraction, "Training fraction")->capture_default_str();
  evaluate->add_option("--seed", eval_config.seed, "Split seed");
  evaluate->add_option("--out", eval_out, "Report JSON output path");

  // predict
  auto *predict = app.add_subcommand("predict", "Assign clusters to new subjects");
  std::string pred_model;
  std::string pred_data;
  std::string pred_out;
  bool pred_majority = false;
  predict->add_option("--model", pred_model, "Model JSON")->required();
  predict->add_option("--data", pred_data, "Subject CSV")->required();
  predict->add_option("--out", pred_out, "Labels CSV output path")->required();
  predict->add_flag("--unknown-as-majority-child", pred_majority,
                    "Route unknown categorical levels to the larger training child");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    app.exit(e);
    return kExitValidation;
  }

  try {
    if (*simulate) {
      return run_simulate(sim_groups, planted, sim_rates, sim_weights, sim_censoring, sim_out);
    }
    if (*fit) {
      fit_config.clustering.k = fit_k;
      return run_fit(fit_data, fit_config, fit_out);
    }
    if (*evaluate) return run_evaluate(eval_data, eval_model, eval_config, eval_out);
    if (*predict) return run_predict(pred_model, pred_data, pred_out, pred_majority);
  } catch (const UsageError &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const Error &e) {
    std::cerr << "error: " << e.what() << "\n";
    if (e.code() == ErrorCode::kIo) return kExitIo;
    if (e.code() == ErrorCode::kUnreachableK) return kExitInfeasible;
    return kExitValidation;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  }
  return 0;
}
