/*
 * Copyright 2026 The CeFlow Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Command-line front end: synthetic data, training stages, counterfactual
// generation, evaluation and benchmarking. All randomness derives from
// --seed.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ceflow/bundle.h"
#include "ceflow/cegen.h"
#include "ceflow/classifier.h"
#include "ceflow/data.h"
#include "ceflow/metrics.h"
#include "ceflow/trainer.h"
#include "json.hpp"

namespace fs = std::filesystem;

namespace ceflow {
namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

// Sub-seeds of --seed, one per pipeline stage.
enum Stage : std::uint64_t {
  kSplitStage = 100,
  kClassifierStage = 101,
  kFlowStage = 102,
  kMeansStage = 103,
};

struct Splits {
  Dataset train;
  Dataset test;
};

void RequireSchemaMatch(const ModelBundle& bundle, const std::string& schema_path) {
  if (schema_path.empty()) return;
  if (!(FeatureSchema::Load(schema_path) == bundle.schema)) {
    throw IngestionError("schema " + schema_path +
                         " does not match the schema stored in the model bundle");
  }
}

// Re-creates the standardized train/test partition recorded in the bundle.
Splits LoadSplits(const ModelBundle& bundle, const std::string& data_path) {
  Dataset raw = LoadCsv(data_path, bundle.schema, &bundle.levels);
  auto [train, test] = Split(raw, bundle.test_fraction, bundle.split_seed);
  return {ApplyStandardization(train, bundle.stats),
          ApplyStandardization(test, bundle.stats)};
}

template <typename T>
const T& Require(const std::optional<T>& value, const char* what,
                 const char* stage) {
  if (!value) {
    throw ContractError(std::string("model bundle has no ") + what + "; run `" +
                        stage + "` first");
  }
  return *value;
}

std::string LevelName(const LevelMap& levels, int m, int code) {
  if (m < static_cast<int>(levels.categorical.size()) &&
      code < static_cast<int>(levels.categorical[m].size())) {
    return levels.categorical[m][code];
  }
  return std::to_string(code);
}

std::string ClassName(const LevelMap& levels, int y) {
  return y < static_cast<int>(levels.target.size()) ? levels.target[y]
                                                    : std::to_string(y);
}

// --------------------------------------------------------------------------

struct SynthArgs {
  std::string out_dir = ".";
  std::size_t n = 2000;
  SynthSpec spec;
};

int RunSynth(const SynthArgs& args, std::uint64_t seed) {
  fs::create_directories(args.out_dir);
  const Dataset ds = SynthGenerate(seed, args.n, args.spec);
  std::ostringstream csv;
  WriteCsv(ds, csv);
  WriteFileAtomic(fs::path(args.out_dir) / "data.csv", csv.str());
  WriteFileAtomic(fs::path(args.out_dir) / "schema.json",
                  ds.schema.ToJson().dump(2) + "\n");
  std::cout << "wrote " << ds.size() << " rows to "
            << (fs::path(args.out_dir) / "data.csv").string() << "\n";
  return 0;
}

struct TrainClfArgs {
  std::string data;
  std::string schema;
  std::string model;
  double test_fraction = 0.2;
  ClassifierConfig config;
};

int RunTrainClassifier(TrainClfArgs args, std::uint64_t seed) {
  const FeatureSchema schema = FeatureSchema::Load(args.schema);
  Dataset raw = LoadCsv(args.data, schema);
  ModelBundle bundle;
  bundle.schema = schema;
  bundle.levels = raw.levels;
  bundle.test_fraction = args.test_fraction;
  bundle.split_seed = DeriveSeed(seed, kSplitStage);
  auto [train_raw, test_raw] = Split(raw, args.test_fraction, bundle.split_seed);
  bundle.stats = Standardizer::Fit(train_raw.continuous, schema);
  bundle.mad = MedianAbsoluteDeviation(train_raw.continuous);
  const Dataset train = ApplyStandardization(train_raw, bundle.stats);
  const Dataset test = ApplyStandardization(test_raw, bundle.stats);

  args.config.seed = DeriveSeed(seed, kClassifierStage);
  auto [clf, report] = TrainClassifier(train, args.config);
  bundle.classifier_heldout_accuracy = Accuracy(clf, test);
  bundle.classifier = std::move(clf);
  bundle.classifier_config = args.config;
  SaveBundle(bundle, args.model);
  std::cout << "rows: " << raw.size() << " (dropped " << raw.dropped_rows
            << "), train " << train.size() << ", test " << test.size() << "\n"
            << "classifier accuracy: train " << report.train_accuracy
            << ", test " << bundle.classifier_heldout_accuracy << "\n";
  return 0;
}

struct TrainFlowArgs {
  std::string data;
  std::string schema;
  std::string model;
  std::string report;
  TrainConfig config;
};

int RunTrainFlow(TrainFlowArgs args, std::uint64_t seed) {
  ModelBundle bundle = LoadBundle(args.model);
  RequireSchemaMatch(bundle, args.schema);
  const Classifier& clf = Require(bundle.classifier, "classifier", "train-clf");
  Splits splits = LoadSplits(bundle, args.data);
  args.config.seed = DeriveSeed(seed, kFlowStage);
  FlowArtifacts trained = Train(Relabel(clf, splits.train), args.config);
  bundle.flow = std::move(trained.flow);
  bundle.dequantizer = std::move(trained.dequantizer);
  bundle.gmm = std::move(trained.gmm);
  bundle.train_config = args.config;
  bundle.class_means.reset();
  SaveBundle(bundle, args.model);

  const std::string report_path =
      args.report.empty() ? args.model + ".train_report.json" : args.report;
  nlohmann::json report = trained.report.ToJson();
  report["config"] = args.config.ToJson();
  WriteFileAtomic(report_path, report.dump(2) + "\n");
  const auto& nll = trained.report.epoch_nll;
  std::cout << "epochs: " << nll.size();
  if (!nll.empty()) {
    std::cout << ", NLL first " << nll.front() << " last " << nll.back();
  }
  std::cout << ", held-out NLL " << trained.report.heldout_nll << "\n";
  return 0;
}

struct MeansArgs {
  std::string data;
  std::string schema;
  std::string model;
};

int RunMeans(const MeansArgs& args, std::uint64_t seed) {
  ModelBundle bundle = LoadBundle(args.model);
  RequireSchemaMatch(bundle, args.schema);
  const Classifier& clf = Require(bundle.classifier, "classifier", "train-clf");
  const FlowModel& flow = Require(bundle.flow, "flow", "train-flow");
  const Dequantizer& deq = Require(bundle.dequantizer, "dequantizer", "train-flow");
  Splits splits = LoadSplits(bundle, args.data);
  bundle.class_means_seed = DeriveSeed(seed, kMeansStage);
  bundle.class_means =
      ComputeClassMeans(flow, deq, clf, splits.train, bundle.class_means_seed);
  SaveBundle(bundle, args.model);
  for (std::size_t k = 0; k < bundle.class_means->counts.size(); ++k) {
    std::cout << "class " << ClassName(bundle.levels, static_cast<int>(k)) << ": "
              << bundle.class_means->counts[k] << " rows\n";
  }
  return 0;
}

struct GenerateArgs {
  std::string data;
  std::string schema;
  std::string model;
  std::string out;
  std::string alpha = "search";
  double alpha_max = 2.0;
  std::string target = "next";
  bool signed_delta = true;
  std::string rows = "test";
  std::size_t limit = 0;
  bool timing = false;
};

const Dataset& SelectRows(const Splits& splits, const std::string& which,
                          Dataset& storage) {
  if (which == "test") return splits.test;
  if (which == "train") return splits.train;
  if (which == "all") {
    storage = splits.train.Concat(splits.test);
    return storage;
  }
  throw ContractError("--rows must be test, train or all");
}

int RunGenerate(const GenerateArgs& args, std::uint64_t seed) {
  const ModelBundle bundle = LoadBundle(args.model);
  RequireSchemaMatch(bundle, args.schema);
  const Classifier& clf = Require(bundle.classifier, "classifier", "train-clf");
  const FlowModel& flow = Require(bundle.flow, "flow", "train-flow");
  const Dequantizer& deq = Require(bundle.dequantizer, "dequantizer", "train-flow");
  const ClassMeans& means = Require(bundle.class_means, "class means", "means");
  AlphaMode alpha = AlphaMode::Parse(args.alpha);
  alpha.grid = AlphaGrid(args.alpha_max);

  std::optional<int> fixed_target;
  if (args.target != "next") {
    std::size_t used = 0;
    int t = -1;
    try {
      t = std::stoi(args.target, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != args.target.size() || t < 0 || t >= bundle.schema.num_classes) {
      throw ContractError("--target must be 'next' or a class index in [0, " +
                          std::to_string(bundle.schema.num_classes) + ")");
    }
    fixed_target = t;
  }

  Splits splits = LoadSplits(bundle, args.data);
  Dataset storage;
  const Dataset& rows = SelectRows(splits, args.rows, storage);
  const std::size_t n =
      args.limit > 0 ? std::min(args.limit, rows.size()) : rows.size();

  CounterfactualGenerator generator(flow, deq, means, clf, bundle.stats,
                                    {args.signed_delta});
  const FeatureSchema& schema = bundle.schema;
  std::ostringstream out;
  out << "row";
  for (const auto& c : schema.categorical) out << "," << CsvEscape(c.name);
  for (const auto& name : schema.continuous) out << "," << CsvEscape(name);
  for (const auto& c : schema.categorical) out << "," << CsvEscape("cf_" + c.name);
  for (const auto& name : schema.continuous) out << "," << CsvEscape("cf_" + name);
  out << ",y_org,y_cf,alpha,success,latent_shift";
  if (args.timing) out << ",wall_time_micros";
  out << "\n";

  std::size_t successes = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const Vector x = rows.continuous.row(r).transpose();
    const IntVector codes = rows.categorical.row(r).transpose();
    const int y_org = clf.Predict(x, codes);
    const int y_cf = fixed_target ? *fixed_target : (y_org + 1) % schema.num_classes;
    const std::uint64_t row_seed = DeriveSeed(seed, i);
    const CounterfactualResult cf =
        alpha.search ? generator.AlphaSearch(x, codes, y_cf, alpha.grid, row_seed)
                     : generator.Generate(x, codes, y_cf, alpha.fixed, row_seed);
    successes += cf.success;
    const Vector raw = bundle.stats.InvertRow(x);
    out << i;
    for (int m = 0; m < schema.num_categorical(); ++m) {
      out << "," << CsvEscape(LevelName(bundle.levels, m, codes(m)));
    }
    for (int j = 0; j < schema.num_continuous(); ++j) out << "," << FormatDouble(raw(j));
    for (int m = 0; m < schema.num_categorical(); ++m) {
      out << "," << CsvEscape(LevelName(bundle.levels, m, cf.categorical(m)));
    }
    for (int j = 0; j < schema.num_continuous(); ++j) {
      out << "," << FormatDouble(cf.continuous_raw(j));
    }
    out << "," << CsvEscape(ClassName(bundle.levels, cf.y_org)) << ","
        << CsvEscape(ClassName(bundle.levels, cf.y_cf)) << ","
        << FormatDouble(cf.alpha) << "," << (cf.success ? 1 : 0) << ","
        << FormatDouble(cf.latent_shift);
    if (args.timing) out << "," << static_cast<long long>(cf.seconds * 1e6);
    out << "\n";
  }
  WriteFileAtomic(args.out, out.str());
  std::cout << "generated " << n << " counterfactuals, success "
            << (n ? 100.0 * static_cast<double>(successes) / static_cast<double>(n) : 0.0)
            << "%\n";
  return 0;
}

struct EvaluateArgs {
  std::string data;
  std::string schema;
  std::string model;
  std::string out;
  std::string alpha = "search";
  double alpha_max = 2.0;
  bool signed_delta = true;
  std::size_t instances = 200;
};

nlohmann::json ReportJson(const MetricsReport& r) {
  nlohmann::json j = {{"method", r.method},     {"success", r.success},
                      {"l1_mean", r.l1_mean},   {"l1_var", r.l1_var},
                      {"log_density", r.log_density},
                      {"prox_con", r.prox_con}, {"time_mean_s", r.time_mean_s},
                      {"time_std_s", r.time_std_s}, {"n", r.n}};
  j["prox_cat"] = r.prox_cat ? nlohmann::json(*r.prox_cat) : nlohmann::json(nullptr);
  return j;
}

int RunEvaluate(const EvaluateArgs& args, std::uint64_t seed) {
  const ModelBundle bundle = LoadBundle(args.model);
  RequireSchemaMatch(bundle, args.schema);
  const Classifier& clf = Require(bundle.classifier, "classifier", "train-clf");
  const FlowModel& flow = Require(bundle.flow, "flow", "train-flow");
  const Dequantizer& deq = Require(bundle.dequantizer, "dequantizer", "train-flow");
  const LatentGMM& gmm = Require(bundle.gmm, "latent mixture", "train-flow");
  const ClassMeans& means = Require(bundle.class_means, "class means", "means");
  Splits splits = LoadSplits(bundle, args.data);

  BenchmarkConfig config;
  config.alpha = AlphaMode::Parse(args.alpha);
  config.alpha.grid = AlphaGrid(args.alpha_max);
  config.signed_delta = args.signed_delta;
  config.max_instances = args.instances;
  Artifacts artifacts{flow, deq, gmm, means, clf, bundle.stats, bundle.mad};
  const auto items = RunMethod("ceflow", splits.test, artifacts, config, seed);
  const MetricsReport report = Summarize("ceflow", items, flow, gmm, deq, bundle.mad,
                                         config.k_mc_eval, DeriveSeed(seed, 0xD15EA5E));

  const std::vector<int> predicted = clf.Predict(splits.test);
  std::size_t agree = 0;
  for (std::size_t i = 0; i < splits.test.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    agree += LatentPredict(flow, deq, means.means, splits.test.continuous.row(r).transpose(),
                           splits.test.categorical.row(r).transpose(),
                           DeriveSeed(seed, i)) == predicted[i];
  }
  const Dataset relabeled = Relabel(clf, splits.test);
  nlohmann::json out = ReportJson(report);
  out["alpha"] = config.alpha.ToString();
  out["classifier_test_accuracy"] = Accuracy(clf, splits.test);
  out["latent_agreement"] =
      splits.test.size() ? static_cast<double>(agree) / static_cast<double>(splits.test.size())
                         : 0.0;
  out["test_nll"] = MeanNll(flow, gmm, deq, relabeled, 8, DeriveSeed(seed, 1));
  out["seed"] = seed;
  const std::string text = out.dump(2) + "\n";
  if (!args.out.empty()) WriteFileAtomic(args.out, text);
  std::cout << text;
  return 0;
}

struct BenchArgs {
  std::string data;
  std::string schema;
  std::string model;
  std::string out_dir = ".";
  std::vector<std::string> methods = {"ceflow", "growing-spheres", "random"};
  std::string alpha = "search";
  double alpha_max = 2.0;
  bool signed_delta = true;
  int repetitions = 10;
  std::size_t instances = 200;
  GrowingSpheresConfig gs;
};

int RunBench(const BenchArgs& args, std::uint64_t seed) {
  const ModelBundle bundle = LoadBundle(args.model);
  RequireSchemaMatch(bundle, args.schema);
  const Classifier& clf = Require(bundle.classifier, "classifier", "train-clf");
  const FlowModel& flow = Require(bundle.flow, "flow", "train-flow");
  const Dequantizer& deq = Require(bundle.dequantizer, "dequantizer", "train-flow");
  const LatentGMM& gmm = Require(bundle.gmm, "latent mixture", "train-flow");
  const ClassMeans& means = Require(bundle.class_means, "class means", "means");
  Splits splits = LoadSplits(bundle, args.data);

  BenchmarkConfig config;
  config.methods = args.methods;
  config.alpha = AlphaMode::Parse(args.alpha);
  config.alpha.grid = AlphaGrid(args.alpha_max);
  config.signed_delta = args.signed_delta;
  config.repetitions = args.repetitions;
  config.max_instances = args.instances;
  config.growing_spheres = args.gs;
  Artifacts artifacts{flow, deq, gmm, means, clf, bundle.stats, bundle.mad};

  const auto reports = Benchmark(splits.test, artifacts, config, seed);
  const auto sweep = AlphaSweep(splits.test, artifacts, config.alpha.grid, config, seed);
  fs::create_directories(args.out_dir);
  WriteFileAtomic(fs::path(args.out_dir) / "report.csv", ReportCsv(reports));
  WriteFileAtomic(fs::path(args.out_dir) / "report.md", ReportMarkdown(reports));
  WriteFileAtomic(fs::path(args.out_dir) / "alpha_sweep.csv", AlphaSweepCsv(sweep));
  std::cout << ReportMarkdown(reports);
  return 0;
}

}  // namespace
}  // namespace ceflow

int main(int argc, char** argv) {
  using namespace ceflow;
  CLI::App app{"Counterfactual explanations with normalizing flows"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Optional key=value configuration file");
  std::uint64_t seed = 0;
  app.add_option("--seed", seed, "Seed for every random choice")->capture_default_str();

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic CSV and schema");
  synth_cmd->add_option("--out-dir", synth.out_dir)->capture_default_str();
  synth_cmd->add_option("--n", synth.n)->capture_default_str();
  synth_cmd->add_option("--continuous", synth.spec.continuous)->capture_default_str();
  synth_cmd->add_option("--categorical", synth.spec.categorical)->capture_default_str();
  synth_cmd->add_option("--cardinality", synth.spec.cardinality)->capture_default_str();
  synth_cmd->add_option("--classes", synth.spec.classes)->capture_default_str();
  synth_cmd->add_option("--separation", synth.spec.separation)->capture_default_str();

  TrainClfArgs clf;
  auto* clf_cmd = app.add_subcommand("train-clf", "Train the black-box classifier");
  clf_cmd->add_option("--data", clf.data)->required()->check(CLI::ExistingFile);
  clf_cmd->add_option("--schema", clf.schema)->required()->check(CLI::ExistingFile);
  clf_cmd->add_option("--model", clf.model, "Bundle to create")->required();
  clf_cmd->add_option("--test-fraction", clf.test_fraction)->capture_default_str();
  clf_cmd->add_option("--epochs", clf.config.epochs)->capture_default_str();
  clf_cmd->add_option("--batch-size", clf.config.batch_size)->capture_default_str();
  clf_cmd->add_option("--lr", clf.config.learning_rate)->capture_default_str();
  clf_cmd->add_option("--hidden", clf.config.hidden_width)->capture_default_str();

  TrainFlowArgs flow;
  auto* flow_cmd = app.add_subcommand("train-flow", "Train the flow and dequantizer");
  flow_cmd->add_option("--data", flow.data)->required()->check(CLI::ExistingFile);
  flow_cmd->add_option("--schema", flow.schema)->check(CLI::ExistingFile);
  flow_cmd->add_option("--model", flow.model)->required()->check(CLI::ExistingFile);
  flow_cmd->add_option("--report", flow.report, "Training report JSON path");
  flow_cmd->add_option("--epochs", flow.config.epochs)->capture_default_str();
  flow_cmd->add_option("--batch-size", flow.config.batch_size)->capture_default_str();
  flow_cmd->add_option("--lr", flow.config.learning_rate)->capture_default_str();
  flow_cmd->add_option("--layers", flow.config.layers)->capture_default_str();
  flow_cmd->add_option("--hidden", flow.config.hidden_width, "0 = max(64, 8D)")
      ->capture_default_str();
  flow_cmd->add_option("--clamp", flow.config.clamp)->capture_default_str();
  flow_cmd->add_option("--clip-norm", flow.config.clip_norm)->capture_default_str();
  flow_cmd->add_option("--k-mc", flow.config.k_mc)->capture_default_str();
  flow_cmd->add_option("--mean-scale", flow.config.mean_scale)->capture_default_str();
  flow_cmd->add_flag("--empirical-prior", flow.config.empirical_prior);

  MeansArgs means;
  auto* means_cmd = app.add_subcommand("means", "Compute per-class latent means");
  means_cmd->add_option("--data", means.data)->required()->check(CLI::ExistingFile);
  means_cmd->add_option("--schema", means.schema)->check(CLI::ExistingFile);
  means_cmd->add_option("--model", means.model)->required()->check(CLI::ExistingFile);

  GenerateArgs gen;
  auto* gen_cmd = app.add_subcommand("generate", "Generate counterfactuals");
  gen_cmd->add_option("--data", gen.data)->required()->check(CLI::ExistingFile);
  gen_cmd->add_option("--schema", gen.schema)->check(CLI::ExistingFile);
  gen_cmd->add_option("--model", gen.model)->required()->check(CLI::ExistingFile);
  gen_cmd->add_option("--out", gen.out)->required();
  gen_cmd->add_option("--alpha", gen.alpha, "search | fixed:<value>")->capture_default_str();
  gen_cmd->add_option("--alpha-max", gen.alpha_max)->capture_default_str();
  gen_cmd->add_option("--target", gen.target, "next | class index")->capture_default_str();
  gen_cmd->add_option("--signed-delta", gen.signed_delta)->capture_default_str();
  gen_cmd->add_option("--rows", gen.rows, "test | train | all")->capture_default_str();
  gen_cmd->add_option("--limit", gen.limit, "0 = all rows")->capture_default_str();
  gen_cmd->add_flag("--timing", gen.timing, "Append a wall_time_micros column");

  EvaluateArgs eval;
  auto* eval_cmd = app.add_subcommand("evaluate", "Metrics for CeFlow on the test split");
  eval_cmd->add_option("--data", eval.data)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--schema", eval.schema)->check(CLI::ExistingFile);
  eval_cmd->add_option("--model", eval.model)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--out", eval.out);
  eval_cmd->add_option("--alpha", eval.alpha)->capture_default_str();
  eval_cmd->add_option("--alpha-max", eval.alpha_max)->capture_default_str();
  eval_cmd->add_option("--signed-delta", eval.signed_delta)->capture_default_str();
  eval_cmd->add_option("--instances", eval.instances)->capture_default_str();

  BenchArgs bench;
  auto* bench_cmd = app.add_subcommand("bench", "Compare CeFlow with the baselines");
  bench_cmd->add_option("--data", bench.data)->required()->check(CLI::ExistingFile);
  bench_cmd->add_option("--schema", bench.schema)->check(CLI::ExistingFile);
  bench_cmd->add_option("--model", bench.model)->required()->check(CLI::ExistingFile);
  bench_cmd->add_option("--out-dir", bench.out_dir)->capture_default_str();
  bench_cmd->add_option("--methods", bench.methods)->capture_default_str();
  bench_cmd->add_option("--alpha", bench.alpha)->capture_default_str();
  bench_cmd->add_option("--alpha-max", bench.alpha_max)->capture_default_str();
  bench_cmd->add_option("--signed-delta", bench.signed_delta)->capture_default_str();
  bench_cmd->add_option("--repetitions", bench.repetitions)->capture_default_str();
  bench_cmd->add_option("--instances", bench.instances)->capture_default_str();
  bench_cmd->add_option("--gs-radius", bench.gs.initial_radius)->capture_default_str();
  bench_cmd->add_option("--gs-step", bench.gs.step)->capture_default_str();
  bench_cmd->add_option("--gs-samples", bench.gs.samples)->capture_default_str();
  bench_cmd->add_option("--gs-max-radius", bench.gs.max_radius)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return kExitUsage;
  }

  try {
    if (*synth_cmd) return RunSynth(synth, seed);
    if (*clf_cmd) return RunTrainClassifier(clf, seed);
    if (*flow_cmd) return RunTrainFlow(flow, seed);
    if (*means_cmd) return RunMeans(means, seed);
    if (*gen_cmd) return RunGenerate(gen, seed);
    if (*eval_cmd) return RunEvaluate(eval, seed);
    if (*bench_cmd) return RunBench(bench, seed);
  } catch (const ContractError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
