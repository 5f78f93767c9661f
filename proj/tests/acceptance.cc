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

// Acceptance run on the synthetic benchmark. Prints one PASS/FAIL line per
// criterion and exits nonzero if any criterion fails.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "ceflow/bundle.h"
#include "ceflow/cegen.h"
#include "ceflow/classifier.h"
#include "ceflow/data.h"
#include "ceflow/metrics.h"
#include "ceflow/trainer.h"
#include "fixtures.h"
#include "gradcheck.h"
#include "oracles.h"

namespace ceflow {
namespace {

namespace fs = std::filesystem;

constexpr std::uint64_t kSeed = 1;
constexpr std::size_t kRows = 2000;
constexpr std::size_t kInstances = 200;
constexpr int kFlowEpochs = 50;

// Stage seeds match the command-line tool.
constexpr std::uint64_t kSplitStage = 100;
constexpr std::uint64_t kClassifierStage = 101;
constexpr std::uint64_t kFlowStage = 102;
constexpr std::uint64_t kMeansStage = 103;

using Clock = std::chrono::steady_clock;

double SecondsSince(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string Fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

class Runner {
 public:
  void Run(int id, const std::string& name, const std::function<Outcome()>& check) {
    const auto start = Clock::now();
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures_ += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << name << "): "
              << o.detail << " [" << Fmt(SecondsSince(start)) << " s]" << std::endl;
  }
  int failures() const { return failures_; }

 private:
  int failures_ = 0;
};

struct Model {
  Dataset raw;
  Dataset train;
  Dataset test;
  Classifier classifier;
  double classifier_test_accuracy = 0.0;
  FlowArtifacts flow;
  double train_seconds = 0.0;
  ClassMeans means;
  ModelBundle bundle;
};

Model BuildModel() {
  Model m;
  m.raw = SynthGenerate(kSeed, kRows, SynthSpec{});
  m.bundle.schema = m.raw.schema;
  m.bundle.levels = m.raw.levels;
  m.bundle.test_fraction = 0.2;
  m.bundle.split_seed = DeriveSeed(kSeed, kSplitStage);
  auto [train_raw, test_raw] = Split(m.raw, m.bundle.test_fraction, m.bundle.split_seed);
  m.bundle.stats = Standardizer::Fit(train_raw.continuous, m.raw.schema);
  m.bundle.mad = MedianAbsoluteDeviation(train_raw.continuous);
  m.train = ApplyStandardization(train_raw, m.bundle.stats);
  m.test = ApplyStandardization(test_raw, m.bundle.stats);

  ClassifierConfig cc;
  cc.seed = DeriveSeed(kSeed, kClassifierStage);
  m.classifier = TrainClassifier(m.train, cc).first;
  m.classifier_test_accuracy = Accuracy(m.classifier, m.test);

  TrainConfig tc;
  tc.epochs = kFlowEpochs;
  tc.seed = DeriveSeed(kSeed, kFlowStage);
  const auto start = Clock::now();
  m.flow = Train(Relabel(m.classifier, m.train), tc);
  m.train_seconds = SecondsSince(start);

  m.bundle.class_means_seed = DeriveSeed(kSeed, kMeansStage);
  m.means = ComputeClassMeans(m.flow.flow, m.flow.dequantizer, m.classifier, m.train,
                              m.bundle.class_means_seed);

  m.bundle.classifier_config = cc;
  m.bundle.classifier = m.classifier;
  m.bundle.classifier_heldout_accuracy = m.classifier_test_accuracy;
  m.bundle.train_config = tc;
  m.bundle.flow = m.flow.flow;
  m.bundle.dequantizer = m.flow.dequantizer;
  m.bundle.gmm = m.flow.gmm;
  m.bundle.class_means = m.means;
  return m;
}

Artifacts ArtifactsOf(const Model& m) {
  return {m.flow.flow,  m.flow.dequantizer, m.flow.gmm,      m.means,
          m.classifier, m.train.stats,      m.bundle.mad};
}

std::string ReadAll(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

int RunCli(const std::string& args) {
  const std::string command = std::string(CEFLOW_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(command.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome Invertibility(const Model& m) {
  // Fresh rows from the same generator, never seen in training.
  const Dataset fresh = ApplyStandardization(
      SynthGenerate(DeriveSeed(kSeed, 200), 1000, SynthSpec{}), m.train.stats);
  const Matrix noise = m.flow.dequantizer.DrawNoise(1000, DeriveSeed(kSeed, 201));
  const Matrix x =
      Merge(m.flow.dequantizer.Dequantize(fresh.categorical, noise).z, fresh.continuous);
  const auto start = Clock::now();
  const Matrix back = m.flow.flow.Inverse(m.flow.flow.Forward(x).first);
  const double seconds = SecondsSince(start);
  const double err = (back - x).cwiseAbs().maxCoeff();
  return {err < 1e-7 && seconds < 5.0,
          "max |f^-1(f(x)) - x| = " + Fmt(err) + " over 1000 rows (< 1e-7), " + Fmt(seconds) +
              " s (< 5 s)"};
}

Outcome LogDetExactness() {
  double worst = 0.0;
  for (int d : {2, 3, 4}) {
    const FlowModel flow = testing::RandomFlow(d, 8, DeriveSeed(kSeed, 300 + d));
    Rng rng(DeriveSeed(kSeed, 310 + d));
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int i = 0; i < 50; ++i) {
      Vector x(d);
      for (int j = 0; j < d; ++j) x(j) = u(rng);
      auto f = [&](const Vector& v) { return flow.Forward(v).first; };
      const double analytic = flow.Forward(x).second;
      const double numeric = testing::FiniteDifferenceLogDet(f, x);
      worst = std::max(worst, std::abs(analytic - numeric) / std::max(1e-3, std::abs(numeric)));
    }
  }
  return {worst < 1e-4, "worst relative error " + Fmt(worst) + " over D in {2,3,4} x 50 (< 1e-4)"};
}

Outcome GradientCorrectness() {
  double worst = 0.0;
  std::string worst_op;
  const auto ops = testing::AllOpCases();
  for (const auto& op : ops) {
    Rng rng(DeriveSeed(kSeed, std::hash<std::string>{}(op.name)));
    for (int c = 0; c < 100; ++c) {
      const double e = testing::MaxGradientError(op, rng);
      if (e > worst) {
        worst = e;
        worst_op = op.name;
      }
    }
  }
  return {worst < 1e-4, std::to_string(ops.size()) + " ops x 100 cases, worst relative error " +
                            Fmt(worst) + " (" + worst_op + ", < 1e-4)"};
}

Outcome TrainingEffectiveness(const Model& m) {
  const auto& nll = m.flow.report.epoch_nll;
  const double ratio = nll.back() / nll.front();
  return {nll.size() == static_cast<std::size_t>(kFlowEpochs) && ratio <= 0.8 &&
              m.train_seconds < 600.0,
          "NLL epoch 1 " + Fmt(nll.front()) + ", epoch " + std::to_string(nll.size()) + " " +
              Fmt(nll.back()) + ", ratio " + Fmt(ratio) + " (<= 0.8), " +
              Fmt(m.train_seconds) + " s (< 600 s)"};
}

Outcome LatentClassStructure(const Model& m) {
  std::size_t correct = 0;
  for (std::size_t i = 0; i < m.test.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const int k = LatentPredict(m.flow.flow, m.flow.dequantizer, m.means.means,
                                m.test.continuous.row(r).transpose(),
                                m.test.categorical.row(r).transpose(), DeriveSeed(kSeed, i));
    correct += k == m.test.labels[i];
  }
  const double acc = static_cast<double>(correct) / static_cast<double>(m.test.size());
  return {acc >= 0.90 && m.classifier_test_accuracy >= 0.95,
          "nearest-mean accuracy " + Fmt(acc) + " (>= 0.90), classifier accuracy " +
              Fmt(m.classifier_test_accuracy) + " (>= 0.95), " + std::to_string(m.test.size()) +
              " held-out rows"};
}

Outcome SuccessRateCriterion(const std::vector<EvaluatedCounterfactual>& items,
                             double seconds) {
  const double rate = SuccessRate(items);
  return {rate >= 99.0 && seconds < 30.0 && items.size() == kInstances,
          "alpha-search success " + Fmt(rate) + "% over " + std::to_string(items.size()) +
              " held-out rows (>= 99%), " + Fmt(seconds) + " s (< 30 s)"};
}

Outcome Robustness(const Model& m, const std::vector<EvaluatedCounterfactual>& ceflow) {
  // Same seed, fresh generator: counterfactuals must be bit-identical.
  const CounterfactualGenerator generator(m.flow.flow, m.flow.dequantizer, m.means,
                                          m.classifier, m.train.stats);
  const auto grid = AlphaGrid();
  std::size_t identical = 0;
  for (std::size_t i = 0; i < ceflow.size(); ++i) {
    const auto& e = ceflow[i];
    const int y_cf = e.result.y_cf;
    const auto again = generator.AlphaSearch(e.original, e.original_categorical, y_cf, grid,
                                             DeriveSeed(DeriveSeed(kSeed, 0), i));
    identical += again.continuous == e.result.continuous &&
                 again.categorical == e.result.categorical && again.alpha == e.result.alpha;
  }

  // Growing spheres: per-instance l1 variance over 100 seeds.
  const std::size_t gs_instances = 20;
  std::size_t positive = 0;
  double mean_var = 0.0;
  for (std::size_t i = 0; i < gs_instances; ++i) {
    const auto& e = ceflow[i];
    std::vector<double> d;
    for (std::uint64_t s = 0; s < 100; ++s) {
      EvaluatedCounterfactual g = e;
      g.result = GrowingSpheres(m.classifier, m.train.stats, e.original, e.original_categorical,
                                e.result.y_cf, {}, DeriveSeed(DeriveSeed(kSeed, 400 + i), s));
      d.push_back(L1Distance(g));
    }
    const double mean = std::accumulate(d.begin(), d.end(), 0.0) / 100.0;
    double var = 0.0;
    for (double v : d) var += (v - mean) * (v - mean);
    var /= 100.0;
    mean_var += var / gs_instances;
    positive += var > 0.0;
  }
  return {identical == ceflow.size() && positive == gs_instances,
          "CeFlow repeat bit-identical " + std::to_string(identical) + "/" +
              std::to_string(ceflow.size()) + "; growing-spheres per-instance l1 variance > 0 on " +
              std::to_string(positive) + "/" + std::to_string(gs_instances) +
              " instances over 100 seeds (mean " + Fmt(mean_var) + ")"};
}

double ContinuousL1Variance(const std::vector<EvaluatedCounterfactual>& items) {
  std::vector<double> d;
  for (const auto& e : items) d.push_back((e.result.continuous - e.original).cwiseAbs().sum());
  const double mean = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(d.size());
  double var = 0.0;
  for (double v : d) var += (v - mean) * (v - mean);
  return var / static_cast<double>(d.size());
}

double MeanCategoricalChanges(const std::vector<EvaluatedCounterfactual>& items) {
  double total = 0.0;
  for (const auto& e : items) {
    total += (e.result.categorical.array() != e.original_categorical.array()).count();
  }
  return total / static_cast<double>(items.size());
}

Outcome AcrossInstanceVariance(const std::vector<EvaluatedCounterfactual>& ceflow,
                               const std::vector<EvaluatedCounterfactual>& ceflow_fixed,
                               const std::vector<EvaluatedCounterfactual>& gs) {
  const double cf_var = L1Stats(ceflow).second;
  const double fixed_var = L1Stats(ceflow_fixed).second;
  const double gs_var = L1Stats(gs).second;
  return {cf_var < gs_var, "l1 variance CeFlow " + Fmt(cf_var) + " vs growing-spheres " +
                               Fmt(gs_var) + " (must be lower); CeFlow fixed alpha=1 " +
                               Fmt(fixed_var) + "; CeFlow continuous-part variance " +
                               Fmt(ContinuousL1Variance(ceflow)) + " vs " +
                               Fmt(ContinuousL1Variance(gs)) + ", mean categorical changes " +
                               Fmt(MeanCategoricalChanges(ceflow)) + " vs " +
                               Fmt(MeanCategoricalChanges(gs))};
}

double MeanSeconds(const std::vector<EvaluatedCounterfactual>& items) {
  double total = 0.0;
  for (const auto& e : items) total += e.result.seconds;
  return total / static_cast<double>(items.size());
}

Outcome Speed(const std::vector<EvaluatedCounterfactual>& ceflow_fixed,
              const std::vector<EvaluatedCounterfactual>& gs) {
  const double cf = MeanSeconds(ceflow_fixed);
  const double g = MeanSeconds(gs);
  return {cf < 0.5 * g, "mean per-sample time CeFlow (alpha fixed) " + Fmt(cf) +
                            " s vs growing-spheres " + Fmt(g) + " s, ratio " + Fmt(cf / g) +
                            " (< 0.5)"};
}

Outcome DensityPlausibility(const Model& m, const std::vector<EvaluatedCounterfactual>& ceflow,
                            const std::vector<EvaluatedCounterfactual>& gs) {
  const std::uint64_t seed = DeriveSeed(kSeed, 500);
  const double cf = LogDensityMetric(m.flow.flow, m.flow.gmm, m.flow.dequantizer, ceflow, 8, seed);
  const double g = LogDensityMetric(m.flow.flow, m.flow.gmm, m.flow.dequantizer, gs, 8, seed);
  return {cf > g, "mean log density CeFlow " + Fmt(cf) + " vs growing-spheres " + Fmt(g)};
}

Outcome AlphaSensitivity(const Model& m) {
  BenchmarkConfig config;
  config.max_instances = kInstances;
  const auto grid = AlphaGrid();
  const std::uint64_t seed = DeriveSeed(kSeed, 600);
  const auto a = AlphaSweep(m.test, ArtifactsOf(m), grid, config, seed);
  const auto b = AlphaSweep(m.test, ArtifactsOf(m), grid, config, seed);
  const std::string csv = AlphaSweepCsv(a);
  const bool deterministic = csv == AlphaSweepCsv(b);
  double best = 0.0;
  for (const auto& [alpha, rate] : a) best = std::max(best, rate);
  bool monotone = true;
  double peak_alpha = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (i > 0 && a[i].second < a[i - 1].second) monotone = false;
    if (a[i].second == best) {
      peak_alpha = a[i].first;
      break;
    }
  }
  std::string curve;
  for (const auto& [alpha, rate] : a) curve += (curve.empty() ? "" : " ") + Fmt(rate);
  return {monotone && deterministic,
          std::string("non-decreasing to first max (") + Fmt(best) + "% at alpha " +
              Fmt(peak_alpha) + "): " + (monotone ? "yes" : "no") +
              ", CSV identical across runs: " + (deterministic ? "yes" : "no") + "; curve " +
              curve};
}

Outcome Persistence(const Model& m) {
  const fs::path dir = fs::temp_directory_path() / "ceflow_acceptance";
  fs::remove_all(dir);
  fs::create_directories(dir);
  SaveBundle(m.bundle, dir / "model.json");
  SaveBundle(LoadBundle(dir / "model.json"), dir / "model2.json");
  const bool bundle_identical = ReadAll(dir / "model.json") == ReadAll(dir / "model2.json");

  std::ostringstream csv;
  WriteCsv(m.raw, csv);
  WriteFileAtomic(dir / "data.csv", csv.str());
  WriteFileAtomic(dir / "schema.json", m.raw.schema.ToJson().dump(2) + "\n");
  const std::string args = "--seed 7 generate --data " + (dir / "data.csv").string() +
                           " --schema " + (dir / "schema.json").string() + " --model " +
                           (dir / "model.json").string() + " --out ";
  const int rc1 = RunCli(args + (dir / "cf1.csv").string());
  const int rc2 = RunCli(args + (dir / "cf2.csv").string());
  const std::string out1 = ReadAll(dir / "cf1.csv");
  const bool cli_identical = rc1 == 0 && rc2 == 0 && !out1.empty() &&
                             out1 == ReadAll(dir / "cf2.csv");
  const auto lines = std::count(out1.begin(), out1.end(), '\n');
  fs::remove_all(dir);
  return {bundle_identical && cli_identical,
          std::string("save/load/save byte-identical: ") + (bundle_identical ? "yes" : "no") +
              "; two generate processes identical: " + (cli_identical ? "yes" : "no") + " (" +
              std::to_string(lines > 0 ? lines - 1 : 0) + " rows, exit " +
              std::to_string(rc1) + "/" + std::to_string(rc2) + ")"};
}

int Main() {
  std::cout << "synthetic data: N=" << kRows << ", J=4, M=2, K=3, C=2, s=6, seed " << kSeed
            << std::endl;
  Runner runner;
  runner.Run(2, "log-det exactness", LogDetExactness);
  runner.Run(3, "gradient correctness", GradientCorrectness);

  const auto build_start = Clock::now();
  const Model m = BuildModel();
  std::cout << "model built in " << Fmt(SecondsSince(build_start)) << " s (flow training "
            << Fmt(m.train_seconds) << " s)" << std::endl;

  runner.Run(1, "invertibility", [&] { return Invertibility(m); });
  runner.Run(4, "training effectiveness", [&] { return TrainingEffectiveness(m); });
  runner.Run(5, "latent class structure", [&] { return LatentClassStructure(m); });

  const Artifacts artifacts = ArtifactsOf(m);
  BenchmarkConfig config;
  config.max_instances = kInstances;
  BenchmarkConfig fixed = config;
  fixed.alpha = AlphaMode::Parse("fixed:1");
  const auto search_start = Clock::now();
  const auto ceflow = RunMethod("ceflow", m.test, artifacts, config, DeriveSeed(kSeed, 0));
  const double search_seconds = SecondsSince(search_start);
  const auto ceflow_fixed = RunMethod("ceflow", m.test, artifacts, fixed, DeriveSeed(kSeed, 0));
  const auto gs = RunMethod("growing-spheres", m.test, artifacts, config, DeriveSeed(kSeed, 0));

  runner.Run(6, "success rate",
             [&] { return SuccessRateCriterion(ceflow, search_seconds); });
  runner.Run(7, "robustness (a) repeatability", [&] { return Robustness(m, ceflow); });
  runner.Run(7, "robustness (b) across-instance l1 variance",
             [&] { return AcrossInstanceVariance(ceflow, ceflow_fixed, gs); });
  runner.Run(8, "speed", [&] { return Speed(ceflow_fixed, gs); });
  runner.Run(9, "density plausibility", [&] { return DensityPlausibility(m, ceflow, gs); });
  runner.Run(10, "alpha sensitivity", [&] { return AlphaSensitivity(m); });
  runner.Run(11, "persistence", [&] { return Persistence(m); });

  std::cout << (runner.failures() == 0 ? "all criteria passed"
                                       : std::to_string(runner.failures()) + " check(s) failed")
            << std::endl;
  return runner.failures() == 0 ? 0 : 1;
}

}  // namespace
}  // namespace ceflow

int main() { return ceflow::Main(); }
