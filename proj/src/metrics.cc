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

#include "ceflow/metrics.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace ceflow {
namespace {

double Median(std::vector<double> values) {
  const std::size_t n = values.size();
  std::sort(values.begin(), values.end());
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::pair<double, double> MeanStd(std::span<const double> values) {
  if (values.empty()) return {0.0, 0.0};
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(values.size());
  return {mean, std::sqrt(var)};
}

CounterfactualResult FromEncoded(const Standardizer& stats,
                                 const Vector& continuous,
                                 const IntVector& categorical, int y_cf) {
  CounterfactualResult r;
  r.continuous = continuous;
  r.continuous_raw = stats.InvertRow(continuous);
  r.categorical = categorical;
  r.y_cf = y_cf;
  return r;
}

// Snaps each one-hot block of an encoded row to its largest coordinate.
IntVector DecodeCategorical(const FeatureSchema& schema, const Eigen::Ref<const Vector>& row) {
  IntVector codes(schema.num_categorical());
  int offset = schema.num_continuous();
  for (int m = 0; m < schema.num_categorical(); ++m) {
    const int k = schema.categorical[m].cardinality;
    int best = 0;
    for (int c = 1; c < k; ++c) {
      if (row(offset + c) > row(offset + best)) best = c;
    }
    codes(m) = best;
    offset += k;
  }
  return codes;
}

// Decodes candidate rows in place and returns the index of the first row
// the classifier assigns to y_cf, or -1.
Eigen::Index FirstFlip(const Classifier& clf, Matrix& candidates, int y_cf) {
  const FeatureSchema& schema = clf.schema();
  const int J = schema.num_continuous();
  for (Eigen::Index r = 0; r < candidates.rows(); ++r) {
    const IntVector codes = DecodeCategorical(schema, candidates.row(r).transpose());
    candidates.row(r).tail(candidates.cols() - J).setZero();
    int offset = J;
    for (int m = 0; m < schema.num_categorical(); ++m) {
      candidates(r, offset + codes(m)) = 1.0;
      offset += schema.categorical[m].cardinality;
    }
  }
  const std::vector<int> pred = clf.PredictEncoded(candidates);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] == y_cf) return static_cast<Eigen::Index>(i);
  }
  return -1;
}

CounterfactualResult ResultFromRow(const Classifier& clf, const Standardizer& stats,
                                   const Matrix& candidates, Eigen::Index row,
                                   int y_cf) {
  const FeatureSchema& schema = clf.schema();
  const int J = schema.num_continuous();
  const Vector encoded = candidates.row(row).transpose();
  return FromEncoded(stats, encoded.head(J),
                     DecodeCategorical(schema, encoded), y_cf);
}

std::string FormatFixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

std::string FormatSci(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3e", v);
  return buf;
}

}  // namespace

double SuccessRate(std::span<const EvaluatedCounterfactual> items) {
  if (items.empty()) throw ContractError("success rate: no results");
  std::size_t hits = 0;
  for (const auto& item : items) hits += item.result.success;
  return 100.0 * static_cast<double>(hits) / static_cast<double>(items.size());
}

double L1Distance(const EvaluatedCounterfactual& item) {
  const CounterfactualResult& r = item.result;
  if (r.continuous.size() != item.original.size() ||
      r.categorical.size() != item.original_categorical.size()) {
    throw ShapeError("l1: counterfactual does not match original schema");
  }
  double d = (r.continuous - item.original).cwiseAbs().sum();
  for (Eigen::Index m = 0; m < r.categorical.size(); ++m) {
    d += r.categorical(m) != item.original_categorical(m) ? 1.0 : 0.0;
  }
  return d;
}

std::pair<double, double> L1Stats(std::span<const EvaluatedCounterfactual> items) {
  if (items.empty()) throw ContractError("l1: no results");
  std::vector<double> d;
  d.reserve(items.size());
  for (const auto& item : items) d.push_back(L1Distance(item));
  auto [mean, std] = MeanStd(d);
  return {mean, std * std};
}

std::optional<double> ProximityCategorical(
    std::span<const EvaluatedCounterfactual> items) {
  if (items.empty()) throw ContractError("proximity: no results");
  const auto M = items.front().original_categorical.size();
  if (M == 0) return std::nullopt;
  double total = 0.0;
  for (const auto& item : items) {
    double changed = 0.0;
    for (Eigen::Index m = 0; m < M; ++m) {
      changed += item.result.categorical(m) != item.original_categorical(m);
    }
    total += 1.0 - changed / static_cast<double>(M);
  }
  return total / static_cast<double>(items.size());
}

double ProximityContinuous(std::span<const EvaluatedCounterfactual> items,
                           const Vector& mad) {
  if (items.empty()) throw ContractError("proximity: no results");
  const auto J = items.front().original_raw.size();
  if (J == 0) return 0.0;
  if (mad.size() != J) throw ShapeError("proximity: MAD dimension mismatch");
  double total = 0.0;
  for (const auto& item : items) {
    const Vector diff = (item.result.continuous_raw - item.original_raw).cwiseAbs();
    total += -(diff.array() / mad.array()).sum() / static_cast<double>(J);
  }
  return total / static_cast<double>(items.size());
}

Vector MedianAbsoluteDeviation(const Matrix& raw) {
  Vector mad(raw.cols());
  for (Eigen::Index j = 0; j < raw.cols(); ++j) {
    std::vector<double> col(raw.col(j).data(), raw.col(j).data() + raw.rows());
    const double med = Median(col);
    std::vector<double> dev;
    dev.reserve(col.size());
    for (double v : col) dev.push_back(std::abs(v - med));
    double value = Median(dev);
    if (!(value > 0.0)) {
      const double mean = raw.col(j).mean();
      value = std::sqrt((raw.col(j).array() - mean).square().mean());
    }
    if (!(value > 0.0)) value = 1.0;
    mad(j) = value;
  }
  return mad;
}

double LogDensity(const FlowModel& flow, const LatentGMM& gmm,
                  const Dequantizer& deq, const Vector& continuous,
                  const IntVector& categorical, int k_mc, std::uint64_t seed) {
  if (k_mc < 1) throw ContractError("log density: need at least one sample");
  const IntMatrix codes = categorical.transpose().replicate(k_mc, 1);
  const Matrix con = continuous.transpose().replicate(k_mc, 1);
  const DequantizedBatch dq = deq.Dequantize(codes, deq.DrawNoise(k_mc, seed));
  const Vector log_p = LogProbMarginal(flow, gmm, Merge(dq.z, con));
  const Vector terms = log_p - dq.log_q;
  const double m = terms.maxCoeff();
  return m + std::log((terms.array() - m).exp().mean());
}

double LogDensityMetric(const FlowModel& flow, const LatentGMM& gmm,
                        const Dequantizer& deq,
                        std::span<const EvaluatedCounterfactual> items,
                        int k_mc, std::uint64_t seed) {
  if (items.empty()) throw ContractError("log density: no results");
  double total = 0.0;
  for (std::size_t i = 0; i < items.size(); ++i) {
    total += LogDensity(flow, gmm, deq, items[i].result.continuous,
                        items[i].result.categorical, k_mc, DeriveSeed(seed, i));
  }
  return total / static_cast<double>(items.size());
}

CounterfactualResult GrowingSpheres(const Classifier& clf,
                                    const Standardizer& stats,
                                    const Vector& continuous,
                                    const IntVector& categorical, int y_cf,
                                    const GrowingSpheresConfig& config,
                                    std::uint64_t seed) {
  if (!(config.initial_radius > 0.0) || !(config.step > 0.0) ||
      config.samples < 1 || !(config.max_radius > 0.0)) {
    throw ContractError("growing spheres: invalid config");
  }
  const auto start = std::chrono::steady_clock::now();
  auto finish = [&](CounterfactualResult r) {
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
                    .count();
    return r;
  };
  const int y_org = clf.Predict(continuous, categorical);
  if (y_org == y_cf) {
    CounterfactualResult r = FromEncoded(stats, continuous, categorical, y_cf);
    r.y_org = y_org;
    r.success = true;
    return finish(r);
  }
  const Vector center = clf.Encode(continuous, categorical);
  const auto dim = center.size();
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const double d = static_cast<double>(dim);

  double lo = 0.0;
  double hi = config.initial_radius;
  Matrix candidates(config.samples, dim);
  while (lo < config.max_radius) {
    const double lo_d = std::pow(lo, d);
    const double hi_d = std::pow(hi, d);
    for (int s = 0; s < config.samples; ++s) {
      Vector dir(dim);
      for (Eigen::Index j = 0; j < dim; ++j) dir(j) = normal(rng);
      dir /= dir.norm();
      const double radius = std::pow(lo_d + uniform(rng) * (hi_d - lo_d), 1.0 / d);
      candidates.row(s) = (center + radius * dir).transpose();
    }
    const Eigen::Index hit = FirstFlip(clf, candidates, y_cf);
    if (hit >= 0) {
      CounterfactualResult r = ResultFromRow(clf, stats, candidates, hit, y_cf);
      r.y_org = y_org;
      r.success = true;
      return finish(r);
    }
    lo = hi;
    hi += config.step;
  }
  CounterfactualResult r = FromEncoded(stats, continuous, categorical, y_cf);
  r.y_org = y_org;
  r.success = false;
  return finish(r);
}

CounterfactualResult RandomPerturbation(const Classifier& clf,
                                        const Standardizer& stats,
                                        const Vector& continuous,
                                        const IntVector& categorical, int y_cf,
                                        const RandomPerturbationConfig& config,
                                        std::uint64_t seed) {
  if (!(config.sigma > 0.0) || config.trials < 1) {
    throw ContractError("random perturbation: invalid config");
  }
  const auto start = std::chrono::steady_clock::now();
  const int y_org = clf.Predict(continuous, categorical);
  CounterfactualResult r = FromEncoded(stats, continuous, categorical, y_cf);
  r.y_org = y_org;
  r.success = y_org == y_cf;
  if (!r.success) {
    const Vector center = clf.Encode(continuous, categorical);
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, config.sigma);
    constexpr int kChunk = 100;
    for (int done = 0; done < config.trials && !r.success; done += kChunk) {
      const int rows = std::min(kChunk, config.trials - done);
      Matrix candidates(rows, center.size());
      for (int s = 0; s < rows; ++s) {
        for (Eigen::Index j = 0; j < center.size(); ++j) {
          candidates(s, j) = center(j) + normal(rng);
        }
      }
      const Eigen::Index hit = FirstFlip(clf, candidates, y_cf);
      if (hit >= 0) {
        r = ResultFromRow(clf, stats, candidates, hit, y_cf);
        r.y_org = y_org;
        r.success = true;
      }
    }
  }
  r.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

MetricsReport Summarize(const std::string& method,
                        std::span<const EvaluatedCounterfactual> items,
                        const FlowModel& flow, const LatentGMM& gmm,
                        const Dequantizer& deq, const Vector& mad, int k_mc,
                        std::uint64_t seed) {
  if (items.empty()) throw ContractError("summarize: no results");
  MetricsReport report;
  report.method = method;
  report.n = items.size();
  report.success = SuccessRate(items);
  std::tie(report.l1_mean, report.l1_var) = L1Stats(items);
  report.log_density = LogDensityMetric(flow, gmm, deq, items, k_mc, seed);
  report.prox_cat = ProximityCategorical(items);
  report.prox_con = ProximityContinuous(items, mad);
  std::vector<double> times;
  for (const auto& item : items) times.push_back(item.result.seconds);
  std::tie(report.time_mean_s, report.time_std_s) = MeanStd(times);
  return report;
}

AlphaMode AlphaMode::Parse(const std::string& text) {
  AlphaMode mode;
  if (text == "search") return mode;
  const std::string prefix = "fixed:";
  if (text.rfind(prefix, 0) == 0) {
    try {
      std::size_t used = 0;
      const std::string value = text.substr(prefix.size());
      mode.fixed = std::stod(value, &used);
      if (used != value.size() || !(mode.fixed >= 0.0)) throw std::invalid_argument("");
    } catch (const std::exception&) {
      throw ContractError("alpha: expected fixed:<non-negative number>, got '" +
                          text + "'");
    }
    mode.search = false;
    return mode;
  }
  throw ContractError("alpha: expected 'search' or 'fixed:<value>', got '" +
                      text + "'");
}

std::string AlphaMode::ToString() const {
  return search ? "search" : "fixed:" + FormatDouble(fixed);
}

std::vector<EvaluatedCounterfactual> RunMethod(const std::string& method,
                                               const Dataset& eval,
                                               const Artifacts& artifacts,
                                               const BenchmarkConfig& config,
                                               std::uint64_t seed) {
  if (!eval.standardized) throw ContractError("benchmark: data must be standardized");
  const std::size_t n = std::min(eval.size(), config.max_instances);
  if (n == 0) throw ContractError("benchmark: no evaluation rows");
  const int C = eval.schema.num_classes;
  CounterfactualGenerator generator(artifacts.flow, artifacts.dequantizer,
                                    artifacts.class_means, artifacts.classifier,
                                    artifacts.stats, {config.signed_delta});
  const std::vector<int> predicted = artifacts.classifier.Predict(eval);
  std::vector<EvaluatedCounterfactual> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    EvaluatedCounterfactual item;
    item.original = eval.continuous.row(row).transpose();
    item.original_raw = artifacts.stats.InvertRow(item.original);
    item.original_categorical = eval.categorical.row(row).transpose();
    const int y_cf = (predicted[i] + 1) % C;
    const std::uint64_t row_seed = DeriveSeed(seed, i);
    if (method == "ceflow") {
      item.result = config.alpha.search
                        ? generator.AlphaSearch(item.original,
                                                item.original_categorical, y_cf,
                                                config.alpha.grid, row_seed)
                        : generator.Generate(item.original,
                                             item.original_categorical, y_cf,
                                             config.alpha.fixed, row_seed);
    } else if (method == "growing-spheres") {
      item.result = GrowingSpheres(artifacts.classifier, artifacts.stats,
                                   item.original, item.original_categorical,
                                   y_cf, config.growing_spheres, row_seed);
    } else if (method == "random") {
      item.result = RandomPerturbation(artifacts.classifier, artifacts.stats,
                                       item.original, item.original_categorical,
                                       y_cf, config.random, row_seed);
    } else {
      throw ContractError("benchmark: unknown method '" + method + "'");
    }
    out.push_back(std::move(item));
  }
  return out;
}

std::vector<MetricsReport> Benchmark(const Dataset& eval,
                                     const Artifacts& artifacts,
                                     const BenchmarkConfig& config,
                                     std::uint64_t seed) {
  if (config.repetitions < 1) throw ContractError("benchmark: repetitions < 1");
  std::vector<MetricsReport> reports;
  for (const std::string& method : config.methods) {
    std::vector<MetricsReport> reps;
    std::vector<double> all_times;
    for (int r = 0; r < config.repetitions; ++r) {
      const std::uint64_t rep_seed = DeriveSeed(seed, static_cast<std::uint64_t>(r));
      auto items = RunMethod(method, eval, artifacts, config, rep_seed);
      for (const auto& item : items) all_times.push_back(item.result.seconds);
      reps.push_back(Summarize(method, items, artifacts.flow, artifacts.gmm,
                               artifacts.dequantizer, artifacts.mad,
                               config.k_mc_eval, DeriveSeed(rep_seed, 0xD15EA5E)));
    }
    auto collect = [&](auto field) {
      std::vector<double> v;
      for (const auto& rep : reps) v.push_back(field(rep));
      return MeanStd(v);
    };
    MetricsReport agg = reps.front();
    agg.repetitions = config.repetitions;
    std::tie(agg.success, agg.success_rep_std) =
        collect([](const MetricsReport& m) { return m.success; });
    std::tie(agg.l1_mean, agg.l1_mean_rep_std) =
        collect([](const MetricsReport& m) { return m.l1_mean; });
    std::tie(agg.l1_var, agg.l1_var_rep_std) =
        collect([](const MetricsReport& m) { return m.l1_var; });
    std::tie(agg.log_density, agg.log_density_rep_std) =
        collect([](const MetricsReport& m) { return m.log_density; });
    if (agg.prox_cat) {
      agg.prox_cat = collect([](const MetricsReport& m) { return *m.prox_cat; }).first;
    }
    agg.prox_con = collect([](const MetricsReport& m) { return m.prox_con; }).first;
    std::tie(agg.time_mean_s, agg.time_std_s) = MeanStd(all_times);
    reports.push_back(agg);
  }
  return reports;
}

std::vector<std::pair<double, double>> AlphaSweep(const Dataset& eval,
                                                  const Artifacts& artifacts,
                                                  std::span<const double> grid,
                                                  const BenchmarkConfig& config,
                                                  std::uint64_t seed) {
  std::vector<std::pair<double, double>> sweep;
  BenchmarkConfig fixed = config;
  fixed.alpha.search = false;
  for (double alpha : grid) {
    fixed.alpha.fixed = alpha;
    auto items = RunMethod("ceflow", eval, artifacts, fixed, DeriveSeed(seed, 0));
    sweep.emplace_back(alpha, SuccessRate(items));
  }
  return sweep;
}

std::string ReportCsv(std::span<const MetricsReport> reports) {
  std::ostringstream out;
  out << "method,success,l1_mean,l1_var,log_density,prox_cat,prox_con,"
         "time_mean_s,time_std_s\n";
  for (const auto& r : reports) {
    out << CsvEscape(r.method) << "," << FormatDouble(r.success) << ","
        << FormatDouble(r.l1_mean) << "," << FormatDouble(r.l1_var) << ","
        << FormatDouble(r.log_density) << ","
        << (r.prox_cat ? FormatDouble(*r.prox_cat) : std::string("n/a")) << ","
        << FormatDouble(r.prox_con) << "," << FormatDouble(r.time_mean_s) << ","
        << FormatDouble(r.time_std_s) << "\n";
  }
  return out.str();
}

std::string ReportMarkdown(std::span<const MetricsReport> reports) {
  std::ostringstream out;
  out << "| method | success (%) | l1-mean | l1-var | log-density | prox-cat | "
         "prox-con | time per sample (s) |\n";
  out << "|---|---|---|---|---|---|---|---|\n";
  for (const auto& r : reports) {
    out << "| " << r.method << " | " << FormatFixed(r.success, 2) << " ± "
        << FormatFixed(r.success_rep_std, 2) << " | " << FormatFixed(r.l1_mean, 4)
        << " ± " << FormatFixed(r.l1_mean_rep_std, 4) << " | "
        << FormatSci(r.l1_var) << " | " << FormatFixed(r.log_density, 3) << " ± "
        << FormatFixed(r.log_density_rep_std, 3) << " | "
        << (r.prox_cat ? FormatFixed(*r.prox_cat, 4) : std::string("n/a")) << " | "
        << FormatFixed(r.prox_con, 4) << " | " << FormatSci(r.time_mean_s)
        << " ± " << FormatSci(r.time_std_s) << " |\n";
  }
  if (!reports.empty()) {
    out << "\nN = " << reports.front().n << " instances per repetition, "
        << reports.front().repetitions << " repetitions.\n";
  }
  return out.str();
}

std::string AlphaSweepCsv(std::span<const std::pair<double, double>> sweep) {
  std::ostringstream out;
  out << "alpha,success\n";
  for (const auto& [alpha, success] : sweep) {
    out << FormatDouble(alpha) << "," << FormatDouble(success) << "\n";
  }
  return out.str();
}

}  // namespace ceflow
