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

#include "ceflow/trainer.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <string>

namespace ceflow {
namespace {

constexpr double kLog2Pi = 1.83787706640934548356;
constexpr double kDivergenceNll = 1e6;

// Sub-seeds, one per stochastic component of training.
enum SeedStream : std::uint64_t {
  kFlowInit = 1,
  kDequantInit = 2,
  kGmmInit = 3,
  kShuffle = 4,
  kBatchNoise = 5,
  kValidationSplit = 6,
  kEvalNoise = 7,
};

Matrix MeansForLabels(const LatentGMM& gmm, std::span<const int> labels) {
  Matrix out(static_cast<Eigen::Index>(labels.size()), gmm.dim());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= gmm.num_classes()) {
      throw ContractError("nll: label " + std::to_string(labels[i]) +
                          " outside mixture");
    }
    out.row(static_cast<Eigen::Index>(i)) = gmm.means.row(labels[i]);
  }
  return out;
}

}  // namespace

void TrainConfig::Validate() const {
  if (epochs < 0 || batch_size < 1 || !(learning_rate > 0.0) ||
      !(clip_norm > 0.0) || !(clamp > 0.0) || layers < 0 || hidden_width < 0 ||
      dequant_hidden_width < 1 || k_mc < 1 || k_mc_eval < 1 ||
      !(mean_scale >= 0.0) || !(validation_fraction >= 0.0) ||
      !(validation_fraction < 1.0)) {
    throw ContractError("train config: values out of range");
  }
}

nlohmann::json TrainConfig::ToJson() const {
  return {{"epochs", epochs},
          {"batch_size", batch_size},
          {"learning_rate", learning_rate},
          {"seed", seed},
          {"clip_norm", clip_norm},
          {"clamp", clamp},
          {"layers", layers},
          {"hidden_width", hidden_width},
          {"dequant_hidden_width", dequant_hidden_width},
          {"k_mc", k_mc},
          {"k_mc_eval", k_mc_eval},
          {"mean_scale", mean_scale},
          {"validation_fraction", validation_fraction},
          {"empirical_prior", empirical_prior}};
}

TrainConfig TrainConfig::FromJson(const nlohmann::json& j) {
  TrainConfig c;
  c.epochs = j.at("epochs").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.clip_norm = j.at("clip_norm").get<double>();
  c.clamp = j.at("clamp").get<double>();
  c.layers = j.at("layers").get<int>();
  c.hidden_width = j.at("hidden_width").get<int>();
  c.dequant_hidden_width = j.at("dequant_hidden_width").get<int>();
  c.k_mc = j.at("k_mc").get<int>();
  c.k_mc_eval = j.at("k_mc_eval").get<int>();
  c.mean_scale = j.at("mean_scale").get<double>();
  c.validation_fraction = j.at("validation_fraction").get<double>();
  c.empirical_prior = j.at("empirical_prior").get<bool>();
  return c;
}

nlohmann::json TrainReport::ToJson() const {
  return {{"epoch_nll", epoch_nll},
          {"epoch_seconds", epoch_seconds},
          {"heldout_nll", heldout_nll},
          {"heldout_rows", heldout_rows},
          {"seed", seed}};
}

LatentGMM InitGmm(int num_classes, int dim, std::uint64_t seed, double scale) {
  if (num_classes < 2 || dim < 1) {
    throw ContractError("gmm: need at least 2 classes and dimension >= 1");
  }
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix means(num_classes, dim);
  for (int k = 0; k < num_classes; ++k) {
    for (int d = 0; d < dim; ++d) means(k, d) = scale * normal(rng);
  }
  return LatentGMM::Uniform(std::move(means));
}

ad::Var NllBatch(ad::Tape& tape, const FlowModel& flow,
                 std::span<const ad::Var> flow_bound, const LatentGMM& gmm,
                 const Dequantizer& deq, std::span<const ad::Var> deq_bound,
                 const NllInputs& batch) {
  const Eigen::Index rows = batch.continuous->rows();
  if (rows == 0) throw ContractError("nll: empty batch");
  if (static_cast<Eigen::Index>(batch.labels.size()) != rows) {
    throw ShapeError("nll: label count does not match batch");
  }
  ad::Var x_con = tape.Constant(*batch.continuous);
  ad::Var full = x_con;
  ad::Var log_q;
  const bool has_cat = !deq.empty();
  if (has_cat) {
    DequantizedTape dq =
        deq.Dequantize(tape, *batch.categorical, *batch.noise, deq_bound);
    full = tape.ConcatCols(dq.z, x_con);
    log_q = dq.log_q;
  }
  FlowTape ft = flow.Forward(tape, full, flow_bound);
  ad::Var diff = tape.Sub(ft.z, tape.Constant(MeansForLabels(gmm, batch.labels)));
  ad::Var log_n = tape.AddScalar(tape.Scale(tape.RowSum(tape.Square(diff)), -0.5),
                                 -0.5 * static_cast<double>(flow.dim()) * kLog2Pi);
  ad::Var per_row = tape.Add(log_n, ft.logdet);
  if (has_cat) per_row = tape.Sub(per_row, log_q);
  return tape.Scale(tape.Sum(per_row), -1.0 / static_cast<double>(rows));
}

Vector RowNll(const FlowModel& flow, const LatentGMM& gmm,
              const Dequantizer& deq, const Dataset& data, int k_mc,
              std::uint64_t seed) {
  const auto n = static_cast<Eigen::Index>(data.size());
  Vector total = Vector::Zero(n);
  const Matrix label_means = MeansForLabels(gmm, data.labels);
  for (int k = 0; k < k_mc; ++k) {
    DequantizedBatch dq = deq.Dequantize(
        data.categorical, deq.DrawNoise(n, DeriveSeed(seed, k)));
    auto [z, logdet] = flow.Forward(Merge(dq.z, data.continuous));
    const Vector log_n =
        (-0.5 * (z - label_means).rowwise().squaredNorm()).array() -
        0.5 * static_cast<double>(flow.dim()) * kLog2Pi;
    total += -(log_n + logdet - dq.log_q);
  }
  return total / static_cast<double>(k_mc);
}

double MeanNll(const FlowModel& flow, const LatentGMM& gmm,
               const Dequantizer& deq, const Dataset& data, int k_mc,
               std::uint64_t seed) {
  if (data.size() == 0) return 0.0;
  return RowNll(flow, gmm, deq, data, k_mc, seed).mean();
}

FlowArtifacts Train(const Dataset& data, const TrainConfig& config) {
  config.Validate();
  data.schema.Validate();
  if (data.size() == 0) throw ContractError("train: empty dataset");
  const FeatureSchema& schema = data.schema;
  const int dim = schema.full_dim();

  Dataset train = data;
  Dataset heldout;
  if (config.validation_fraction > 0.0 && data.size() >= 10) {
    auto parts = Split(data, config.validation_fraction,
                       DeriveSeed(config.seed, kValidationSplit));
    train = std::move(parts.first);
    heldout = std::move(parts.second);
  }

  Rng flow_rng(DeriveSeed(config.seed, kFlowInit));
  Rng deq_rng(DeriveSeed(config.seed, kDequantInit));
  FlowArtifacts out;
  out.flow = FlowModel::Create(
      dim, {config.layers, config.hidden_width, config.clamp}, flow_rng);
  out.dequantizer = Dequantizer::Create(schema, config.dequant_hidden_width, deq_rng);
  out.gmm = InitGmm(schema.num_classes, dim, DeriveSeed(config.seed, kGmmInit),
                    config.mean_scale);
  if (config.empirical_prior) {
    Vector counts = Vector::Zero(schema.num_classes);
    for (int y : train.labels) counts(y) += 1.0;
    out.gmm.weights = (counts.array() + 1.0) /
                      (counts.sum() + static_cast<double>(schema.num_classes));
  }
  out.report.seed = config.seed;

  ad::ParameterList params;
  out.flow.CollectParameters("flow", params);
  out.dequantizer.mutable_net().CollectParameters("dequantizer", params);
  ad::AdamOptimizer adam({config.learning_rate, 0.9, 0.999, 1e-8}, params);

  const std::size_t n = train.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng shuffle_rng(DeriveSeed(config.seed, kShuffle));
  const std::uint64_t noise_seed = DeriveSeed(config.seed, kBatchNoise);
  std::uint64_t batch_counter = 0;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double nll_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t begin = 0; begin < n; begin += config.batch_size) {
      const std::size_t end = std::min(n, begin + config.batch_size);
      std::vector<std::size_t> rows;
      rows.reserve((end - begin) * config.k_mc);
      for (int k = 0; k < config.k_mc; ++k) {
        rows.insert(rows.end(), order.begin() + begin, order.begin() + end);
      }
      Dataset batch = train.Subset(rows);
      const Matrix noise = out.dequantizer.DrawNoise(
          static_cast<Eigen::Index>(rows.size()), DeriveSeed(noise_seed, batch_counter));

      ad::Tape tape;
      std::vector<ad::Var> bound = out.flow.Bind(tape);
      const std::size_t flow_count = bound.size();
      for (ad::Var v : out.dequantizer.net().Bind(tape)) bound.push_back(v);
      std::span<const ad::Var> all(bound);
      ad::Var loss = NllBatch(
          tape, out.flow, all.subspan(0, flow_count), out.gmm, out.dequantizer,
          all.subspan(flow_count),
          {&batch.continuous, &batch.categorical, batch.labels, &noise});
      const double value = tape.value(loss)(0, 0);
      if (!std::isfinite(value)) {
        throw TrainingError("training: non-finite loss at epoch " +
                            std::to_string(epoch + 1) + ", batch " +
                            std::to_string(batch_counter));
      }
      tape.Backward(loss);
      std::vector<Matrix> grads;
      grads.reserve(bound.size());
      for (ad::Var v : bound) grads.push_back(tape.Gradient(v));
      ad::ClipGlobalNorm(grads, config.clip_norm);
      adam.Step(params, grads);

      nll_sum += value * static_cast<double>(end - begin);
      seen += end - begin;
      ++batch_counter;
    }
    const double epoch_nll = nll_sum / static_cast<double>(seen);
    const double seconds = std::chrono::duration<double>(
                               std::chrono::steady_clock::now() - start)
                               .count();
    if (!std::isfinite(epoch_nll) || epoch_nll > kDivergenceNll) {
      throw TrainingError("training diverged at epoch " + std::to_string(epoch + 1));
    }
    out.report.epoch_nll.push_back(epoch_nll);
    out.report.epoch_seconds.push_back(seconds);
  }

  const Dataset& eval = heldout.size() > 0 ? heldout : train;
  out.report.heldout_rows = heldout.size();
  out.report.heldout_nll = MeanNll(out.flow, out.gmm, out.dequantizer, eval,
                                   config.k_mc_eval,
                                   DeriveSeed(config.seed, kEvalNoise));
  if (!std::isfinite(out.report.heldout_nll)) {
    throw TrainingError("training: held-out NLL is not finite");
  }
  return out;
}

}  // namespace ceflow
