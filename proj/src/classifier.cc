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

#include "ceflow/classifier.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <string>

namespace ceflow {

nlohmann::json ClassifierConfig::ToJson() const {
  return {{"epochs", epochs},
          {"batch_size", batch_size},
          {"learning_rate", learning_rate},
          {"hidden_width", hidden_width},
          {"seed", seed},
          {"validation_fraction", validation_fraction}};
}

ClassifierConfig ClassifierConfig::FromJson(const nlohmann::json& j) {
  ClassifierConfig c;
  c.epochs = j.at("epochs").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.hidden_width = j.at("hidden_width").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.validation_fraction = j.at("validation_fraction").get<double>();
  return c;
}

Classifier::Classifier(FeatureSchema schema, ad::DenseNet net)
    : schema_(std::move(schema)), net_(std::move(net)) {
  if (net_.input_dim() != input_dim() || net_.output_dim() != schema_.num_classes) {
    throw ShapeError("classifier: network must map " + std::to_string(input_dim()) +
                     " inputs to " + std::to_string(schema_.num_classes) +
                     " logits");
  }
}

int Classifier::input_dim() const {
  return schema_.num_continuous() + schema_.one_hot_dim();
}

Matrix Classifier::Encode(const Matrix& continuous,
                          const IntMatrix& categorical) const {
  const int J = schema_.num_continuous();
  const int M = schema_.num_categorical();
  if (continuous.cols() != J || categorical.cols() != M ||
      continuous.rows() != categorical.rows()) {
    throw ShapeError("classifier: input does not match schema");
  }
  Matrix out = Matrix::Zero(continuous.rows(), input_dim());
  out.leftCols(J) = continuous;
  for (Eigen::Index r = 0; r < categorical.rows(); ++r) {
    int offset = J;
    for (int m = 0; m < M; ++m) {
      const int code = categorical(r, m);
      const int k = schema_.categorical[m].cardinality;
      if (code < 0 || code >= k) {
        throw ContractError("classifier: code " + std::to_string(code) +
                            " invalid for '" + schema_.categorical[m].name + "'");
      }
      out(r, offset + code) = 1.0;
      offset += k;
    }
  }
  return out;
}

Vector Classifier::Encode(const Vector& continuous,
                          const IntVector& categorical) const {
  return Encode(Matrix(continuous.transpose()), IntMatrix(categorical.transpose()))
      .row(0)
      .transpose();
}

Matrix Classifier::Logits(const Matrix& encoded) const {
  return net_.ForwardBatch(encoded);
}

std::vector<int> Classifier::PredictEncoded(const Matrix& encoded) const {
  const Matrix logits = Logits(encoded);
  std::vector<int> out(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    out[r] = ArgMax(logits.row(r).transpose());
  }
  return out;
}

int Classifier::Predict(const Vector& continuous,
                        const IntVector& categorical) const {
  return ArgMax(net_.Forward(Encode(continuous, categorical)));
}

std::vector<int> Classifier::Predict(const Dataset& data) const {
  return PredictEncoded(Encode(data.continuous, data.categorical));
}

int ArgMax(const Vector& logits) {
  int best = 0;
  for (Eigen::Index k = 1; k < logits.size(); ++k) {
    if (logits(k) > logits(best)) best = static_cast<int>(k);
  }
  return best;
}

std::pair<Classifier, ClassifierReport> TrainClassifier(
    const Dataset& data, const ClassifierConfig& config) {
  const FeatureSchema& schema = data.schema;
  schema.Validate();
  const std::set<int> present(data.labels.begin(), data.labels.end());
  if (present.size() < 2) {
    throw ContractError("train classifier: need at least two classes in data");
  }
  if (config.epochs < 0 || config.batch_size < 1 || !(config.learning_rate > 0.0)) {
    throw ContractError("train classifier: invalid config");
  }

  Dataset train = data;
  Dataset heldout;
  if (config.validation_fraction > 0.0 && data.size() >= 10) {
    auto parts = Split(data, config.validation_fraction, DeriveSeed(config.seed, 1));
    train = std::move(parts.first);
    heldout = std::move(parts.second);
  }

  Rng init_rng(DeriveSeed(config.seed, 2));
  const int in_dim = schema.num_continuous() + schema.one_hot_dim();
  Classifier clf(schema, ad::DenseNet::Glorot(
                             {in_dim, config.hidden_width, config.hidden_width,
                              schema.num_classes},
                             ad::Activation::kRelu, ad::Activation::kIdentity,
                             init_rng));
  ad::ParameterList params;
  clf.mutable_net().CollectParameters("classifier", params);
  ad::AdamOptimizer adam({config.learning_rate, 0.9, 0.999, 1e-8}, params);

  const Matrix encoded = clf.Encode(train.continuous, train.categorical);
  const std::size_t n = train.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng shuffle_rng(DeriveSeed(config.seed, 3));
  ClassifierReport report;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    for (std::size_t begin = 0; begin < n; begin += config.batch_size) {
      const std::size_t end = std::min(n, begin + config.batch_size);
      const auto b = static_cast<Eigen::Index>(end - begin);
      Matrix x(b, in_dim);
      Matrix target = Matrix::Zero(b, schema.num_classes);
      for (Eigen::Index i = 0; i < b; ++i) {
        const std::size_t row = order[begin + i];
        x.row(i) = encoded.row(static_cast<Eigen::Index>(row));
        target(i, train.labels[row]) = 1.0;
      }
      ad::Tape tape;
      std::vector<ad::Var> bound = clf.net().Bind(tape);
      ad::Var logits = clf.net().Forward(tape, tape.Constant(std::move(x)), bound);
      ad::Var picked = tape.RowSum(tape.Mul(logits, tape.Constant(std::move(target))));
      ad::Var loss = tape.Scale(
          tape.Sum(tape.Sub(tape.RowLogSumExp(logits), picked)),
          1.0 / static_cast<double>(b));
      const double value = tape.value(loss)(0, 0);
      if (!std::isfinite(value)) {
        throw TrainingError("classifier: non-finite loss at epoch " +
                            std::to_string(epoch + 1));
      }
      tape.Backward(loss);
      std::vector<Matrix> grads;
      for (ad::Var v : bound) grads.push_back(tape.Gradient(v));
      adam.Step(params, grads);
      loss_sum += value * static_cast<double>(b);
    }
    report.epoch_loss.push_back(loss_sum / static_cast<double>(n));
  }
  report.train_accuracy = Accuracy(clf, train);
  report.heldout_accuracy =
      heldout.size() > 0 ? Accuracy(clf, heldout) : report.train_accuracy;
  return {std::move(clf), std::move(report)};
}

double Accuracy(const Classifier& clf, const Dataset& data) {
  if (data.size() == 0) return 0.0;
  const std::vector<int> pred = clf.Predict(data);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == data.labels[i];
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

Dataset Relabel(const Classifier& clf, const Dataset& data) {
  Dataset out = data;
  out.labels = clf.Predict(data);
  return out;
}

int NearestMean(const Vector& z, const Matrix& means) {
  if (means.rows() == 0 || means.cols() != z.size()) {
    throw ShapeError("nearest mean: dimension mismatch");
  }
  int best = 0;
  double best_dist = (means.row(0).transpose() - z).squaredNorm();
  for (Eigen::Index k = 1; k < means.rows(); ++k) {
    const double d = (means.row(k).transpose() - z).squaredNorm();
    if (d < best_dist) {
      best_dist = d;
      best = static_cast<int>(k);
    }
  }
  return best;
}

int LatentPredict(const FlowModel& flow, const Dequantizer& deq,
                  const Matrix& class_means, const Vector& continuous,
                  const IntVector& categorical, std::uint64_t seed) {
  auto [z_cat, log_q] = deq.Dequantize(categorical, seed);
  (void)log_q;
  auto [z, logdet] = flow.Forward(Merge(z_cat, continuous));
  (void)logdet;
  return NearestMean(z, class_means);
}

}  // namespace ceflow
