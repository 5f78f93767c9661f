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

#ifndef CEFLOW_CLASSIFIER_H_
#define CEFLOW_CLASSIFIER_H_

// The black-box model being explained, and the latent nearest-mean rule.

#include <cstdint>
#include <utility>
#include <vector>

#include "ceflow/autodiff.h"
#include "ceflow/data.h"
#include "ceflow/dequantizer.h"
#include "ceflow/flow.h"
#include "json.hpp"

namespace ceflow {

struct ClassifierConfig {
  int epochs = 100;
  int batch_size = 128;
  double learning_rate = 1e-3;
  int hidden_width = 64;
  std::uint64_t seed = 0;
  double validation_fraction = 0.2;

  nlohmann::json ToJson() const;
  static ClassifierConfig FromJson(const nlohmann::json& j);
};

struct ClassifierReport {
  std::vector<double> epoch_loss;
  double train_accuracy = 0.0;
  double heldout_accuracy = 0.0;
};

// Input encoding: standardized continuous block, then the one-hot of every
// categorical feature.
class Classifier {
 public:
  Classifier() = default;
  Classifier(FeatureSchema schema, ad::DenseNet net);

  const FeatureSchema& schema() const { return schema_; }
  const ad::DenseNet& net() const { return net_; }
  ad::DenseNet& mutable_net() { return net_; }
  int input_dim() const;

  Matrix Encode(const Matrix& continuous, const IntMatrix& categorical) const;
  Vector Encode(const Vector& continuous, const IntVector& categorical) const;

  Matrix Logits(const Matrix& encoded) const;
  std::vector<int> PredictEncoded(const Matrix& encoded) const;
  int Predict(const Vector& continuous, const IntVector& categorical) const;
  std::vector<int> Predict(const Dataset& data) const;

 private:
  FeatureSchema schema_;
  ad::DenseNet net_;
};

// Index of the largest logit; ties go to the smallest index.
int ArgMax(const Vector& logits);

// Cross-entropy training with Adam. Throws ContractError when fewer than two
// classes are present and TrainingError on divergence.
std::pair<Classifier, ClassifierReport> TrainClassifier(
    const Dataset& data, const ClassifierConfig& config);

double Accuracy(const Classifier& clf, const Dataset& data);

// Replaces labels with the classifier's predictions.
Dataset Relabel(const Classifier& clf, const Dataset& data);

// argmin_k ||z - means_k||², ties to the smallest index.
int NearestMean(const Vector& z, const Matrix& means);

// Dequantizes once with `seed`, maps through the flow, picks the nearest mean.
int LatentPredict(const FlowModel& flow, const Dequantizer& deq,
                  const Matrix& class_means, const Vector& continuous,
                  const IntVector& categorical, std::uint64_t seed);

}  // namespace ceflow

#endif  // CEFLOW_CLASSIFIER_H_
