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

// Shared model fixtures for tests.

#ifndef CEFLOW_TESTS_FIXTURES_H_
#define CEFLOW_TESTS_FIXTURES_H_

#include <cstdint>
#include <random>

#include "ceflow/cegen.h"
#include "ceflow/classifier.h"
#include "ceflow/data.h"
#include "ceflow/flow.h"
#include "ceflow/trainer.h"

namespace ceflow::testing {

// Gives every coupling net random final weights and biases so the flow is
// far from identity.
inline void RandomizeFlow(FlowModel& flow, std::uint64_t seed, double scale = 0.3) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-scale, scale);
  for (auto& layer : flow.mutable_layers()) {
    for (ad::DenseNet* net : {&layer.scale_net, &layer.translate_net}) {
      auto& last = net->mutable_layers().back();
      for (Eigen::Index i = 0; i < last.weight.size(); ++i) last.weight.data()[i] = u(rng);
      for (Eigen::Index i = 0; i < last.bias.size(); ++i) last.bias.data()[i] = u(rng);
    }
  }
}

inline FlowModel RandomFlow(int dim, int layers, std::uint64_t seed, int width = 16) {
  Rng rng(seed);
  FlowModel flow = FlowModel::Create(dim, {layers, width, 2.0}, rng);
  RandomizeFlow(flow, DeriveSeed(seed, 1));
  return flow;
}

// A small end-to-end pipeline on the default synthetic data.
struct Pipeline {
  Dataset train;
  Dataset test;
  Classifier classifier;
  FlowArtifacts flow;
  ClassMeans means;
  Vector mad;
};

inline Pipeline TrainPipeline(std::uint64_t seed, std::size_t n = 600,
                              int flow_epochs = 15) {
  Pipeline p;
  const Dataset raw = SynthGenerate(seed, n, SynthSpec{});
  auto [train_raw, test_raw] = Split(raw, 0.2, DeriveSeed(seed, 1));
  const Standardizer stats = Standardizer::Fit(train_raw.continuous, raw.schema);
  p.mad = Vector::Ones(raw.schema.num_continuous());
  p.train = ApplyStandardization(train_raw, stats);
  p.test = ApplyStandardization(test_raw, stats);
  ClassifierConfig cc;
  cc.epochs = 30;
  cc.hidden_width = 16;
  cc.seed = DeriveSeed(seed, 2);
  p.classifier = TrainClassifier(p.train, cc).first;
  TrainConfig tc;
  tc.epochs = flow_epochs;
  tc.hidden_width = 32;
  tc.dequant_hidden_width = 16;
  tc.layers = 4;
  tc.seed = DeriveSeed(seed, 3);
  p.flow = Train(Relabel(p.classifier, p.train), tc);
  p.means = ComputeClassMeans(p.flow.flow, p.flow.dequantizer, p.classifier, p.train,
                              DeriveSeed(seed, 4));
  return p;
}

}  // namespace ceflow::testing

#endif  // CEFLOW_TESTS_FIXTURES_H_
