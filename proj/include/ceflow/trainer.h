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

#ifndef CEFLOW_TRAINER_H_
#define CEFLOW_TRAINER_H_

// Maximum-likelihood training of the flow and the dequantizer under a frozen
// class-conditional Gaussian-mixture latent.

#include <cstdint>
#include <span>
#include <vector>

#include "ceflow/autodiff.h"
#include "ceflow/data.h"
#include "ceflow/dequantizer.h"
#include "ceflow/flow.h"
#include "json.hpp"

namespace ceflow {

struct TrainConfig {
  int epochs = 100;
  int batch_size = 128;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  double clip_norm = 10.0;
  double clamp = 2.0;
  int layers = 8;
  int hidden_width = 0;  // 0: max(64, 8·D)
  int dequant_hidden_width = 64;
  int k_mc = 1;
  int k_mc_eval = 8;
  double mean_scale = 1.0;
  double validation_fraction = 0.1;
  // Mixture weights from label frequencies instead of 1/C.
  bool empirical_prior = false;

  void Validate() const;
  nlohmann::json ToJson() const;
  static TrainConfig FromJson(const nlohmann::json& j);
};

struct TrainReport {
  std::vector<double> epoch_nll;      // nats per instance
  std::vector<double> epoch_seconds;
  double heldout_nll = 0.0;
  std::size_t heldout_rows = 0;
  std::uint64_t seed = 0;

  nlohmann::json ToJson() const;
};

struct FlowArtifacts {
  FlowModel flow;
  Dequantizer dequantizer;
  LatentGMM gmm;
  TrainReport report;
};

// μ_k = scale · N(0, I_D), drawn from `seed`.
LatentGMM InitGmm(int num_classes, int dim, std::uint64_t seed, double scale);

// Tape inputs for one minibatch.
struct NllInputs {
  const Matrix* continuous = nullptr;   // B × J, standardized
  const IntMatrix* categorical = nullptr;  // B × M
  std::span<const int> labels;
  const Matrix* noise = nullptr;  // B × M dequantization draws
};

// -(1/B) Σ_n [log N(f(x_n); μ_{y_n}, I) + logdet_n - log q(u_n | x_n^cat)]
// as a 1×1 tape node. `flow_bound` and `deq_bound` come from Bind().
ad::Var NllBatch(ad::Tape& tape, const FlowModel& flow,
                 std::span<const ad::Var> flow_bound, const LatentGMM& gmm,
                 const Dequantizer& deq, std::span<const ad::Var> deq_bound,
                 const NllInputs& batch);

// Per-row dequantization bound on -log p(x, y), averaged over `k_mc` noise
// draws, without a tape.
Vector RowNll(const FlowModel& flow, const LatentGMM& gmm,
              const Dequantizer& deq, const Dataset& data, int k_mc,
              std::uint64_t seed);
double MeanNll(const FlowModel& flow, const LatentGMM& gmm,
               const Dequantizer& deq, const Dataset& data, int k_mc,
               std::uint64_t seed);

// Trains on `data` (standardized; labels should be the black-box
// predictions). Holds out `validation_fraction` of rows for the held-out NLL.
// Throws TrainingError on NaN or NLL > 1e6.
FlowArtifacts Train(const Dataset& data, const TrainConfig& config);

}  // namespace ceflow

#endif  // CEFLOW_TRAINER_H_
