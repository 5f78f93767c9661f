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

#include <cmath>
#include <numbers>
#include <vector>

#include "fixtures.h"
#include "gradcheck.h"
#include "gtest/gtest.h"

namespace ceflow {
namespace {

const double kLog2Pi = std::log(2 * std::numbers::pi);

Dataset ContinuousOnly(const Matrix& x, std::vector<int> labels) {
  Dataset ds;
  ds.schema.continuous.clear();
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    ds.schema.continuous.push_back("x" + std::to_string(j));
  }
  ds.schema.target = "y";
  ds.schema.num_classes = 2;
  ds.continuous = x;
  ds.categorical = IntMatrix(x.rows(), 0);
  ds.labels = std::move(labels);
  ds.stats = Standardizer::Identity(static_cast<int>(x.cols()));
  return ds;
}

double BatchLoss(const FlowModel& flow, const LatentGMM& gmm, const Dequantizer& deq,
                 const Matrix& con, const IntMatrix& cat, const std::vector<int>& labels,
                 const Matrix& noise) {
  ad::Tape tape;
  const auto fb = flow.Bind(tape);
  const auto db = deq.empty() ? std::vector<ad::Var>{} : deq.net().Bind(tape);
  const ad::Var loss = NllBatch(tape, flow, fb, gmm, deq, db, {&con, &cat, labels, &noise});
  return tape.value(loss)(0, 0);
}

TEST(InitGmm, DeterministicAndScaled) {
  const LatentGMM a = InitGmm(3, 5, 7, 1.0);
  const LatentGMM b = InitGmm(3, 5, 7, 1.0);
  EXPECT_EQ(a.means, b.means);
  EXPECT_TRUE(InitGmm(3, 5, 7, 0.0).means.isZero());
  EXPECT_NEAR(a.weights.sum(), 1.0, 1e-15);
  EXPECT_DOUBLE_EQ(a.weights(0), 1.0 / 3.0);
  EXPECT_THROW(InitGmm(1, 5, 7, 1.0), ContractError);
  EXPECT_THROW(InitGmm(2, 0, 7, 1.0), ContractError);
}

TEST(InitGmm, PairwiseDistanceConcentrates) {
  double total = 0.0;
  int pairs = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const LatentGMM g = InitGmm(2, 64, seed, 1.0);
    total += (g.means.row(0) - g.means.row(1)).norm();
    ++pairs;
  }
  const double expected = std::sqrt(2.0 * 64.0);
  EXPECT_NEAR(total / pairs, expected, 0.15 * expected);
}

TEST(NllBatch, GaussianAtMode) {
  Rng rng(1);
  const FlowModel flow = FlowModel::Create(3, {0, 0, 2.0}, rng);
  const LatentGMM gmm = LatentGMM::Uniform(Matrix::Zero(2, 3));
  const Dequantizer deq;
  const Matrix con = Matrix::Zero(1, 3);
  const double loss = BatchLoss(flow, gmm, deq, con, IntMatrix(1, 0), {0}, Matrix(1, 0));
  EXPECT_NEAR(loss, 1.5 * kLog2Pi, 1e-12);
}

TEST(NllBatch, DuplicatedBatchSameLoss) {
  const FlowModel flow = testing::RandomFlow(3, 4, 2);
  const LatentGMM gmm = InitGmm(2, 3, 3, 1.0);
  Rng rng(4);
  const Matrix con = testing::Uniform(rng, 3, 3, -2, 2);
  Matrix twice(6, 3);
  twice << con, con;
  const Dequantizer deq;
  const double a = BatchLoss(flow, gmm, deq, con, IntMatrix(3, 0), {0, 1, 1}, Matrix(3, 0));
  const double b = BatchLoss(flow, gmm, deq, twice, IntMatrix(6, 0), {0, 1, 1, 0, 1, 1},
                             Matrix(6, 0));
  EXPECT_NEAR(a, b, 1e-12);
}

TEST(NllBatch, TwoRowHandComputed) {
  Rng rng(1);
  const FlowModel flow = FlowModel::Create(2, {0, 0, 2.0}, rng);
  Matrix means(2, 2);
  means << 0, 0, 1, 2;
  const LatentGMM gmm = LatentGMM::Uniform(means);
  Matrix con(2, 2);
  con << 1, 0, 1, 1;
  // Row 0, class 0: −(½·1 + log 2π); row 1, class 1: −(½·1 + log 2π).
  const double expected = 0.5 + kLog2Pi;
  const Dequantizer deq;
  EXPECT_NEAR(BatchLoss(flow, gmm, deq, con, IntMatrix(2, 0), {0, 1}, Matrix(2, 0)),
              expected, 1e-12);
  EXPECT_THROW(BatchLoss(flow, gmm, deq, con, IntMatrix(2, 0), {0, 2}, Matrix(2, 0)),
               ContractError);
  EXPECT_THROW(BatchLoss(flow, gmm, deq, con, IntMatrix(2, 0), {0}, Matrix(2, 0)),
               ShapeError);
}

// With an identity flow and zero means the categorical block contributes
// exactly its Gaussian term and −log q.
TEST(NllBatch, DequantizationTermsDecompose) {
  const SynthSpec spec;
  Dataset mixed = SynthGenerate(3, 8, spec);
  Rng rng(5);
  const FlowModel flow_full = FlowModel::Create(6, {0, 0, 2.0}, rng);
  const FlowModel flow_con = FlowModel::Create(4, {0, 0, 2.0}, rng);
  Dequantizer deq = Dequantizer::Create(mixed.schema, 8, rng);
  deq.mutable_net().mutable_layers().back().weight.setRandom();
  const Matrix noise = deq.DrawNoise(8, 9);
  const double full = BatchLoss(flow_full, LatentGMM::Uniform(Matrix::Zero(2, 6)), deq,
                                mixed.continuous, mixed.categorical, mixed.labels, noise);
  const double con = BatchLoss(flow_con, LatentGMM::Uniform(Matrix::Zero(2, 4)),
                               Dequantizer(), mixed.continuous, IntMatrix(8, 0),
                               mixed.labels, Matrix(8, 0));
  const DequantizedBatch dq = deq.Dequantize(mixed.categorical, noise);
  double extra = 0.0;
  for (Eigen::Index r = 0; r < 8; ++r) {
    extra += 0.5 * dq.z.row(r).squaredNorm() + kLog2Pi + dq.log_q(r);
  }
  EXPECT_NEAR(full - con, extra / 8.0, 1e-10);
}

TEST(NllBatch, ParameterGradientsMatchFiniteDifferences) {
  const Dataset ds = SynthGenerate(4, 5, SynthSpec{});
  FlowModel flow = testing::RandomFlow(6, 4, 6, 8);
  Rng rng(7);
  Dequantizer deq = Dequantizer::Create(ds.schema, 6, rng);
  deq.mutable_net().mutable_layers().back().weight.setRandom();
  const LatentGMM gmm = InitGmm(2, 6, 8, 1.0);
  const Matrix noise = deq.DrawNoise(5, 10);

  ad::Tape tape;
  std::vector<ad::Var> bound = flow.Bind(tape);
  const std::size_t nf = bound.size();
  for (ad::Var v : deq.net().Bind(tape)) bound.push_back(v);
  std::span<const ad::Var> all(bound);
  const ad::Var loss = NllBatch(tape, flow, all.subspan(0, nf), gmm, deq, all.subspan(nf),
                                {&ds.continuous, &ds.categorical, ds.labels, &noise});
  tape.Backward(loss);

  ad::ParameterList params;
  flow.CollectParameters("flow", params);
  deq.mutable_net().CollectParameters("deq", params);
  ASSERT_EQ(params.size(), bound.size());
  double worst = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    const Matrix g = tape.Gradient(bound[k]);
    // Every parameter of small blocks, a stride through large ones.
    const Eigen::Index stride = std::max<Eigen::Index>(1, g.size() / 7);
    for (Eigen::Index i = 0; i < g.size(); i += stride) {
      double& w = params[k].data[i];
      const double saved = w;
      w = saved + 1e-6;
      const double up = BatchLoss(flow, gmm, deq, ds.continuous, ds.categorical, ds.labels, noise);
      w = saved - 1e-6;
      const double down =
          BatchLoss(flow, gmm, deq, ds.continuous, ds.categorical, ds.labels, noise);
      w = saved;
      const double numeric = (up - down) / 2e-6;
      worst = std::max(worst, std::abs(g.data()[i] - numeric) / std::max(1.0, std::abs(numeric)));
    }
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(Train, ZeroEpochsReturnsIdentityFlow) {
  const Dataset ds = Standardize(SynthGenerate(1, 40, SynthSpec{}));
  TrainConfig config;
  config.epochs = 0;
  config.layers = 2;
  const FlowArtifacts out = Train(ds, config);
  EXPECT_TRUE(out.report.epoch_nll.empty());
  EXPECT_TRUE(std::isfinite(out.report.heldout_nll));
  Rng rng(2);
  const Matrix x = testing::Uniform(rng, 3, 6, -1, 1);
  EXPECT_LT(out.flow.Forward(x).second.cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Train, DeterministicAndImproves) {
  const Dataset ds = Standardize(SynthGenerate(2, 300, SynthSpec{}));
  TrainConfig config;
  config.epochs = 8;
  config.layers = 4;
  config.hidden_width = 32;
  config.seed = 11;
  const FlowArtifacts a = Train(ds, config);
  const FlowArtifacts b = Train(ds, config);
  ASSERT_EQ(a.report.epoch_nll.size(), 8u);
  EXPECT_EQ(a.report.epoch_nll, b.report.epoch_nll);
  for (int l = 0; l < a.flow.num_layers(); ++l) {
    EXPECT_EQ(a.flow.layers()[l].scale_net.layers()[0].weight,
              b.flow.layers()[l].scale_net.layers()[0].weight);
  }
  EXPECT_EQ(a.dequantizer.net().layers()[0].weight, b.dequantizer.net().layers()[0].weight);
  EXPECT_LT(a.report.epoch_nll.back(), a.report.epoch_nll.front());
  EXPECT_EQ(a.report.heldout_rows, 30u);
  EXPECT_EQ(a.report.seed, 11u);
  // Means stay at their initial values.
  EXPECT_EQ(a.gmm.means, InitGmm(2, 6, DeriveSeed(11, 3), 1.0).means);
}

TEST(Train, NonFiniteLossReportsEpochAndBatch) {
  Matrix huge = Matrix::Constant(20, 2, 1e200);
  std::vector<int> labels(20, 0);
  const Dataset ds = ContinuousOnly(huge, labels);
  TrainConfig config;
  config.epochs = 1;
  config.layers = 2;
  try {
    Train(ds, config);
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch 1"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("batch 0"), std::string::npos);
  }
}

TEST(Train, DivergenceThresholdReportsEpoch) {
  Matrix big = Matrix::Constant(20, 2, 3e3);
  const Dataset ds = ContinuousOnly(big, std::vector<int>(20, 1));
  TrainConfig config;
  config.epochs = 1;
  config.layers = 0;
  try {
    Train(ds, config);
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("diverged at epoch 1"), std::string::npos);
  }
}

TEST(TrainConfig, ValidateAndJsonRoundTrip) {
  TrainConfig c;
  c.epochs = 3;
  c.seed = 99;
  c.mean_scale = 0.5;
  const TrainConfig back = TrainConfig::FromJson(c.ToJson());
  EXPECT_EQ(back.ToJson(), c.ToJson());
  TrainConfig bad;
  bad.batch_size = 0;
  EXPECT_THROW(bad.Validate(), ContractError);
  bad = TrainConfig{};
  bad.learning_rate = -1;
  EXPECT_THROW(bad.Validate(), ContractError);
  bad = TrainConfig{};
  bad.k_mc = 0;
  EXPECT_THROW(bad.Validate(), ContractError);
}

TEST(MeanNll, MatchesRowAverageAndIsDeterministic) {
  const Dataset ds = Standardize(SynthGenerate(3, 50, SynthSpec{}));
  Rng rng(1);
  FlowModel flow = testing::RandomFlow(6, 2, 3);
  const Dequantizer deq = Dequantizer::Create(ds.schema, 8, rng);
  const LatentGMM gmm = InitGmm(2, 6, 1, 1.0);
  const Vector rows = RowNll(flow, gmm, deq, ds, 4, 5);
  EXPECT_NEAR(MeanNll(flow, gmm, deq, ds, 4, 5), rows.mean(), 1e-12);
  EXPECT_EQ(RowNll(flow, gmm, deq, ds, 4, 5), rows);
}

}  // namespace
}  // namespace ceflow
