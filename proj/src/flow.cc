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

#include "ceflow/flow.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace ceflow {
namespace {

constexpr double kLog2Pi = 1.83787706640934548356;

Matrix MaskRows(const Vector& mask, Eigen::Index rows) {
  return mask.transpose().replicate(rows, 1);
}

Matrix ClampedScale(const Matrix& raw, double clamp) {
  return (clamp * (raw.array() / clamp).tanh()).matrix();
}

void RequireFinite(const Matrix& values, int layer) {
  if (!values.allFinite()) {
    throw NumericalError("coupling layer " + std::to_string(layer) +
                         " produced non-finite values");
  }
}

Matrix PermuteCols(const Matrix& x, const std::vector<int>& perm) {
  Matrix out(x.rows(), x.cols());
  for (std::size_t j = 0; j < perm.size(); ++j) out.col(j) = x.col(perm[j]);
  return out;
}

Matrix UnpermuteCols(const Matrix& x, const std::vector<int>& perm) {
  Matrix out(x.rows(), x.cols());
  for (std::size_t j = 0; j < perm.size(); ++j) out.col(perm[j]) = x.col(j);
  return out;
}

}  // namespace

Vector CouplingMask(int dim, int layer_index) {
  Vector mask = Vector::Zero(dim);
  if (dim < 2) return mask;
  for (int j = 0; j < dim; ++j) {
    mask(j) = (j % 2 == layer_index % 2) ? 1.0 : 0.0;
  }
  return mask;
}

std::pair<Matrix, Vector> CouplingLayer::Forward(const Matrix& x) const {
  if (x.cols() != dim()) {
    throw ShapeError("coupling: expected dim " + std::to_string(dim()) +
                     ", got " + std::to_string(x.cols()));
  }
  const Matrix m = MaskRows(mask, x.rows());
  const Matrix inv = Matrix::Ones(x.rows(), x.cols()) - m;
  const Matrix xm = x.cwiseProduct(m);
  const Matrix s = ClampedScale(scale_net.ForwardBatch(xm), clamp);
  const Matrix t = translate_net.ForwardBatch(xm);
  Matrix y = xm + inv.cwiseProduct(
                      (x.array() * s.array().exp()).matrix() + t);
  Vector logdet = inv.cwiseProduct(s).rowwise().sum();
  return {std::move(y), std::move(logdet)};
}

Matrix CouplingLayer::Inverse(const Matrix& y) const {
  if (y.cols() != dim()) {
    throw ShapeError("coupling: expected dim " + std::to_string(dim()) +
                     ", got " + std::to_string(y.cols()));
  }
  const Matrix m = MaskRows(mask, y.rows());
  const Matrix inv = Matrix::Ones(y.rows(), y.cols()) - m;
  const Matrix ym = y.cwiseProduct(m);
  const Matrix s = ClampedScale(scale_net.ForwardBatch(ym), clamp);
  const Matrix t = translate_net.ForwardBatch(ym);
  return ym + inv.cwiseProduct(((y - t).array() * (-s.array()).exp()).matrix());
}

// ---------------------------------------------------------------------------

FlowModel::FlowModel(int dim, std::vector<CouplingLayer> layers,
                     std::vector<std::vector<int>> permutations)
    : dim_(dim), layers_(std::move(layers)), permutations_(std::move(permutations)) {
  permutations_.resize(layers_.size());
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const CouplingLayer& l = layers_[i];
    if (l.dim() != dim_) {
      throw ShapeError("flow: layer " + std::to_string(i) + " has dim " +
                       std::to_string(l.dim()));
    }
    if (dim_ >= 2 && (l.mask.minCoeff() != 0.0 || l.mask.maxCoeff() != 1.0)) {
      throw ContractError("flow: layer " + std::to_string(i) +
                          " mask needs both a 0 and a 1");
    }
    if (!(l.clamp > 0.0)) throw ContractError("flow: clamp must be > 0");
    for (const ad::DenseNet* net : {&l.scale_net, &l.translate_net}) {
      if (net->input_dim() != dim_ || net->output_dim() != dim_) {
        throw ShapeError("flow: layer " + std::to_string(i) +
                         " networks must map R^D to R^D");
      }
    }
    const auto& perm = permutations_[i];
    if (!perm.empty()) {
      std::vector<int> sorted = perm;
      std::sort(sorted.begin(), sorted.end());
      std::vector<int> expected(dim_);
      std::iota(expected.begin(), expected.end(), 0);
      if (sorted != expected) {
        throw ContractError("flow: permutation after layer " + std::to_string(i) +
                            " is not a permutation of 0..D-1");
      }
    }
  }
}

FlowModel FlowModel::Create(int dim, const FlowConfig& config, Rng& rng) {
  if (dim < 1) throw ContractError("flow: dimension must be >= 1");
  if (config.layers < 0) throw ContractError("flow: negative layer count");
  const int width = config.hidden_width > 0 ? config.hidden_width
                                            : std::max(64, 8 * dim);
  std::vector<CouplingLayer> layers;
  std::vector<std::vector<int>> perms;
  for (int i = 0; i < config.layers; ++i) {
    CouplingLayer l;
    l.mask = CouplingMask(dim, i);
    l.clamp = config.clamp;
    l.scale_net = ad::DenseNet::Glorot({dim, width, width, dim},
                                       ad::Activation::kRelu,
                                       ad::Activation::kIdentity, rng);
    l.translate_net = ad::DenseNet::Glorot({dim, width, width, dim},
                                           ad::Activation::kRelu,
                                           ad::Activation::kIdentity, rng);
    l.scale_net.mutable_layers().back().weight.setZero();
    l.translate_net.mutable_layers().back().weight.setZero();
    layers.push_back(std::move(l));

    std::vector<int> perm;
    if (i % 2 == 1 && i + 1 < config.layers && dim > 2) {
      perm.resize(dim);
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng);
    }
    perms.push_back(std::move(perm));
  }
  return FlowModel(dim, std::move(layers), std::move(perms));
}

std::pair<Matrix, Vector> FlowModel::Forward(const Matrix& x) const {
  if (x.cols() != dim_) {
    throw ShapeError("flow: expected dim " + std::to_string(dim_) + ", got " +
                     std::to_string(x.cols()));
  }
  Matrix h = x;
  Vector logdet = Vector::Zero(x.rows());
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    auto [y, ld] = layers_[i].Forward(h);
    RequireFinite(y, static_cast<int>(i));
    logdet += ld;
    h = permutations_[i].empty() ? std::move(y) : PermuteCols(y, permutations_[i]);
  }
  return {std::move(h), std::move(logdet)};
}

Matrix FlowModel::Inverse(const Matrix& z) const {
  if (z.cols() != dim_) {
    throw ShapeError("flow: expected dim " + std::to_string(dim_) + ", got " +
                     std::to_string(z.cols()));
  }
  Matrix h = z;
  for (int i = num_layers() - 1; i >= 0; --i) {
    if (!permutations_[i].empty()) h = UnpermuteCols(h, permutations_[i]);
    h = layers_[i].Inverse(h);
    RequireFinite(h, i);
  }
  return h;
}

std::pair<Vector, double> FlowModel::Forward(const Vector& x) const {
  auto [z, logdet] = Forward(Matrix(x.transpose()));
  return {z.row(0).transpose(), logdet(0)};
}

Vector FlowModel::Inverse(const Vector& z) const {
  return Inverse(Matrix(z.transpose())).row(0).transpose();
}

std::vector<ad::Var> FlowModel::Bind(ad::Tape& tape) const {
  std::vector<ad::Var> vars;
  for (const CouplingLayer& l : layers_) {
    for (ad::Var v : l.scale_net.Bind(tape)) vars.push_back(v);
    for (ad::Var v : l.translate_net.Bind(tape)) vars.push_back(v);
  }
  return vars;
}

FlowTape FlowModel::Forward(ad::Tape& tape, ad::Var x,
                            std::span<const ad::Var> bound) const {
  const Eigen::Index rows = tape.value(x).rows();
  if (tape.value(x).cols() != dim_) throw ShapeError("flow: input dim mismatch");
  ad::Var h = x;
  ad::Var logdet = tape.Constant(Matrix::Zero(rows, 1));
  std::size_t offset = 0;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const CouplingLayer& l = layers_[i];
    const std::size_t ns = 2 * l.scale_net.layers().size();
    const std::size_t nt = 2 * l.translate_net.layers().size();
    if (offset + ns + nt > bound.size()) {
      throw ContractError("flow: bound parameter count mismatch");
    }
    const Matrix m = MaskRows(l.mask, rows);
    ad::Var mask = tape.Constant(m);
    ad::Var inv = tape.Constant(Matrix::Ones(rows, dim_) - m);
    ad::Var xm = tape.Mul(h, mask);
    ad::Var s = l.scale_net.Forward(tape, xm, bound.subspan(offset, ns));
    ad::Var t = l.translate_net.Forward(tape, xm, bound.subspan(offset + ns, nt));
    offset += ns + nt;
    s = tape.Scale(tape.Tanh(tape.Scale(s, 1.0 / l.clamp)), l.clamp);
    ad::Var moved = tape.Add(tape.Mul(h, tape.Exp(s)), t);
    h = tape.Add(xm, tape.Mul(inv, moved));
    logdet = tape.Add(logdet, tape.RowSum(tape.Mul(inv, s)));
    if (!permutations_[i].empty()) {
      Matrix p = Matrix::Zero(dim_, dim_);
      for (int j = 0; j < dim_; ++j) p(j, permutations_[i][j]) = 1.0;
      h = tape.Affine(h, tape.Constant(p), tape.Constant(Matrix::Zero(dim_, 1)));
    }
  }
  return {h, logdet};
}

void FlowModel::CollectParameters(const std::string& prefix,
                                  ad::ParameterList& out) {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const std::string base = prefix + "/coupling" + std::to_string(i);
    layers_[i].scale_net.CollectParameters(base + "/scale", out);
    layers_[i].translate_net.CollectParameters(base + "/translate", out);
  }
}

// ---------------------------------------------------------------------------

LatentGMM LatentGMM::Uniform(Matrix means) {
  LatentGMM gmm;
  const auto c = means.rows();
  gmm.means = std::move(means);
  gmm.weights = Vector::Constant(c, c > 0 ? 1.0 / static_cast<double>(c) : 0.0);
  return gmm;
}

Matrix LatentGMM::ComponentLogDensities(const Matrix& z) const {
  if (z.cols() != dim()) throw ShapeError("gmm: latent dim mismatch");
  Matrix out(z.rows(), num_classes());
  const double norm = -0.5 * static_cast<double>(dim()) * kLog2Pi;
  for (int k = 0; k < num_classes(); ++k) {
    out.col(k) = (-0.5 * (z.rowwise() - means.row(k)).rowwise().squaredNorm())
                     .array() +
                 norm;
  }
  return out;
}

double GaussianLogDensity(const Vector& z, const Vector& mean) {
  return -0.5 * (z - mean).squaredNorm() -
         0.5 * static_cast<double>(z.size()) * kLog2Pi;
}

Vector LogSumExpRows(const Matrix& values) {
  Vector out(values.rows());
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    const double m = values.row(r).maxCoeff();
    if (!std::isfinite(m)) {
      out(r) = m;
      continue;
    }
    out(r) = m + std::log((values.row(r).array() - m).exp().sum());
  }
  return out;
}

Vector LogProbConditional(const FlowModel& flow, const LatentGMM& gmm,
                          const Matrix& x, int k) {
  if (k < 0 || k >= gmm.num_classes()) {
    throw ContractError("log_prob: class " + std::to_string(k) + " out of range");
  }
  auto [z, logdet] = flow.Forward(x);
  return gmm.ComponentLogDensities(z).col(k) + logdet;
}

double LogProbConditional(const FlowModel& flow, const LatentGMM& gmm,
                          const Vector& x, int k) {
  return LogProbConditional(flow, gmm, Matrix(x.transpose()), k)(0);
}

Vector LogProbMarginal(const FlowModel& flow, const LatentGMM& gmm,
                       const Matrix& x) {
  auto [z, logdet] = flow.Forward(x);
  Matrix comps = gmm.ComponentLogDensities(z);
  comps.rowwise() += gmm.weights.array().log().matrix().transpose();
  return LogSumExpRows(comps) + logdet;
}

double LogProbMarginal(const FlowModel& flow, const LatentGMM& gmm,
                       const Vector& x) {
  return LogProbMarginal(flow, gmm, Matrix(x.transpose()))(0);
}

}  // namespace ceflow
