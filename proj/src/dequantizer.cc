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

#include "ceflow/dequantizer.h"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ceflow {
namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

double Softplus(double v) {
  return v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
}

}  // namespace

Dequantizer::Dequantizer(std::vector<int> cardinalities, ad::DenseNet net)
    : cardinalities_(std::move(cardinalities)), net_(std::move(net)) {
  int one_hot = 0;
  for (int k : cardinalities_) one_hot += k;
  if (!cardinalities_.empty() &&
      (net_.input_dim() != one_hot ||
       net_.output_dim() != 2 * static_cast<int>(cardinalities_.size()))) {
    throw ShapeError("dequantizer: network must map " + std::to_string(one_hot) +
                     " inputs to " + std::to_string(2 * cardinalities_.size()) +
                     " outputs");
  }
}

Dequantizer Dequantizer::Create(const FeatureSchema& schema, int hidden_width,
                                Rng& rng) {
  if (schema.num_categorical() == 0) return Dequantizer();
  std::vector<int> cards;
  for (const auto& c : schema.categorical) cards.push_back(c.cardinality);
  const int M = schema.num_categorical();
  ad::DenseNet net = ad::DenseNet::Glorot(
      {schema.one_hot_dim(), hidden_width, hidden_width, 2 * M},
      ad::Activation::kRelu, ad::Activation::kIdentity, rng);
  net.mutable_layers().back().weight.setZero();
  return Dequantizer(std::move(cards), std::move(net));
}

Matrix Dequantizer::OneHot(const IntMatrix& codes) const {
  int width = 0;
  for (int k : cardinalities_) width += k;
  Matrix out = Matrix::Zero(codes.rows(), width);
  for (Eigen::Index r = 0; r < codes.rows(); ++r) {
    int offset = 0;
    for (int m = 0; m < num_features(); ++m) {
      const int code = codes(r, m);
      if (code < 0 || code >= cardinalities_[m]) {
        throw ContractError("dequantizer: code " + std::to_string(code) +
                            " invalid for feature " + std::to_string(m));
      }
      out(r, offset + code) = 1.0;
      offset += cardinalities_[m];
    }
  }
  return out;
}

Matrix Dequantizer::DrawNoise(Eigen::Index rows, std::uint64_t seed) const {
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix eps(rows, num_features());
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (int m = 0; m < num_features(); ++m) eps(r, m) = normal(rng);
  }
  return eps;
}

DequantizedBatch Dequantizer::Dequantize(const IntMatrix& codes,
                                         const Matrix& noise) const {
  const int M = num_features();
  if (codes.cols() != M || noise.cols() != M || noise.rows() != codes.rows()) {
    throw ShapeError("dequantize: codes/noise shape mismatch");
  }
  DequantizedBatch out{Matrix(codes.rows(), M), Vector::Zero(codes.rows())};
  if (M == 0) return out;
  const Matrix params = net_.ForwardBatch(OneHot(codes));
  // Keeps u inside (0, 1) when the sigmoid saturates in double precision.
  const double below_one = std::nextafter(1.0, 0.0);
  const double above_zero = std::numeric_limits<double>::min();
  for (Eigen::Index r = 0; r < codes.rows(); ++r) {
    double log_q = 0.0;
    for (int m = 0; m < M; ++m) {
      const double mu = params(r, m);
      const double log_var = params(r, M + m);
      const double eps = noise(r, m);
      const double v = mu + eps * std::exp(0.5 * log_var);
      const double u = std::clamp(1.0 / (1.0 + std::exp(-v)), above_zero, below_one);
      // c + u can round up to c + 1 for c >= 1.
      const double c = codes(r, m);
      out.z(r, m) = std::min(c + u, std::nextafter(c + 1.0, c));
      // log(u(1-u)) = -softplus(-v) - softplus(v)
      log_q += -0.5 * eps * eps - 0.5 * log_var - kHalfLog2Pi + Softplus(-v) +
               Softplus(v);
    }
    out.log_q(r) = log_q;
  }
  return out;
}

std::pair<Vector, double> Dequantizer::Dequantize(const IntVector& codes,
                                                  std::uint64_t seed) const {
  IntMatrix row = codes.transpose();
  DequantizedBatch b = Dequantize(row, DrawNoise(1, seed));
  return {b.z.row(0).transpose(), b.log_q(0)};
}

DequantizedTape Dequantizer::Dequantize(ad::Tape& tape, const IntMatrix& codes,
                                        const Matrix& noise,
                                        std::span<const ad::Var> bound) const {
  const int M = num_features();
  if (M == 0) throw ContractError("dequantize: no categorical features");
  if (codes.cols() != M || noise.cols() != M || noise.rows() != codes.rows()) {
    throw ShapeError("dequantize: codes/noise shape mismatch");
  }
  ad::Var params = net_.Forward(tape, tape.Constant(OneHot(codes)), bound);
  ad::Var mu = tape.SliceCols(params, 0, M);
  ad::Var log_var = tape.SliceCols(params, M, M);
  ad::Var eps = tape.Constant(noise);
  ad::Var v = tape.Add(mu, tape.Mul(eps, tape.Exp(tape.Scale(log_var, 0.5))));
  ad::Var u = tape.Sigmoid(v);
  ad::Var z = tape.Add(tape.Constant(codes.cast<double>()), u);

  Matrix gauss_const(codes.rows(), M);
  gauss_const = (-0.5 * noise.array().square() - kHalfLog2Pi).matrix();
  ad::Var per_coord = tape.Add(tape.Constant(gauss_const), tape.Scale(log_var, -0.5));
  per_coord = tape.Add(per_coord, tape.Softplus(v));
  per_coord = tape.Add(per_coord, tape.Softplus(tape.Scale(v, -1.0)));
  return {z, tape.RowSum(per_coord)};
}

IntVector Quantize(const Vector& z_cat, const FeatureSchema& schema) {
  if (z_cat.size() != schema.num_categorical()) {
    throw ShapeError("quantize: expected " +
                     std::to_string(schema.num_categorical()) + " values");
  }
  IntVector codes(z_cat.size());
  for (Eigen::Index m = 0; m < z_cat.size(); ++m) {
    const double f = std::floor(z_cat(m));
    const int hi = schema.categorical[m].cardinality - 1;
    codes(m) = f <= 0.0 ? 0 : (f >= hi ? hi : static_cast<int>(f));
  }
  return codes;
}

IntMatrix Quantize(const Matrix& z_cat, const FeatureSchema& schema) {
  IntMatrix codes(z_cat.rows(), z_cat.cols());
  for (Eigen::Index r = 0; r < z_cat.rows(); ++r) {
    codes.row(r) = Quantize(Vector(z_cat.row(r).transpose()), schema).transpose();
  }
  return codes;
}

ElboEstimate DequantElbo(const Dequantizer& deq, const IntVector& codes,
                         const std::function<double(const Vector&)>& base_log_density,
                         int samples, std::uint64_t seed) {
  if (samples < 1) throw ContractError("elbo: need at least one sample");
  IntMatrix rows = codes.transpose().replicate(samples, 1);
  DequantizedBatch draws = deq.Dequantize(rows, deq.DrawNoise(samples, seed));
  Vector terms(samples);
  for (int k = 0; k < samples; ++k) {
    terms(k) = base_log_density(draws.z.row(k).transpose()) - draws.log_q(k);
  }
  ElboEstimate est;
  est.mean = terms.mean();
  if (samples > 1) {
    const double var = (terms.array() - est.mean).square().sum() / (samples - 1);
    est.standard_error = std::sqrt(var / samples);
  }
  return est;
}

Vector Merge(const Vector& z_cat, const Vector& x_con) {
  Vector full(z_cat.size() + x_con.size());
  full.head(z_cat.size()) = z_cat;
  full.tail(x_con.size()) = x_con;
  return full;
}

Matrix Merge(const Matrix& z_cat, const Matrix& x_con) {
  if (z_cat.rows() != x_con.rows()) throw ShapeError("merge: row count mismatch");
  Matrix full(z_cat.rows(), z_cat.cols() + x_con.cols());
  full.leftCols(z_cat.cols()) = z_cat;
  full.rightCols(x_con.cols()) = x_con;
  return full;
}

std::pair<Vector, Vector> Unmerge(const Vector& full, int num_categorical) {
  if (num_categorical < 0 || num_categorical > full.size()) {
    throw ShapeError("unmerge: categorical block larger than vector");
  }
  return {full.head(num_categorical), full.tail(full.size() - num_categorical)};
}

std::pair<Matrix, Matrix> Unmerge(const Matrix& full, int num_categorical) {
  if (num_categorical < 0 || num_categorical > full.cols()) {
    throw ShapeError("unmerge: categorical block larger than vector");
  }
  return {full.leftCols(num_categorical),
          full.rightCols(full.cols() - num_categorical)};
}

}  // namespace ceflow
