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

#ifndef CEFLOW_AUTODIFF_H_
#define CEFLOW_AUTODIFF_H_

// Batched reverse-mode differentiation over dense matrices, the dense
// feed-forward network built on top of it, and an Adam optimizer.
//
// Every tape value is a matrix whose rows are batch samples. Gradients are
// accumulated in reverse creation order, which makes the backward pass a
// deterministic function of the forward program.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ceflow/common.h"

namespace ceflow::ad {

enum class Activation { kIdentity, kRelu, kTanh, kSigmoid };

std::string ActivationName(Activation activation);
Activation ParseActivation(const std::string& name);

// Handle to a node on a Tape.
struct Var {
  int id = -1;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaves. Constants never receive an adjoint.
  Var Constant(Matrix value);
  Var Parameter(Matrix value);

  // x: B×in, weight: out×in, bias: out×1. Returns x·weightᵀ + biasᵀ.
  Var Affine(Var x, Var weight, Var bias);

  Var Add(Var a, Var b);
  Var Sub(Var a, Var b);
  Var Mul(Var a, Var b);  // elementwise
  Var Scale(Var a, double factor);
  Var AddScalar(Var a, double offset);
  Var Square(Var a);

  Var Relu(Var a);
  Var Tanh(Var a);
  Var Sigmoid(Var a);
  Var Exp(Var a);
  Var Log(Var a);
  Var Softplus(Var a);  // log(1 + e^a), overflow-safe
  Var Activate(Var a, Activation activation);

  Var Sum(Var a);            // -> 1×1
  Var RowSum(Var a);         // B×n -> B×1
  Var RowLogSumExp(Var a);   // B×n -> B×1, max-shifted
  Var ConcatCols(Var a, Var b);
  Var SliceCols(Var a, Eigen::Index start, Eigen::Index count);

  const Matrix& value(Var v) const;

  // Adjoint of `v` after Backward(); zeros when v did not influence the loss.
  Matrix Gradient(Var v) const;

  // Seeds d(loss)/d(loss) = 1 and propagates. `loss` must be 1×1.
  void Backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  enum class Op {
    kLeaf, kAffine, kAdd, kSub, kMul, kScale, kAddScalar, kSquare, kRelu,
    kTanh, kSigmoid, kExp, kLog, kSoftplus, kSum, kRowSum, kRowLogSumExp, kConcatCols,
    kSliceCols,
  };

  struct Node {
    Op op = Op::kLeaf;
    int a = -1;
    int b = -1;
    int c = -1;
    double scalar = 0.0;
    Eigen::Index start = 0;
    bool needs_grad = false;
    Matrix value;
    Matrix adjoint;
  };

  Var Push(Op op, Matrix value, int a, int b = -1, int c = -1);
  const Node& node(Var v) const;
  void Accumulate(int id, const Matrix& contribution);
  void RequireSameShape(Var a, Var b, const char* op) const;

  std::vector<Node> nodes_;
};

// A named view on one trainable parameter matrix owned elsewhere.
struct ParamRef {
  std::string path;
  double* data = nullptr;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;

  Eigen::Map<Matrix> map() const { return Eigen::Map<Matrix>(data, rows, cols); }
};
using ParameterList = std::vector<ParamRef>;

struct DenseLayer {
  Matrix weight;  // out × in
  Matrix bias;    // out × 1
  Activation activation = Activation::kIdentity;
};

class DenseNet {
 public:
  DenseNet() = default;
  // Throws ShapeError when consecutive layer dimensions do not chain.
  explicit DenseNet(std::vector<DenseLayer> layers);

  // Layer sizes {in, h1, ..., out}. Weights are uniform(-a, a) with
  // a = sqrt(6 / (fan_in + fan_out)); biases are zero.
  static DenseNet Glorot(const std::vector<int>& sizes, Activation hidden,
                         Activation output, Rng& rng);

  int input_dim() const;
  int output_dim() const;
  bool empty() const { return layers_.empty(); }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& mutable_layers() { return layers_; }

  Vector Forward(const Vector& input) const;
  // Rows of `input` are samples.
  Matrix ForwardBatch(const Matrix& input) const;

  // Registers every weight and bias as a tape parameter, in the order of
  // CollectParameters().
  std::vector<Var> Bind(Tape& tape) const;
  Var Forward(Tape& tape, Var input, std::span<const Var> bound) const;

  void CollectParameters(const std::string& prefix, ParameterList& out);

  bool AllFinite() const;

 private:
  std::vector<DenseLayer> layers_;
};

// Rescales all gradients so their joint l2 norm is at most `max_norm`.
// Returns the norm before clipping.
double ClipGlobalNorm(std::vector<Matrix>& grads, double max_norm);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class AdamOptimizer {
 public:
  AdamOptimizer(AdamConfig config, const ParameterList& params);

  // Applies one bias-corrected Adam update in place. Throws TrainingError
  // naming the parameter path if any gradient entry is NaN or infinite.
  void Step(const ParameterList& params, std::span<const Matrix> grads);

  std::int64_t step_count() const { return step_; }
  const AdamConfig& config() const { return config_; }
  const std::vector<Matrix>& first_moments() const { return first_; }
  const std::vector<Matrix>& second_moments() const { return second_; }

 private:
  AdamConfig config_;
  std::int64_t step_ = 0;
  std::vector<Matrix> first_;
  std::vector<Matrix> second_;
};

}  // namespace ceflow::ad

#endif  // CEFLOW_AUTODIFF_H_
