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

#include "ceflow/autodiff.h"

#include <cmath>
#include <sstream>
#include <utility>

namespace ceflow::ad {
namespace {

std::string ShapeString(const Matrix& m) {
  std::ostringstream out;
  out << m.rows() << "x" << m.cols();
  return out.str();
}

Matrix ApplyActivation(Matrix z, Activation activation) {
  switch (activation) {
    case Activation::kIdentity:
      return z;
    case Activation::kRelu:
      return z.cwiseMax(0.0);
    case Activation::kTanh:
      return z.array().tanh().matrix();
    case Activation::kSigmoid:
      return (1.0 / (1.0 + (-z.array()).exp())).matrix();
  }
  return z;
}

}  // namespace

std::string ActivationName(Activation activation) {
  switch (activation) {
    case Activation::kIdentity:
      return "identity";
    case Activation::kRelu:
      return "relu";
    case Activation::kTanh:
      return "tanh";
    case Activation::kSigmoid:
      return "sigmoid";
  }
  return "identity";
}

Activation ParseActivation(const std::string& name) {
  if (name == "identity") return Activation::kIdentity;
  if (name == "relu") return Activation::kRelu;
  if (name == "tanh") return Activation::kTanh;
  if (name == "sigmoid") return Activation::kSigmoid;
  throw ContractError("unknown activation '" + name + "'");
}

// ---------------------------------------------------------------------------
// Tape

Var Tape::Push(Op op, Matrix value, int a, int b, int c) {
  Node n;
  n.op = op;
  n.a = a;
  n.b = b;
  n.c = c;
  n.needs_grad = (a >= 0 && nodes_[a].needs_grad) ||
                 (b >= 0 && nodes_[b].needs_grad) ||
                 (c >= 0 && nodes_[c].needs_grad);
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

const Tape::Node& Tape::node(Var v) const {
  if (v.id < 0 || v.id >= static_cast<int>(nodes_.size())) {
    throw ContractError("variable does not belong to this tape");
  }
  return nodes_[v.id];
}

const Matrix& Tape::value(Var v) const { return node(v).value; }

void Tape::RequireSameShape(Var a, Var b, const char* op) const {
  const Matrix& x = value(a);
  const Matrix& y = value(b);
  if (x.rows() != y.rows() || x.cols() != y.cols()) {
    throw ShapeError(std::string(op) + ": operand shapes " + ShapeString(x) +
                     " and " + ShapeString(y) + " differ");
  }
}

Var Tape::Constant(Matrix value) {
  Var v = Push(Op::kLeaf, std::move(value), -1);
  return v;
}

Var Tape::Parameter(Matrix value) {
  Var v = Push(Op::kLeaf, std::move(value), -1);
  nodes_[v.id].needs_grad = true;
  return v;
}

Var Tape::Affine(Var x, Var weight, Var bias) {
  const Matrix& xv = value(x);
  const Matrix& w = value(weight);
  const Matrix& b = value(bias);
  if (xv.cols() != w.cols() || b.rows() != w.rows() || b.cols() != 1) {
    throw ShapeError("affine: input " + ShapeString(xv) + ", weight " +
                     ShapeString(w) + ", bias " + ShapeString(b));
  }
  Matrix out = xv * w.transpose();
  out.rowwise() += b.col(0).transpose();
  return Push(Op::kAffine, std::move(out), x.id, weight.id, bias.id);
}

Var Tape::Add(Var a, Var b) {
  RequireSameShape(a, b, "add");
  return Push(Op::kAdd, value(a) + value(b), a.id, b.id);
}

Var Tape::Sub(Var a, Var b) {
  RequireSameShape(a, b, "sub");
  return Push(Op::kSub, value(a) - value(b), a.id, b.id);
}

Var Tape::Mul(Var a, Var b) {
  RequireSameShape(a, b, "mul");
  return Push(Op::kMul, value(a).cwiseProduct(value(b)), a.id, b.id);
}

Var Tape::Scale(Var a, double factor) {
  Var v = Push(Op::kScale, value(a) * factor, a.id);
  nodes_[v.id].scalar = factor;
  return v;
}

Var Tape::AddScalar(Var a, double offset) {
  return Push(Op::kAddScalar, (value(a).array() + offset).matrix(), a.id);
}

Var Tape::Square(Var a) {
  return Push(Op::kSquare, value(a).array().square().matrix(), a.id);
}

Var Tape::Relu(Var a) {
  return Push(Op::kRelu, ApplyActivation(value(a), Activation::kRelu), a.id);
}

Var Tape::Tanh(Var a) {
  return Push(Op::kTanh, ApplyActivation(value(a), Activation::kTanh), a.id);
}

Var Tape::Sigmoid(Var a) {
  return Push(Op::kSigmoid, ApplyActivation(value(a), Activation::kSigmoid),
              a.id);
}

Var Tape::Exp(Var a) {
  return Push(Op::kExp, value(a).array().exp().matrix(), a.id);
}

Var Tape::Log(Var a) {
  return Push(Op::kLog, value(a).array().log().matrix(), a.id);
}

Var Tape::Softplus(Var a) {
  const Matrix& x = value(a);
  Matrix out = x.unaryExpr([](double v) {
    return v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
  });
  return Push(Op::kSoftplus, std::move(out), a.id);
}

Var Tape::Activate(Var a, Activation activation) {
  switch (activation) {
    case Activation::kIdentity:
      return a;
    case Activation::kRelu:
      return Relu(a);
    case Activation::kTanh:
      return Tanh(a);
    case Activation::kSigmoid:
      return Sigmoid(a);
  }
  return a;
}

Var Tape::Sum(Var a) {
  Matrix out(1, 1);
  out(0, 0) = value(a).sum();
  return Push(Op::kSum, std::move(out), a.id);
}

Var Tape::RowSum(Var a) {
  return Push(Op::kRowSum, value(a).rowwise().sum(), a.id);
}

Var Tape::RowLogSumExp(Var a) {
  const Matrix& x = value(a);
  Matrix out(x.rows(), 1);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double m = x.row(i).maxCoeff();
    out(i, 0) = m + std::log((x.row(i).array() - m).exp().sum());
  }
  return Push(Op::kRowLogSumExp, std::move(out), a.id);
}

Var Tape::ConcatCols(Var a, Var b) {
  const Matrix& x = value(a);
  const Matrix& y = value(b);
  if (x.rows() != y.rows()) {
    throw ShapeError("concat: row counts " + ShapeString(x) + " and " +
                     ShapeString(y) + " differ");
  }
  Matrix out(x.rows(), x.cols() + y.cols());
  out.leftCols(x.cols()) = x;
  out.rightCols(y.cols()) = y;
  return Push(Op::kConcatCols, std::move(out), a.id, b.id);
}

Var Tape::SliceCols(Var a, Eigen::Index start, Eigen::Index count) {
  const Matrix& x = value(a);
  if (start < 0 || count < 0 || start + count > x.cols()) {
    throw ShapeError("slice: columns [" + std::to_string(start) + ", " +
                     std::to_string(start + count) + ") out of range for " +
                     ShapeString(x));
  }
  Var v = Push(Op::kSliceCols, x.middleCols(start, count), a.id);
  nodes_[v.id].start = start;
  return v;
}

void Tape::Accumulate(int id, const Matrix& contribution) {
  Node& n = nodes_[id];
  if (!n.needs_grad) return;
  if (n.adjoint.size() == 0) {
    n.adjoint = contribution;
  } else {
    n.adjoint += contribution;
  }
}

Matrix Tape::Gradient(Var v) const {
  const Node& n = node(v);
  if (n.adjoint.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.adjoint;
}

void Tape::Backward(Var loss) {
  const Node& root = node(loss);
  if (root.value.rows() != 1 || root.value.cols() != 1) {
    throw ContractError("backward: loss must be a scalar, got " +
                        ShapeString(root.value));
  }
  for (Node& n : nodes_) n.adjoint.resize(0, 0);
  nodes_[loss.id].adjoint = Matrix::Ones(1, 1);

  for (int id = loss.id; id >= 0; --id) {
    if (!nodes_[id].needs_grad || nodes_[id].adjoint.size() == 0) continue;
    const Node& n = nodes_[id];
    const Matrix& dy = n.adjoint;
    switch (n.op) {
      case Op::kLeaf:
        break;
      case Op::kAffine: {
        const Matrix& x = nodes_[n.a].value;
        const Matrix& w = nodes_[n.b].value;
        if (nodes_[n.a].needs_grad) Accumulate(n.a, dy * w);
        if (nodes_[n.b].needs_grad) Accumulate(n.b, dy.transpose() * x);
        if (nodes_[n.c].needs_grad) {
          Accumulate(n.c, dy.colwise().sum().transpose());
        }
        break;
      }
      case Op::kAdd:
        Accumulate(n.a, dy);
        Accumulate(n.b, dy);
        break;
      case Op::kSub:
        Accumulate(n.a, dy);
        if (nodes_[n.b].needs_grad) Accumulate(n.b, -dy);
        break;
      case Op::kMul:
        if (nodes_[n.a].needs_grad) {
          Accumulate(n.a, dy.cwiseProduct(nodes_[n.b].value));
        }
        if (nodes_[n.b].needs_grad) {
          Accumulate(n.b, dy.cwiseProduct(nodes_[n.a].value));
        }
        break;
      case Op::kScale:
        Accumulate(n.a, dy * n.scalar);
        break;
      case Op::kAddScalar:
        Accumulate(n.a, dy);
        break;
      case Op::kSquare:
        Accumulate(n.a, 2.0 * dy.cwiseProduct(nodes_[n.a].value));
        break;
      case Op::kRelu: {
        const Matrix& x = nodes_[n.a].value;
        Accumulate(n.a, (x.array() > 0.0).select(dy.array(), 0.0).matrix());
        break;
      }
      case Op::kTanh:
        Accumulate(n.a,
                   (dy.array() * (1.0 - n.value.array().square())).matrix());
        break;
      case Op::kSigmoid:
        Accumulate(n.a, (dy.array() * n.value.array() *
                         (1.0 - n.value.array()))
                            .matrix());
        break;
      case Op::kExp:
        Accumulate(n.a, dy.cwiseProduct(n.value));
        break;
      case Op::kLog:
        Accumulate(n.a, dy.cwiseQuotient(nodes_[n.a].value));
        break;
      case Op::kSoftplus: {
        const Matrix& x = nodes_[n.a].value;
        Accumulate(n.a, (dy.array() / (1.0 + (-x.array()).exp())).matrix());
        break;
      }
      case Op::kSum: {
        const Matrix& x = nodes_[n.a].value;
        Accumulate(n.a, Matrix::Constant(x.rows(), x.cols(), dy(0, 0)));
        break;
      }
      case Op::kRowSum: {
        const Matrix& x = nodes_[n.a].value;
        Accumulate(n.a, dy.replicate(1, x.cols()));
        break;
      }
      case Op::kRowLogSumExp: {
        const Matrix& x = nodes_[n.a].value;
        Matrix softmax = (x.colwise() - n.value.col(0)).array().exp().matrix();
        Accumulate(n.a, (softmax.array().colwise() * dy.col(0).array()).matrix());
        break;
      }
      case Op::kConcatCols: {
        const Eigen::Index left = nodes_[n.a].value.cols();
        const Eigen::Index right = nodes_[n.b].value.cols();
        if (nodes_[n.a].needs_grad) Accumulate(n.a, dy.leftCols(left));
        if (nodes_[n.b].needs_grad) Accumulate(n.b, dy.rightCols(right));
        break;
      }
      case Op::kSliceCols: {
        const Matrix& x = nodes_[n.a].value;
        Matrix full = Matrix::Zero(x.rows(), x.cols());
        full.middleCols(n.start, dy.cols()) = dy;
        Accumulate(n.a, full);
        break;
      }
    }
  }
}

// ---------------------------------------------------------------------------
// DenseNet

DenseNet::DenseNet(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const DenseLayer& l = layers_[i];
    if (l.bias.rows() != l.weight.rows() || l.bias.cols() != 1) {
      throw ShapeError("layer " + std::to_string(i) + ": bias " +
                       ShapeString(l.bias) + " does not match weight " +
                       ShapeString(l.weight));
    }
    if (i > 0 && layers_[i - 1].weight.rows() != l.weight.cols()) {
      throw ShapeError("layer " + std::to_string(i) + " expects input dim " +
                       std::to_string(l.weight.cols()) + " but layer " +
                       std::to_string(i - 1) + " outputs " +
                       std::to_string(layers_[i - 1].weight.rows()));
    }
  }
}

DenseNet DenseNet::Glorot(const std::vector<int>& sizes, Activation hidden,
                          Activation output, Rng& rng) {
  if (sizes.size() < 2) throw ContractError("dense net needs at least 2 sizes");
  std::vector<DenseLayer> layers;
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    const int fan_in = sizes[i];
    const int fan_out = sizes[i + 1];
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> uniform(-limit, limit);
    DenseLayer layer;
    layer.weight.resize(fan_out, fan_in);
    for (Eigen::Index r = 0; r < fan_out; ++r) {
      for (Eigen::Index c = 0; c < fan_in; ++c) layer.weight(r, c) = uniform(rng);
    }
    layer.bias = Matrix::Zero(fan_out, 1);
    layer.activation = (i + 2 == sizes.size()) ? output : hidden;
    layers.push_back(std::move(layer));
  }
  return DenseNet(std::move(layers));
}

int DenseNet::input_dim() const {
  return layers_.empty() ? 0 : static_cast<int>(layers_.front().weight.cols());
}

int DenseNet::output_dim() const {
  return layers_.empty() ? 0 : static_cast<int>(layers_.back().weight.rows());
}

Vector DenseNet::Forward(const Vector& input) const {
  Matrix row = input.transpose();
  return ForwardBatch(row).row(0).transpose();
}

Matrix DenseNet::ForwardBatch(const Matrix& input) const {
  if (!layers_.empty() && input.cols() != input_dim()) {
    throw ShapeError("dense net expects input dim " +
                     std::to_string(input_dim()) + ", got " +
                     std::to_string(input.cols()));
  }
  Matrix h = input;
  for (const DenseLayer& l : layers_) {
    Matrix z = h * l.weight.transpose();
    z.rowwise() += l.bias.col(0).transpose();
    h = ApplyActivation(std::move(z), l.activation);
  }
  return h;
}

std::vector<Var> DenseNet::Bind(Tape& tape) const {
  std::vector<Var> vars;
  vars.reserve(2 * layers_.size());
  for (const DenseLayer& l : layers_) {
    vars.push_back(tape.Parameter(l.weight));
    vars.push_back(tape.Parameter(l.bias));
  }
  return vars;
}

Var DenseNet::Forward(Tape& tape, Var input, std::span<const Var> bound) const {
  if (bound.size() != 2 * layers_.size()) {
    throw ContractError("dense net: bound parameter count mismatch");
  }
  Var h = input;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = tape.Affine(h, bound[2 * i], bound[2 * i + 1]);
    h = tape.Activate(h, layers_[i].activation);
  }
  return h;
}

void DenseNet::CollectParameters(const std::string& prefix, ParameterList& out) {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    DenseLayer& l = layers_[i];
    const std::string base = prefix + "/layer" + std::to_string(i);
    out.push_back({base + "/weight", l.weight.data(), l.weight.rows(),
                   l.weight.cols()});
    out.push_back({base + "/bias", l.bias.data(), l.bias.rows(), l.bias.cols()});
  }
}

bool DenseNet::AllFinite() const {
  for (const DenseLayer& l : layers_) {
    if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Optimization

double ClipGlobalNorm(std::vector<Matrix>& grads, double max_norm) {
  double squared = 0.0;
  for (const Matrix& g : grads) squared += g.squaredNorm();
  const double norm = std::sqrt(squared);
  if (norm > max_norm && norm > 0.0) {
    const double factor = max_norm / norm;
    for (Matrix& g : grads) g *= factor;
  }
  return norm;
}

AdamOptimizer::AdamOptimizer(AdamConfig config, const ParameterList& params)
    : config_(config) {
  first_.reserve(params.size());
  second_.reserve(params.size());
  for (const ParamRef& p : params) {
    first_.push_back(Matrix::Zero(p.rows, p.cols));
    second_.push_back(Matrix::Zero(p.rows, p.cols));
  }
}

void AdamOptimizer::Step(const ParameterList& params,
                         std::span<const Matrix> grads) {
  if (params.size() != first_.size() || grads.size() != params.size()) {
    throw ShapeError("adam: parameter/gradient count mismatch");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].rows() != params[i].rows || grads[i].cols() != params[i].cols) {
      throw ShapeError("adam: gradient shape mismatch for " + params[i].path);
    }
    if (!grads[i].allFinite()) {
      throw TrainingError("non-finite gradient for parameter " + params[i].path);
    }
  }
  ++step_;
  const double t = static_cast<double>(step_);
  const double correction1 = 1.0 - std::pow(config_.beta1, t);
  const double correction2 = 1.0 - std::pow(config_.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    first_[i] = config_.beta1 * first_[i] + (1.0 - config_.beta1) * grads[i];
    second_[i] = config_.beta2 * second_[i] +
                 (1.0 - config_.beta2) * grads[i].cwiseProduct(grads[i]);
    auto m_hat = first_[i].array() / correction1;
    auto v_hat = second_[i].array() / correction2;
    params[i].map().array() -=
        config_.learning_rate * m_hat / (v_hat.sqrt() + config_.epsilon);
  }
}

}  // namespace ceflow::ad
