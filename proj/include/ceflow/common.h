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

#ifndef CEFLOW_COMMON_H_
#define CEFLOW_COMMON_H_

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace ceflow {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using IntMatrix = Eigen::MatrixXi;
using IntVector = Eigen::VectorXi;

// Every stochastic component draws from this engine; std::mt19937_64 output
// is fully specified by the standard, so seeds reproduce across processes.
using Rng = std::mt19937_64;

// Error hierarchy. Each subsystem throws the most specific type so callers
// (and the CLI) can map failures to diagnostics without string matching.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shapes that do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Caller broke an operation's documented precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

// NaN/divergence during optimization.
class TrainingError : public Error {
 public:
  using Error::Error;
};

// Non-finite values produced by an invertible map.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// CSV / schema problems.
class IngestionError : public Error {
 public:
  using Error::Error;
};

// Counterfactual generation could not be set up (e.g. an empty class).
class GenerationSetupError : public Error {
 public:
  using Error::Error;
};

// Derives an independent stream seed from (base, stream) with the splitmix64
// finalizer. Used for per-row and per-repetition seeds.
inline std::uint64_t DeriveSeed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace ceflow

#endif  // CEFLOW_COMMON_H_
