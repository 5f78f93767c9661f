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

#ifndef CEFLOW_BUNDLE_H_
#define CEFLOW_BUNDLE_H_

// Versioned single-file JSON persistence for every trained artifact.
//
// Layout: {"checksum": sha256(payload), "format": "ceflow-bundle",
//          "payload": {...}, "version": "1"}. Keys are sorted and doubles are
// written in shortest round-trip form, so save -> load -> save reproduces
// the same bytes.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "ceflow/cegen.h"
#include "ceflow/classifier.h"
#include "ceflow/data.h"
#include "ceflow/dequantizer.h"
#include "ceflow/flow.h"
#include "ceflow/trainer.h"
#include "json.hpp"

namespace ceflow {

inline constexpr char kBundleFormat[] = "ceflow-bundle";
inline constexpr char kBundleVersion[] = "1";

class LoadError : public Error {
 public:
  enum class Kind { kIo, kTruncated, kMalformed, kVersion, kChecksum };
  LoadError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

struct ModelBundle {
  FeatureSchema schema;
  LevelMap levels;
  Standardizer stats;
  Vector mad;  // training-split median absolute deviation, raw units
  double test_fraction = 0.2;
  std::uint64_t split_seed = 0;

  std::optional<ClassifierConfig> classifier_config;
  std::optional<Classifier> classifier;
  double classifier_heldout_accuracy = 0.0;

  std::optional<TrainConfig> train_config;
  std::optional<FlowModel> flow;
  std::optional<Dequantizer> dequantizer;
  std::optional<LatentGMM> gmm;

  std::optional<ClassMeans> class_means;
  std::uint64_t class_means_seed = 0;
};

nlohmann::json MatrixToJson(const Matrix& m);
Matrix MatrixFromJson(const nlohmann::json& j);

nlohmann::json BundleToJson(const ModelBundle& bundle);
ModelBundle BundleFromJson(const nlohmann::json& payload);

// Exact bytes written by SaveBundle.
std::string SerializeBundle(const ModelBundle& bundle);
ModelBundle ParseBundle(const std::string& text);

// Writes to a temporary sibling and renames it into place.
void SaveBundle(const ModelBundle& bundle, const std::filesystem::path& path);
ModelBundle LoadBundle(const std::filesystem::path& path);

// Atomic text write used for every artifact file.
void WriteFileAtomic(const std::filesystem::path& path, const std::string& text);

std::string Sha256Hex(const std::string& data);

}  // namespace ceflow

#endif  // CEFLOW_BUNDLE_H_
