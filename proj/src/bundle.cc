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

#include "ceflow/bundle.h"

#include <openssl/evp.h>
#include <unistd.h>

#include <fstream>
#include <sstream>
#include <vector>

namespace ceflow {
namespace {

using nlohmann::json;

json VectorToJson(const Vector& v) {
  return json(std::vector<double>(v.data(), v.data() + v.size()));
}

Vector VectorFromJson(const json& j) {
  const auto values = j.get<std::vector<double>>();
  Vector v(static_cast<Eigen::Index>(values.size()));
  for (std::size_t i = 0; i < values.size(); ++i) v(i) = values[i];
  return v;
}

json NetToJson(const ad::DenseNet& net) {
  json layers = json::array();
  for (const ad::DenseLayer& l : net.layers()) {
    layers.push_back({{"activation", ad::ActivationName(l.activation)},
                      {"weight", MatrixToJson(l.weight)},
                      {"bias", MatrixToJson(l.bias)}});
  }
  return {{"layers", layers}};
}

ad::DenseNet NetFromJson(const json& j) {
  std::vector<ad::DenseLayer> layers;
  for (const json& l : j.at("layers")) {
    layers.push_back({MatrixFromJson(l.at("weight")), MatrixFromJson(l.at("bias")),
                      ad::ParseActivation(l.at("activation").get<std::string>())});
  }
  return ad::DenseNet(std::move(layers));
}

json FlowToJson(const FlowModel& flow) {
  json layers = json::array();
  for (const CouplingLayer& l : flow.layers()) {
    layers.push_back({{"mask", VectorToJson(l.mask)},
                      {"clamp", l.clamp},
                      {"scale_net", NetToJson(l.scale_net)},
                      {"translate_net", NetToJson(l.translate_net)}});
  }
  return {{"dim", flow.dim()},
          {"layers", layers},
          {"permutations", flow.permutations()}};
}

FlowModel FlowFromJson(const json& j) {
  std::vector<CouplingLayer> layers;
  for (const json& l : j.at("layers")) {
    CouplingLayer c;
    c.mask = VectorFromJson(l.at("mask"));
    c.clamp = l.at("clamp").get<double>();
    c.scale_net = NetFromJson(l.at("scale_net"));
    c.translate_net = NetFromJson(l.at("translate_net"));
    layers.push_back(std::move(c));
  }
  return FlowModel(j.at("dim").get<int>(), std::move(layers),
                   j.at("permutations").get<std::vector<std::vector<int>>>());
}

[[noreturn]] void Fail(LoadError::Kind kind, const std::string& what) {
  throw LoadError(kind, "bundle: " + what);
}

}  // namespace

json MatrixToJson(const Matrix& m) {
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

Matrix MatrixFromJson(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (rows < 0 || cols < 0 || static_cast<Eigen::Index>(data.size()) != rows * cols) {
    throw ShapeError("matrix: data length does not match shape");
  }
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[r * cols + c];
  }
  return m;
}

json BundleToJson(const ModelBundle& b) {
  json p;
  p["schema"] = b.schema.ToJson();
  p["levels"] = {{"categorical", b.levels.categorical}, {"target", b.levels.target}};
  p["standardizer"] = {{"mean", VectorToJson(b.stats.mean)},
                       {"scale", VectorToJson(b.stats.scale)}};
  p["mad"] = VectorToJson(b.mad);
  p["split"] = {{"test_fraction", b.test_fraction}, {"seed", b.split_seed}};
  if (b.classifier) {
    p["classifier"] = {{"net", NetToJson(b.classifier->net())},
                       {"heldout_accuracy", b.classifier_heldout_accuracy}};
    if (b.classifier_config) p["classifier"]["config"] = b.classifier_config->ToJson();
  }
  if (b.flow) {
    p["flow"] = FlowToJson(*b.flow);
    if (b.train_config) p["train_config"] = b.train_config->ToJson();
  }
  if (b.dequantizer) {
    p["dequantizer"] = {{"cardinalities", b.dequantizer->cardinalities()},
                        {"net", NetToJson(b.dequantizer->net())}};
  }
  if (b.gmm) {
    p["gmm"] = {{"means", MatrixToJson(b.gmm->means)},
                {"weights", VectorToJson(b.gmm->weights)}};
  }
  if (b.class_means) {
    p["class_means"] = {{"means", MatrixToJson(b.class_means->means)},
                        {"counts", b.class_means->counts},
                        {"seed", b.class_means_seed}};
  }
  return p;
}

ModelBundle BundleFromJson(const json& p) {
  ModelBundle b;
  b.schema = FeatureSchema::FromJson(p.at("schema"));
  b.levels.categorical =
      p.at("levels").at("categorical").get<std::vector<std::vector<std::string>>>();
  b.levels.target = p.at("levels").at("target").get<std::vector<std::string>>();
  b.stats.mean = VectorFromJson(p.at("standardizer").at("mean"));
  b.stats.scale = VectorFromJson(p.at("standardizer").at("scale"));
  b.mad = VectorFromJson(p.at("mad"));
  b.test_fraction = p.at("split").at("test_fraction").get<double>();
  b.split_seed = p.at("split").at("seed").get<std::uint64_t>();
  if (p.contains("classifier")) {
    const json& c = p.at("classifier");
    b.classifier = Classifier(b.schema, NetFromJson(c.at("net")));
    b.classifier_heldout_accuracy = c.at("heldout_accuracy").get<double>();
    if (c.contains("config")) b.classifier_config = ClassifierConfig::FromJson(c.at("config"));
  }
  if (p.contains("flow")) {
    b.flow = FlowFromJson(p.at("flow"));
    if (p.contains("train_config")) b.train_config = TrainConfig::FromJson(p.at("train_config"));
  }
  if (p.contains("dequantizer")) {
    const json& d = p.at("dequantizer");
    auto cards = d.at("cardinalities").get<std::vector<int>>();
    b.dequantizer = cards.empty() ? Dequantizer()
                                  : Dequantizer(std::move(cards), NetFromJson(d.at("net")));
  }
  if (p.contains("gmm")) {
    b.gmm = LatentGMM{MatrixFromJson(p.at("gmm").at("means")),
                      VectorFromJson(p.at("gmm").at("weights"))};
  }
  if (p.contains("class_means")) {
    const json& m = p.at("class_means");
    b.class_means = ClassMeans{MatrixFromJson(m.at("means")),
                               m.at("counts").get<std::vector<std::size_t>>()};
    b.class_means_seed = m.at("seed").get<std::uint64_t>();
  }
  return b;
}

std::string Sha256Hex(const std::string& data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &length, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256: digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  for (unsigned int i = 0; i < length; ++i) {
    hex.push_back(kHex[digest[i] >> 4]);
    hex.push_back(kHex[digest[i] & 0xF]);
  }
  return hex;
}

std::string SerializeBundle(const ModelBundle& bundle) {
  const json payload = BundleToJson(bundle);
  json doc;
  doc["format"] = kBundleFormat;
  doc["version"] = kBundleVersion;
  doc["checksum"] = Sha256Hex(payload.dump());
  doc["payload"] = payload;
  return doc.dump(1) + "\n";
}

ModelBundle ParseBundle(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    const bool at_end = std::string(e.what()).find("end of input") != std::string::npos;
    Fail(at_end ? LoadError::Kind::kTruncated : LoadError::Kind::kMalformed,
         std::string(at_end ? "file is truncated: " : "malformed JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("format") ||
      doc["format"] != kBundleFormat) {
    Fail(LoadError::Kind::kMalformed, "not a model bundle");
  }
  if (!doc.contains("version") || !doc["version"].is_string()) {
    Fail(LoadError::Kind::kVersion, "missing version string");
  }
  const std::string version = doc["version"].get<std::string>();
  if (version != kBundleVersion) {
    Fail(LoadError::Kind::kVersion, "unsupported version '" + version +
                                        "' (this build reads '" + kBundleVersion + "')");
  }
  if (!doc.contains("payload") || !doc.contains("checksum")) {
    Fail(LoadError::Kind::kMalformed, "missing payload or checksum");
  }
  const json& payload = doc["payload"];
  if (doc["checksum"] != Sha256Hex(payload.dump())) {
    Fail(LoadError::Kind::kChecksum, "checksum mismatch");
  }
  try {
    return BundleFromJson(payload);
  } catch (const json::exception& e) {
    Fail(LoadError::Kind::kMalformed, e.what());
  } catch (const ShapeError& e) {
    Fail(LoadError::Kind::kMalformed, e.what());
  }
}

void WriteFileAtomic(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << text;
    out.flush();
    if (!out) throw Error("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw Error("cannot rename " + tmp.string() + " to " + path.string() + ": " +
                ec.message());
  }
}

void SaveBundle(const ModelBundle& bundle, const std::filesystem::path& path) {
  WriteFileAtomic(path, SerializeBundle(bundle));
}

ModelBundle LoadBundle(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) Fail(LoadError::Kind::kIo, "cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return ParseBundle(buffer.str());
}

}  // namespace ceflow
