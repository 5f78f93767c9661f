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

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "fixtures.h"
#include "gtest/gtest.h"

namespace ceflow {
namespace {

namespace fs = std::filesystem;

ModelBundle FullBundle() {
  static const testing::Pipeline p = testing::TrainPipeline(8, 300, 3);
  ModelBundle b;
  b.schema = p.train.schema;
  b.levels = p.train.levels;
  b.stats = p.train.stats;
  b.mad = Vector::Constant(b.schema.num_continuous(), 0.75);
  b.test_fraction = 0.2;
  b.split_seed = 0xFFFFFFFFFFFFFFFFull;
  b.classifier_config = ClassifierConfig{};
  b.classifier = p.classifier;
  b.classifier_heldout_accuracy = 0.9625;
  b.train_config = TrainConfig{};
  b.flow = p.flow.flow;
  b.dequantizer = p.flow.dequantizer;
  b.gmm = p.flow.gmm;
  b.class_means = p.means;
  b.class_means_seed = 42;
  return b;
}

fs::path TempDir() {
  const fs::path dir = fs::temp_directory_path() /
                       ("ceflow_bundle_test_" + std::to_string(::testing::UnitTest::GetInstance()
                                                                   ->random_seed()));
  fs::create_directories(dir);
  return dir;
}

std::string ReadAll(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

LoadError::Kind KindOf(const std::string& text) {
  try {
    ParseBundle(text);
  } catch (const LoadError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no LoadError";
  return LoadError::Kind::kIo;
}

TEST(Sha256Hex, KnownVectors) {
  EXPECT_EQ(Sha256Hex("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(Sha256Hex(""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST(MatrixJson, RoundTripsExactly) {
  Rng rng(1);
  std::normal_distribution<double> normal(0.0, 1e3);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix m(trial % 4, (trial * 7) % 5);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng) / 3.0;
    const Matrix back = MatrixFromJson(nlohmann::json::parse(MatrixToJson(m).dump()));
    ASSERT_EQ(back.rows(), m.rows());
    ASSERT_EQ(back.cols(), m.cols());
    EXPECT_EQ(back, m);
  }
  EXPECT_THROW(MatrixFromJson({{"rows", 2}, {"cols", 2}, {"data", {1.0, 2.0}}}), ShapeError);
}

TEST(Bundle, SaveLoadSaveIsByteIdentical) {
  const fs::path dir = TempDir();
  const ModelBundle b = FullBundle();
  SaveBundle(b, dir / "a.json");
  const ModelBundle loaded = LoadBundle(dir / "a.json");
  SaveBundle(loaded, dir / "b.json");
  EXPECT_EQ(ReadAll(dir / "a.json"), ReadAll(dir / "b.json"));
  EXPECT_EQ(loaded.split_seed, b.split_seed);
  EXPECT_EQ(loaded.class_means_seed, 42u);
  EXPECT_EQ(loaded.levels.categorical, b.levels.categorical);
  fs::remove_all(dir);
}

TEST(Bundle, LoadedModelsComputeIdenticalOutputs) {
  const ModelBundle b = FullBundle();
  const ModelBundle loaded = ParseBundle(SerializeBundle(b));
  Rng rng(2);
  std::normal_distribution<double> normal;
  Matrix x(10, b.flow->dim());
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = normal(rng);
  const auto f0 = b.flow->Forward(x);
  const auto f1 = loaded.flow->Forward(x);
  EXPECT_EQ(f0.first, f1.first);
  EXPECT_EQ(f0.second, f1.second);
  EXPECT_EQ(loaded.gmm->means, b.gmm->means);
  EXPECT_EQ(loaded.class_means->means, b.class_means->means);
  EXPECT_EQ(loaded.class_means->counts, b.class_means->counts);
  const Matrix encoded = x.leftCols(b.schema.num_continuous());
  Matrix wide = Matrix::Zero(10, b.classifier->net().layers().front().weight.cols());
  wide.leftCols(encoded.cols()) = encoded;
  EXPECT_EQ(loaded.classifier->PredictEncoded(wide), b.classifier->PredictEncoded(wide));
}

TEST(Bundle, PartialBundleRoundTrips) {
  ModelBundle b = FullBundle();
  b.flow.reset();
  b.dequantizer.reset();
  b.gmm.reset();
  b.class_means.reset();
  b.train_config.reset();
  const std::string text = SerializeBundle(b);
  const ModelBundle loaded = ParseBundle(text);
  EXPECT_FALSE(loaded.flow.has_value());
  EXPECT_FALSE(loaded.class_means.has_value());
  EXPECT_TRUE(loaded.classifier.has_value());
  EXPECT_EQ(SerializeBundle(loaded), text);
}

TEST(Bundle, ErrorKinds) {
  const std::string text = SerializeBundle(FullBundle());
  EXPECT_EQ(KindOf(text.substr(0, text.size() / 2)), LoadError::Kind::kTruncated);
  EXPECT_EQ(KindOf("{\"format\": 3"), LoadError::Kind::kTruncated);
  EXPECT_EQ(KindOf("{]"), LoadError::Kind::kMalformed);
  EXPECT_EQ(KindOf("{\"format\": \"other\"}"), LoadError::Kind::kMalformed);

  nlohmann::json doc = nlohmann::json::parse(text);
  doc["version"] = "2";
  EXPECT_EQ(KindOf(doc.dump()), LoadError::Kind::kVersion);
  doc["version"] = 1;
  EXPECT_EQ(KindOf(doc.dump()), LoadError::Kind::kVersion);

  doc = nlohmann::json::parse(text);
  doc["payload"]["mad"][0] = 0.5;
  EXPECT_EQ(KindOf(doc.dump()), LoadError::Kind::kChecksum);

  doc = nlohmann::json::parse(text);
  doc["payload"].erase("schema");
  doc["checksum"] = Sha256Hex(doc["payload"].dump());
  EXPECT_EQ(KindOf(doc.dump()), LoadError::Kind::kMalformed);

  try {
    LoadBundle("/nonexistent/ceflow/model.json");
    ADD_FAILURE();
  } catch (const LoadError& e) {
    EXPECT_EQ(e.kind(), LoadError::Kind::kIo);
    EXPECT_NE(std::string(e.what()).find("/nonexistent/ceflow/model.json"), std::string::npos);
  }
}

TEST(WriteFileAtomic, ReplacesAndLeavesNoTemporary) {
  const fs::path dir = TempDir();
  WriteFileAtomic(dir / "f.txt", "one");
  WriteFileAtomic(dir / "f.txt", "two");
  EXPECT_EQ(ReadAll(dir / "f.txt"), "two");
  int entries = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir)) ++entries;
  EXPECT_EQ(entries, 1);
  EXPECT_THROW(WriteFileAtomic(dir / "missing" / "f.txt", "x"), Error);
  fs::remove_all(dir);
}

}  // namespace
}  // namespace ceflow
