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

#include "ceflow/data.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

namespace ceflow {
namespace {

bool ParseDouble(const std::string& text, double& out) {
  if (text.empty()) return false;
  const char* begin = text.data();
  const char* end = text.data() + text.size();
  while (begin < end && (*begin == ' ' || *begin == '\t')) ++begin;
  while (end > begin && (end[-1] == ' ' || end[-1] == '\t' || end[-1] == '\r')) {
    --end;
  }
  if (begin == end) return false;
  if (*begin == '+') ++begin;
  auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc() && ptr == end && std::isfinite(out);
}

bool ParseInt(const std::string& text, int& out) {
  if (text.empty()) return false;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size();
}

int LookupOrAppend(std::vector<std::string>& levels, const std::string& value) {
  auto it = std::find(levels.begin(), levels.end(), value);
  if (it != levels.end()) return static_cast<int>(it - levels.begin());
  levels.push_back(value);
  return static_cast<int>(levels.size()) - 1;
}

}  // namespace

// ---------------------------------------------------------------------------
// Schema

int FeatureSchema::one_hot_dim() const {
  int total = 0;
  for (const auto& c : categorical) total += c.cardinality;
  return total;
}

void FeatureSchema::Validate() const {
  std::set<std::string> names;
  auto add = [&](const std::string& name) {
    if (name.empty()) throw IngestionError("schema: empty column name");
    if (!names.insert(name).second) {
      throw IngestionError("schema: duplicate column name '" + name + "'");
    }
  };
  for (const auto& n : continuous) add(n);
  for (const auto& c : categorical) {
    add(c.name);
    if (c.cardinality < 2) {
      throw IngestionError("schema: categorical column '" + c.name +
                           "' needs cardinality >= 2");
    }
  }
  add(target);
  if (full_dim() < 1) throw IngestionError("schema: no feature columns");
  if (num_classes < 2) throw IngestionError("schema: need at least 2 classes");
}

nlohmann::json FeatureSchema::ToJson() const {
  nlohmann::json j;
  j["continuous"] = continuous;
  j["categorical"] = nlohmann::json::array();
  for (const auto& c : categorical) {
    j["categorical"].push_back({{"name", c.name}, {"cardinality", c.cardinality}});
  }
  j["target"] = target;
  j["classes"] = num_classes;
  return j;
}

FeatureSchema FeatureSchema::FromJson(const nlohmann::json& j) {
  FeatureSchema schema;
  try {
    schema.continuous = j.value("continuous", std::vector<std::string>{});
    for (const auto& c : j.value("categorical", nlohmann::json::array())) {
      schema.categorical.push_back(
          {c.at("name").get<std::string>(), c.at("cardinality").get<int>()});
    }
    schema.target = j.at("target").get<std::string>();
    schema.num_classes = j.at("classes").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw IngestionError(std::string("schema: ") + e.what());
  }
  schema.Validate();
  return schema;
}

FeatureSchema FeatureSchema::Load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open schema file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IngestionError("schema file " + path.string() + ": " + e.what());
  }
  return FromJson(j);
}

// ---------------------------------------------------------------------------
// Standardizer

Standardizer Standardizer::Identity(int dim) {
  return {Vector::Zero(dim), Vector::Ones(dim)};
}

Standardizer Standardizer::Fit(const Matrix& raw, const FeatureSchema& schema) {
  const int dim = static_cast<int>(raw.cols());
  Standardizer s = Identity(dim);
  if (raw.rows() == 0) throw IngestionError("standardize: empty dataset");
  for (int j = 0; j < dim; ++j) {
    const double mean = raw.col(j).mean();
    const double var = (raw.col(j).array() - mean).square().mean();
    if (!(var > 0.0)) {
      const std::string name =
          j < schema.num_continuous() ? schema.continuous[j] : std::to_string(j);
      throw IngestionError("standardize: column '" + name +
                           "' has zero variance");
    }
    s.mean(j) = mean;
    s.scale(j) = std::sqrt(var);
  }
  return s;
}

Matrix Standardizer::Apply(const Matrix& raw) const {
  return ((raw.rowwise() - mean.transpose()).array().rowwise() /
          scale.transpose().array())
      .matrix();
}

Matrix Standardizer::Invert(const Matrix& standardized) const {
  return ((standardized.array().rowwise() * scale.transpose().array())
              .rowwise() +
          mean.transpose().array())
      .matrix();
}

Vector Standardizer::ApplyRow(const Vector& raw) const {
  return (raw - mean).cwiseQuotient(scale);
}

Vector Standardizer::InvertRow(const Vector& standardized) const {
  return standardized.cwiseProduct(scale) + mean;
}

// ---------------------------------------------------------------------------
// Dataset

Dataset Dataset::Subset(std::span<const std::size_t> rows) const {
  Dataset out;
  out.schema = schema;
  out.stats = stats;
  out.standardized = standardized;
  out.levels = levels;
  out.continuous.resize(static_cast<Eigen::Index>(rows.size()), continuous.cols());
  out.categorical.resize(static_cast<Eigen::Index>(rows.size()), categorical.cols());
  out.labels.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(rows[i]);
    out.continuous.row(i) = continuous.row(r);
    out.categorical.row(i) = categorical.row(r);
    out.labels.push_back(labels[rows[i]]);
  }
  return out;
}

Dataset Dataset::Concat(const Dataset& other) const {
  if (!(schema == other.schema)) throw ContractError("concat: schema mismatch");
  Dataset out = *this;
  out.continuous.resize(continuous.rows() + other.continuous.rows(),
                        continuous.cols());
  out.continuous.topRows(continuous.rows()) = continuous;
  out.continuous.bottomRows(other.continuous.rows()) = other.continuous;
  out.categorical.resize(categorical.rows() + other.categorical.rows(),
                         categorical.cols());
  out.categorical.topRows(categorical.rows()) = categorical;
  out.categorical.bottomRows(other.categorical.rows()) = other.categorical;
  out.labels.insert(out.labels.end(), other.labels.begin(), other.labels.end());
  return out;
}

// ---------------------------------------------------------------------------
// CSV

std::vector<std::vector<std::string>> ParseCsv(std::istream& in) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool in_quotes = false;
  bool row_has_content = false;
  char ch;
  while (in.get(ch)) {
    if (in_quotes) {
      if (ch == '"') {
        if (in.peek() == '"') {
          in.get(ch);
          field.push_back('"');
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(ch);
      }
      continue;
    }
    switch (ch) {
      case '"':
        in_quotes = true;
        row_has_content = true;
        break;
      case ',':
        row.push_back(std::move(field));
        field.clear();
        row_has_content = true;
        break;
      case '\r':
        break;
      case '\n':
        if (row_has_content || !field.empty()) {
          row.push_back(std::move(field));
          rows.push_back(std::move(row));
        }
        field.clear();
        row.clear();
        row_has_content = false;
        break;
      default:
        field.push_back(ch);
        row_has_content = true;
    }
  }
  if (row_has_content || !field.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string CsvEscape(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::string FormatDouble(double value) {
  char buffer[64];
  auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof(buffer), value);
  return std::string(buffer, ptr);
}

Dataset ReadCsv(std::istream& in, const FeatureSchema& schema,
                const LevelMap* known_levels) {
  schema.Validate();
  auto rows = ParseCsv(in);
  if (rows.empty()) throw IngestionError("csv: missing header row");
  const auto& header = rows.front();
  auto column_of = [&](const std::string& name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
      throw IngestionError("csv: missing schema column '" + name + "'");
    }
    return static_cast<std::size_t>(it - header.begin());
  };
  std::vector<std::size_t> con_cols;
  for (const auto& n : schema.continuous) con_cols.push_back(column_of(n));
  std::vector<std::size_t> cat_cols;
  for (const auto& c : schema.categorical) cat_cols.push_back(column_of(c.name));
  const std::size_t target_col = column_of(schema.target);

  const int J = schema.num_continuous();
  const int M = schema.num_categorical();

  // First pass: keep only complete, parseable rows.
  struct Parsed {
    std::vector<double> con;
    std::vector<std::string> cat;
    std::string target;
  };
  std::vector<Parsed> kept;
  std::size_t dropped = 0;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() != header.size()) {
      ++dropped;
      continue;
    }
    Parsed p;
    bool ok = true;
    for (std::size_t c : con_cols) {
      double v;
      if (!ParseDouble(row[c], v)) {
        ok = false;
        break;
      }
      p.con.push_back(v);
    }
    for (std::size_t c : cat_cols) {
      if (!ok) break;
      if (row[c].empty()) ok = false;
      p.cat.push_back(row[c]);
    }
    if (ok && row[target_col].empty()) ok = false;
    if (!ok) {
      ++dropped;
      continue;
    }
    p.target = row[target_col];
    kept.push_back(std::move(p));
  }
  if (kept.empty()) throw IngestionError("csv: no usable rows");

  LevelMap levels;
  if (known_levels != nullptr) levels = *known_levels;
  levels.categorical.resize(M);

  // Integer class ids are used as-is unless string levels are already known.
  bool integer_target = levels.target.empty();
  if (integer_target) {
    for (const auto& p : kept) {
      int v;
      if (!ParseInt(p.target, v)) {
        integer_target = false;
        break;
      }
    }
  }

  Dataset ds;
  ds.schema = schema;
  ds.dropped_rows = dropped;
  ds.continuous.resize(static_cast<Eigen::Index>(kept.size()), J);
  ds.categorical.resize(static_cast<Eigen::Index>(kept.size()), M);
  ds.labels.reserve(kept.size());
  for (std::size_t i = 0; i < kept.size(); ++i) {
    const auto& p = kept[i];
    for (int j = 0; j < J; ++j) ds.continuous(i, j) = p.con[j];
    for (int m = 0; m < M; ++m) {
      const int code = LookupOrAppend(levels.categorical[m], p.cat[m]);
      if (code >= schema.categorical[m].cardinality) {
        throw IngestionError("csv: column '" + schema.categorical[m].name +
                             "' has more than " +
                             std::to_string(schema.categorical[m].cardinality) +
                             " distinct levels");
      }
      ds.categorical(i, m) = code;
    }
    int label;
    if (integer_target) {
      ParseInt(p.target, label);
    } else {
      label = LookupOrAppend(levels.target, p.target);
    }
    if (label < 0 || label >= schema.num_classes) {
      throw IngestionError("csv: target column '" + schema.target +
                           "' value '" + p.target + "' outside " +
                           std::to_string(schema.num_classes) + " classes");
    }
    ds.labels.push_back(label);
  }
  ds.levels = std::move(levels);
  ds.stats = Standardizer::Identity(J);
  return ds;
}

Dataset LoadCsv(const std::filesystem::path& path, const FeatureSchema& schema,
                const LevelMap* known_levels) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open csv file " + path.string());
  return ReadCsv(in, schema, known_levels);
}

void WriteCsv(const Dataset& raw, std::ostream& out) {
  const FeatureSchema& schema = raw.schema;
  std::vector<std::string> header;
  for (const auto& c : schema.categorical) header.push_back(c.name);
  for (const auto& n : schema.continuous) header.push_back(n);
  header.push_back(schema.target);
  for (std::size_t i = 0; i < header.size(); ++i) {
    out << (i ? "," : "") << CsvEscape(header[i]);
  }
  out << "\n";
  const Matrix con = raw.standardized ? raw.stats.Invert(raw.continuous)
                                      : raw.continuous;
  for (std::size_t r = 0; r < raw.size(); ++r) {
    const auto row = static_cast<Eigen::Index>(r);
    bool first = true;
    auto emit = [&](const std::string& s) {
      out << (first ? "" : ",") << CsvEscape(s);
      first = false;
    };
    for (int m = 0; m < schema.num_categorical(); ++m) {
      const int code = raw.categorical(row, m);
      const auto& names = m < static_cast<int>(raw.levels.categorical.size())
                              ? raw.levels.categorical[m]
                              : std::vector<std::string>{};
      emit(code < static_cast<int>(names.size()) ? names[code]
                                                 : std::to_string(code));
    }
    for (int j = 0; j < schema.num_continuous(); ++j) {
      emit(FormatDouble(con(row, j)));
    }
    const int y = raw.labels[r];
    emit(y < static_cast<int>(raw.levels.target.size()) ? raw.levels.target[y]
                                                        : std::to_string(y));
    out << "\n";
  }
}

// ---------------------------------------------------------------------------
// Standardization and splitting

Dataset Standardize(const Dataset& dataset) {
  if (dataset.standardized) return dataset;
  return ApplyStandardization(
      dataset, Standardizer::Fit(dataset.continuous, dataset.schema));
}

Dataset ApplyStandardization(const Dataset& dataset, const Standardizer& stats) {
  Dataset out = Destandardize(dataset);
  if (stats.mean.size() != out.continuous.cols()) {
    throw ShapeError("standardize: statistics cover " +
                     std::to_string(stats.mean.size()) + " columns, data has " +
                     std::to_string(out.continuous.cols()));
  }
  out.continuous = stats.Apply(out.continuous);
  out.stats = stats;
  out.standardized = true;
  return out;
}

Dataset Destandardize(const Dataset& dataset) {
  Dataset out = dataset;
  if (dataset.standardized) {
    out.continuous = dataset.stats.Invert(dataset.continuous);
  }
  out.standardized = false;
  out.stats = Standardizer::Identity(dataset.schema.num_continuous());
  return out;
}

std::pair<Dataset, Dataset> Split(const Dataset& dataset, double test_fraction,
                                  std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ContractError("split: test fraction must lie in (0, 1)");
  }
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_test = static_cast<std::size_t>(
      std::llround(test_fraction * static_cast<double>(dataset.size())));
  std::vector<std::size_t> test(order.begin(), order.begin() + n_test);
  std::vector<std::size_t> train(order.begin() + n_test, order.end());
  std::sort(test.begin(), test.end());
  std::sort(train.begin(), train.end());
  return {dataset.Subset(train), dataset.Subset(test)};
}

// ---------------------------------------------------------------------------
// Synthetic data

FeatureSchema SynthSchema(const SynthSpec& spec) {
  FeatureSchema schema;
  for (int j = 0; j < spec.continuous; ++j) {
    schema.continuous.push_back("x" + std::to_string(j));
  }
  for (int m = 0; m < spec.categorical; ++m) {
    schema.categorical.push_back({"c" + std::to_string(m), spec.cardinality});
  }
  schema.target = "y";
  schema.num_classes = spec.classes;
  return schema;
}

Dataset SynthGenerate(std::uint64_t seed, std::size_t n, const SynthSpec& spec) {
  if (!(spec.separation > 0.0)) throw ContractError("synth: separation must be > 0");
  if (spec.cardinality < 2 && spec.categorical > 0) {
    throw ContractError("synth: cardinality must be >= 2");
  }
  Dataset ds;
  ds.schema = SynthSchema(spec);
  ds.schema.Validate();
  const int J = spec.continuous;
  const int M = spec.categorical;
  const int K = spec.cardinality;
  ds.continuous.resize(static_cast<Eigen::Index>(n), J);
  ds.categorical.resize(static_cast<Eigen::Index>(n), M);
  ds.labels.reserve(n);
  ds.stats = Standardizer::Identity(J);
  ds.levels.categorical.resize(M);
  for (int m = 0; m < M; ++m) {
    for (int k = 0; k < K; ++k) ds.levels.categorical[m].push_back("v" + std::to_string(k));
  }

  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const int y = static_cast<int>(i % static_cast<std::size_t>(spec.classes));
    ds.labels.push_back(y);
    for (int j = 0; j < J; ++j) {
      double mean = 0.0;
      if (y > 0 && j == (y - 1) % J) mean = spec.separation;
      ds.continuous(i, j) = mean + normal(rng);
    }
    for (int m = 0; m < M; ++m) {
      const int favoured = (y + m) % K;
      const double u = uniform(rng);
      int code = favoured;
      if (u >= 0.7) {
        // Uniform over the remaining K-1 categories.
        int other = std::min(K - 2, static_cast<int>((u - 0.7) / 0.3 * (K - 1)));
        code = other >= favoured ? other + 1 : other;
      }
      ds.categorical(i, m) = code;
    }
  }
  return ds;
}

}  // namespace ceflow
