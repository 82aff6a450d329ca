#include "procsim/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "procsim/errors.hpp"

namespace procsim {

using nlohmann::json;

std::int64_t FeatureDataset::class_count() const {
  std::int64_t top = -1;
  for (auto y : clean_labels) top = std::max(top, y);
  for (auto y : observed_labels) top = std::max(top, y);
  return top + 1;
}

namespace {
std::vector<std::int64_t> distinct(const Labels& labels) {
  std::set<std::int64_t> s(labels.begin(), labels.end());
  return {s.begin(), s.end()};
}
}  // namespace

std::vector<std::int64_t> FeatureDataset::observed_classes() const {
  return distinct(observed_labels);
}

std::vector<std::int64_t> FeatureDataset::clean_classes() const { return distinct(clean_labels); }

FeatureDataset FeatureDataset::subset(const std::vector<std::size_t>& rows) const {
  FeatureDataset out;
  out.has_clean_labels = has_clean_labels;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const std::size_t i = rows[r];
    if (i >= size()) throw DomainError("FeatureDataset::subset: row out of range");
    out.ids.push_back(ids[i]);
    out.features.row(static_cast<Eigen::Index>(r)) = features.row(static_cast<Eigen::Index>(i));
    out.clean_labels.push_back(clean_labels[i]);
    out.observed_labels.push_back(observed_labels[i]);
  }
  return out;
}

void FeatureDataset::validate() const {
  const std::size_t n = ids.size();
  if (static_cast<std::size_t>(features.rows()) != n || clean_labels.size() != n ||
      observed_labels.size() != n) {
    throw DomainError("FeatureDataset: inconsistent field lengths");
  }
  std::unordered_set<std::string> seen;
  for (const auto& id : ids) {
    if (!seen.insert(id).second) throw DomainError("FeatureDataset: duplicate id '" + id + "'");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (clean_labels[i] < 0 || observed_labels[i] < 0) {
      throw DomainError("FeatureDataset: negative label for '" + ids[i] + "'");
    }
  }
  if (!features.allFinite()) throw DomainError("FeatureDataset: non-finite feature");
}

namespace {

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  return out;
}

json parse_line(const std::string& line, const std::filesystem::path& path, std::size_t lineno) {
  try {
    return json::parse(line);
  } catch (const json::parse_error& e) {
    throw IoError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
  }
}

bool blank(const std::string& line) {
  return std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); });
}

}  // namespace

FeatureDataset read_dataset_jsonl(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  FeatureDataset ds;
  std::vector<std::vector<double>> rows;
  bool any_clean = false;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank(line)) continue;
    const json j = parse_line(line, path, lineno);
    try {
      ds.ids.push_back(j.at("id").get<std::string>());
      rows.push_back(j.at("features").get<std::vector<double>>());
      const auto label = j.at("label").get<std::int64_t>();
      ds.observed_labels.push_back(label);
      if (j.contains("clean_label")) {
        ds.clean_labels.push_back(j.at("clean_label").get<std::int64_t>());
        any_clean = true;
      } else {
        ds.clean_labels.push_back(label);
      }
    } catch (const json::exception& e) {
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (rows.back().size() != rows.front().size()) {
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": feature length differs");
    }
  }
  ds.has_clean_labels = any_clean;
  const auto dim = rows.empty() ? 0 : static_cast<Eigen::Index>(rows.front().size());
  ds.features.resize(static_cast<Eigen::Index>(rows.size()), dim);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    ds.features.row(static_cast<Eigen::Index>(i)) =
        Eigen::Map<const Eigen::RowVectorXd>(rows[i].data(), dim);
  }
  ds.validate();
  return ds;
}

void write_dataset_jsonl(const FeatureDataset& dataset, const std::filesystem::path& path) {
  dataset.validate();
  std::ofstream out = open_out(path);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    json j;
    j["id"] = dataset.ids[i];
    const Eigen::RowVectorXd row = dataset.features.row(static_cast<Eigen::Index>(i));
    j["features"] = std::vector<double>(row.data(), row.data() + row.size());
    j["label"] = dataset.observed_labels[i];
    if (dataset.has_clean_labels) j["clean_label"] = dataset.clean_labels[i];
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

Eigen::MatrixXd read_semantic_table_csv(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  std::vector<std::pair<std::int64_t, std::vector<double>>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank(line)) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() < 2) throw IoError(path.string() + ":" + std::to_string(lineno) + ": too few columns");
    try {
      std::vector<double> values;
      for (std::size_t c = 1; c < cells.size(); ++c) values.push_back(std::stod(cells[c]));
      rows.emplace_back(std::stoll(cells[0]), std::move(values));
    } catch (const std::exception&) {
      // Tolerate a single header row.
      if (lineno == 1) continue;
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": malformed number");
    }
  }
  if (rows.empty()) throw IoError("semantic table '" + path.string() + "' is empty");
  const auto dim = rows.front().second.size();
  Eigen::MatrixXd table(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(dim));
  std::vector<bool> filled(rows.size(), false);
  for (const auto& [id, values] : rows) {
    if (values.size() != dim) throw IoError("semantic table rows differ in width");
    if (id < 0 || static_cast<std::size_t>(id) >= rows.size() || filled[static_cast<std::size_t>(id)]) {
      throw IoError("semantic table class ids must cover 0..C-1 exactly once");
    }
    filled[static_cast<std::size_t>(id)] = true;
    table.row(id) = Eigen::Map<const Eigen::RowVectorXd>(values.data(), static_cast<Eigen::Index>(dim));
  }
  return table;
}

void write_semantic_table_csv(const Eigen::MatrixXd& table, const std::filesystem::path& path) {
  std::ofstream out = open_out(path);
  for (Eigen::Index r = 0; r < table.rows(); ++r) {
    out << r;
    for (Eigen::Index c = 0; c < table.cols(); ++c) out << ',' << json(table(r, c)).dump();
    out << '\n';
  }
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

std::vector<TopkEntry> read_topk_jsonl(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  std::vector<TopkEntry> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank(line)) continue;
    const json j = parse_line(line, path, lineno);
    try {
      out.push_back({j.at("id").get<std::string>(), j.at("topk").get<std::vector<std::int64_t>>()});
    } catch (const json::exception& e) {
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_topk_jsonl(const std::vector<TopkEntry>& entries, const std::filesystem::path& path) {
  std::ofstream out = open_out(path);
  for (const auto& e : entries) out << json{{"id", e.id}, {"topk", e.topk}}.dump() << '\n';
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace procsim
