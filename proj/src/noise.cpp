#include "procsim/noise.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "procsim/errors.hpp"
#include "procsim/random.hpp"

namespace procsim {

using nlohmann::json;

std::string_view to_string(NoiseModel model) {
  switch (model) {
    case NoiseModel::uniform: return "uniform";
    case NoiseModel::semantic: return "semantic";
    case NoiseModel::category: return "category";
  }
  return "uniform";
}

NoiseModel parse_noise_model(std::string_view name) {
  if (name == "uniform") return NoiseModel::uniform;
  if (name == "semantic") return NoiseModel::semantic;
  if (name == "category") return NoiseModel::category;
  throw ConfigError("unknown noise model '" + std::string(name) + "'");
}

void NoiseSpec::validate() const {
  if (!(probability >= 0.0 && probability <= 1.0)) {
    throw DomainError("noise probability must lie in [0, 1]");
  }
  if (model == NoiseModel::semantic && !taxonomy) throw ConfigError("semantic noise requires a taxonomy");
  if (model == NoiseModel::category && !category_map) {
    throw ConfigError("category noise requires a category map");
  }
}

double NoiseManifest::realized_rate() const {
  if (records.empty()) return 0.0;
  const auto n = std::count_if(records.begin(), records.end(), [](const auto& r) { return r.corrupted; });
  return static_cast<double>(n) / static_cast<double>(records.size());
}

std::vector<std::int64_t> noise_candidates(NoiseModel model, std::int64_t clean_label,
                                           const std::vector<std::int64_t>& present,
                                           const Taxonomy* taxonomy, const CategoryMap* categories) {
  std::vector<std::int64_t> out;
  switch (model) {
    case NoiseModel::uniform:
      for (auto c : present) {
        if (c != clean_label) out.push_back(c);
      }
      break;
    case NoiseModel::semantic: {
      if (!taxonomy) throw ConfigError("semantic noise requires a taxonomy");
      const std::set<std::int64_t> keep(present.begin(), present.end());
      for (auto c : semantic_candidates(*taxonomy, clean_label)) {
        if (keep.count(c)) out.push_back(c);
      }
      break;
    }
    case NoiseModel::category: {
      if (!categories) throw ConfigError("category noise requires a category map");
      const auto own = categories->find(clean_label);
      if (own == categories->end()) {
        throw ConfigError("class " + std::to_string(clean_label) + " has no category");
      }
      for (auto c : present) {
        const auto it = categories->find(c);
        if (c != clean_label && it != categories->end() && it->second == own->second) out.push_back(c);
      }
      break;
    }
  }
  return out;
}

CorruptionResult corrupt(const FeatureDataset& dataset, const NoiseSpec& spec) {
  spec.validate();
  dataset.validate();
  const std::vector<std::int64_t> present = dataset.clean_classes();

  std::optional<Taxonomy> pruned;
  if (spec.model == NoiseModel::semantic) {
    for (auto c : present) {
      if (!spec.taxonomy->has_class(c)) {
        throw ConfigError("class " + std::to_string(c) + " is missing from the taxonomy");
      }
    }
    pruned = prune_to_classes(*spec.taxonomy, {present.begin(), present.end()});
  }
  std::map<std::int64_t, std::vector<std::int64_t>> candidates;
  for (auto c : present) {
    auto list = noise_candidates(spec.model, c, present, pruned ? &*pruned : nullptr,
                                 spec.category_map ? &*spec.category_map : nullptr);
    if (list.empty() && spec.probability > 0.0) {
      throw ConfigError("class " + std::to_string(c) + " has no legal replacement label under " +
                        std::string(to_string(spec.model)) + " noise");
    }
    candidates.emplace(c, std::move(list));
  }

  CorruptionResult out;
  out.dataset = dataset;
  out.dataset.has_clean_labels = true;
  out.manifest.model = spec.model;
  out.manifest.probability = spec.probability;
  out.manifest.seed = spec.seed;
  out.manifest.records.reserve(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const std::int64_t clean = dataset.clean_labels[i];
    KeyedStream stream(spec.seed, dataset.ids[i]);
    const bool flagged = stream.next_unit() < spec.probability;
    const std::uint64_t pick = stream.next_u64();
    std::int64_t noisy = clean;
    if (flagged) {
      const auto& list = candidates.at(clean);
      noisy = list[static_cast<std::size_t>(
          (static_cast<unsigned __int128>(pick) * list.size()) >> 64)];
    }
    out.dataset.observed_labels[i] = noisy;
    out.manifest.records.push_back({dataset.ids[i], clean, noisy, noisy != clean});
  }
  return out;
}

AuditFailure::AuditFailure(AuditReport report)
    : std::runtime_error("noise audit failed for " + std::to_string(report.violations.size()) +
                         " sample(s)"),
      report_(std::move(report)) {}

AuditReport audit(const NoiseManifest& manifest, const Taxonomy* taxonomy, const CategoryMap* categories) {
  AuditReport report;
  report.total = manifest.records.size();
  std::set<std::int64_t> present_set;
  for (const auto& r : manifest.records) present_set.insert(r.clean_label);
  const std::vector<std::int64_t> present(present_set.begin(), present_set.end());

  std::optional<Taxonomy> pruned;
  if (manifest.model == NoiseModel::semantic && taxonomy && !present.empty()) {
    pruned = prune_to_classes(*taxonomy, present_set);
  }
  const bool check_legal = (manifest.model == NoiseModel::semantic && taxonomy) ||
                           (manifest.model == NoiseModel::category && categories);
  std::map<std::int64_t, std::vector<std::int64_t>> legal;

  for (const auto& r : manifest.records) {
    if (r.corrupted != (r.clean_label != r.noisy_label)) {
      report.violations.push_back(r.id);
      continue;
    }
    if (!r.corrupted) continue;
    ++report.corrupted;
    ++report.corrupted_per_class[r.clean_label];
    if (!check_legal) continue;
    auto it = legal.find(r.clean_label);
    if (it == legal.end()) {
      it = legal.emplace(r.clean_label, noise_candidates(manifest.model, r.clean_label, present,
                                                         pruned ? &*pruned : nullptr, categories))
               .first;
    }
    if (!std::binary_search(it->second.begin(), it->second.end(), r.noisy_label)) {
      report.violations.push_back(r.id);
    }
  }
  report.realized_rate =
      report.total ? static_cast<double>(report.corrupted) / static_cast<double>(report.total) : 0.0;
  if (!report.violations.empty()) throw AuditFailure(std::move(report));
  return report;
}

void write_manifest_jsonl(const NoiseManifest& manifest, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  for (const auto& r : manifest.records) {
    json j;
    j["id"] = r.id;
    j["clean_label"] = r.clean_label;
    j["noisy_label"] = r.noisy_label;
    j["corrupted"] = r.corrupted;
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

NoiseManifest read_manifest_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  NoiseManifest manifest;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      manifest.records.push_back({j.at("id").get<std::string>(), j.at("clean_label").get<std::int64_t>(),
                                  j.at("noisy_label").get<std::int64_t>(), j.at("corrupted").get<bool>()});
    } catch (const json::exception& e) {
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return manifest;
}

CategoryMap read_category_map(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  CategoryMap out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw IoError(path.string() + ":" + std::to_string(lineno) + ": expected class_id,category");
    try {
      out[std::stoll(line.substr(0, comma))] = line.substr(comma + 1);
    } catch (const std::exception&) {
      if (lineno == 1) continue;
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": bad class id");
    }
  }
  return out;
}

}  // namespace procsim
