#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "procsim/dataset.hpp"
#include "procsim/taxonomy.hpp"

namespace procsim {

enum class NoiseModel { uniform, semantic, category };

std::string_view to_string(NoiseModel model);
NoiseModel parse_noise_model(std::string_view name);

using CategoryMap = std::map<std::int64_t, std::string>;

struct NoiseSpec {
  NoiseModel model = NoiseModel::uniform;
  double probability = 0.0;
  std::uint64_t seed = 0;
  std::optional<Taxonomy> taxonomy;
  std::optional<CategoryMap> category_map;

  void validate() const;
};

struct NoiseRecord {
  std::string id;
  std::int64_t clean_label = 0;
  std::int64_t noisy_label = 0;
  bool corrupted = false;
};

struct NoiseManifest {
  std::vector<NoiseRecord> records;
  NoiseModel model = NoiseModel::uniform;
  double probability = 0.0;
  std::uint64_t seed = 0;

  double realized_rate() const;
};

struct CorruptionResult {
  FeatureDataset dataset;
  NoiseManifest manifest;
};

/// Candidate replacement labels for `clean_label` among `present` classes.
std::vector<std::int64_t> noise_candidates(NoiseModel model, std::int64_t clean_label,
                                           const std::vector<std::int64_t>& present,
                                           const Taxonomy* taxonomy, const CategoryMap* categories);

/// Flags each sample independently with probability p and replaces its label
/// with a uniform draw from the model's candidate set. Both draws come from a
/// stream keyed by (seed, sample id). Candidate sets are restricted to the
/// classes present in the dataset (the taxonomy is pruned to them first).
CorruptionResult corrupt(const FeatureDataset& dataset, const NoiseSpec& spec);

struct AuditReport {
  std::size_t total = 0;
  std::size_t corrupted = 0;
  double realized_rate = 0.0;
  std::map<std::int64_t, std::size_t> corrupted_per_class;
  std::vector<std::string> violations;

  bool passed() const { return violations.empty(); }
};

class AuditFailure : public std::runtime_error {
 public:
  explicit AuditFailure(AuditReport report);
  const AuditReport& report() const noexcept { return report_; }

 private:
  AuditReport report_;
};

/// Recomputes corruption statistics and checks each record: the corrupted
/// flag must match the labels and, for semantic/category manifests, the noisy
/// label must be a legal candidate. Throws AuditFailure listing offending ids.
AuditReport audit(const NoiseManifest& manifest, const Taxonomy* taxonomy = nullptr,
                  const CategoryMap* categories = nullptr);

/// Manifest JSONL {"id", "clean_label", "noisy_label", "corrupted"}.
void write_manifest_jsonl(const NoiseManifest& manifest, const std::filesystem::path& path);
NoiseManifest read_manifest_jsonl(const std::filesystem::path& path);

/// CSV "class_id,category" (a header row is allowed).
CategoryMap read_category_map(const std::filesystem::path& path);

}  // namespace procsim
