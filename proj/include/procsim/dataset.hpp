#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "procsim/losses.hpp"

namespace procsim {

/// Samples with fixed-length features, clean labels and observed (possibly
/// corrupted) labels. Row i of `features` belongs to ids[i].
struct FeatureDataset {
  std::vector<std::string> ids;
  Eigen::MatrixXd features;
  Labels clean_labels;
  Labels observed_labels;
  // True when clean labels were read or produced separately from the
  // observed ones (noisy datasets carry them as a sidecar field).
  bool has_clean_labels = false;

  std::size_t size() const { return ids.size(); }
  Eigen::Index feature_dim() const { return features.cols(); }
  // One more than the largest label of either kind.
  std::int64_t class_count() const;
  // Distinct observed labels, ascending.
  std::vector<std::int64_t> observed_classes() const;
  std::vector<std::int64_t> clean_classes() const;

  FeatureDataset subset(const std::vector<std::size_t>& rows) const;
  void validate() const;
};

/// JSONL, one object per line:
///   {"id": str, "features": [floats], "label": int[, "clean_label": int]}
FeatureDataset read_dataset_jsonl(const std::filesystem::path& path);
void write_dataset_jsonl(const FeatureDataset& dataset, const std::filesystem::path& path);

/// Class-embedding table as CSV rows "class_id,e_1,...,e_m". Row r of the
/// returned matrix holds class id r; ids must cover 0..C-1 exactly once.
Eigen::MatrixXd read_semantic_table_csv(const std::filesystem::path& path);
void write_semantic_table_csv(const Eigen::MatrixXd& table, const std::filesystem::path& path);

/// Per-sample top-k class lists, JSONL {"id": str, "topk": [int, ...]}.
struct TopkEntry {
  std::string id;
  std::vector<std::int64_t> topk;
};
std::vector<TopkEntry> read_topk_jsonl(const std::filesystem::path& path);
void write_topk_jsonl(const std::vector<TopkEntry>& entries, const std::filesystem::path& path);

}  // namespace procsim
