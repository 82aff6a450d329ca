#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "procsim/losses.hpp"

namespace procsim {

struct RetrievalReport {
  std::map<int, double> recall_at;
  std::size_t query_count = 0;
  std::size_t gallery_count = 0;
  std::vector<int> ks;
};

/// Fraction of queries with a same-label item among the K most
/// cosine-similar gallery rows. With `same_set`, query i is gallery row i and
/// is skipped. Ranking ties resolve to the lower gallery index.
RetrievalReport recall_at_k(const Eigen::MatrixXd& queries, const Labels& query_labels,
                            const Eigen::MatrixXd& gallery, const Labels& gallery_labels,
                            const std::vector<int>& ks, bool same_set);

/// Leave-one-out retrieval within a single embedded set.
RetrievalReport recall_at_k(const Eigen::MatrixXd& embeddings, const Labels& labels,
                            const std::vector<int>& ks);

struct IdentificationReport {
  double recall = 0.0;
  double precision = 0.0;
  double threshold = 0.0;
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;
  std::size_t true_negatives = 0;
  std::size_t false_negatives = 0;
  // No corrupted samples: recall reported as 1.
  bool recall_degenerate = false;
  // Nothing predicted noisy: precision reported as 1.
  bool precision_degenerate = false;
};

/// Otsu threshold over the losses; samples with loss >= threshold are
/// predicted noisy and scored against `corrupted`.
IdentificationReport noisy_identification(const Eigen::VectorXd& losses,
                                          const std::vector<bool>& corrupted);

/// Scores a fixed threshold (used to average recall over training batches).
IdentificationReport classify_at_threshold(const Eigen::VectorXd& losses,
                                           const std::vector<bool>& corrupted, double threshold);

struct NmiResult {
  double value = 0.0;
  bool degenerate = false;
  std::vector<std::int64_t> assignments;
};

/// Seeded k-means (k-means++ seeding, 50 Lloyd iterations) followed by the
/// normalized mutual information against `labels`, normalized by the
/// arithmetic mean of the two entropies. cluster_count <= 0 uses the number
/// of distinct labels.
NmiResult nmi(const Eigen::MatrixXd& embeddings, const Labels& labels, int cluster_count,
              std::uint64_t seed);

/// NMI between two labelings (arithmetic-mean normalization).
double normalized_mutual_information(const Labels& a, const Labels& b, bool* degenerate = nullptr);

struct Histogram {
  std::vector<double> edges;  // bins + 1 edges
  std::vector<std::size_t> counts;
};

/// Equal-width bins over [lo, hi]; the last bin is closed. Values outside
/// the range are clamped into the end bins.
Histogram make_histogram(const std::vector<double>& values, int bins, double lo, double hi);
/// Range taken from the data (a degenerate range is widened by 0.5 each side).
Histogram make_histogram(const std::vector<double>& values, int bins);

/// CSV "bin_lo,bin_hi,count"; empty input writes the header only.
void export_histogram(const std::vector<double>& values, int bins, const std::filesystem::path& path);
void write_histogram_csv(const Histogram& histogram, const std::filesystem::path& path);

}  // namespace procsim
