#include "procsim/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <set>

#include "procsim/errors.hpp"
#include "procsim/numerics.hpp"

namespace procsim {

RetrievalReport recall_at_k(const Eigen::MatrixXd& queries, const Labels& query_labels,
                            const Eigen::MatrixXd& gallery, const Labels& gallery_labels,
                            const std::vector<int>& ks, bool same_set) {
  const auto nq = static_cast<std::size_t>(queries.rows());
  const auto ng = static_cast<std::size_t>(gallery.rows());
  if (query_labels.size() != nq || gallery_labels.size() != ng) {
    throw DomainError("recall_at_k: label count mismatch");
  }
  if (queries.cols() != gallery.cols()) throw DomainError("recall_at_k: dimension mismatch");
  if (same_set && nq != ng) throw DomainError("recall_at_k: same_set requires equal sizes");
  if (ks.empty()) throw DomainError("recall_at_k: no K values");
  const std::size_t effective = same_set ? ng - 1 : ng;
  for (int k : ks) {
    if (k < 1 || static_cast<std::size_t>(k) >= effective) {
      throw DomainError("recall_at_k: K=" + std::to_string(k) + " must be in [1, " +
                        std::to_string(effective) + ")");
    }
  }
  const int max_k = *std::max_element(ks.begin(), ks.end());
  std::vector<std::size_t> hits(ks.size(), 0);
  std::vector<std::size_t> order(ng);
  for (std::size_t q = 0; q < nq; ++q) {
    const Eigen::VectorXd sims = gallery * queries.row(static_cast<Eigen::Index>(q)).transpose();
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (same_set) order.erase(order.begin() + static_cast<std::ptrdiff_t>(q));
    auto better = [&](std::size_t a, std::size_t b) {
      const double sa = sims(static_cast<Eigen::Index>(a));
      const double sb = sims(static_cast<Eigen::Index>(b));
      return sa > sb || (sa == sb && a < b);
    };
    std::partial_sort(order.begin(), order.begin() + max_k, order.end(), better);
    // Rank of the first same-label neighbor.
    int first = max_k + 1;
    for (int r = 0; r < max_k; ++r) {
      if (gallery_labels[order[static_cast<std::size_t>(r)]] == query_labels[q]) {
        first = r + 1;
        break;
      }
    }
    for (std::size_t i = 0; i < ks.size(); ++i) {
      if (first <= ks[i]) ++hits[i];
    }
    if (same_set) order.resize(ng);
  }
  RetrievalReport report;
  report.ks = ks;
  report.query_count = nq;
  report.gallery_count = ng;
  for (std::size_t i = 0; i < ks.size(); ++i) {
    report.recall_at[ks[i]] = nq ? static_cast<double>(hits[i]) / static_cast<double>(nq) : 0.0;
  }
  return report;
}

RetrievalReport recall_at_k(const Eigen::MatrixXd& embeddings, const Labels& labels,
                            const std::vector<int>& ks) {
  return recall_at_k(embeddings, labels, embeddings, labels, ks, true);
}

IdentificationReport classify_at_threshold(const Eigen::VectorXd& losses,
                                           const std::vector<bool>& corrupted, double threshold) {
  if (static_cast<std::size_t>(losses.size()) != corrupted.size()) {
    throw DomainError("noisy_identification: length mismatch");
  }
  IdentificationReport r;
  r.threshold = threshold;
  for (Eigen::Index i = 0; i < losses.size(); ++i) {
    const bool predicted = losses(i) >= threshold;
    const bool actual = corrupted[static_cast<std::size_t>(i)];
    if (predicted && actual) ++r.true_positives;
    else if (predicted) ++r.false_positives;
    else if (actual) ++r.false_negatives;
    else ++r.true_negatives;
  }
  const auto positives = r.true_positives + r.false_negatives;
  const auto predicted = r.true_positives + r.false_positives;
  r.recall_degenerate = positives == 0;
  r.recall = positives ? static_cast<double>(r.true_positives) / static_cast<double>(positives) : 1.0;
  r.precision_degenerate = predicted == 0;
  r.precision = predicted ? static_cast<double>(r.true_positives) / static_cast<double>(predicted) : 1.0;
  return r;
}

IdentificationReport noisy_identification(const Eigen::VectorXd& losses,
                                          const std::vector<bool>& corrupted) {
  if (static_cast<std::size_t>(losses.size()) != corrupted.size()) {
    throw DomainError("noisy_identification: length mismatch");
  }
  return classify_at_threshold(losses, corrupted, otsu_threshold(losses).threshold);
}

double normalized_mutual_information(const Labels& a, const Labels& b, bool* degenerate) {
  if (a.size() != b.size() || a.empty()) throw DomainError("nmi: labelings must be nonempty and equal length");
  std::map<std::int64_t, std::size_t> ia, ib;
  for (auto x : a) ia.emplace(x, ia.size());
  for (auto x : b) ib.emplace(x, ib.size());
  Eigen::MatrixXd table = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(ia.size()),
                                                static_cast<Eigen::Index>(ib.size()));
  for (std::size_t i = 0; i < a.size(); ++i) {
    table(static_cast<Eigen::Index>(ia[a[i]]), static_cast<Eigen::Index>(ib[b[i]])) += 1.0;
  }
  const double n = static_cast<double>(a.size());
  const Eigen::VectorXd pa = table.rowwise().sum() / n;
  const Eigen::RowVectorXd pb = table.colwise().sum() / n;
  auto entropy = [](const auto& p) {
    double h = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      if (p(i) > 0.0) h -= p(i) * std::log(p(i));
    }
    return h;
  };
  const double ha = entropy(pa);
  const double hb = entropy(pb);
  double mi = 0.0;
  for (Eigen::Index r = 0; r < table.rows(); ++r) {
    for (Eigen::Index c = 0; c < table.cols(); ++c) {
      const double p = table(r, c) / n;
      if (p > 0.0) mi += p * std::log(p / (pa(r) * pb(c)));
    }
  }
  const double denom = 0.5 * (ha + hb);
  if (degenerate) *degenerate = denom <= 0.0;
  if (denom <= 0.0) return 0.0;
  return std::clamp(mi / denom, 0.0, 1.0);
}

NmiResult nmi(const Eigen::MatrixXd& embeddings, const Labels& labels, int cluster_count,
              std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(embeddings.rows());
  if (labels.size() != n || n == 0) throw DomainError("nmi: label count mismatch");
  int k = cluster_count;
  if (k <= 0) k = static_cast<int>(std::set<std::int64_t>(labels.begin(), labels.end()).size());
  if (k < 2) {
    NmiResult r;
    r.degenerate = true;
    r.assignments.assign(n, 0);
    return r;
  }
  k = std::min<int>(k, static_cast<int>(n));

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Eigen::MatrixXd centers(k, embeddings.cols());
  centers.row(0) = embeddings.row(static_cast<Eigen::Index>(rng() % n));
  Eigen::VectorXd d2 = (embeddings.rowwise() - centers.row(0)).rowwise().squaredNorm();
  for (int c = 1; c < k; ++c) {
    const double total = d2.sum();
    std::size_t pick = 0;
    if (total > 0.0) {
      double target = unit(rng) * total;
      for (pick = 0; pick + 1 < n; ++pick) {
        target -= d2(static_cast<Eigen::Index>(pick));
        if (target < 0.0) break;
      }
    } else {
      pick = static_cast<std::size_t>(rng() % n);
    }
    centers.row(c) = embeddings.row(static_cast<Eigen::Index>(pick));
    d2 = d2.cwiseMin((embeddings.rowwise() - centers.row(c)).rowwise().squaredNorm());
  }

  Labels assign(n, 0);
  for (int iter = 0; iter < 50; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      Eigen::Index best = 0;
      (centers.rowwise() - embeddings.row(static_cast<Eigen::Index>(i))).rowwise().squaredNorm().minCoeff(&best);
      if (assign[i] != best) {
        assign[i] = best;
        changed = true;
      }
    }
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, embeddings.cols());
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(k);
    for (std::size_t i = 0; i < n; ++i) {
      sums.row(assign[i]) += embeddings.row(static_cast<Eigen::Index>(i));
      counts(assign[i]) += 1.0;
    }
    for (int c = 0; c < k; ++c) {
      if (counts(c) > 0.0) centers.row(c) = sums.row(c) / counts(c);
    }
    if (!changed && iter > 0) break;
  }

  NmiResult r;
  r.assignments = assign;
  r.value = normalized_mutual_information(assign, labels, &r.degenerate);
  return r;
}

Histogram make_histogram(const std::vector<double>& values, int bins, double lo, double hi) {
  if (bins < 1) throw DomainError("histogram: bins must be at least 1");
  if (!(hi > lo)) throw DomainError("histogram: empty range");
  Histogram h;
  h.counts.assign(static_cast<std::size_t>(bins), 0);
  for (int b = 0; b <= bins; ++b) h.edges.push_back(lo + (hi - lo) * b / bins);
  h.edges.back() = hi;
  for (double v : values) {
    auto b = static_cast<long>(std::floor((v - lo) / (hi - lo) * bins));
    b = std::clamp<long>(b, 0, bins - 1);
    ++h.counts[static_cast<std::size_t>(b)];
  }
  return h;
}

Histogram make_histogram(const std::vector<double>& values, int bins) {
  if (values.empty()) {
    if (bins < 1) throw DomainError("histogram: bins must be at least 1");
    return {};
  }
  auto [mn, mx] = std::minmax_element(values.begin(), values.end());
  double lo = *mn, hi = *mx;
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
  return make_histogram(values, bins, lo, hi);
}

void write_histogram_csv(const Histogram& histogram, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.precision(17);
  out << "bin_lo,bin_hi,count\n";
  for (std::size_t b = 0; b < histogram.counts.size(); ++b) {
    out << histogram.edges[b] << ',' << histogram.edges[b + 1] << ',' << histogram.counts[b] << '\n';
  }
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

void export_histogram(const std::vector<double>& values, int bins, const std::filesystem::path& path) {
  write_histogram_csv(make_histogram(values, bins), path);
}

}  // namespace procsim
