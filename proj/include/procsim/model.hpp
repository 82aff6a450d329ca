#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "procsim/confidence.hpp"
#include "procsim/dataset.hpp"
#include "procsim/losses.hpp"

namespace procsim {

/// Fully connected layer, y = x W^T + b, for row-major batches.
struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::MatrixXd bias;    // out x 1
};

/// MLP with ReLU between layers and a final row normalization.
class Embedder {
 public:
  Embedder() = default;
  explicit Embedder(std::vector<DenseLayer> layers);

  /// He-uniform weights and zero biases drawn from `rng`.
  static Embedder create(Eigen::Index input_dim, const std::vector<Eigen::Index>& hidden,
                         Eigen::Index output_dim, std::mt19937_64& rng);
  /// Single identity layer: embeds unit vectors to themselves.
  static Embedder identity(Eigen::Index dim);

  struct Cache {
    std::vector<Eigen::MatrixXd> inputs;  // input to each layer
    std::vector<Eigen::MatrixXd> pre;     // pre-activation of each layer
    Eigen::MatrixXd output;               // normalized rows
  };

  Eigen::Index input_dim() const;
  Eigen::Index output_dim() const;
  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& layers() { return layers_; }

  Cache forward(const Eigen::MatrixXd& features) const;
  Eigen::MatrixXd embed(const Eigen::MatrixXd& features) const { return forward(features).output; }
  /// Gradients of each layer (same shapes as layers()) given dL/d(output).
  std::vector<DenseLayer> backward(const Cache& cache, const Eigen::MatrixXd& grad_output) const;

 private:
  std::vector<DenseLayer> layers_;
};

/// One learnable unit-norm vector per training class. Row r represents
/// dataset label class_ids[r].
struct ProxyBank {
  Eigen::MatrixXd proxies;
  std::vector<std::int64_t> class_ids;

  static ProxyBank create(const std::vector<std::int64_t>& class_ids, Eigen::Index dim,
                          std::mt19937_64& rng);
  Eigen::Index row_of(std::int64_t class_id) const;
  void renormalize();
};

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;  // decoupled
};

/// Adam with decoupled weight decay over a fixed list of parameter blocks.
class AdamW {
 public:
  explicit AdamW(AdamOptions options) : options_(options) {}
  void step(const std::vector<Eigen::MatrixXd*>& params, const std::vector<const Eigen::MatrixXd*>& grads);
  std::int64_t steps() const { return t_; }

 private:
  AdamOptions options_;
  std::vector<Eigen::MatrixXd> m_, v_;
  std::int64_t t_ = 0;
};

/// Classes drawn uniformly without replacement; within a class, samples
/// without replacement, or with replacement when the class is smaller than
/// samples_per_class.
std::vector<std::size_t> sample_batch(const Labels& labels, int classes_per_batch,
                                      int samples_per_class, std::mt19937_64& rng);

enum class TrainMethod { procsim, plain_ms };

struct TrainConfig {
  TrainMethod method = TrainMethod::procsim;
  double learning_rate = 1e-4;
  double proxy_learning_rate = 1e-3;
  double weight_decay = 4e-4;
  int epochs = 20;
  int classes_per_batch = 5;
  int samples_per_class = 8;
  int hidden_width = 128;
  int hidden_layers = 1;
  int embedding_dim = 512;
  std::uint64_t seed = 0;
  ConfidenceConfig confidence;
  LossConfig loss;

  void validate() const;
  int batch_size() const { return classes_per_batch * samples_per_class; }
};

struct Model {
  Embedder embedder;
  ProxyBank proxies;
};

/// Everything one optimization step needs, for one batch.
struct StepInputs {
  const Eigen::MatrixXd* features = nullptr;
  Labels labels;                             // dataset labels (MS positives)
  Labels proxy_rows;                         // rows of the proxy bank
  std::vector<Eigen::MatrixXd> language;     // per-rank language similarities
};

struct StepEvaluation {
  double objective = 0.0;
  Eigen::VectorXd dml;
  Eigen::VectorXd proxy;
  Eigen::VectorXd ssl;
  Eigen::VectorXd sigma;
  double tau = 0.0;
  bool fell_back_to_otsu = false;
  ThresholdState state;
  Eigen::MatrixXd embeddings;
  std::vector<DenseLayer> embedder_grad;
  Eigen::MatrixXd proxy_grad;  // of the batch-mean proxy loss
};

/// Forward pass, confidences and the combined objective, then the reverse
/// pass. Sigma and tau are constants for differentiation; `fixed_sigma`
/// bypasses the threshold entirely. The embedder gradient is that of the
/// objective; the proxy gradient is that of mean(proxy loss).
StepEvaluation evaluate_step(const Model& model, const StepInputs& inputs, const TrainConfig& cfg,
                             ThresholdState state,
                             const std::optional<Eigen::VectorXd>& fixed_sigma = std::nullopt);

struct IterationRecord {
  std::int64_t iteration = 0;
  int epoch = 0;
  double objective = 0.0;
  double mean_dml = 0.0;
  double mean_proxy = 0.0;
  double mean_ssl = 0.0;
  double tau = 0.0;
  double sigma_mean = 0.0;
  double sigma_min = 0.0;
  double sigma_max = 0.0;
  double sigma_below_one = 0.0;  // fraction of samples with sigma < 1
  bool threshold_fallback = false;
  double wall_seconds = 0.0;
  // Populated when the dataset carries clean labels.
  std::optional<double> sigma_mean_clean;
  std::optional<double> sigma_mean_noisy;
  std::optional<double> recall_proxy;  // Otsu on proxy losses, noisy = positive
  std::optional<double> recall_dml;    // Otsu on MS losses
  std::vector<double> proxy_losses;
  std::vector<double> dml_losses;
  std::vector<double> sigmas;
  std::vector<bool> corrupted;
};

struct TrainHistory {
  std::vector<IterationRecord> records;
};

struct TrainResult {
  Model model;
  TrainHistory history;
};

/// Per-sample top-k class lists: from `provided` when given (matched by id),
/// otherwise the k table rows most cosine-similar to each sample's features.
std::vector<std::vector<std::int64_t>> resolve_topk(const FeatureDataset& dataset,
                                                    const Eigen::MatrixXd& table, int k,
                                                    const std::vector<TopkEntry>* provided);

TrainResult train(const FeatureDataset& dataset, const Eigen::MatrixXd* semantic_table,
                  const TrainConfig& cfg, const std::vector<TopkEntry>* topk = nullptr);

/// JSONL, one record per iteration. Wall time is omitted unless requested so
/// that identical runs produce identical files.
void write_history_jsonl(const TrainHistory& history, const std::filesystem::path& path,
                         bool include_wall_time = false);
TrainHistory read_history_jsonl(const std::filesystem::path& path);

/// JSON container: layer shapes and weights, proxy matrix, training config.
void write_checkpoint(const Model& model, const TrainConfig& cfg, const std::filesystem::path& path);
Model read_checkpoint(const std::filesystem::path& path, TrainConfig* cfg = nullptr);

}  // namespace procsim
