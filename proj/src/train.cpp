#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "procsim/config.hpp"
#include "procsim/errors.hpp"
#include "procsim/eval.hpp"
#include "procsim/model.hpp"

namespace procsim {

using nlohmann::json;

std::vector<std::vector<std::int64_t>> resolve_topk(const FeatureDataset& dataset,
                                                    const Eigen::MatrixXd& table, int k,
                                                    const std::vector<TopkEntry>* provided) {
  if (k < 1) throw ConfigError("top_k must be at least 1");
  std::vector<std::vector<std::int64_t>> out(dataset.size());
  if (provided) {
    std::unordered_map<std::string, const TopkEntry*> by_id;
    for (const auto& e : *provided) by_id[e.id] = &e;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      const auto it = by_id.find(dataset.ids[i]);
      if (it == by_id.end()) throw ConfigError("no top-k entry for sample '" + dataset.ids[i] + "'");
      if (it->second->topk.size() < static_cast<std::size_t>(k)) {
        throw ConfigError("top-k entry for '" + dataset.ids[i] + "' is shorter than top_k");
      }
      out[i].assign(it->second->topk.begin(), it->second->topk.begin() + k);
    }
    return out;
  }
  if (table.cols() != dataset.feature_dim()) {
    throw ConfigError("semantic table width differs from the feature width; supply top-k lists");
  }
  if (table.rows() < k) throw ConfigError("semantic table has fewer rows than top_k");
  const Eigen::MatrixXd unit_table = normalize_rows(table);
  std::vector<std::int64_t> order(static_cast<std::size_t>(table.rows()));
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const Eigen::RowVectorXd f = dataset.features.row(static_cast<Eigen::Index>(i)).normalized();
    const Eigen::VectorXd sims = unit_table * f.transpose();
    std::iota(order.begin(), order.end(), std::int64_t{0});
    std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](auto a, auto b) {
      return sims(a) > sims(b) || (sims(a) == sims(b) && a < b);
    });
    out[i].assign(order.begin(), order.begin() + k);
  }
  return out;
}

namespace {

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

TrainResult train(const FeatureDataset& dataset, const Eigen::MatrixXd* semantic_table,
                  const TrainConfig& cfg, const std::vector<TopkEntry>* topk) {
  cfg.validate();
  dataset.validate();
  const bool use_ssl = cfg.method == TrainMethod::procsim && cfg.loss.omega > 0.0;
  if (use_ssl && !semantic_table) throw ConfigError("omega > 0 requires a semantic table");

  std::mt19937_64 rng(cfg.seed);
  std::vector<Eigen::Index> hidden(static_cast<std::size_t>(cfg.hidden_layers), cfg.hidden_width);
  TrainResult result;
  Model& model = result.model;
  model.embedder = Embedder::create(dataset.feature_dim(), hidden, cfg.embedding_dim, rng);
  const std::vector<std::int64_t> classes = dataset.observed_classes();
  model.proxies = ProxyBank::create(classes, cfg.embedding_dim, rng);
  std::map<std::int64_t, std::int64_t> proxy_row;
  for (std::size_t r = 0; r < classes.size(); ++r) proxy_row[classes[r]] = static_cast<std::int64_t>(r);

  std::vector<std::vector<std::int64_t>> sample_topk;
  Eigen::MatrixXd table;
  if (use_ssl) {
    table = *semantic_table;
    sample_topk = resolve_topk(dataset, table, cfg.loss.top_k, topk);
  }

  AdamW embedder_opt({cfg.learning_rate, 0.9, 0.999, 1e-8, cfg.weight_decay});
  AdamW proxy_opt({cfg.proxy_learning_rate, 0.9, 0.999, 1e-8, 0.0});
  std::vector<Eigen::MatrixXd*> params;
  for (auto& layer : model.embedder.layers()) {
    params.push_back(&layer.weight);
    params.push_back(&layer.bias);
  }

  const auto batch = static_cast<std::size_t>(cfg.batch_size());
  const std::size_t iters_per_epoch = std::max<std::size_t>(1, (dataset.size() + batch - 1) / batch);
  ThresholdState state = ThresholdState::for_strategy(cfg.confidence.strategy);
  const auto start = std::chrono::steady_clock::now();
  std::int64_t iteration = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t it = 0; it < iters_per_epoch; ++it, ++iteration) {
      const std::vector<std::size_t> rows =
          sample_batch(dataset.observed_labels, cfg.classes_per_batch, cfg.samples_per_class, rng);
      Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), dataset.feature_dim());
      StepInputs inputs;
      std::vector<std::vector<std::int64_t>> batch_topk;
      std::vector<bool> corrupted;
      for (std::size_t r = 0; r < rows.size(); ++r) {
        x.row(static_cast<Eigen::Index>(r)) = dataset.features.row(static_cast<Eigen::Index>(rows[r]));
        const auto y = dataset.observed_labels[rows[r]];
        inputs.labels.push_back(y);
        inputs.proxy_rows.push_back(proxy_row.at(y));
        if (use_ssl) batch_topk.push_back(sample_topk[rows[r]]);
        corrupted.push_back(dataset.clean_labels[rows[r]] != y);
      }
      inputs.features = &x;
      if (use_ssl) inputs.language = language_similarity_matrices(table, batch_topk);

      StepEvaluation step = evaluate_step(model, inputs, cfg, std::move(state));
      state = std::move(step.state);

      IterationRecord rec;
      rec.iteration = iteration;
      rec.epoch = epoch;
      rec.objective = step.objective;
      rec.mean_dml = step.dml.mean();
      rec.mean_proxy = step.proxy.mean();
      rec.mean_ssl = step.ssl.mean();
      rec.tau = step.tau;
      rec.sigma_mean = step.sigma.mean();
      rec.sigma_min = step.sigma.minCoeff();
      rec.sigma_max = step.sigma.maxCoeff();
      rec.sigma_below_one = static_cast<double>((step.sigma.array() < 1.0).count()) /
                            static_cast<double>(step.sigma.size());
      rec.threshold_fallback = step.fell_back_to_otsu;
      rec.proxy_losses.assign(step.proxy.data(), step.proxy.data() + step.proxy.size());
      rec.dml_losses.assign(step.dml.data(), step.dml.data() + step.dml.size());
      rec.sigmas.assign(step.sigma.data(), step.sigma.data() + step.sigma.size());
      if (dataset.has_clean_labels) {
        rec.corrupted = corrupted;
        std::vector<double> clean_s, noisy_s;
        for (std::size_t r = 0; r < rows.size(); ++r) (corrupted[r] ? noisy_s : clean_s).push_back(rec.sigmas[r]);
        if (!clean_s.empty()) rec.sigma_mean_clean = mean_of(clean_s);
        if (!noisy_s.empty()) {
          rec.sigma_mean_noisy = mean_of(noisy_s);
          rec.recall_proxy = noisy_identification(step.proxy, corrupted).recall;
          rec.recall_dml = noisy_identification(step.dml, corrupted).recall;
        }
      }

      if (!std::isfinite(step.objective) || !step.proxy.allFinite()) {
        throw TrainingDiverged("non-finite loss at iteration " + std::to_string(iteration) +
                               " (objective " + std::to_string(step.objective) + ", mean proxy " +
                               std::to_string(rec.mean_proxy) + ", tau " + std::to_string(step.tau) + ")");
      }

      std::vector<const Eigen::MatrixXd*> grads;
      for (const auto& g : step.embedder_grad) {
        grads.push_back(&g.weight);
        grads.push_back(&g.bias);
      }
      embedder_opt.step(params, grads);
      proxy_opt.step({&model.proxies.proxies}, {&step.proxy_grad});
      model.proxies.renormalize();

      rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      result.history.records.push_back(std::move(rec));
    }
  }
  return result;
}

namespace {

json record_to_json(const IterationRecord& r, bool include_wall_time) {
  json j;
  j["iteration"] = r.iteration;
  j["epoch"] = r.epoch;
  j["objective"] = r.objective;
  j["mean_dml"] = r.mean_dml;
  j["mean_proxy"] = r.mean_proxy;
  j["mean_ssl"] = r.mean_ssl;
  j["tau"] = r.tau;
  j["sigma"] = {{"mean", r.sigma_mean}, {"min", r.sigma_min}, {"max", r.sigma_max}, {"below_one", r.sigma_below_one}};
  j["threshold_fallback"] = r.threshold_fallback;
  if (r.sigma_mean_clean) j["sigma_mean_clean"] = *r.sigma_mean_clean;
  if (r.sigma_mean_noisy) j["sigma_mean_noisy"] = *r.sigma_mean_noisy;
  if (r.recall_proxy) j["recall_proxy"] = *r.recall_proxy;
  if (r.recall_dml) j["recall_dml"] = *r.recall_dml;
  j["proxy_losses"] = r.proxy_losses;
  j["dml_losses"] = r.dml_losses;
  j["sigmas"] = r.sigmas;
  if (!r.corrupted.empty()) j["corrupted"] = r.corrupted;
  if (include_wall_time) j["wall_seconds"] = r.wall_seconds;
  return j;
}

template <typename T>
std::optional<T> opt(const json& j, const char* key) {
  if (!j.contains(key)) return std::nullopt;
  return j.at(key).get<T>();
}

}  // namespace

void write_history_jsonl(const TrainHistory& history, const std::filesystem::path& path,
                         bool include_wall_time) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  for (const auto& r : history.records) out << record_to_json(r, include_wall_time).dump() << '\n';
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

TrainHistory read_history_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  TrainHistory history;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      IterationRecord r;
      r.iteration = j.at("iteration").get<std::int64_t>();
      r.epoch = j.at("epoch").get<int>();
      r.objective = j.at("objective").get<double>();
      r.mean_dml = j.at("mean_dml").get<double>();
      r.mean_proxy = j.at("mean_proxy").get<double>();
      r.mean_ssl = j.value("mean_ssl", 0.0);
      r.tau = j.at("tau").get<double>();
      const json& s = j.at("sigma");
      r.sigma_mean = s.at("mean").get<double>();
      r.sigma_min = s.at("min").get<double>();
      r.sigma_max = s.at("max").get<double>();
      r.sigma_below_one = s.at("below_one").get<double>();
      r.threshold_fallback = j.value("threshold_fallback", false);
      r.sigma_mean_clean = opt<double>(j, "sigma_mean_clean");
      r.sigma_mean_noisy = opt<double>(j, "sigma_mean_noisy");
      r.recall_proxy = opt<double>(j, "recall_proxy");
      r.recall_dml = opt<double>(j, "recall_dml");
      r.proxy_losses = j.value("proxy_losses", std::vector<double>{});
      r.dml_losses = j.value("dml_losses", std::vector<double>{});
      r.sigmas = j.value("sigmas", std::vector<double>{});
      r.corrupted = j.value("corrupted", std::vector<bool>{});
      r.wall_seconds = j.value("wall_seconds", 0.0);
      history.records.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return history;
}

namespace {

json matrix_to_json(const Eigen::MatrixXd& m) {
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) throw IoError("checkpoint: matrix size mismatch");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[static_cast<std::size_t>(r * cols + c)];
  }
  return m;
}

constexpr int kCheckpointVersion = 1;

}  // namespace

void write_checkpoint(const Model& model, const TrainConfig& cfg, const std::filesystem::path& path) {
  json j;
  j["format"] = "procsim-checkpoint";
  j["version"] = kCheckpointVersion;
  j["layers"] = json::array();
  for (const auto& layer : model.embedder.layers()) {
    j["layers"].push_back({{"weight", matrix_to_json(layer.weight)}, {"bias", matrix_to_json(layer.bias)}});
  }
  j["proxies"] = matrix_to_json(model.proxies.proxies);
  j["proxy_class_ids"] = model.proxies.class_ids;
  j["config"] = to_json(cfg);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << j.dump() << '\n';
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

Model read_checkpoint(const std::filesystem::path& path, TrainConfig* cfg) {
  const json j = read_json_file(path);
  try {
    if (j.at("format") != "procsim-checkpoint") throw IoError("not a checkpoint file: " + path.string());
    if (j.at("version").get<int>() != kCheckpointVersion) {
      throw IoError("unsupported checkpoint version in " + path.string());
    }
    std::vector<DenseLayer> layers;
    for (const auto& l : j.at("layers")) {
      layers.push_back({matrix_from_json(l.at("weight")), matrix_from_json(l.at("bias"))});
    }
    Model model;
    model.embedder = Embedder(std::move(layers));
    model.proxies.proxies = matrix_from_json(j.at("proxies"));
    model.proxies.class_ids = j.at("proxy_class_ids").get<std::vector<std::int64_t>>();
    if (cfg) *cfg = train_config_from_json(j.at("config"));
    return model;
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

}  // namespace procsim
