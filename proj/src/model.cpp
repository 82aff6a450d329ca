#include "procsim/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "procsim/errors.hpp"

namespace procsim {

Embedder::Embedder(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw DomainError("Embedder: at least one layer required");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    if (layer.bias.rows() != layer.weight.rows() || layer.bias.cols() != 1) {
      throw DomainError("Embedder: bias shape mismatch");
    }
    if (l > 0 && layer.weight.cols() != layers_[l - 1].weight.rows()) {
      throw DomainError("Embedder: layer widths do not chain");
    }
  }
}

Embedder Embedder::create(Eigen::Index input_dim, const std::vector<Eigen::Index>& hidden,
                          Eigen::Index output_dim, std::mt19937_64& rng) {
  std::vector<Eigen::Index> widths{input_dim};
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(output_dim);
  std::vector<DenseLayer> layers;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const double bound = std::sqrt(6.0 / static_cast<double>(widths[l]));
    std::uniform_real_distribution<double> dist(-bound, bound);
    DenseLayer layer;
    layer.weight.resize(widths[l + 1], widths[l]);
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = dist(rng);
    }
    layer.bias = Eigen::MatrixXd::Zero(widths[l + 1], 1);
    layers.push_back(std::move(layer));
  }
  return Embedder(std::move(layers));
}

Embedder Embedder::identity(Eigen::Index dim) {
  return Embedder({DenseLayer{Eigen::MatrixXd::Identity(dim, dim), Eigen::MatrixXd::Zero(dim, 1)}});
}

Eigen::Index Embedder::input_dim() const { return layers_.front().weight.cols(); }
Eigen::Index Embedder::output_dim() const { return layers_.back().weight.rows(); }

Embedder::Cache Embedder::forward(const Eigen::MatrixXd& features) const {
  if (features.cols() != input_dim()) {
    throw DomainError("embed_batch: feature width " + std::to_string(features.cols()) +
                      " does not match embedder input " + std::to_string(input_dim()));
  }
  Cache cache;
  Eigen::MatrixXd x = features;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    cache.inputs.push_back(x);
    Eigen::MatrixXd z = x * layers_[l].weight.transpose();
    z.rowwise() += layers_[l].bias.col(0).transpose();
    cache.pre.push_back(z);
    x = (l + 1 < layers_.size()) ? Eigen::MatrixXd(z.cwiseMax(0.0)) : z;
  }
  cache.output = normalize_rows(x);
  return cache;
}

std::vector<DenseLayer> Embedder::backward(const Cache& cache, const Eigen::MatrixXd& grad_output) const {
  std::vector<DenseLayer> grads(layers_.size());
  Eigen::MatrixXd dz = normalize_rows_backward(cache.pre.back(), grad_output);
  for (std::size_t l = layers_.size(); l-- > 0;) {
    grads[l].weight = dz.transpose() * cache.inputs[l];
    grads[l].bias = dz.colwise().sum().transpose();
    if (l == 0) break;
    const Eigen::MatrixXd da = dz * layers_[l].weight;
    dz = (cache.pre[l - 1].array() > 0.0).select(da, 0.0);
  }
  return grads;
}

ProxyBank ProxyBank::create(const std::vector<std::int64_t>& class_ids, Eigen::Index dim,
                            std::mt19937_64& rng) {
  if (class_ids.empty()) throw DomainError("ProxyBank: no classes");
  ProxyBank bank;
  bank.class_ids = class_ids;
  bank.proxies.resize(static_cast<Eigen::Index>(class_ids.size()), dim);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index r = 0; r < bank.proxies.rows(); ++r) {
    for (Eigen::Index c = 0; c < dim; ++c) bank.proxies(r, c) = normal(rng);
  }
  bank.renormalize();
  return bank;
}

Eigen::Index ProxyBank::row_of(std::int64_t class_id) const {
  const auto it = std::find(class_ids.begin(), class_ids.end(), class_id);
  if (it == class_ids.end()) throw DomainError("no proxy for class " + std::to_string(class_id));
  return static_cast<Eigen::Index>(it - class_ids.begin());
}

void ProxyBank::renormalize() { proxies = normalize_rows(proxies); }

void AdamW::step(const std::vector<Eigen::MatrixXd*>& params,
                 const std::vector<const Eigen::MatrixXd*>& grads) {
  if (params.size() != grads.size()) throw DomainError("AdamW: parameter/gradient count mismatch");
  if (m_.empty()) {
    for (const auto* p : params) {
      m_.push_back(Eigen::MatrixXd::Zero(p->rows(), p->cols()));
      v_.push_back(Eigen::MatrixXd::Zero(p->rows(), p->cols()));
    }
  }
  if (m_.size() != params.size()) throw DomainError("AdamW: parameter list changed between steps");
  ++t_;
  const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Eigen::MatrixXd& p = *params[i];
    const Eigen::MatrixXd& g = *grads[i];
    if (g.rows() != p.rows() || g.cols() != p.cols()) throw DomainError("AdamW: gradient shape mismatch");
    if (options_.weight_decay > 0.0) p *= 1.0 - options_.learning_rate * options_.weight_decay;
    m_[i] = options_.beta1 * m_[i] + (1.0 - options_.beta1) * g;
    v_[i] = options_.beta2 * v_[i] + (1.0 - options_.beta2) * g.cwiseAbs2();
    p.array() -= options_.learning_rate * (m_[i].array() / bc1) /
                 ((v_[i].array() / bc2).sqrt() + options_.epsilon);
  }
}

std::vector<std::size_t> sample_batch(const Labels& labels, int classes_per_batch,
                                      int samples_per_class, std::mt19937_64& rng) {
  if (classes_per_batch < 1 || samples_per_class < 1) {
    throw DomainError("sample_batch: batch shape must be positive");
  }
  std::map<std::int64_t, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  if (static_cast<int>(by_class.size()) < classes_per_batch) {
    throw DomainError("sample_batch: " + std::to_string(by_class.size()) + " classes available, " +
                      std::to_string(classes_per_batch) + " requested");
  }
  std::vector<std::int64_t> classes;
  for (const auto& [c, _] : by_class) classes.push_back(c);

  auto pick_below = [&](std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  };
  // Partial Fisher-Yates over the class list.
  for (int k = 0; k < classes_per_batch; ++k) {
    const std::size_t j = static_cast<std::size_t>(k) + pick_below(classes.size() - static_cast<std::size_t>(k));
    std::swap(classes[static_cast<std::size_t>(k)], classes[j]);
  }
  std::vector<std::size_t> batch;
  batch.reserve(static_cast<std::size_t>(classes_per_batch * samples_per_class));
  const auto m = static_cast<std::size_t>(samples_per_class);
  for (int k = 0; k < classes_per_batch; ++k) {
    std::vector<std::size_t> members = by_class[classes[static_cast<std::size_t>(k)]];
    if (members.size() >= m) {
      for (std::size_t s = 0; s < m; ++s) {
        std::swap(members[s], members[s + pick_below(members.size() - s)]);
        batch.push_back(members[s]);
      }
    } else {
      for (std::size_t s = 0; s < m; ++s) batch.push_back(members[pick_below(members.size())]);
    }
  }
  return batch;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !(proxy_learning_rate > 0.0)) {
    throw ConfigError("learning rates must be positive");
  }
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be nonnegative");
  if (epochs < 1) throw ConfigError("epochs must be positive");
  if (classes_per_batch < 1 || samples_per_class < 1) throw ConfigError("batch shape must be positive");
  if (classes_per_batch * samples_per_class < 4) {
    throw ConfigError("classes_per_batch * samples_per_class must be at least 4");
  }
  if (hidden_layers < 0 || (hidden_layers > 0 && hidden_width < 1) || embedding_dim < 1) {
    throw ConfigError("invalid embedder shape");
  }
  confidence.validate();
  loss.validate();
}

StepEvaluation evaluate_step(const Model& model, const StepInputs& inputs, const TrainConfig& cfg,
                             ThresholdState state, const std::optional<Eigen::VectorXd>& fixed_sigma) {
  if (!inputs.features) throw DomainError("evaluate_step: no features");
  const Eigen::Index n = inputs.features->rows();
  StepEvaluation out;
  const Embedder::Cache cache = model.embedder.forward(*inputs.features);
  const Eigen::MatrixXd& e = cache.output;
  out.embeddings = e;

  const double inv_n = 1.0 / static_cast<double>(n);
  auto proxy = proxy_nca_with_grad<double>(e, inputs.proxy_rows, model.proxies.proxies,
                                           cfg.loss.proxy_scale, Eigen::VectorXd::Constant(n, inv_n),
                                           cfg.loss.include_target_in_denominator);
  out.proxy = std::move(proxy.values);
  out.proxy_grad = std::move(proxy.grad_proxies);

  if (fixed_sigma) {
    if (fixed_sigma->size() != n) throw DomainError("evaluate_step: sigma length mismatch");
    out.sigma = *fixed_sigma;
    out.state = std::move(state);
  } else if (cfg.method == TrainMethod::plain_ms) {
    out.sigma = Eigen::VectorXd::Ones(n);
    out.state = std::move(state);
  } else {
    BatchConfidence conf = batch_confidences(out.proxy, cfg.confidence, std::move(state));
    out.sigma = std::move(conf.sigma);
    out.tau = conf.tau;
    out.fell_back_to_otsu = conf.fell_back_to_otsu;
    out.state = std::move(conf.state);
  }
  if (cfg.method == TrainMethod::plain_ms || fixed_sigma) {
    // Threshold is still reported for monitoring.
    out.tau = otsu_threshold(out.proxy).threshold;
  }

  const double omega = cfg.method == TrainMethod::plain_ms ? 0.0 : cfg.loss.omega;
  const Eigen::MatrixXd s = similarity_matrix(e);
  Eigen::VectorXd ssl = Eigen::VectorXd::Zero(n);
  Eigen::MatrixXd grad_s = Eigen::MatrixXd::Zero(n, n);
  if (omega > 0.0) {
    if (inputs.language.empty()) throw ConfigError("semantic regularizer enabled without language matrices");
    auto reg = semantic_regularizer_similarity<double>(s, inputs.language, cfg.loss.ssl_temperature,
                                                       Eigen::VectorXd::Constant(n, omega * inv_n));
    ssl = std::move(reg.values);
    grad_s += reg.grad;
  }
  // sigma enters the objective linearly and is not differentiated.
  const Eigen::VectorXd dml_weights = out.sigma * inv_n;
  auto ms = ms_loss_similarity<double>(s, inputs.labels, cfg.loss, dml_weights);
  grad_s += ms.grad;
  out.dml = std::move(ms.values);
  out.ssl = std::move(ssl);
  out.objective = procsim_objective<double>(out.sigma, out.dml, out.ssl, omega).value;

  out.embedder_grad = model.embedder.backward(cache, similarity_backward(e, grad_s));
  return out;
}

}  // namespace procsim
