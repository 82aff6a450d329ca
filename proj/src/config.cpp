#include "procsim/config.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include "procsim/errors.hpp"

namespace procsim {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + ": bad value for '" + key + "'");
  }
}

// Accepts a number or the strings "inf"/"infinity".
void read_positive_or_inf(const json& j, const char* key, double& out, const std::string& where) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if (v.is_string() && (v == "inf" || v == "infinity")) {
    out = std::numeric_limits<double>::infinity();
    return;
  }
  read(j, key, out, where);
}

json number_or_inf(double v) {
  if (std::isinf(v)) return "inf";
  return v;
}

}  // namespace

TrainConfig train_config_from_json(const json& j, TrainConfig cfg) {
  const std::string where = "train config";
  reject_unknown(j,
                 {"method", "learning_rate", "proxy_learning_rate", "weight_decay", "epochs",
                  "classes_per_batch", "samples_per_class", "hidden_width", "hidden_layers",
                  "embedding_dim", "seed", "confidence", "loss"},
                 where);
  if (j.contains("method")) {
    const auto m = j.at("method").get<std::string>();
    if (m == "procsim") cfg.method = TrainMethod::procsim;
    else if (m == "plain_ms") cfg.method = TrainMethod::plain_ms;
    else throw ConfigError(where + ": unknown method '" + m + "'");
  }
  read(j, "learning_rate", cfg.learning_rate, where);
  read(j, "proxy_learning_rate", cfg.proxy_learning_rate, where);
  read(j, "weight_decay", cfg.weight_decay, where);
  read(j, "epochs", cfg.epochs, where);
  read(j, "classes_per_batch", cfg.classes_per_batch, where);
  read(j, "samples_per_class", cfg.samples_per_class, where);
  read(j, "hidden_width", cfg.hidden_width, where);
  read(j, "hidden_layers", cfg.hidden_layers, where);
  read(j, "embedding_dim", cfg.embedding_dim, where);
  read(j, "seed", cfg.seed, where);
  if (j.contains("confidence")) {
    const json& c = j.at("confidence");
    const std::string w = where + ".confidence";
    reject_unknown(c, {"lambda", "beta0", "strategy"}, w);
    read_positive_or_inf(c, "lambda", cfg.confidence.lambda, w);
    if (c.contains("beta0")) {
      const json& b = c.at("beta0");
      if (b.is_string() && b == "-2/e") cfg.confidence.beta0 = kBeta0Unconstrained;
      else read(c, "beta0", cfg.confidence.beta0, w);
    }
    if (c.contains("strategy")) cfg.confidence.strategy = parse_threshold_strategy(c.at("strategy").get<std::string>());
  }
  if (j.contains("loss")) {
    const json& l = j.at("loss");
    const std::string w = where + ".loss";
    reject_unknown(l,
                   {"alpha", "beta", "delta", "omega", "proxy_scale", "top_k", "contrastive_margin",
                    "ssl_temperature", "include_target_in_denominator"},
                   w);
    read(l, "alpha", cfg.loss.alpha, w);
    read(l, "beta", cfg.loss.beta, w);
    read(l, "delta", cfg.loss.delta, w);
    read(l, "omega", cfg.loss.omega, w);
    read(l, "proxy_scale", cfg.loss.proxy_scale, w);
    read(l, "top_k", cfg.loss.top_k, w);
    read(l, "contrastive_margin", cfg.loss.contrastive_margin, w);
    read(l, "ssl_temperature", cfg.loss.ssl_temperature, w);
    read(l, "include_target_in_denominator", cfg.loss.include_target_in_denominator, w);
  }
  cfg.validate();
  return cfg;
}

json to_json(const TrainConfig& cfg) {
  json j;
  j["method"] = cfg.method == TrainMethod::procsim ? "procsim" : "plain_ms";
  j["learning_rate"] = cfg.learning_rate;
  j["proxy_learning_rate"] = cfg.proxy_learning_rate;
  j["weight_decay"] = cfg.weight_decay;
  j["epochs"] = cfg.epochs;
  j["classes_per_batch"] = cfg.classes_per_batch;
  j["samples_per_class"] = cfg.samples_per_class;
  j["hidden_width"] = cfg.hidden_width;
  j["hidden_layers"] = cfg.hidden_layers;
  j["embedding_dim"] = cfg.embedding_dim;
  j["seed"] = cfg.seed;
  j["confidence"] = {{"lambda", number_or_inf(cfg.confidence.lambda)},
                     {"beta0", cfg.confidence.beta0 == kBeta0Unconstrained ? json("-2/e") : json(cfg.confidence.beta0)},
                     {"strategy", std::string(to_string(cfg.confidence.strategy))}};
  j["loss"] = {{"alpha", cfg.loss.alpha},
               {"beta", cfg.loss.beta},
               {"delta", cfg.loss.delta},
               {"omega", cfg.loss.omega},
               {"proxy_scale", cfg.loss.proxy_scale},
               {"top_k", cfg.loss.top_k},
               {"contrastive_margin", cfg.loss.contrastive_margin},
               {"ssl_temperature", cfg.loss.ssl_temperature},
               {"include_target_in_denominator", cfg.loss.include_target_in_denominator}};
  return j;
}

SynthSpec synth_spec_from_json(const json& j, SynthSpec spec) {
  const std::string where = "synth spec";
  reject_unknown(j,
                 {"superclass_count", "classes_per_superclass", "samples_per_class", "feature_dim",
                  "superclass_spread", "class_spread", "noise_std", "train_classes_per_superclass", "heldout_samples_per_class", "seed"},
                 where);
  read(j, "superclass_count", spec.superclass_count, where);
  read(j, "classes_per_superclass", spec.classes_per_superclass, where);
  read(j, "samples_per_class", spec.samples_per_class, where);
  read(j, "feature_dim", spec.feature_dim, where);
  read(j, "superclass_spread", spec.superclass_spread, where);
  read(j, "class_spread", spec.class_spread, where);
  read(j, "noise_std", spec.noise_std, where);
  read(j, "train_classes_per_superclass", spec.train_classes_per_superclass, where);
  read(j, "heldout_samples_per_class", spec.heldout_samples_per_class, where);
  read(j, "seed", spec.seed, where);
  spec.validate();
  return spec;
}

json to_json(const SynthSpec& spec) {
  return {{"superclass_count", spec.superclass_count},
          {"classes_per_superclass", spec.classes_per_superclass},
          {"samples_per_class", spec.samples_per_class},
          {"feature_dim", spec.feature_dim},
          {"superclass_spread", spec.superclass_spread},
          {"class_spread", spec.class_spread},
          {"noise_std", spec.noise_std},
          {"train_classes_per_superclass", spec.train_classes_per_superclass},
          {"heldout_samples_per_class", spec.heldout_samples_per_class},
          {"seed", spec.seed}};
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

}  // namespace procsim
