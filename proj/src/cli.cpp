#include "procsim/cli.hpp"

#include <chrono>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "procsim/config.hpp"
#include "procsim/digest.hpp"
#include "procsim/errors.hpp"
#include "procsim/eval.hpp"
#include "procsim/model.hpp"
#include "procsim/noise.hpp"
#include "procsim/synth.hpp"
#include "procsim/taxonomy.hpp"

namespace procsim {

using nlohmann::json;
namespace fs = std::filesystem;

void RunManifest::add_input(const fs::path& path) { inputs.push_back({path.string(), sha256_file(path)}); }
void RunManifest::add_output(const fs::path& path) { outputs.push_back({path.string(), sha256_file(path)}); }

json RunManifest::to_json() const {
  auto files = [](const std::vector<FileDigest>& v) {
    json a = json::array();
    for (const auto& f : v) a.push_back({{"path", f.path}, {"sha256", f.sha256}});
    return a;
  };
  return {{"command", command},      {"config", config},
          {"inputs", files(inputs)}, {"outputs", files(outputs)},
          {"wall_seconds", wall_seconds}, {"toolkit_version", toolkit_version}};
}

void write_run_manifest(const RunManifest& manifest, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << manifest.to_json().dump(2) << '\n';
}

namespace {

void write_json(const json& j, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

void write_text(const std::string& text, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

std::vector<int> parse_ks(const std::string& text) {
  std::vector<int> ks;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const int k = std::stoi(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      ks.push_back(k);
    } catch (const std::exception&) {
      throw ConfigError("--ks: '" + item + "' is not an integer");
    }
  }
  if (ks.empty()) throw ConfigError("--ks: empty list");
  return ks;
}

json retrieval_to_json(const RetrievalReport& r) {
  json recall = json::object();
  for (const auto& [k, v] : r.recall_at) recall[std::to_string(k)] = v;
  return {{"recall_at", recall}, {"query_count", r.query_count}, {"gallery_count", r.gallery_count}, {"ks", r.ks}};
}

json identification_to_json(const IdentificationReport& r) {
  return {{"recall", r.recall},
          {"precision", r.precision},
          {"threshold", r.threshold},
          {"true_positives", r.true_positives},
          {"false_positives", r.false_positives},
          {"true_negatives", r.true_negatives},
          {"false_negatives", r.false_negatives},
          {"recall_degenerate", r.recall_degenerate},
          {"precision_degenerate", r.precision_degenerate}};
}

const Labels& retrieval_labels(const FeatureDataset& d) {
  return d.has_clean_labels ? d.clean_labels : d.observed_labels;
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
  std::string config, out;
  std::optional<int> superclasses, classes_per_superclass, samples_per_class, dim, train_classes, heldout;
  std::optional<double> superclass_spread, class_spread, noise_std;
  std::optional<std::uint64_t> seed;
};

void write_category_map(const SynthData& data, const fs::path& path) {
  std::ostringstream csv;
  csv << "class_id,category\n";
  for (std::size_t c = 0; c < data.class_names.size(); ++c) {
    const auto& name = data.class_names[c];
    csv << c << ',' << name.substr(0, name.find('_')) << '\n';
  }
  write_text(csv.str(), path);
}

void cmd_synth(const SynthArgs& a, RunManifest& rm) {
  SynthSpec spec;
  if (!a.config.empty()) {
    spec = synth_spec_from_json(read_json_file(a.config));
    rm.add_input(a.config);
  }
  if (a.superclasses) spec.superclass_count = *a.superclasses;
  if (a.classes_per_superclass) spec.classes_per_superclass = *a.classes_per_superclass;
  if (a.samples_per_class) spec.samples_per_class = *a.samples_per_class;
  if (a.dim) spec.feature_dim = *a.dim;
  if (a.train_classes) spec.train_classes_per_superclass = *a.train_classes;
  if (a.heldout) spec.heldout_samples_per_class = *a.heldout;
  if (a.superclass_spread) spec.superclass_spread = *a.superclass_spread;
  if (a.class_spread) spec.class_spread = *a.class_spread;
  if (a.noise_std) spec.noise_std = *a.noise_std;
  if (a.seed) spec.seed = *a.seed;
  spec.validate();
  rm.config = to_json(spec);

  const SynthData data = generate(spec);
  const fs::path out(a.out);
  fs::create_directories(out);
  write_dataset_jsonl(data.all, out / "all.jsonl");
  write_dataset_jsonl(data.train, out / "train.jsonl");
  write_dataset_jsonl(data.test, out / "test.jsonl");
  write_dataset_jsonl(data.heldout, out / "heldout.jsonl");
  write_taxonomy(data.taxonomy, out / "taxonomy.json");
  write_semantic_table_csv(data.semantic_table, out / "semantic_table.csv");
  write_category_map(data, out / "categories.csv");
  std::string names;
  for (const auto& n : data.class_names) names += n + '\n';
  write_text(names, out / "class_names.txt");
  for (const char* f : {"all.jsonl", "train.jsonl", "test.jsonl", "heldout.jsonl", "taxonomy.json",
                        "semantic_table.csv", "categories.csv", "class_names.txt"}) {
    rm.add_output(out / f);
  }
}

// ------------------------------------------------------- build-taxonomy

struct TaxonomyArgs {
  std::string classes, graph, senses, root, overrides, out;
};

void cmd_build_taxonomy(const TaxonomyArgs& a, RunManifest& rm) {
  const auto names = read_lines(a.classes);
  const LexicalGraph graph = read_lexical_graph(a.graph, a.senses);
  std::map<std::string, std::string> overrides;
  if (!a.overrides.empty()) overrides = read_overrides(a.overrides);
  rm.config = {{"root", a.root}, {"class_count", names.size()}};
  rm.add_input(a.classes);
  rm.add_input(a.graph);
  rm.add_input(a.senses);
  if (!a.overrides.empty()) rm.add_input(a.overrides);
  const Taxonomy tax = build_hierarchy(names, graph, a.root, overrides);
  write_taxonomy(tax, a.out);
  rm.add_output(a.out);
}

// --------------------------------------------------------- inject-noise

struct NoiseArgs {
  std::string dataset, model, taxonomy, categories, out;
  double p = 0.0;
  std::uint64_t seed = 0;
};

void cmd_inject_noise(const NoiseArgs& a, RunManifest& rm) {
  NoiseSpec spec;
  spec.model = parse_noise_model(a.model);
  spec.probability = a.p;
  spec.seed = a.seed;
  rm.add_input(a.dataset);
  if (!a.taxonomy.empty()) {
    spec.taxonomy = read_taxonomy(a.taxonomy);
    rm.add_input(a.taxonomy);
  }
  if (!a.categories.empty()) {
    spec.category_map = read_category_map(a.categories);
    rm.add_input(a.categories);
  }
  spec.validate();
  rm.config = {{"model", std::string(to_string(spec.model))}, {"p", spec.probability}, {"seed", spec.seed}};

  const FeatureDataset input = read_dataset_jsonl(a.dataset);
  const CorruptionResult result = corrupt(input, spec);
  const Taxonomy* tax = spec.taxonomy ? &*spec.taxonomy : nullptr;
  const CategoryMap* cats = spec.category_map ? &*spec.category_map : nullptr;
  const AuditReport report = audit(result.manifest, spec.model == NoiseModel::semantic ? tax : nullptr,
                                   spec.model == NoiseModel::category ? cats : nullptr);

  const fs::path out(a.out);
  fs::create_directories(out);
  write_dataset_jsonl(result.dataset, out / "dataset.jsonl");
  write_manifest_jsonl(result.manifest, out / "noise_manifest.jsonl");
  json counts = json::object();
  for (const auto& [c, n] : report.corrupted_per_class) counts[std::to_string(c)] = n;
  write_json({{"total", report.total},
              {"corrupted", report.corrupted},
              {"realized_rate", report.realized_rate},
              {"corrupted_per_class", counts}},
             out / "audit.json");
  for (const char* f : {"dataset.jsonl", "noise_manifest.jsonl", "audit.json"}) rm.add_output(out / f);
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string dataset, table, config, topk, out;
  std::optional<int> epochs;
  std::optional<double> lr, lambda, omega;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> method, strategy;
  bool wall_time = false;
};

TrainConfig resolve_train_config(const TrainArgs& a, RunManifest& rm) {
  TrainConfig cfg;
  if (!a.config.empty()) {
    cfg = train_config_from_json(read_json_file(a.config));
    rm.add_input(a.config);
  }
  // Flags take precedence over the file.
  json overrides = json::object();
  if (a.epochs) overrides["epochs"] = *a.epochs;
  if (a.lr) overrides["learning_rate"] = *a.lr;
  if (a.seed) overrides["seed"] = *a.seed;
  if (a.method) overrides["method"] = *a.method;
  if (a.lambda) overrides["confidence"]["lambda"] = *a.lambda;
  if (a.strategy) overrides["confidence"]["strategy"] = *a.strategy;
  if (a.omega) overrides["loss"]["omega"] = *a.omega;
  return train_config_from_json(overrides, cfg);
}

void cmd_train(const TrainArgs& a, RunManifest& rm) {
  const TrainConfig cfg = resolve_train_config(a, rm);
  rm.config = to_json(cfg);
  const FeatureDataset dataset = read_dataset_jsonl(a.dataset);
  rm.add_input(a.dataset);
  std::optional<Eigen::MatrixXd> table;
  if (!a.table.empty()) {
    table = read_semantic_table_csv(a.table);
    rm.add_input(a.table);
  }
  std::optional<std::vector<TopkEntry>> topk;
  if (!a.topk.empty()) {
    topk = read_topk_jsonl(a.topk);
    rm.add_input(a.topk);
  }
  const TrainResult result = train(dataset, table ? &*table : nullptr, cfg, topk ? &*topk : nullptr);
  const fs::path out(a.out);
  fs::create_directories(out);
  write_checkpoint(result.model, cfg, out / "checkpoint.json");
  write_history_jsonl(result.history, out / "history.jsonl", a.wall_time);
  rm.add_output(out / "checkpoint.json");
  rm.add_output(out / "history.jsonl");
}

// ----------------------------------------------------------------- eval

struct EvalArgs {
  std::string checkpoint, dataset, ks = "1,2,4,8", manifest, out;
  bool nmi = false;
  std::uint64_t nmi_seed = 0;
};

json evaluate(const Model& model, const FeatureDataset& data, const std::vector<int>& ks,
              const NoiseManifest* manifest, const TrainConfig& cfg, bool with_nmi, std::uint64_t nmi_seed) {
  const Eigen::MatrixXd emb = model.embedder.embed(data.features);
  json report;
  report["retrieval"] = retrieval_to_json(recall_at_k(emb, retrieval_labels(data), ks));
  if (manifest) {
    std::map<std::string, bool> flag;
    for (const auto& r : manifest->records) flag[r.id] = r.corrupted;
    std::vector<bool> corrupted;
    Labels rows;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto it = flag.find(data.ids[i]);
      if (it == flag.end()) throw ConfigError("manifest has no record for '" + data.ids[i] + "'");
      corrupted.push_back(it->second);
      rows.push_back(model.proxies.row_of(data.observed_labels[i]));
    }
    const Eigen::VectorXd losses = proxy_nca_per_sample<double>(emb, rows, model.proxies.proxies,
                                                                cfg.loss.proxy_scale,
                                                                cfg.loss.include_target_in_denominator);
    report["identification"] = identification_to_json(noisy_identification(losses, corrupted));
  }
  if (with_nmi) {
    const NmiResult r = nmi(emb, retrieval_labels(data), 0, nmi_seed);
    report["nmi"] = {{"value", r.value}, {"degenerate", r.degenerate}, {"seed", nmi_seed}};
  }
  return report;
}

void cmd_eval(const EvalArgs& a, RunManifest& rm) {
  const std::vector<int> ks = parse_ks(a.ks);
  TrainConfig cfg;
  const Model model = read_checkpoint(a.checkpoint, &cfg);
  rm.add_input(a.checkpoint);
  const FeatureDataset data = read_dataset_jsonl(a.dataset);
  rm.add_input(a.dataset);
  std::optional<NoiseManifest> manifest;
  if (!a.manifest.empty()) {
    manifest = read_manifest_jsonl(a.manifest);
    rm.add_input(a.manifest);
  }
  rm.config = {{"ks", ks}, {"nmi", a.nmi}, {"nmi_seed", a.nmi_seed}};
  const json report = evaluate(model, data, ks, manifest ? &*manifest : nullptr, cfg, a.nmi, a.nmi_seed);
  const fs::path out = fs::path(a.out) / "report.json";
  write_json(report, out);
  rm.add_output(out);
}

// --------------------------------------------------------------- ablate

struct AblateArgs {
  std::string grid, out;
};

struct AblationCell {
  std::string row;  // threshold strategy, or the plain-MS baseline
  NoiseModel model;
  double p;
  double recall_at_1;
};

std::string fmt(double v, int precision) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(precision) << v;
  return ss.str();
}

void cmd_ablate(const AblateArgs& a, RunManifest& rm, std::ostream& log) {
  const json grid = read_json_file(a.grid);
  rm.add_input(a.grid);
  const std::set<std::string> allowed{"synth",      "train",      "strategies", "noise_models", "probabilities",
                                      "noise_seed", "train_seeds", "eval_split", "include_baseline"};
  for (const auto& [k, _] : grid.items()) {
    if (!allowed.count(k)) throw ConfigError("grid: unknown key '" + k + "'");
  }
  const SynthSpec spec = synth_spec_from_json(grid.value("synth", json::object()));
  const TrainConfig base = train_config_from_json(grid.value("train", json::object()));
  std::vector<ThresholdStrategy> strategies;
  for (const auto& s : grid.value("strategies", std::vector<std::string>{"otsu", "global_average", "gmm"})) {
    strategies.push_back(parse_threshold_strategy(s));
  }
  std::vector<NoiseModel> models;
  for (const auto& m : grid.value("noise_models", std::vector<std::string>{"uniform", "semantic"})) {
    models.push_back(parse_noise_model(m));
  }
  const auto probabilities = grid.value("probabilities", std::vector<double>{0.0, 0.2, 0.5});
  const auto noise_seed = grid.value("noise_seed", std::uint64_t{1});
  const auto train_seeds = grid.value("train_seeds", std::vector<std::uint64_t>{base.seed});
  const auto split = grid.value("eval_split", std::string("heldout"));
  const bool baseline = grid.value("include_baseline", true);
  if (split != "heldout" && split != "test") throw ConfigError("grid: eval_split must be 'heldout' or 'test'");
  if (strategies.empty() || models.empty() || probabilities.empty() || train_seeds.empty()) {
    throw ConfigError("grid: every axis needs at least one value");
  }
  rm.config = grid;

  const SynthData data = generate(spec);
  const FeatureDataset& eval_set = split == "heldout" ? data.heldout : data.test;
  std::vector<std::pair<std::string, TrainConfig>> rows;
  for (auto s : strategies) {
    TrainConfig cfg = base;
    cfg.method = TrainMethod::procsim;
    cfg.confidence.strategy = s;
    rows.emplace_back(std::string(to_string(s)), cfg);
  }
  if (baseline) {
    TrainConfig cfg = base;
    cfg.method = TrainMethod::plain_ms;
    rows.emplace_back("plain_ms", cfg);
  }

  std::vector<AblationCell> cells;
  // p = 0 leaves the labels untouched, so those cells are shared across noise models.
  std::map<std::string, double> clean_cache;
  for (auto model : models) {
    for (double p : probabilities) {
      NoiseSpec ns;
      ns.model = model;
      ns.probability = p;
      ns.seed = noise_seed;
      ns.taxonomy = data.taxonomy;
      const FeatureDataset noisy = corrupt(data.train, ns).dataset;
      for (const auto& [name, cfg0] : rows) {
        if (p == 0.0 && clean_cache.count(name)) {
          cells.push_back({name, model, p, clean_cache[name]});
          continue;
        }
        double sum = 0.0;
        for (auto seed : train_seeds) {
          TrainConfig cfg = cfg0;
          cfg.seed = seed;
          const TrainResult res = train(noisy, &data.semantic_table, cfg);
          const auto rep = recall_at_k(res.model.embedder.embed(eval_set.features), eval_set.clean_labels, {1});
          sum += rep.recall_at.at(1);
        }
        const double r1 = sum / static_cast<double>(train_seeds.size());
        if (p == 0.0) clean_cache[name] = r1;
        cells.push_back({name, model, p, r1});
        log << "ablate: " << to_string(model) << " p=" << p << " " << name << " R@1=" << fmt(r1, 4) << '\n';
      }
    }
  }

  const fs::path out(a.out);
  fs::create_directories(out);
  json jcells = json::array();
  std::ostringstream csv;
  csv << "noise_model,p,strategy,recall_at_1\n";
  for (const auto& c : cells) {
    jcells.push_back({{"noise_model", std::string(to_string(c.model))}, {"p", c.p}, {"strategy", c.row},
                      {"recall_at_1", c.recall_at_1}});
    csv << to_string(c.model) << ',' << c.p << ',' << c.row << ',' << fmt(c.recall_at_1, 6) << '\n';
  }
  write_json({{"eval_split", split}, {"train_seeds", train_seeds}, {"cells", jcells}}, out / "ablation.json");
  write_text(csv.str(), out / "ablation.csv");

  // Rows are methods, columns are (noise model, p), plus the harmonic mean over noisy columns.
  std::ostringstream md;
  md << "| Method |";
  for (auto m : models) {
    for (double p : probabilities) md << ' ' << to_string(m) << ' ' << fmt(100 * p, 0) << "% |";
  }
  md << " HM |\n|---|";
  for (std::size_t i = 0; i < models.size() * probabilities.size(); ++i) md << "---|";
  md << "---|\n";
  for (const auto& [name, _] : rows) {
    md << "| " << name << " |";
    double inv_sum = 0.0;
    int noisy_cols = 0;
    for (const auto& c : cells) {
      if (c.row != name) continue;
      md << ' ' << fmt(100 * c.recall_at_1, 1) << " |";
      if (c.p > 0.0) {
        inv_sum += 1.0 / std::max(c.recall_at_1, 1e-12);
        ++noisy_cols;
      }
    }
    md << ' ' << (noisy_cols ? fmt(100 * noisy_cols / inv_sum, 1) : std::string("-")) << " |\n";
  }
  write_text(md.str(), out / "ablation.md");
  for (const char* f : {"ablation.json", "ablation.csv", "ablation.md"}) rm.add_output(out / f);
}

// --------------------------------------------------- analyze-confidence

struct AnalyzeArgs {
  std::string history, out;
  int bins = 20;
  int last = 0;
};

void cmd_analyze(const AnalyzeArgs& a, RunManifest& rm) {
  if (a.bins < 1) throw ConfigError("--bins must be at least 1");
  if (a.last < 0) throw ConfigError("--last must be nonnegative");
  const TrainHistory history = read_history_jsonl(a.history);
  rm.add_input(a.history);
  rm.config = {{"bins", a.bins}, {"last", a.last}};
  const std::size_t n = history.records.size();
  const std::size_t first = (a.last > 0 && static_cast<std::size_t>(a.last) < n) ? n - a.last : 0;

  std::vector<double> sigma, proxy, dml, proxy_clean, proxy_noisy, dml_clean, dml_noisy, sigma_clean, sigma_noisy;
  bool flagged = false;
  for (std::size_t r = first; r < n; ++r) {
    const auto& rec = history.records[r];
    sigma.insert(sigma.end(), rec.sigmas.begin(), rec.sigmas.end());
    proxy.insert(proxy.end(), rec.proxy_losses.begin(), rec.proxy_losses.end());
    dml.insert(dml.end(), rec.dml_losses.begin(), rec.dml_losses.end());
    if (rec.corrupted.size() != rec.proxy_losses.size()) continue;
    flagged = true;
    for (std::size_t i = 0; i < rec.corrupted.size(); ++i) {
      const bool noisy = rec.corrupted[i];
      (noisy ? proxy_noisy : proxy_clean).push_back(rec.proxy_losses[i]);
      (noisy ? dml_noisy : dml_clean).push_back(rec.dml_losses[i]);
      (noisy ? sigma_noisy : sigma_clean).push_back(rec.sigmas[i]);
    }
  }
  const fs::path out(a.out);
  fs::create_directories(out);
  std::vector<std::string> files;
  auto emit = [&](const std::vector<double>& v, const std::string& name, double lo, double hi) {
    write_histogram_csv(v.empty() ? Histogram{} : make_histogram(v, a.bins, lo, hi), out / name);
    files.push_back(name);
  };
  auto range = [](const std::vector<double>& v) {
    if (v.empty()) return std::pair{0.0, 1.0};
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    return *lo == *hi ? std::pair{*lo - 0.5, *hi + 0.5} : std::pair{*lo, *hi};
  };
  // Sigma lives in [0, 1]; loss histograms share one range so clean and noisy overlay.
  emit(sigma, "sigma.csv", 0.0, 1.0);
  const auto [plo, phi] = range(proxy);
  const auto [dlo, dhi] = range(dml);
  emit(proxy, "proxy_loss.csv", plo, phi);
  emit(dml, "ms_loss.csv", dlo, dhi);
  if (flagged) {
    emit(sigma_clean, "sigma_clean.csv", 0.0, 1.0);
    emit(sigma_noisy, "sigma_noisy.csv", 0.0, 1.0);
    emit(proxy_clean, "proxy_loss_clean.csv", plo, phi);
    emit(proxy_noisy, "proxy_loss_noisy.csv", plo, phi);
    emit(dml_clean, "ms_loss_clean.csv", dlo, dhi);
    emit(dml_noisy, "ms_loss_noisy.csv", dlo, dhi);
  }
  for (const auto& f : files) rm.add_output(out / f);
}

// -------------------------------------------------------------- driver

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename Fn>
int guarded(Fn&& fn, std::ostream& err) {
  try {
    fn();
    return kExitOk;
  } catch (const UnresolvedClassError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const AuditFailure& e) {
    err << "error: " << e.what() << '\n';
    for (const auto& v : e.report().violations) err << "  " << v << '\n';
    return kExitRuntime;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const DomainError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const TrainingDiverged& e) {
    err << "error: training diverged: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Confidence-aware metric learning under label noise"};
  app.name("procsim");
  app.set_version_flag("--version", kToolkitVersion);
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate the hierarchical Gaussian benchmark");
  s->add_option("--out", synth.out, "Output directory")->required();
  s->add_option("--config", synth.config, "SynthSpec JSON file (flags override it)")->check(CLI::ExistingFile);
  s->add_option("--superclasses", synth.superclasses, "Number of superclasses");
  s->add_option("--classes-per-superclass", synth.classes_per_superclass, "Classes under each superclass");
  s->add_option("--samples-per-class", synth.samples_per_class, "Samples per class");
  s->add_option("--dim", synth.dim, "Feature dimension");
  s->add_option("--train-classes-per-superclass", synth.train_classes, "Classes per superclass in the training split");
  s->add_option("--heldout-samples-per-class", synth.heldout, "Extra unseen samples per training class");
  s->add_option("--superclass-spread", synth.superclass_spread, "Scale of superclass centers");
  s->add_option("--class-spread", synth.class_spread, "Scale of class centers around their superclass");
  s->add_option("--noise-std", synth.noise_std, "Scale of samples around their class center");
  s->add_option("--seed", synth.seed, "Random seed");

  TaxonomyArgs taxo;
  auto* b = app.add_subcommand("build-taxonomy", "Build a class taxonomy from a hypernym graph");
  b->add_option("--classes", taxo.classes, "Class names, one per line (line order = class id)")
      ->required()->check(CLI::ExistingFile);
  b->add_option("--graph", taxo.graph, "Hypernym edges, child<TAB>hypernym per line")
      ->required()->check(CLI::ExistingFile);
  b->add_option("--senses", taxo.senses, "JSON map class name -> candidate concepts")
      ->required()->check(CLI::ExistingFile);
  b->add_option("--root", taxo.root, "Required root concept")->required();
  b->add_option("--overrides", taxo.overrides, "JSON map class name -> forced hypernym")->check(CLI::ExistingFile);
  b->add_option("--out", taxo.out, "Output taxonomy JSON")->required();

  NoiseArgs noise;
  auto* n = app.add_subcommand("inject-noise", "Corrupt dataset labels and write a noise manifest");
  n->add_option("--dataset", noise.dataset, "Input dataset JSONL")->required()->check(CLI::ExistingFile);
  n->add_option("--model", noise.model, "Noise model")->required()->check(
      CLI::IsMember({"uniform", "semantic", "category"}));
  n->add_option("--p", noise.p, "Corruption probability in [0, 1]")->required();
  n->add_option("--seed", noise.seed, "Random seed")->required();
  auto* tax_opt = n->add_option("--taxonomy", noise.taxonomy, "Taxonomy JSON (semantic model)")
                      ->check(CLI::ExistingFile);
  n->add_option("--categories", noise.categories, "Category CSV class_id,category (category model)")
      ->check(CLI::ExistingFile)->excludes(tax_opt);
  n->add_option("--out", noise.out, "Output directory")->required();

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train an embedder and proxy bank");
  t->add_option("--dataset", tr.dataset, "Training dataset JSONL")->required()->check(CLI::ExistingFile);
  t->add_option("--semantic-table", tr.table, "Class embedding CSV class_id,e1,...")->check(CLI::ExistingFile);
  t->add_option("--config", tr.config, "TrainConfig JSON (flags override it)")->check(CLI::ExistingFile);
  t->add_option("--topk", tr.topk, "Per-sample top-k class lists JSONL")->check(CLI::ExistingFile);
  t->add_option("--epochs", tr.epochs, "Epochs");
  t->add_option("--learning-rate", tr.lr, "Embedder learning rate");
  t->add_option("--seed", tr.seed, "Random seed");
  t->add_option("--method", tr.method, "procsim or plain_ms")->check(CLI::IsMember({"procsim", "plain_ms"}));
  t->add_option("--lambda", tr.lambda, "Confidence temperature");
  t->add_option("--strategy", tr.strategy, "Threshold strategy")->check(
      CLI::IsMember({"otsu", "global_average", "gmm"}));
  t->add_option("--omega", tr.omega, "Semantic regularizer weight");
  t->add_flag("--wall-time", tr.wall_time, "Record wall time in the history (breaks byte-identical reruns)");
  t->add_option("--out", tr.out, "Output directory")->required();

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Retrieval and noise-identification metrics");
  e->add_option("--checkpoint", ev.checkpoint, "Checkpoint JSON")->required()->check(CLI::ExistingFile);
  e->add_option("--dataset", ev.dataset, "Evaluation dataset JSONL")->required()->check(CLI::ExistingFile);
  e->add_option("--ks", ev.ks, "Comma-separated K values")->capture_default_str();
  e->add_option("--manifest", ev.manifest, "Noise manifest; adds noisy-sample identification")
      ->check(CLI::ExistingFile);
  e->add_flag("--nmi", ev.nmi, "Also report k-means NMI");
  e->add_option("--nmi-seed", ev.nmi_seed, "Seed for the NMI clustering")->capture_default_str();
  e->add_option("--out", ev.out, "Output directory")->required();

  AblateArgs ab;
  auto* g = app.add_subcommand("ablate", "Recall@1 over threshold strategy x noise model x noise rate");
  g->add_option("--grid", ab.grid, "Grid JSON")->required()->check(CLI::ExistingFile);
  g->add_option("--out", ab.out, "Output directory")->required();

  AnalyzeArgs an;
  auto* c = app.add_subcommand("analyze-confidence", "Histograms of confidences and losses from a history");
  c->add_option("--history", an.history, "History JSONL")->required()->check(CLI::ExistingFile);
  c->add_option("--bins", an.bins, "Histogram bins")->capture_default_str();
  c->add_option("--last", an.last, "Only the last N iterations (0 = all)")->capture_default_str();
  c->add_option("--out", an.out, "Output directory")->required();

  std::vector<std::string> rest(args);
  std::reverse(rest.begin(), rest.end());
  try {
    app.parse(rest);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << kToolkitVersion << '\n';
    return kExitOk;
  } catch (const CLI::ParseError& pe) {
    err << "error: " << pe.what() << '\n';
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return kExitValidation;
  }

  RunManifest rm;
  rm.command = app.get_subcommands().front()->get_name();
  fs::path manifest_dir;
  const auto start = std::chrono::steady_clock::now();
  const int code = guarded(
      [&] {
        if (s->parsed()) {
          manifest_dir = synth.out;
          cmd_synth(synth, rm);
        } else if (b->parsed()) {
          manifest_dir = fs::path(taxo.out).parent_path();
          cmd_build_taxonomy(taxo, rm);
        } else if (n->parsed()) {
          manifest_dir = noise.out;
          cmd_inject_noise(noise, rm);
        } else if (t->parsed()) {
          manifest_dir = tr.out;
          cmd_train(tr, rm);
        } else if (e->parsed()) {
          manifest_dir = ev.out;
          cmd_eval(ev, rm);
        } else if (g->parsed()) {
          manifest_dir = ab.out;
          cmd_ablate(ab, rm, err);
        } else if (c->parsed()) {
          manifest_dir = an.out;
          cmd_analyze(an, rm);
        }
        rm.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        write_run_manifest(rm, manifest_dir / "run_manifest.json");
      },
      err);
  if (code == kExitOk) out << rm.command << ": wrote " << (manifest_dir / "run_manifest.json").string() << '\n';
  return code;
}

int run(int argc, const char* const* argv) {
  return run(std::vector<std::string>(argv + (argc > 0 ? 1 : 0), argv + argc), std::cout, std::cerr);
}

}  // namespace procsim
