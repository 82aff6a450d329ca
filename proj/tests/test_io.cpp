#include <doctest.h>

#include <fstream>

#include "procsim/config.hpp"
#include "procsim/dataset.hpp"
#include "procsim/errors.hpp"
#include "procsim/model.hpp"
#include "procsim/synth.hpp"
#include "support.hpp"

using namespace procsim;

namespace {

FeatureDataset tiny_dataset() {
  FeatureDataset ds;
  ds.ids = {"a", "b", "c"};
  ds.features.resize(3, 2);
  ds.features << 0.1, -2.5, 1e-17, 3.0, 123456.789, 0.333333333333333314829616256247;
  ds.clean_labels = {0, 1, 1};
  ds.observed_labels = {0, 0, 1};
  ds.has_clean_labels = true;
  return ds;
}

SynthData small_synth() {
  SynthSpec spec;
  spec.superclass_count = 2;
  spec.classes_per_superclass = 2;
  spec.train_classes_per_superclass = 2;
  spec.samples_per_class = 8;
  spec.heldout_samples_per_class = 0;
  spec.feature_dim = 6;
  return generate(spec);
}

TrainConfig small_config() {
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.hidden_width = 8;
  cfg.embedding_dim = 4;
  cfg.classes_per_batch = 2;
  cfg.samples_per_class = 4;
  cfg.loss.omega = 1.0;
  cfg.loss.top_k = 2;
  return cfg;
}

}  // namespace

TEST_SUITE("io") {

TEST_CASE("dataset round trip is exact") {
  const auto dir = testing::scratch("io_dataset");
  const auto ds = tiny_dataset();
  write_dataset_jsonl(ds, dir / "d.jsonl");
  const auto back = read_dataset_jsonl(dir / "d.jsonl");
  CHECK(back.ids == ds.ids);
  CHECK(back.features == ds.features);
  CHECK(back.observed_labels == ds.observed_labels);
  CHECK(back.clean_labels == ds.clean_labels);
  CHECK(back.has_clean_labels);
}

TEST_CASE("dataset validation") {
  const auto dir = testing::scratch("io_dataset_bad");
  {
    std::ofstream out(dir / "ragged.jsonl");
    out << R"({"id": "a", "features": [1, 2], "label": 0})" << "\n"
        << R"({"id": "b", "features": [1], "label": 0})" << "\n";
    std::ofstream dup(dir / "dup.jsonl");
    dup << R"({"id": "a", "features": [1], "label": 0})" << "\n"
        << R"({"id": "a", "features": [1], "label": 1})" << "\n";
  }
  CHECK_THROWS(read_dataset_jsonl(dir / "ragged.jsonl"));
  CHECK_THROWS(read_dataset_jsonl(dir / "dup.jsonl"));
  CHECK_THROWS_AS(read_dataset_jsonl(dir / "missing.jsonl"), IoError);
}

TEST_CASE("semantic table and top-k round trip") {
  const auto dir = testing::scratch("io_table");
  Eigen::MatrixXd table(3, 2);
  table << 1, 2, -0.5, 1e-9, 7, 0.1;
  write_semantic_table_csv(table, dir / "t.csv");
  CHECK(read_semantic_table_csv(dir / "t.csv") == table);

  const std::vector<TopkEntry> entries{{"a", {2, 0}}, {"b", {1, 2}}};
  write_topk_jsonl(entries, dir / "k.jsonl");
  const auto back = read_topk_jsonl(dir / "k.jsonl");
  REQUIRE(back.size() == 2);
  CHECK(back[1].id == "b");
  CHECK(back[1].topk == std::vector<std::int64_t>{1, 2});
}

TEST_CASE("top-k resolution") {
  const auto ds = tiny_dataset();
  Eigen::MatrixXd table(3, 2);
  table << 0, -1, 1, 0, 0, 1;
  const auto lists = resolve_topk(ds, table, 2, nullptr);
  REQUIRE(lists.size() == 3);
  CHECK(lists[0] == std::vector<std::int64_t>{0, 1});  // (0.1, -2.5) points down
  CHECK(lists[2][0] == 1);

  const std::vector<TopkEntry> given{{"c", {2, 1, 0}}, {"a", {0, 1}}, {"b", {1, 2}}};
  const auto matched = resolve_topk(ds, table, 2, &given);
  CHECK(matched[0] == std::vector<std::int64_t>{0, 1});
  CHECK(matched[2] == std::vector<std::int64_t>{2, 1});
}

TEST_CASE("config round trip and unknown keys") {
  TrainConfig cfg;
  cfg.method = TrainMethod::plain_ms;
  cfg.confidence.lambda = 0.25;
  cfg.confidence.strategy = ThresholdStrategy::gmm;
  cfg.loss.omega = 3.0;
  cfg.seed = 99;
  const TrainConfig back = train_config_from_json(to_json(cfg));
  CHECK(to_json(back) == to_json(cfg));
  CHECK_THROWS_AS(train_config_from_json(nlohmann::json{{"learnig_rate", 1.0}}), ConfigError);

  SynthSpec spec;
  spec.heldout_samples_per_class = 7;
  CHECK(to_json(synth_spec_from_json(to_json(spec))) == to_json(spec));
}

TEST_CASE("history and checkpoint round trips") {
  const auto data = small_synth();
  const auto cfg = small_config();
  const auto result = train(data.train, &data.semantic_table, cfg);
  const auto dir = testing::scratch("io_history");

  write_history_jsonl(result.history, dir / "h.jsonl");
  const auto back = read_history_jsonl(dir / "h.jsonl");
  REQUIRE(back.records.size() == result.history.records.size());
  for (std::size_t i = 0; i < back.records.size(); ++i) {
    CHECK(back.records[i].objective == result.history.records[i].objective);
    CHECK(back.records[i].sigmas == result.history.records[i].sigmas);
    CHECK(back.records[i].tau == result.history.records[i].tau);
  }

  write_checkpoint(result.model, cfg, dir / "c.json");
  TrainConfig cfg_back;
  const Model m = read_checkpoint(dir / "c.json", &cfg_back);
  CHECK(to_json(cfg_back) == to_json(cfg));
  CHECK(m.proxies.proxies == result.model.proxies.proxies);
  CHECK(m.proxies.class_ids == result.model.proxies.class_ids);
  CHECK(m.embedder.embed(data.train.features) == result.model.embedder.embed(data.train.features));
}

TEST_CASE("training is deterministic") {
  const auto data = small_synth();
  const auto a = train(data.train, &data.semantic_table, small_config());
  const auto b = train(data.train, &data.semantic_table, small_config());
  const auto dir = testing::scratch("io_determinism");
  write_history_jsonl(a.history, dir / "a.jsonl");
  write_history_jsonl(b.history, dir / "b.jsonl");
  std::ifstream fa(dir / "a.jsonl"), fb(dir / "b.jsonl");
  const std::string sa{std::istreambuf_iterator<char>(fa), {}}, sb{std::istreambuf_iterator<char>(fb), {}};
  CHECK(!sa.empty());
  CHECK(sa == sb);
}

TEST_CASE("regularizer requires a table") {
  const auto data = small_synth();
  CHECK_THROWS_AS(train(data.train, nullptr, small_config()), ConfigError);
}

}  // TEST_SUITE
