#include <doctest.h>

#include <fstream>
#include <sstream>

#include "procsim/noise.hpp"
#include "support.hpp"

using namespace procsim;

namespace {

FeatureDataset labelled(const Labels& labels) {
  FeatureDataset ds;
  ds.features = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(labels.size()), 2);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    ds.ids.push_back("s" + std::to_string(i));
    ds.features(static_cast<Eigen::Index>(i), 0) = static_cast<double>(i);
  }
  ds.clean_labels = labels;
  ds.observed_labels = labels;
  ds.has_clean_labels = true;
  return ds;
}

FeatureDataset round_robin(std::size_t n, int classes) {
  Labels labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<std::int64_t>(i % classes);
  return labelled(labels);
}

Taxonomy binary() {
  Taxonomy t("root");
  const auto l = t.add_child(0, "left");
  const auto r = t.add_child(0, "right");
  t.add_child(l, "a", 0);
  t.add_child(l, "b", 1);
  t.add_child(r, "c", 2);
  t.add_child(r, "d", 3);
  return t;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_SUITE("noise") {

TEST_CASE("p = 0 leaves the dataset untouched") {
  const auto ds = round_robin(200, 5);
  const auto out = corrupt(ds, {NoiseModel::uniform, 0.0, 3});
  CHECK(out.dataset.observed_labels == ds.observed_labels);
  CHECK(out.manifest.realized_rate() == 0.0);
  const auto report = audit(out.manifest);
  CHECK(report.corrupted == 0);
  CHECK(report.passed());
}

TEST_CASE("p = 1 uniform changes every label") {
  const auto ds = round_robin(300, 4);
  const auto out = corrupt(ds, {NoiseModel::uniform, 1.0, 9});
  for (std::size_t i = 0; i < ds.size(); ++i) {
    CHECK(out.dataset.observed_labels[i] != ds.clean_labels[i]);
    CHECK(out.dataset.clean_labels[i] == ds.clean_labels[i]);
  }
  CHECK(out.manifest.realized_rate() == 1.0);
}

TEST_CASE("semantic noise stays inside the sibling subtree") {
  const auto ds = round_robin(400, 4);
  NoiseSpec spec{NoiseModel::semantic, 0.5, 11};
  spec.taxonomy = binary();
  const auto out = corrupt(ds, spec);
  std::size_t flipped = 0;
  for (const auto& r : out.manifest.records) {
    if (!r.corrupted) continue;
    ++flipped;
    const std::int64_t partner[] = {1, 0, 3, 2};
    CHECK(r.noisy_label == partner[r.clean_label]);
  }
  CHECK(flipped > 150);
  CHECK(flipped < 250);
  CHECK(audit(out.manifest, &*spec.taxonomy).passed());
}

TEST_CASE("audit rejects a planted cross-subtree swap") {
  const auto ds = round_robin(40, 4);
  NoiseSpec spec{NoiseModel::semantic, 0.5, 1};
  spec.taxonomy = binary();
  auto manifest = corrupt(ds, spec).manifest;
  auto& r = manifest.records.front();
  r.noisy_label = r.clean_label == 0 ? 2 : 0;
  r.corrupted = true;
  try {
    audit(manifest, &*spec.taxonomy);
    FAIL("expected AuditFailure");
  } catch (const AuditFailure& e) {
    REQUIRE(e.report().violations.size() == 1);
    CHECK(e.report().violations.front().find(r.id) != std::string::npos);
  }
}

TEST_CASE("category noise") {
  const auto ds = round_robin(200, 4);
  NoiseSpec spec{NoiseModel::category, 1.0, 2};
  spec.category_map = CategoryMap{{0, "x"}, {1, "x"}, {2, "y"}, {3, "y"}};
  const auto out = corrupt(ds, spec);
  for (const auto& r : out.manifest.records) CHECK(r.noisy_label == (r.clean_label ^ 1));
  CHECK(audit(out.manifest, nullptr, &*spec.category_map).passed());
}

TEST_CASE("star taxonomy reproduces uniform noise") {
  const auto ds = round_robin(500, 5);
  Taxonomy star("root");
  for (int c = 0; c < 5; ++c) star.add_child(0, "s" + std::to_string(c), c);
  NoiseSpec sem{NoiseModel::semantic, 0.4, 21};
  sem.taxonomy = star;
  const auto a = corrupt(ds, sem);
  const auto b = corrupt(ds, {NoiseModel::uniform, 0.4, 21});
  CHECK(a.dataset.observed_labels == b.dataset.observed_labels);
}

TEST_CASE("candidate sets") {
  const std::vector<std::int64_t> present{0, 1, 2, 3};
  CHECK(noise_candidates(NoiseModel::uniform, 2, present, nullptr, nullptr) == std::vector<std::int64_t>{0, 1, 3});
  const Taxonomy t = binary();
  CHECK(noise_candidates(NoiseModel::semantic, 2, present, &t, nullptr) == std::vector<std::int64_t>{3});
  CHECK_THROWS_AS(noise_candidates(NoiseModel::semantic, 2, present, nullptr, nullptr), ConfigError);
}

TEST_CASE("empty semantic candidate set is a configuration error") {
  // Only class 0 is present, so the pruned taxonomy has a single leaf.
  const auto ds = labelled({0, 0, 0});
  NoiseSpec spec{NoiseModel::semantic, 0.5, 1};
  spec.taxonomy = binary();
  CHECK_THROWS_AS(corrupt(ds, spec), ConfigError);
}

TEST_CASE("realized rate concentrates") {
  const auto ds = round_robin(100000, 10);
  const auto out = corrupt(ds, {NoiseModel::uniform, 0.3, 7});
  CHECK(std::abs(out.manifest.realized_rate() - 0.3) <= 0.01);
}

TEST_CASE("probability range") {
  const auto ds = round_robin(10, 2);
  CHECK_THROWS_AS(corrupt(ds, {NoiseModel::uniform, 1.5, 0}), DomainError);
  CHECK_THROWS_AS(corrupt(ds, {NoiseModel::uniform, -0.1, 0}), DomainError);
}

TEST_CASE("manifest is deterministic and round-trips") {
  const auto ds = round_robin(300, 6);
  const auto dir = testing::scratch("noise_manifest");
  write_manifest_jsonl(corrupt(ds, {NoiseModel::uniform, 0.3, 5}).manifest, dir / "a.jsonl");
  write_manifest_jsonl(corrupt(ds, {NoiseModel::uniform, 0.3, 5}).manifest, dir / "b.jsonl");
  CHECK(slurp(dir / "a.jsonl") == slurp(dir / "b.jsonl"));
  const auto back = read_manifest_jsonl(dir / "a.jsonl");
  const auto orig = corrupt(ds, {NoiseModel::uniform, 0.3, 5}).manifest;
  REQUIRE(back.records.size() == orig.records.size());
  for (std::size_t i = 0; i < back.records.size(); ++i) {
    CHECK(back.records[i].noisy_label == orig.records[i].noisy_label);
    CHECK(back.records[i].corrupted == orig.records[i].corrupted);
  }
}

TEST_CASE("a sample's fate depends only on its id") {
  const auto ds = round_robin(100, 5);
  const auto full = corrupt(ds, {NoiseModel::uniform, 0.5, 8});
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < 100; i += 3) rows.push_back(i);
  const auto part = corrupt(ds.subset(rows), {NoiseModel::uniform, 0.5, 8});
  for (std::size_t k = 0; k < rows.size(); ++k) {
    CHECK(part.manifest.records[k].corrupted == full.manifest.records[rows[k]].corrupted);
  }
}

}  // TEST_SUITE
