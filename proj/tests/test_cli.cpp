#include <doctest.h>

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "procsim/cli.hpp"
#include "procsim/dataset.hpp"
#include "procsim/digest.hpp"
#include "support.hpp"

using namespace procsim;

namespace {

int call(const std::vector<std::string>& args, std::string* err_text = nullptr) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  if (err_text) *err_text = err.str();
  return code;
}

std::string p(const std::filesystem::path& path) { return path.string(); }

// Small synth: 3 superclasses x 2 classes, all used for training.
void make_synth(const std::filesystem::path& dir) {
  REQUIRE(call({"synth", "--out", p(dir), "--superclasses", "3", "--classes-per-superclass", "2",
                "--train-classes-per-superclass", "2", "--samples-per-class", "10",
                "--heldout-samples-per-class", "4", "--dim", "6", "--seed", "3"}) == kExitOk);
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("usage errors exit with 1") {
  std::string err;
  CHECK(call({"synth", "--out", "x", "--bogus"}, &err) == kExitValidation);
  CHECK(!err.empty());
  CHECK(call({}) == kExitValidation);
  CHECK(call({"frobnicate"}) == kExitValidation);
  const auto dir = testing::scratch("cli_usage");
  make_synth(dir);
  CHECK(call({"inject-noise", "--dataset", p(dir / "train.jsonl"), "--model", "uniform", "--p", "1.5",
              "--seed", "1", "--out", p(dir / "n")}) == kExitValidation);
  CHECK(call({"inject-noise", "--dataset", p(dir / "train.jsonl"), "--model", "semantic", "--p", "0.5",
              "--seed", "1", "--out", p(dir / "n")}) == kExitValidation);
}

TEST_CASE("runtime errors exit with 2") {
  const auto dir = testing::scratch("cli_runtime");
  {
    std::ofstream bad(dir / "bad.jsonl");
    bad << "{not json\n";
  }
  CHECK(call({"train", "--dataset", p(dir / "bad.jsonl"), "--out", p(dir / "t")}) == kExitRuntime);
}

TEST_CASE("inject-noise with p = 0 keeps every label") {
  const auto dir = testing::scratch("cli_p0");
  make_synth(dir);
  REQUIRE(call({"inject-noise", "--dataset", p(dir / "train.jsonl"), "--model", "uniform", "--p", "0",
                "--seed", "5", "--out", p(dir / "noisy")}) == kExitOk);
  const auto before = read_dataset_jsonl(dir / "train.jsonl");
  const auto after = read_dataset_jsonl(dir / "noisy" / "dataset.jsonl");
  CHECK(after.observed_labels == before.observed_labels);
  CHECK(std::filesystem::exists(dir / "noisy" / "noise_manifest.jsonl"));
  CHECK(std::filesystem::exists(dir / "noisy" / "audit.json"));
  CHECK(std::filesystem::exists(dir / "noisy" / "run_manifest.json"));
}

TEST_CASE("pipeline reruns are byte identical") {
  const auto root = testing::scratch("cli_pipeline");
  std::vector<std::string> digests[2];
  for (int rep = 0; rep < 2; ++rep) {
    const auto dir = root / std::to_string(rep);
    make_synth(dir);
    REQUIRE(call({"inject-noise", "--dataset", p(dir / "train.jsonl"), "--model", "semantic", "--p", "0.4",
                  "--seed", "2", "--taxonomy", p(dir / "taxonomy.json"), "--out", p(dir / "noisy")}) == kExitOk);
    REQUIRE(call({"train", "--dataset", p(dir / "noisy" / "dataset.jsonl"), "--semantic-table",
                  p(dir / "semantic_table.csv"), "--epochs", "2", "--out", p(dir / "run")}) == kExitOk);
    REQUIRE(call({"eval", "--checkpoint", p(dir / "run" / "checkpoint.json"), "--dataset", p(dir / "heldout.jsonl"),
                  "--ks", "1,2", "--out", p(dir / "eval")}) == kExitOk);
    REQUIRE(call({"analyze-confidence", "--history", p(dir / "run" / "history.jsonl"), "--bins", "5", "--out",
                  p(dir / "hist")}) == kExitOk);
    for (const auto& f : {dir / "train.jsonl", dir / "noisy" / "noise_manifest.jsonl", dir / "noisy" / "dataset.jsonl",
                          dir / "run" / "checkpoint.json", dir / "run" / "history.jsonl",
                          dir / "eval" / "report.json", dir / "hist" / "sigma.csv"}) {
      digests[rep].push_back(sha256_file(f));
    }
  }
  CHECK(digests[0] == digests[1]);

  std::ifstream in(root / "0" / "eval" / "report.json");
  const auto report = nlohmann::json::parse(in);
  CHECK(report["retrieval"]["recall_at"].contains("1"));
  std::ifstream rm(root / "0" / "run" / "run_manifest.json");
  const auto manifest = nlohmann::json::parse(rm);
  CHECK(manifest["command"] == "train");
  CHECK(manifest["toolkit_version"] == kToolkitVersion);
  CHECK(!manifest["outputs"].empty());
}

TEST_CASE("sha256 digests") {
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

}  // TEST_SUITE
