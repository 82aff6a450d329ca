#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace procsim {

inline constexpr const char* kToolkitVersion = "0.1.0";

enum ExitCode : int { kExitOk = 0, kExitValidation = 1, kExitRuntime = 2 };

struct FileDigest {
  std::string path;
  std::string sha256;
};

/// Provenance record written as run_manifest.json next to a command's outputs.
struct RunManifest {
  std::string command;
  nlohmann::json config;
  std::vector<FileDigest> inputs;
  std::vector<FileDigest> outputs;
  double wall_seconds = 0.0;
  std::string toolkit_version = kToolkitVersion;

  void add_input(const std::filesystem::path& path);
  void add_output(const std::filesystem::path& path);
  nlohmann::json to_json() const;
};

void write_run_manifest(const RunManifest& manifest, const std::filesystem::path& path);

/// Entry point behind the `procsim` executable. Never throws; returns 0 on
/// success, 1 for usage or validation errors, 2 for runtime failures.
/// `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, const char* const* argv);

}  // namespace procsim
