#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace rankalign {

inline constexpr std::string_view kToolName = "rankalign";
inline constexpr std::string_view kToolVersion = "0.1.0";

/// Hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

/// Reproducibility record written by every artifact-producing command.
struct RunManifest {
  std::string command;
  std::string config_json;  // snapshot of the effective config
  std::vector<std::pair<std::string, std::string>> inputs;  // path, digest
  std::vector<std::string> outputs;
  std::uint64_t seed = 0;
  std::string started_at;
  long long duration_ms = 0;

  void add_input(const std::filesystem::path& path);
};

void write_manifest(const RunManifest& manifest,
                    const std::filesystem::path& path);

}  // namespace rankalign
