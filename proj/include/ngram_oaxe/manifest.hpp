#pragma once

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "ngram_oaxe/datagen.hpp"

namespace ngram_oaxe {

inline constexpr const char* kToolVersion = "0.1.0";

// One per CLI run, written next to the run's outputs.
struct RunManifest {
  std::string command;
  nlohmann::json config = nlohmann::json::object();
  std::uint64_t seed = 0;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::string timestamp;
  std::string tool_version = kToolVersion;
};

inline std::string iso8601_now() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline nlohmann::json to_json(const RunManifest& m) {
  return {
      {"command", m.command},
      {"config", m.config},
      {"seed", m.seed},
      {"artifacts", {{"inputs", m.inputs}, {"outputs", m.outputs}}},
      {"timestamp", m.timestamp},
      {"tool_version", m.tool_version},
  };
}

inline std::filesystem::path write_manifest(RunManifest m, const std::filesystem::path& dir) {
  if (m.timestamp.empty()) m.timestamp = iso8601_now();
  const auto path = dir / (m.command + ".manifest.json");
  write_file_atomic(path, to_json(m).dump(2) + "\n");
  return path;
}

}  // namespace ngram_oaxe
