#pragma once

#include <map>
#include <string>
#include <vector>

#include "boed/harness/config.hpp"

namespace boed::harness {

inline constexpr const char* kToolVersion = "boed 0.1.0";

struct RunManifest {
  std::string command;
  Json config;  // resolved ExperimentConfig
  std::string input_hash;
  std::string tool_version = kToolVersion;
  // seed (or variant/seed) -> output paths relative to the run directory
  std::map<std::string, std::vector<std::string>> outputs;
  std::vector<std::string> notes;
};

std::string sha1_hex(const std::string& bytes);
// Hash over the command, the resolved config and the bytes of the input files.
std::string input_hash(const std::string& command, const Json& config, const std::vector<std::string>& input_files);

Json manifest_to_json(const RunManifest& m);
RunManifest manifest_from_json(const Json& j);
void write_manifest(const RunManifest& m, const std::string& path);
RunManifest read_manifest(const std::string& path);

}  // namespace boed::harness
