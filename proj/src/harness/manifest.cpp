#include "boed/harness/manifest.hpp"

#include <openssl/evp.h>

#include <fstream>
#include <iomanip>
#include <sstream>

#include "boed/errors.hpp"

namespace boed::harness {

std::string sha1_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha1(), nullptr) != 1) {
    throw std::runtime_error("SHA-1 digest failed");
  }
  std::ostringstream ss;
  for (unsigned int i = 0; i < len; ++i) ss << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return ss.str();
}

std::string input_hash(const std::string& command, const Json& config, const std::vector<std::string>& input_files) {
  std::string blob = "command " + command + "\nconfig " + config.dump() + "\n";
  for (const auto& f : input_files) {
    std::ifstream in(f, std::ios::binary);
    if (!in) throw ConfigError("cannot read input file '" + f + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    const std::string body = ss.str();
    blob += "file " + std::to_string(body.size()) + "\n" + body;
  }
  return sha1_hex(blob);
}

Json manifest_to_json(const RunManifest& m) {
  return Json{{"manifest_version", 1},
              {"tool_version", m.tool_version},
              {"command", m.command},
              {"input_hash", m.input_hash},
              {"config", m.config},
              {"outputs", m.outputs},
              {"notes", m.notes}};
}

RunManifest manifest_from_json(const Json& j) {
  RunManifest m;
  try {
    if (j.at("manifest_version").get<int>() != 1) throw ConfigError("unsupported manifest version");
    m.tool_version = j.at("tool_version").get<std::string>();
    m.command = j.at("command").get<std::string>();
    m.input_hash = j.at("input_hash").get<std::string>();
    m.config = j.at("config");
    m.outputs = j.at("outputs").get<std::map<std::string, std::vector<std::string>>>();
    m.notes = j.at("notes").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed manifest: ") + e.what());
  }
  return m;
}

void write_manifest(const RunManifest& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write manifest '" + path + "'");
  out << manifest_to_json(m).dump(2) << "\n";
}

RunManifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open manifest '" + path + "'");
  try {
    return manifest_from_json(Json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("manifest is not valid JSON: ") + e.what());
  }
}

}  // namespace boed::harness
