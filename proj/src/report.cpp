#include "survloco/report.hpp"

#include <cstdio>

namespace survloco {

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string config_hash(const nlohmann::json& config) { return hex64(fnv1a(config.dump())); }

std::vector<std::string> metadata_lines(const nlohmann::json& config, std::uint64_t seed, const std::string& command) {
  return {std::string("tool: ") + kToolName,
          std::string("version: ") + kToolVersion,
          "command: " + command,
          "config_hash: " + config_hash(config),
          "seed: " + std::to_string(seed),
          "config: " + config.dump()};
}

nlohmann::json metadata_json(const nlohmann::json& config, std::uint64_t seed, const std::string& command) {
  return {{"tool", kToolName},
          {"version", kToolVersion},
          {"command", command},
          {"config_hash", config_hash(config)},
          {"seed", seed},
          {"config", config}};
}

nlohmann::json error_json(const std::string& kind, const std::string& message, int exit_code,
                          const nlohmann::json& extra) {
  nlohmann::json j = {{"error", kind}, {"message", message}, {"exit_code", exit_code}};
  for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
  return j;
}

}  // namespace survloco
