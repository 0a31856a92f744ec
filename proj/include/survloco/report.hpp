#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace survloco {

inline constexpr const char* kToolName = "survloco";
inline constexpr const char* kToolVersion = "0.1.0";

std::uint64_t fnv1a(const std::string& bytes);
std::string hex64(std::uint64_t v);

// Hash of the canonical (sorted-key, compact) dump of `config`.
std::string config_hash(const nlohmann::json& config);

// "key: value" lines written as "# key: value" at the top of every CSV.
std::vector<std::string> metadata_lines(const nlohmann::json& config, std::uint64_t seed, const std::string& command);
nlohmann::json metadata_json(const nlohmann::json& config, std::uint64_t seed, const std::string& command);

// {"error": kind, "message": ..., "exit_code": code} plus any `extra` fields.
nlohmann::json error_json(const std::string& kind, const std::string& message, int exit_code,
                          const nlohmann::json& extra = nlohmann::json::object());

}  // namespace survloco
