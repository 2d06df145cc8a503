#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <string>

namespace latentforge {

/// First 16 hex digits of the SHA-256 of the config's canonical dump.
std::string config_hash(const nlohmann::json& config);

/// `# config_hash=<h> seed=<s>` header line (with trailing newline) that
/// every CSV output starts with.
std::string provenance_line(const nlohmann::json& config, std::uint64_t seed);

}  // namespace latentforge
