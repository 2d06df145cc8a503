#include "latentforge/provenance.hpp"

#include <fmt/format.h>
#include <openssl/evp.h>

#include <array>

namespace latentforge {

std::string config_hash(const nlohmann::json& config) {
  const std::string text = config.dump();
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  EVP_Digest(text.data(), text.size(), digest.data(), &len, EVP_sha256(), nullptr);
  std::string hex;
  for (unsigned i = 0; i < 8 && i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

std::string provenance_line(const nlohmann::json& config, std::uint64_t seed) {
  return fmt::format("# config_hash={} seed={}\n", config_hash(config), seed);
}

}  // namespace latentforge
