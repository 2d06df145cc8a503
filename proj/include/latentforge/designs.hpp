#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace latentforge {

struct DesignCandidate {
  std::string sequence;
  int source_latent = -1;  // -1 for designers that do not steer a latent
  double multiplier = 0.0;
  double predicted_fitness = 0.0;
  int mutation_count = 0;
};

/// Header `sequence,mutations,source_latent,multiplier,predicted_fitness`;
/// mutations use 1-based notation relative to `wildtype`.
std::string designs_csv(const std::vector<DesignCandidate>& designs, std::string_view wildtype);

/// Parses designs_csv output (comment lines starting with '#' are skipped).
std::vector<DesignCandidate> parse_designs_csv(std::string_view text, std::string_view wildtype);

}  // namespace latentforge
