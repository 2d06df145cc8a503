#pragma once

#include "latentforge/designs.hpp"
#include "latentforge/landscape.hpp"
#include "latentforge/probe.hpp"
#include "latentforge/sae.hpp"

#include <string>
#include <string_view>
#include <vector>

// Latent feature steering: scale one predictive latent of the wildtype's SAE
// code, decode, read logits through the sequence model, open positions whose
// logits moved, and realize a sequence from the moved logits.
namespace latentforge::steering {

/// -3.0, -2.8, ..., 3.0 (31 values; 1.0 is exact).
std::vector<double> default_multipliers();

/// 4 when the assay covers at most four positions, otherwise 5.
int default_max_mutations(std::size_t n_assay_positions);

struct SteeringConfig {
  int n_latents = 10;
  std::vector<double> multipliers = default_multipliers();
  double cosine_threshold = 0.98;
  int max_mutations = 5;
  int budget = 50;

  void validate() const;
};

struct TopLatents {
  std::vector<int> indices;
  bool zero_weights = false;  // every probe weight was zero
};

/// Indices of the m largest |w|, descending; ties to the lowest index.
TopLatents top_latents(const probe::ProbeModel& probe, int m);

/// Copy of z with column `latent` scaled by `multiplier`.
Matrix steer_latent(const Matrix& z, int latent, double multiplier);

/// mask[p] is true iff cosine(mut[p], wt[p]) < threshold. Rows with zero
/// norm stay closed.
std::vector<bool> gate_positions(const Matrix& logits_mut, const Matrix& logits_wt, double threshold);

/// Argmax residue at open positions (restricted to `mutable_positions` when
/// nonempty). Beyond max_mutations, the changes with the largest margin
/// logit[argmax] - logit[wildtype residue] are kept.
std::string realize_sequence(const Matrix& logits_mut, const std::vector<bool>& mask, std::string_view wildtype,
                             int max_mutations, const std::vector<int>& mutable_positions = {});

struct DesignResult {
  std::vector<DesignCandidate> designs;     // top `budget`, unique, by predicted fitness
  std::vector<DesignCandidate> candidates;  // every (latent, multiplier) evaluation, ranked
  bool shortfall = false;                   // fewer than `budget` unique sequences
  bool zero_weights = false;
};

/// Steers each of the top latents over every multiplier. Candidates are scored
/// by the probe on the SAE latents of the realized sequence re-embedded by
/// `model`, and ranked by (predicted fitness desc, latent asc, multiplier asc).
DesignResult design(const SequenceModel& model, const sae::SaeParams& sae, const probe::ProbeModel& probe,
                    const SteeringConfig& cfg, std::string_view wildtype, const std::vector<int>& assay_positions);

}  // namespace latentforge::steering
