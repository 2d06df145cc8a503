#pragma once

#include "latentforge/designs.hpp"
#include "latentforge/landscape.hpp"
#include "latentforge/probe.hpp"
#include "latentforge/rng.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

// Comparison designers: simulated annealing against a probe on layer or logit
// features, and uniform random mutagenesis.
namespace latentforge::baselines {

using Scorer = std::function<double(const std::string&)>;

struct AnnealConfig {
  int steps = 1000;
  double t0 = 1.0;
  // Geometric factor per step; 0 selects the factor that ends at t0 * 1e-3.
  double cooling = 0.0;
  std::uint64_t seed = 0;
  int max_mutations = 5;
  int budget = 50;

  double cooling_factor() const;
  double temperature(int step) const { return t0 * std::pow(cooling_factor(), step); }
  void validate() const;
};

/// min(Poisson(2) + 1, max_mutations).
int draw_mutation_count(Rng& rng, int max_mutations);

/// min(1, exp(delta / temperature)) for a score change `delta`.
double acceptance_probability(double delta, double temperature);

struct ChainResult {
  std::string best;
  double best_score = 0.0;
  std::vector<double> trace;  // current-state score after every step
  // Distinct states the chain held, best first (ties by sequence), at most
  // `budget` of them.
  std::vector<std::pair<std::string, double>> visited;
};

/// One annealing chain. The chain holds a fixed number of mutations; each step
/// either substitutes the residue at a held position (80%) or moves one
/// mutation to an unheld assay position (20%).
ChainResult anneal_chain(std::string_view wildtype, const std::vector<int>& positions, const Scorer& score,
                         const AnnealConfig& cfg, std::uint64_t chain);

/// Pooled-feature probe score; the probe must use layer or logit features.
Scorer probe_scorer(const probe::ProbeModel& probe, const SequenceModel& model);

/// `budget` independent chains, one design per chain, ranked by score. A chain
/// whose best sequence was already taken by an earlier chain contributes its
/// best state not yet taken.
std::vector<DesignCandidate> anneal_design(std::string_view wildtype, const std::vector<int>& positions,
                                           const Scorer& score, const AnnealConfig& cfg);
std::vector<DesignCandidate> anneal_design(std::string_view wildtype, const std::vector<int>& positions,
                                           const probe::ProbeModel& probe, const SequenceModel& model,
                                           const AnnealConfig& cfg);

/// `budget` unique random variants (predicted_fitness left at 0).
std::vector<DesignCandidate> random_design(std::string_view wildtype, const std::vector<int>& positions,
                                           std::uint64_t seed, int budget, int max_mutations);

// Step budget that gives annealing roughly the wall time steering took.
struct ParityPlan {
  double steering_seconds = 0.0;
  double seconds_per_1000_steps = 0.0;
  int chains = 0;
  int steps_per_chain = 0;
  std::string describe() const;
};

ParityPlan parity_steps(double steering_seconds, double seconds_per_1000_steps, int chains);

/// Wall time of one 1000-step chain with `score`.
double time_1000_steps(std::string_view wildtype, const std::vector<int>& positions, const Scorer& score,
                       const AnnealConfig& cfg);

}  // namespace latentforge::baselines
