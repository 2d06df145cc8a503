#include "latentforge/baselines.hpp"

#include "latentforge/parallel.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <map>
#include <unordered_set>

namespace latentforge::baselines {

namespace {

constexpr std::uint64_t kAnnealStream = 0xa11ea1;
constexpr std::uint64_t kRandomStream = 0x5a4d0;

void check_positions(std::string_view wildtype, const std::vector<int>& positions, int max_mutations) {
  if (positions.empty()) throw DataError("design needs at least one assay position");
  for (int p : positions)
    if (p < 0 || p >= static_cast<int>(wildtype.size()))
      throw DataError(fmt::format("assay position {} outside the wildtype", p));
  std::vector<int> sorted = positions;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw DataError("assay positions must be distinct");
  if (static_cast<int>(positions.size()) < max_mutations)
    throw DataError(fmt::format("{} assay positions cannot hold up to {} mutations", positions.size(), max_mutations));
}

char random_substitute(Rng& rng, char avoid_a, char avoid_b) {
  std::vector<char> pool;
  for (char aa : data::kAlphabet)
    if (aa != avoid_a && aa != avoid_b) pool.push_back(aa);
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  return pool[pick(rng)];
}

// Random variant with `count` mutations at distinct assay positions.
std::string random_variant(Rng& rng, std::string_view wildtype, std::vector<int> positions, int count) {
  std::string seq(wildtype);
  for (int i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(i), positions.size() - 1);
    std::swap(positions[static_cast<std::size_t>(i)], positions[pick(rng)]);
    const auto p = static_cast<std::size_t>(positions[static_cast<std::size_t>(i)]);
    seq[p] = random_substitute(rng, wildtype[p], wildtype[p]);
  }
  return seq;
}

bool better(const DesignCandidate& a, const DesignCandidate& b) {
  if (a.predicted_fitness != b.predicted_fitness) return a.predicted_fitness > b.predicted_fitness;
  return a.sequence < b.sequence;
}

}  // namespace

double AnnealConfig::cooling_factor() const {
  if (cooling > 0.0) return cooling;
  return std::pow(1e-3, 1.0 / static_cast<double>(std::max(steps, 1)));
}

void AnnealConfig::validate() const {
  if (steps < 1) throw ConfigError("anneal steps must be >= 1");
  if (!(t0 > 0.0)) throw ConfigError("anneal t0 must be > 0");
  if (cooling < 0.0 || cooling >= 1.0) throw ConfigError("anneal cooling must lie in (0, 1), or 0 for the default");
  if (max_mutations < 1) throw ConfigError("max_mutations must be >= 1");
  if (budget < 1) throw ConfigError("budget must be >= 1");
}

int draw_mutation_count(Rng& rng, int max_mutations) {
  std::poisson_distribution<int> poisson(2.0);
  return std::min(poisson(rng) + 1, max_mutations);
}

double acceptance_probability(double delta, double temperature) {
  if (delta >= 0.0) return 1.0;
  return std::exp(delta / temperature);
}

ChainResult anneal_chain(std::string_view wildtype, const std::vector<int>& positions, const Scorer& score,
                         const AnnealConfig& cfg, std::uint64_t chain) {
  cfg.validate();
  check_positions(wildtype, positions, 1);
  Rng rng = make_rng(cfg.seed, kAnnealStream + chain);
  const int count = std::min(draw_mutation_count(rng, cfg.max_mutations), static_cast<int>(positions.size()));

  std::string current = random_variant(rng, wildtype, positions, count);
  double current_score = score(current);
  ChainResult out{current, current_score, {}, {}};
  out.trace.reserve(static_cast<std::size_t>(cfg.steps));
  std::map<std::string, double> held_states{{current, current_score}};

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double cooling = cfg.cooling_factor();
  double temperature = cfg.t0;
  for (int step = 0; step < cfg.steps; ++step) {
    std::vector<int> held;
    std::vector<int> free;
    for (int p : positions) (current[static_cast<std::size_t>(p)] != wildtype[static_cast<std::size_t>(p)] ? held : free).push_back(p);

    std::string proposal = current;
    std::uniform_int_distribution<std::size_t> pick_held(0, held.size() - 1);
    const auto from = static_cast<std::size_t>(held[pick_held(rng)]);
    const bool relocate = unit(rng) < 0.2 && !free.empty();
    if (relocate) {
      std::uniform_int_distribution<std::size_t> pick_free(0, free.size() - 1);
      const auto to = static_cast<std::size_t>(free[pick_free(rng)]);
      proposal[from] = wildtype[from];
      proposal[to] = random_substitute(rng, wildtype[to], wildtype[to]);
    } else {
      proposal[from] = random_substitute(rng, wildtype[from], current[from]);
    }

    const double proposal_score = score(proposal);
    if (unit(rng) < acceptance_probability(proposal_score - current_score, temperature)) {
      current = std::move(proposal);
      current_score = proposal_score;
      held_states.emplace(current, current_score);
      if (current_score > out.best_score) {
        out.best = current;
        out.best_score = current_score;
      }
    }
    out.trace.push_back(current_score);
    temperature *= cooling;
  }
  out.visited.assign(held_states.begin(), held_states.end());
  std::stable_sort(out.visited.begin(), out.visited.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (out.visited.size() > static_cast<std::size_t>(cfg.budget)) out.visited.resize(static_cast<std::size_t>(cfg.budget));
  return out;
}

Scorer probe_scorer(const probe::ProbeModel& probe, const SequenceModel& model) {
  if (probe.kind == FeatureKind::sae_latents)
    throw ConfigError("annealing scores with layer or logit probes, not sae_latents");
  probe::FeatureSource source{probe.kind, nullptr, &model};
  return [probe, source](const std::string& seq) { return probe.predict(probe::sequence_features(source, seq)); };
}

std::vector<DesignCandidate> anneal_design(std::string_view wildtype, const std::vector<int>& positions,
                                           const Scorer& score, const AnnealConfig& cfg) {
  cfg.validate();
  check_positions(wildtype, positions, 1);
  std::vector<ChainResult> chains(static_cast<std::size_t>(cfg.budget));
  parallel_for(chains.size(), [&](std::size_t c) { chains[c] = anneal_chain(wildtype, positions, score, cfg, c); });

  std::vector<DesignCandidate> designs;
  std::unordered_set<std::string> seen;
  for (const auto& chain : chains) {
    for (const auto& [seq, value] : chain.visited) {
      if (!seen.insert(seq).second) continue;
      DesignCandidate d;
      d.sequence = seq;
      d.predicted_fitness = value;
      d.mutation_count = static_cast<int>(data::diff_mutations(wildtype, d.sequence).size());
      designs.push_back(std::move(d));
      break;
    }
  }
  std::sort(designs.begin(), designs.end(), better);
  return designs;
}

std::vector<DesignCandidate> anneal_design(std::string_view wildtype, const std::vector<int>& positions,
                                           const probe::ProbeModel& probe, const SequenceModel& model,
                                           const AnnealConfig& cfg) {
  return anneal_design(wildtype, positions, probe_scorer(probe, model), cfg);
}

std::vector<DesignCandidate> random_design(std::string_view wildtype, const std::vector<int>& positions,
                                           std::uint64_t seed, int budget, int max_mutations) {
  if (budget < 1) throw ConfigError("budget must be >= 1");
  if (max_mutations < 1) throw ConfigError("max_mutations must be >= 1");
  check_positions(wildtype, positions, max_mutations);
  Rng rng = make_rng(seed, kRandomStream);
  std::vector<DesignCandidate> designs;
  std::unordered_set<std::string> seen;
  const long max_attempts = 1000L * budget;
  for (long attempt = 0; attempt < max_attempts && static_cast<int>(designs.size()) < budget; ++attempt) {
    const int count = draw_mutation_count(rng, max_mutations);
    std::string seq = random_variant(rng, wildtype, positions, count);
    if (!seen.insert(seq).second) continue;
    DesignCandidate d;
    d.sequence = std::move(seq);
    d.mutation_count = count;
    designs.push_back(std::move(d));
  }
  if (static_cast<int>(designs.size()) < budget)
    throw DataError(fmt::format("could only draw {} unique random variants of {} requested", designs.size(), budget));
  return designs;
}

std::string ParityPlan::describe() const {
  return fmt::format("steering took {:.3f}s; 1000 annealing steps take {:.3f}s; {} chains x {} steps", steering_seconds,
                     seconds_per_1000_steps, chains, steps_per_chain);
}

ParityPlan parity_steps(double steering_seconds, double seconds_per_1000_steps, int chains) {
  if (!(steering_seconds >= 0.0) || !(seconds_per_1000_steps > 0.0) || chains < 1)
    throw ConfigError("parity needs nonnegative steering time, positive step time and >= 1 chain");
  ParityPlan plan{steering_seconds, seconds_per_1000_steps, chains, 0};
  const double total_steps = 1000.0 * steering_seconds / seconds_per_1000_steps;
  plan.steps_per_chain = std::max(1, static_cast<int>(std::lround(total_steps / chains)));
  return plan;
}

double time_1000_steps(std::string_view wildtype, const std::vector<int>& positions, const Scorer& score,
                       const AnnealConfig& cfg) {
  AnnealConfig timed = cfg;
  timed.steps = 1000;
  const auto start = std::chrono::steady_clock::now();
  anneal_chain(wildtype, positions, score, timed, 0);
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace latentforge::baselines
