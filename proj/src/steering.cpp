#include "latentforge/steering.hpp"

#include "latentforge/parallel.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <unordered_set>

namespace latentforge::steering {

std::vector<double> default_multipliers() {
  std::vector<double> grid;
  for (int i = 0; i <= 30; ++i) grid.push_back(static_cast<double>(i - 15) / 5.0);
  return grid;
}

int default_max_mutations(std::size_t n_assay_positions) { return n_assay_positions <= 4 ? 4 : 5; }

void SteeringConfig::validate() const {
  if (n_latents < 1) throw ConfigError("steering n_latents must be >= 1");
  if (multipliers.empty()) throw ConfigError("steering multipliers must be nonempty");
  if (!(cosine_threshold > 0.0 && cosine_threshold < 1.0)) throw ConfigError("cosine_threshold must lie in (0, 1)");
  if (max_mutations < 1) throw ConfigError("max_mutations must be >= 1");
  if (budget < 1) throw ConfigError("budget must be >= 1");
}

TopLatents top_latents(const probe::ProbeModel& probe, int m) {
  if (probe.kind != FeatureKind::sae_latents)
    throw ConfigError(fmt::format("steering needs an sae_latents probe, got {}", to_string(probe.kind)));
  const auto d = static_cast<int>(probe.w.size());
  if (m < 1 || m > d) throw ConfigError(fmt::format("cannot pick {} latents out of {}", m, d));
  std::vector<int> order(static_cast<std::size_t>(d));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return std::abs(probe.w(a)) > std::abs(probe.w(b)); });
  order.resize(static_cast<std::size_t>(m));
  return {order, probe.w.cwiseAbs().maxCoeff() == 0.0};
}

Matrix steer_latent(const Matrix& z, int latent, double multiplier) {
  if (latent < 0 || latent >= z.cols())
    throw ConfigError(fmt::format("latent {} out of range [0, {})", latent, z.cols()));
  Matrix out = z;
  out.col(latent) *= multiplier;
  return out;
}

std::vector<bool> gate_positions(const Matrix& logits_mut, const Matrix& logits_wt, double threshold) {
  if (logits_mut.rows() != logits_wt.rows() || logits_mut.cols() != logits_wt.cols())
    throw DataError("gate_positions: logits shapes differ");
  std::vector<bool> open(static_cast<std::size_t>(logits_mut.rows()), false);
  for (Eigen::Index p = 0; p < logits_mut.rows(); ++p) {
    const double na = logits_mut.row(p).norm();
    const double nb = logits_wt.row(p).norm();
    if (na == 0.0 || nb == 0.0) continue;
    const double cosine = logits_mut.row(p).dot(logits_wt.row(p)) / (na * nb);
    open[static_cast<std::size_t>(p)] = cosine < threshold;
  }
  return open;
}

std::string realize_sequence(const Matrix& logits_mut, const std::vector<bool>& mask, std::string_view wildtype,
                             int max_mutations, const std::vector<int>& mutable_positions) {
  const auto length = static_cast<Eigen::Index>(wildtype.size());
  if (logits_mut.rows() != length || static_cast<Eigen::Index>(mask.size()) != length)
    throw DataError("realize_sequence: logits, mask and wildtype lengths differ");
  if (logits_mut.cols() != data::kVocab) throw DataError("realize_sequence: logits must have 20 columns");

  std::vector<bool> allowed(wildtype.size(), mutable_positions.empty());
  for (int p : mutable_positions) {
    if (p < 0 || p >= length) throw DataError(fmt::format("mutable position {} out of range", p));
    allowed[static_cast<std::size_t>(p)] = true;
  }

  struct Change {
    int position;
    char residue;
    double margin;
  };
  std::vector<Change> changes;
  for (Eigen::Index p = 0; p < length; ++p) {
    const auto up = static_cast<std::size_t>(p);
    if (!mask[up] || !allowed[up]) continue;
    Eigen::Index best = 0;
    logits_mut.row(p).maxCoeff(&best);
    const char residue = data::residue_at(static_cast<int>(best));
    if (residue == wildtype[up]) continue;
    const double margin = logits_mut(p, best) - logits_mut(p, data::residue_index(wildtype[up]));
    changes.push_back({static_cast<int>(p), residue, margin});
  }
  if (static_cast<int>(changes.size()) > max_mutations) {
    std::stable_sort(changes.begin(), changes.end(), [](const Change& a, const Change& b) { return a.margin > b.margin; });
    changes.resize(static_cast<std::size_t>(std::max(max_mutations, 0)));
  }
  std::string out(wildtype);
  for (const auto& c : changes) out[static_cast<std::size_t>(c.position)] = c.residue;
  return out;
}

DesignResult design(const SequenceModel& model, const sae::SaeParams& sae, const probe::ProbeModel& probe,
                    const SteeringConfig& cfg, std::string_view wildtype, const std::vector<int>& assay_positions) {
  cfg.validate();
  if (assay_positions.empty()) throw DataError("steering needs at least one assay position");
  if (probe.w.size() != sae.d_sae())
    throw ConfigError(fmt::format("probe has {} weights but the SAE has {} latents", probe.w.size(), sae.d_sae()));
  const TopLatents latents = top_latents(probe, cfg.n_latents);

  const Matrix z_wt = sae::encode(model.embed(wildtype), sae);
  // Reference logits come from the reconstruction so that multiplier 1
  // reproduces them exactly and gates every position closed.
  const Matrix logits_ref = model.logits_from_embedding(sae::decode(z_wt, sae));

  const std::size_t n_mult = cfg.multipliers.size();
  const std::size_t n_tasks = latents.indices.size() * n_mult;
  std::vector<DesignCandidate> candidates(n_tasks);
  parallel_for(n_tasks, [&](std::size_t t) {
    const int latent = latents.indices[t / n_mult];
    const double mult = cfg.multipliers[t % n_mult];
    const Matrix logits = model.logits_from_embedding(sae::decode(steer_latent(z_wt, latent, mult), sae));
    const auto mask = gate_positions(logits, logits_ref, cfg.cosine_threshold);
    auto& c = candidates[t];
    c.sequence = realize_sequence(logits, mask, wildtype, cfg.max_mutations, assay_positions);
    c.source_latent = latent;
    c.multiplier = mult;
    c.mutation_count = static_cast<int>(data::diff_mutations(wildtype, c.sequence).size());
  });

  std::map<std::string, double> scores;
  for (const auto& c : candidates) scores.emplace(c.sequence, 0.0);
  std::vector<std::map<std::string, double>::iterator> slots;
  for (auto it = scores.begin(); it != scores.end(); ++it) slots.push_back(it);
  parallel_for(slots.size(), [&](std::size_t i) {
    const Matrix z = sae::encode(model.embed(slots[i]->first), sae);
    slots[i]->second = probe.predict(probe::mean_pool(z));
  });
  for (auto& c : candidates) c.predicted_fitness = scores.at(c.sequence);

  std::sort(candidates.begin(), candidates.end(), [](const DesignCandidate& a, const DesignCandidate& b) {
    if (a.predicted_fitness != b.predicted_fitness) return a.predicted_fitness > b.predicted_fitness;
    if (a.source_latent != b.source_latent) return a.source_latent < b.source_latent;
    return a.multiplier < b.multiplier;
  });

  DesignResult result;
  result.zero_weights = latents.zero_weights;
  std::unordered_set<std::string> seen;
  for (const auto& c : candidates) {
    if (static_cast<int>(result.designs.size()) == cfg.budget) break;
    if (seen.insert(c.sequence).second) result.designs.push_back(c);
  }
  result.shortfall = static_cast<int>(result.designs.size()) < cfg.budget;
  result.candidates = std::move(candidates);
  return result;
}

}  // namespace latentforge::steering
