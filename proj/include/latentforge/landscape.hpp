#pragma once

#include "latentforge/core.hpp"
#include "latentforge/data.hpp"
#include "latentforge/store.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace latentforge {

// Boundary to a protein language model: per-residue embeddings plus the map
// from (possibly edited) embeddings to per-position logits.
class SequenceModel {
 public:
  virtual ~SequenceModel() = default;

  virtual Matrix embed(std::string_view sequence) const = 0;
  virtual Matrix logits_from_embedding(const Matrix& embedding) const = 0;
  virtual int d_model() const = 0;
  virtual int vocab_size() const = 0;

  Matrix logits(std::string_view sequence) const { return logits_from_embedding(embed(sequence)); }
};

}  // namespace latentforge

namespace latentforge::landscape {

struct LandscapeConfig {
  int length = 48;
  int d_model = 32;
  int n_motifs = 6;
  std::uint64_t seed = 0;
  bool epistasis = true;
  int sites_per_motif = 4;
  // Scale of each motif direction in its preferred residue's readout column.
  double readout_gain = 2.0;
  // Norm of every token embedding row (motif directions have unit norm).
  double token_scale = 1.0;
  // Motif weights are +U(0.5, 1.5) by default, so motifs are beneficial and
  // random mutations are deleterious on average. When set, each weight gets
  // a random sign.
  bool signed_weights = false;
};

struct EpistasisPair {
  int first = 0;
  int second = 0;
  double coupling = 0.0;
};

// Planted sequence model. Fitness is
//   f(s) = sum_i w_i g_i(s) + sum_{(i,j)} c_ij g_i(s) g_j(s)
// where g_i is the fraction of motif i's sites carrying its preferred residue.
// The embedding at position p is the residue's token embedding plus
// g_i(s) * direction_i for every motif i that contains p.
class SyntheticModel final : public SequenceModel {
 public:
  SyntheticModel() = default;
  explicit SyntheticModel(const LandscapeConfig& config);

  Matrix embed(std::string_view sequence) const override;
  Matrix logits_from_embedding(const Matrix& embedding) const override;
  int d_model() const override { return config_.d_model; }
  int vocab_size() const override { return data::kVocab; }

  double true_fitness(std::string_view sequence) const;
  /// Linear part sum_i w_i g_i only.
  double motif_term(std::string_view sequence) const;
  Vector motif_occupancy(std::string_view sequence) const;

  const LandscapeConfig& config() const { return config_; }
  int length() const { return config_.length; }
  int n_motifs() const { return config_.n_motifs; }
  const std::string& wildtype() const { return wildtype_; }
  const Matrix& motif_directions() const { return motif_directions_; }  // m x d, orthonormal rows
  const std::vector<std::vector<int>>& motif_sites() const { return motif_sites_; }
  const std::vector<char>& motif_residues() const { return motif_residues_; }
  const Vector& motif_weights() const { return motif_weights_; }
  const std::vector<EpistasisPair>& epistasis_pairs() const { return epistasis_; }
  const Matrix& token_embeddings() const { return token_embeddings_; }  // 20 x d
  const Matrix& readout() const { return readout_; }                    // d x 20

  /// Positions not covered by any motif.
  std::vector<int> background_positions() const;

  /// Copy of `sequence` with motif i's sites set to its preferred residue.
  std::string with_full_motif(std::string sequence, int motif) const;
  /// Copy of `sequence` with none of motif i's sites carrying its residue.
  std::string without_motif(std::string sequence, int motif) const;

 private:
  void check_length(std::string_view sequence) const;

  LandscapeConfig config_;
  std::string wildtype_;
  Matrix motif_directions_;
  std::vector<std::vector<int>> motif_sites_;
  std::vector<std::vector<int>> position_motifs_;
  std::vector<char> motif_residues_;
  Vector motif_weights_;
  std::vector<EpistasisPair> epistasis_;
  Matrix token_embeddings_;
  Matrix readout_;
};

SyntheticModel make_synthetic(const LandscapeConfig& config);

/// Modified Gram-Schmidt with one re-orthogonalization pass over the rows.
Matrix orthonormalize_rows(Matrix rows);

/// Evolution-like pool used to train SAEs: each sequence draws a per-motif
/// occupancy probability so motif presence varies broadly, and background
/// positions drift from the wildtype with probability `drift`.
std::vector<std::string> sample_msa_like(const SyntheticModel& model, int n, std::uint64_t seed, double drift = 0.2);

struct DmsConfig {
  int n_assay_positions = 32;
  int n_records = 1500;
  int max_mutations = 5;
  // Share of records (after the wildtype row) that are single mutants.
  double single_fraction = 0.35;
  double noise_sd = 0.0;
  std::uint64_t seed = 0;
};

/// Assay positions: every motif site plus seeded background positions up to
/// n_assay_positions (capped at L). Sorted.
std::vector<int> assay_positions(const SyntheticModel& model, const DmsConfig& config);

/// DMS-style dataset over the assay positions with ground-truth fitness
/// (plus optional Gaussian noise). Includes the wildtype row.
data::DmsDataset make_dms(const SyntheticModel& model, const DmsConfig& config);

/// Embeddings (and logits) of `sequences` keyed by `ids`.
EmbeddingStore export_store(const SequenceModel& model, const std::vector<std::string>& sequences,
                            const std::vector<std::string>& ids, bool with_logits);

/// Store ids used for dataset records: the 1-based mutant notation.
std::vector<std::string> record_ids(const data::DmsDataset& ds);

}  // namespace latentforge::landscape
