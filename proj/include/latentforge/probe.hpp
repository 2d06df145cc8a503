#pragma once

#include "latentforge/core.hpp"
#include "latentforge/landscape.hpp"
#include "latentforge/sae.hpp"
#include "latentforge/store.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace latentforge::probe {

/// Column means of an L x d matrix.
Vector mean_pool(const Matrix& m);

struct ProbeModel {
  Vector w;
  double intercept = 0.0;
  double lambda = 0.0;
  FeatureKind kind = FeatureKind::sae_latents;

  double predict(const Vector& pooled) const;
  Vector predict(const Matrix& features) const;  // one row per sample
};

enum class RidgeSolver { automatic, primal, dual };

struct RidgeOptions {
  RidgeSolver solver = RidgeSolver::automatic;
  // Scale columns to unit variance before fitting; weights are mapped back so
  // predictions stay in the original feature space.
  bool standardize = false;
};

/// argmin ||y - Xw - b||^2 + lambda ||w||^2 with b unpenalized. The centered
/// normal equations are solved in d x d form, or n x n form when n < d
/// (automatic). lambda = 0 yields the minimum-norm solution.
ProbeModel ridge_fit(const Matrix& X, const Vector& y, double lambda, RidgeOptions options = {});

struct SpearmanResult {
  double rho = 0.0;
  bool degenerate = false;  // one input was constant; rho reported as 0
};

/// Ranks 1..n with tied values sharing their average rank.
Vector average_ranks(const Vector& values);

/// Pearson correlation of average ranks. Requires n >= 2.
SpearmanResult spearman(const Vector& a, const Vector& b);

/// 1e-3, 1e-2, ..., 1e3.
std::vector<double> default_lambda_grid();

struct ProbeFit {
  ProbeModel model;
  std::vector<double> val_spearman;  // per grid entry
  bool degenerate = false;           // no grid entry had a defined validation Spearman
};

/// Fits one probe per lambda on train, picks the best validation Spearman
/// (ties to the larger lambda), then refits on train + val.
ProbeFit fit_probe_with_validation(const Matrix& train_x, const Vector& train_y, const Matrix& val_x,
                                   const Vector& val_y, const std::vector<double>& grid, FeatureKind kind,
                                   RidgeOptions options = {});

// What a pooled feature vector is built from.
struct FeatureSource {
  FeatureKind kind = FeatureKind::sae_latents;
  const sae::SaeParams* sae = nullptr;    // required for sae_latents
  const SequenceModel* model = nullptr;   // required for logits when the store has none
};

/// Pooled feature vector for one embedding (and its logits, if known).
Vector pooled_features(const FeatureSource& source, const Matrix& embedding, const Matrix* logits = nullptr);

/// Embeds `sequence` with source.model and pools its features.
Vector sequence_features(const FeatureSource& source, std::string_view sequence);

/// One pooled row per id.
Matrix feature_table(const EmbeddingStore& store, const std::vector<std::string>& ids, const FeatureSource& source);

Checkpoint to_checkpoint(const ProbeModel& model);
ProbeModel probe_from_checkpoint(const Checkpoint& ckpt);

}  // namespace latentforge::probe
