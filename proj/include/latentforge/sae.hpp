#pragma once

#include "latentforge/adam.hpp"
#include "latentforge/core.hpp"
#include "latentforge/store.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

// TopK sparse autoencoder over per-position embedding rows.
//
//   z     = TopK((x - b_pre) W_enc^T)
//   x_hat = z W_dec^T + b_pre
//
// Embeddings are stored L x d_model (one row per position), so the encoder
// and decoder act on rows and b_pre is one d_model vector broadcast over
// positions.
namespace latentforge::sae {

struct SaeParams {
  Matrix w_enc;    // d_sae x d_model
  Matrix w_dec;    // d_model x d_sae
  RowVector b_pre; // d_model
  int k = 128;
  int k_aux = 256;
  double alpha = 1.0 / 32.0;

  int d_sae() const { return static_cast<int>(w_enc.rows()); }
  int d_model() const { return static_cast<int>(w_enc.cols()); }
  void validate() const;
};

struct SaeConfig {
  int d_sae = 4096;
  int k = 128;
  double alpha = 1.0 / 32.0;
  int k_aux = 256;
  double lr = 1e-4;
  int epochs = 10;
  int batch = 256;
  std::uint64_t seed = 0;
  int dead_threshold = 256;  // rows without firing before a latent counts as dead
};

/// Training epochs keyed on the number of sequences the SAE is trained on.
int epochs_for_msa_size(std::size_t n_sequences);

using IndexMatrix = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Per row, the columns of the k largest values (ties to the lowest index),
/// in that order.
IndexMatrix topk_indices(const Matrix& pre, int k);

/// Keeps the k largest values of each row verbatim and zeroes the rest.
Matrix topk_rows(const Matrix& pre, int k);

Matrix pre_activations(const Matrix& x, const SaeParams& p);
Matrix encode(const Matrix& x, const SaeParams& p);
Matrix decode(const Matrix& z, const SaeParams& p);

struct SaeLosses {
  double mse = 0.0;
  double aux = 0.0;
  double total = 0.0;
};

struct SaeGradients {
  Matrix w_enc;
  Matrix w_dec;
  RowVector b_pre;
};

// Main and auxiliary active sets for one evaluation. Each row lists latent
// indices; aux rows are empty when no latent is dead.
struct ActiveSets {
  std::vector<std::vector<int>> main;
  std::vector<std::vector<int>> aux;

  bool operator==(const ActiveSets&) const = default;
};

struct LossEvaluation {
  SaeLosses losses;
  SaeGradients grads;
  ActiveSets active;
};

/// Losses on rows `x`. mse and aux are mean-per-element squared errors;
/// the aux reconstruction uses the top-k_aux pre-activations among latents
/// flagged in `dead` (all of them if fewer than k_aux are dead).
SaeLosses sae_losses(const Matrix& x, const SaeParams& p, const std::vector<bool>& dead);

/// Losses plus exact gradients of total = mse + alpha * aux with respect to
/// every parameter (the residual e is not detached).
LossEvaluation loss_and_gradients(const Matrix& x, const SaeParams& p, const std::vector<bool>& dead,
                                  bool with_gradients = true);

struct EpochStats {
  int epoch = 0;
  double mse = 0.0;
  double aux = 0.0;
  double total = 0.0;
  double dead_fraction = 0.0;
};

struct SaeTrainState {
  SaeParams params;
  AdamMoments<Matrix> enc_moments;
  AdamMoments<Matrix> dec_moments;
  AdamMoments<RowVector> bias_moments;
  long step = 0;
  std::vector<long> tokens_since_fired;
  int dead_threshold = 256;
  std::uint64_t seed = 0;
  std::vector<EpochStats> trace;

  std::vector<bool> dead_mask() const;
};

SaeLosses sae_losses(const Matrix& x, const SaeParams& p, const SaeTrainState& state);

/// Seeded initialization: Gaussian encoder rows scaled by 1/sqrt(d_model),
/// decoder = encoder^T with unit columns, b_pre = per-dimension mean of rows.
SaeParams init_params(const Matrix& rows, const SaeConfig& cfg);

/// Adam on shuffled minibatches of position rows.
SaeTrainState train_sae(const Matrix& rows, const SaeConfig& cfg);
SaeTrainState train_sae(const EmbeddingStore& store, const SaeConfig& cfg);

/// Mean-per-element reconstruction error over all rows.
double reconstruction_mse(const Matrix& rows, const SaeParams& p);

struct GradCheckResult {
  double max_rel_err = 0.0;
  int checked = 0;
  // Perturbations that changed an active set; they are skipped, not scored.
  int boundary_crossings = 0;
};

/// Central-difference check of loss_and_gradients over every parameter.
/// Relative error is |a - n| / max(|a|, |n|, 1e-6).
GradCheckResult grad_check(const SaeParams& p, const Matrix& x, double eps, const std::vector<bool>& dead = {});

Checkpoint to_checkpoint(const SaeParams& p, const SaeConfig& cfg, long step);
SaeParams params_from_checkpoint(const Checkpoint& ckpt);

}  // namespace latentforge::sae
