#pragma once

#include "latentforge/core.hpp"
#include "latentforge/data.hpp"
#include "latentforge/designs.hpp"
#include "latentforge/store.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

// In-silico fitness evaluator: a small feed-forward regressor on one-hot
// sequences, plus summary statistics over a pool of designs.
namespace latentforge::oracle {

struct MlpConfig {
  double lr = 1e-3;
  double weight_decay = 0.01;
  int max_epochs = 1000;
  int patience = 10;
  double split = 0.8;  // train share; 1.0 validates on the training set
  std::uint64_t seed = 0;
};

// [L*20, 128, 64, 1] with ReLU on the hidden layers. Weights are stored
// in x out so a layer is `input * w + b`.
struct MlpModel {
  int length = 0;
  Matrix w1, w2, w3;
  RowVector b1, b2, b3;

  double predict(std::string_view sequence) const;
  Vector predict(const std::vector<std::string>& sequences) const;
};

MlpModel init_mlp(int length, std::uint64_t seed);

// Patience counter on a validation trace.
class EarlyStopper {
 public:
  explicit EarlyStopper(int patience) : patience_(patience) {}
  /// Records one epoch's validation loss; true when training should stop.
  bool observe(double loss);
  bool improved() const { return improved_; }
  double best() const { return best_; }
  int best_epoch() const { return best_epoch_; }
  int epochs() const { return epoch_; }

 private:
  int patience_;
  double best_ = 0.0;
  int best_epoch_ = -1;
  int epoch_ = 0;
  int since_best_ = 0;
  bool improved_ = false;
};

struct MlpTrainResult {
  MlpModel model;  // best-validation checkpoint
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  int best_epoch = -1;
  double best_val_loss = 0.0;
  double final_train_mse = 0.0;  // of the returned checkpoint on the train ids
};

/// Full-batch AdamW on MSE with early stopping.
MlpTrainResult train_mlp(const data::DmsDataset& ds, const MlpConfig& cfg);

struct DesignStats {
  double mean = 0.0;
  double max = 0.0;
  double top10 = 0.0;  // mean of the best ceil(10% of n)
  double top20 = 0.0;  // mean of the best ceil(20% of n)
  int n = 0;
};

/// Mean of the best ceil(percent/100 * n) scores.
double top_percent_mean(std::vector<double> scores, int percent);
DesignStats design_stats(const std::vector<double>& scores);

using Scorer = std::function<double(const std::string&)>;

/// Exact lookup in a measured dataset; misses throw DataError naming the sequence.
Scorer lookup_scorer(const data::DmsDataset& ds);
Scorer mlp_scorer(const MlpModel& model);

DesignStats evaluate_designs(const Scorer& score, const std::vector<DesignCandidate>& designs);

nlohmann::json to_json(const DesignStats& stats);

Checkpoint to_checkpoint(const MlpModel& model);
MlpModel mlp_from_checkpoint(const Checkpoint& ckpt);

}  // namespace latentforge::oracle
