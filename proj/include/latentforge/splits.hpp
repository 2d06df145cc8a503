#pragma once

#include "latentforge/core.hpp"
#include "latentforge/data.hpp"
#include "latentforge/probe.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

// Train/val/test partitions for the five fitness-extrapolation tasks, and the
// nine-trial protocol on top of them. Ids are indices into DmsDataset::records.
namespace latentforge::splits {

enum class Task { random, mutation, position, regime, score };

std::string to_string(Task task);
Task task_from_string(const std::string& name);
inline constexpr Task kAllTasks[] = {Task::random, Task::mutation, Task::position, Task::regime, Task::score};
inline constexpr int kLowN[] = {8, 24, 96, 384};

/// 0.2 for regime, 0.1 otherwise.
double default_val_fraction(Task task);

struct SplitSpec {
  Task task = Task::random;
  int n = 24;
  std::uint64_t seed_test = 0;
  std::uint64_t seed_sample = 0;
  double val_fraction = 0.1;
};

SplitSpec make_spec(Task task, int n, std::uint64_t seed_test, std::uint64_t seed_sample);

/// ceil(fraction * n), at least 1 and at most n - 1.
int validation_count(int n, double fraction);

struct SplitResult {
  std::vector<int> train;
  std::vector<int> val;
  std::vector<int> test;
  nlohmann::json metadata;
};

SplitResult split_random(const data::DmsDataset& ds, const SplitSpec& spec);
SplitResult split_mutation(const data::DmsDataset& ds, const SplitSpec& spec);
SplitResult split_position(const data::DmsDataset& ds, const SplitSpec& spec);
SplitResult split_regime(const data::DmsDataset& ds, const SplitSpec& spec);
SplitResult split_score(const data::DmsDataset& ds, const SplitSpec& spec);
SplitResult make_split(const data::DmsDataset& ds, const SplitSpec& spec);

/// (seed_test, seed_sample) pairs: {0,1,2} x {0,1,2} for random, mutation and
/// position; (0, 0..8) for regime and score, whose test sets are fixed.
std::vector<std::pair<std::uint64_t, std::uint64_t>> trial_seeds(Task task);

struct TrialOutcome {
  double spearman = 0.0;
  bool degenerate = false;
  double lambda = 0.0;
};

using TrialPipeline = std::function<TrialOutcome(const SplitResult&)>;

struct TrialRow {
  Task task = Task::random;
  int n = 0;
  std::uint64_t seed_test = 0;
  std::uint64_t seed_sample = 0;
  std::string feature_kind;
  double lambda = 0.0;
  double spearman_abs = 0.0;
  bool degenerate = false;
  std::string error;  // nonempty when the split or pipeline failed
};

struct TrialReport {
  std::vector<TrialRow> rows;

  int n_ok() const;
  /// Mean and sample standard deviation of |Spearman| over trials without errors.
  double mean() const;
  double stddev() const;

  std::string csv() const;  // header + one line per trial
  nlohmann::json summary() const;
};

/// Ridge probe fitted with validation on precomputed per-record features,
/// scored by Spearman on the test ids.
TrialPipeline make_probe_pipeline(const Matrix& features, const Vector& fitness, FeatureKind kind,
                                  std::vector<double> grid = probe::default_lambda_grid());

/// Runs every trial of the protocol; trials execute concurrently and are
/// reported in seed order.
TrialReport run_trials(const data::DmsDataset& ds, Task task, int n, const TrialPipeline& pipeline,
                       const std::string& feature_kind);

}  // namespace latentforge::splits
