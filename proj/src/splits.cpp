#include "latentforge/splits.hpp"

#include "latentforge/parallel.hpp"
#include "latentforge/rng.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

namespace latentforge::splits {

namespace {

using data::DmsDataset;

constexpr std::uint64_t kTestStream = 0x74657374;
constexpr std::uint64_t kSampleStream = 0x73616d70;

std::uint64_t task_salt(Task task) { return static_cast<std::uint64_t>(task) + 1; }

void check_spec(const SplitSpec& spec) {
  if (spec.n < 2) throw ConfigError(fmt::format("split N must be >= 2 (got {})", spec.n));
  if (!(spec.val_fraction > 0.0 && spec.val_fraction < 1.0))
    throw ConfigError(fmt::format("val_fraction must lie in (0, 1) (got {})", spec.val_fraction));
}

// Draws N ids from `pool` with the sample seed and carves off validation.
void sample_train_val(std::vector<int> pool, const SplitSpec& spec, SplitResult& out) {
  if (static_cast<int>(pool.size()) < spec.n)
    throw DataError(fmt::format("{} split: only {} eligible training sequences for N = {}", to_string(spec.task),
                                pool.size(), spec.n));
  std::sort(pool.begin(), pool.end());
  auto rng = make_rng(spec.seed_sample, kSampleStream ^ (task_salt(spec.task) << 32));
  std::shuffle(pool.begin(), pool.end(), rng);
  const int n_val = validation_count(spec.n, spec.val_fraction);
  out.val.assign(pool.begin(), pool.begin() + n_val);
  out.train.assign(pool.begin() + n_val, pool.begin() + spec.n);
  std::sort(out.val.begin(), out.val.end());
  std::sort(out.train.begin(), out.train.end());
}

// Shuffles `universe` with the test seed and keeps round(fraction * n) of it,
// clamped so both sides are nonempty.
template <typename T>
std::pair<std::set<T>, std::set<T>> partition_universe(std::vector<T> universe, double fraction, const SplitSpec& spec) {
  auto rng = make_rng(spec.seed_test, kTestStream ^ (task_salt(spec.task) << 32));
  std::shuffle(universe.begin(), universe.end(), rng);
  const int n = static_cast<int>(universe.size());
  const int n_train = std::clamp(static_cast<int>(std::lround(fraction * n)), 1, n - 1);
  return {std::set<T>(universe.begin(), universe.begin() + n_train), std::set<T>(universe.begin() + n_train, universe.end())};
}

}  // namespace

std::string to_string(Task task) {
  switch (task) {
    case Task::random: return "random";
    case Task::mutation: return "mutation";
    case Task::position: return "position";
    case Task::regime: return "regime";
    case Task::score: return "score";
  }
  return "unknown";
}

Task task_from_string(const std::string& name) {
  for (Task t : kAllTasks)
    if (to_string(t) == name) return t;
  throw ConfigError(fmt::format("unknown split task '{}'", name));
}

double default_val_fraction(Task task) { return task == Task::regime ? 0.2 : 0.1; }

SplitSpec make_spec(Task task, int n, std::uint64_t seed_test, std::uint64_t seed_sample) {
  return {task, n, seed_test, seed_sample, default_val_fraction(task)};
}

int validation_count(int n, double fraction) {
  const int v = static_cast<int>(std::ceil(fraction * static_cast<double>(n) - 1e-9));
  return std::clamp(v, 1, std::max(1, n - 1));
}

SplitResult split_random(const DmsDataset& ds, const SplitSpec& spec) {
  check_spec(spec);
  const int total = static_cast<int>(ds.size());
  const int n_test = static_cast<int>(std::ceil(0.1 * total - 1e-9));
  if (n_test < 1 || total < spec.n + n_test)
    throw DataError(fmt::format("random split: dataset of {} too small for N = {} plus {} test", total, spec.n, n_test));
  std::vector<int> ids(static_cast<std::size_t>(total));
  std::iota(ids.begin(), ids.end(), 0);
  auto rng = make_rng(spec.seed_test, kTestStream ^ (task_salt(spec.task) << 32));
  std::shuffle(ids.begin(), ids.end(), rng);

  SplitResult out;
  out.test.assign(ids.begin(), ids.begin() + n_test);
  std::sort(out.test.begin(), out.test.end());
  sample_train_val(std::vector<int>(ids.begin() + n_test, ids.end()), spec, out);
  out.metadata = {{"test_fraction", 0.1}, {"n_test", n_test}};
  return out;
}

SplitResult split_mutation(const DmsDataset& ds, const SplitSpec& spec) {
  check_spec(spec);
  std::set<std::pair<int, char>> universe_set;
  for (const auto& r : ds.records)
    for (const auto& m : r.mutations) universe_set.insert({m.position, m.to});
  if (universe_set.size() < 2) throw DataError("mutation split needs at least two distinct mutations");
  auto [train_muts, held_out] =
      partition_universe(std::vector<std::pair<int, char>>(universe_set.begin(), universe_set.end()), 0.8, spec);

  SplitResult out;
  std::vector<int> pool;
  for (int i = 0; i < static_cast<int>(ds.size()); ++i) {
    bool touches_held_out = false;
    for (const auto& m : ds.records[static_cast<std::size_t>(i)].mutations)
      touches_held_out |= held_out.count({m.position, m.to}) > 0;
    (touches_held_out ? out.test : pool).push_back(i);
  }
  if (out.test.empty()) throw DataError("mutation split: no sequence carries a held-out mutation");
  sample_train_val(std::move(pool), spec, out);

  nlohmann::json held = nlohmann::json::array();
  for (const auto& [pos, to] : held_out) held.push_back(fmt::format("{}{}", pos + 1, to));
  out.metadata = {{"held_out_mutations", held}, {"n_train_mutations", train_muts.size()}};
  return out;
}

SplitResult split_position(const DmsDataset& ds, const SplitSpec& spec) {
  check_spec(spec);
  const auto positions = ds.mutated_positions();
  if (positions.size() < 2) throw DataError("position split needs at least two mutated positions");
  const double fraction = positions.size() <= 4 ? 0.75 : 0.8;
  auto [train_pos, held_out] = partition_universe(positions, fraction, spec);

  SplitResult out;
  std::vector<int> pool;
  for (int i = 0; i < static_cast<int>(ds.size()); ++i) {
    bool touches_held_out = false;
    for (const auto& m : ds.records[static_cast<std::size_t>(i)].mutations) touches_held_out |= held_out.count(m.position) > 0;
    (touches_held_out ? out.test : pool).push_back(i);
  }
  if (out.test.empty()) throw DataError("position split: no sequence touches a held-out position");
  sample_train_val(std::move(pool), spec, out);

  nlohmann::json held = nlohmann::json::array();
  for (int p : held_out) held.push_back(p);
  out.metadata = {{"held_out_positions", held}, {"train_fraction", fraction}};
  return out;
}

SplitResult split_regime(const DmsDataset& ds, const SplitSpec& spec) {
  check_spec(spec);
  int max_count = 0;
  for (const auto& r : ds.records) max_count = std::max(max_count, r.mutation_count());
  if (max_count < 2) throw DataError("regime split needs multi-mutants");

  auto ids_with = [&](auto pred) {
    std::vector<int> ids;
    for (int i = 0; i < static_cast<int>(ds.size()); ++i)
      if (pred(ds.records[static_cast<std::size_t>(i)].mutation_count())) ids.push_back(i);
    return ids;
  };

  int boundary = max_count == 2 ? 1 : 2;
  std::string mode = max_count == 2 ? "singles_to_doubles" : "up_to_doubles";
  if (max_count > 3 && static_cast<int>(ids_with([](int c) { return c >= 1 && c <= 2; }).size()) < spec.n) {
    boundary = 3;
    mode = "low_singles";
  }
  auto pool = ids_with([&](int c) { return c >= 1 && c <= boundary; });
  SplitResult out;
  out.test = ids_with([&](int c) { return c > boundary; });
  if (out.test.empty()) throw DataError(fmt::format("regime split: no sequences above {} mutations", boundary));
  sample_train_val(std::move(pool), spec, out);
  out.metadata = {{"regime_boundary", boundary}, {"mode", mode}};
  return out;
}

SplitResult split_score(const DmsDataset& ds, const SplitSpec& spec) {
  check_spec(spec);
  SplitResult out;
  std::vector<int> pool;
  for (int i = 0; i < static_cast<int>(ds.size()); ++i) {
    const double f = ds.records[static_cast<std::size_t>(i)].fitness;
    if (f < ds.wildtype_fitness) pool.push_back(i);
    else if (f > ds.wildtype_fitness) out.test.push_back(i);
  }
  if (out.test.empty()) throw DataError("score split: no sequence scores above the wildtype");
  sample_train_val(std::move(pool), spec, out);
  out.metadata = {{"wt_threshold", ds.wildtype_fitness}};
  return out;
}

SplitResult make_split(const DmsDataset& ds, const SplitSpec& spec) {
  switch (spec.task) {
    case Task::random: return split_random(ds, spec);
    case Task::mutation: return split_mutation(ds, spec);
    case Task::position: return split_position(ds, spec);
    case Task::regime: return split_regime(ds, spec);
    case Task::score: return split_score(ds, spec);
  }
  throw ConfigError("unknown split task");
}

std::vector<std::pair<std::uint64_t, std::uint64_t>> trial_seeds(Task task) {
  std::vector<std::pair<std::uint64_t, std::uint64_t>> seeds;
  if (task == Task::regime || task == Task::score) {
    for (std::uint64_t s = 0; s < 9; ++s) seeds.emplace_back(0, s);
  } else {
    for (std::uint64_t t = 0; t < 3; ++t)
      for (std::uint64_t s = 0; s < 3; ++s) seeds.emplace_back(t, s);
  }
  return seeds;
}

int TrialReport::n_ok() const {
  return static_cast<int>(std::count_if(rows.begin(), rows.end(), [](const TrialRow& r) { return r.error.empty(); }));
}

double TrialReport::mean() const {
  double sum = 0.0;
  int n = 0;
  for (const auto& r : rows)
    if (r.error.empty()) {
      sum += r.spearman_abs;
      ++n;
    }
  return n ? sum / n : 0.0;
}

double TrialReport::stddev() const {
  const int n = n_ok();
  if (n < 2) return 0.0;
  const double mu = mean();
  double ss = 0.0;
  for (const auto& r : rows)
    if (r.error.empty()) ss += (r.spearman_abs - mu) * (r.spearman_abs - mu);
  return std::sqrt(ss / (n - 1));
}

std::string TrialReport::csv() const {
  std::string out = "task,N,seed_test,seed_sample,feature_kind,lambda,spearman_abs,status\n";
  for (const auto& r : rows) {
    std::string status = !r.error.empty() ? "error:" + r.error : (r.degenerate ? "degenerate" : "ok");
    std::replace(status.begin(), status.end(), ',', ';');
    if (r.error.empty())
      out += fmt::format("{},{},{},{},{},{:.17g},{:.17g},{}\n", to_string(r.task), r.n, r.seed_test, r.seed_sample,
                         r.feature_kind, r.lambda, r.spearman_abs, status);
    else
      out += fmt::format("{},{},{},{},{},,,{}\n", to_string(r.task), r.n, r.seed_test, r.seed_sample, r.feature_kind,
                         status);
  }
  return out;
}

nlohmann::json TrialReport::summary() const {
  nlohmann::json j;
  if (!rows.empty()) {
    j["task"] = to_string(rows.front().task);
    j["N"] = rows.front().n;
    j["feature_kind"] = rows.front().feature_kind;
  }
  j["mean_spearman_abs"] = mean();
  j["std_spearman_abs"] = stddev();
  j["n_trials"] = rows.size();
  j["n_ok"] = n_ok();
  j["n_degenerate"] = std::count_if(rows.begin(), rows.end(), [](const TrialRow& r) { return r.degenerate; });
  return j;
}

TrialPipeline make_probe_pipeline(const Matrix& features, const Vector& fitness, FeatureKind kind,
                                  std::vector<double> grid) {
  return [&features, &fitness, kind, grid = std::move(grid)](const SplitResult& split) {
    auto gather = [&](const std::vector<int>& ids, Matrix& x, Vector& y) {
      x.resize(static_cast<Eigen::Index>(ids.size()), features.cols());
      y.resize(static_cast<Eigen::Index>(ids.size()));
      for (std::size_t i = 0; i < ids.size(); ++i) {
        x.row(static_cast<Eigen::Index>(i)) = features.row(ids[i]);
        y(static_cast<Eigen::Index>(i)) = fitness(ids[i]);
      }
    };
    Matrix tx, vx, sx;
    Vector ty, vy, sy;
    gather(split.train, tx, ty);
    gather(split.val, vx, vy);
    gather(split.test, sx, sy);
    const auto fit = probe::fit_probe_with_validation(tx, ty, vx, vy, grid, kind);
    TrialOutcome outcome;
    outcome.lambda = fit.model.lambda;
    if (sx.rows() < 2) {
      outcome.degenerate = true;
      return outcome;
    }
    const auto s = probe::spearman(fit.model.predict(sx), sy);
    outcome.spearman = s.rho;
    outcome.degenerate = s.degenerate;
    return outcome;
  };
}

TrialReport run_trials(const DmsDataset& ds, Task task, int n, const TrialPipeline& pipeline,
                       const std::string& feature_kind) {
  const auto seeds = trial_seeds(task);
  TrialReport report;
  report.rows.resize(seeds.size());
  parallel_for(seeds.size(), [&](std::size_t i) {
    TrialRow& row = report.rows[i];
    row.task = task;
    row.n = n;
    row.seed_test = seeds[i].first;
    row.seed_sample = seeds[i].second;
    row.feature_kind = feature_kind;
    try {
      const auto split = make_split(ds, make_spec(task, n, row.seed_test, row.seed_sample));
      const auto outcome = pipeline(split);
      row.lambda = outcome.lambda;
      row.spearman_abs = std::abs(outcome.spearman);
      row.degenerate = outcome.degenerate;
    } catch (const Error& e) {
      row.error = e.what();
    }
  });
  return report;
}

}  // namespace latentforge::splits
