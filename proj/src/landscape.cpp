#include "latentforge/landscape.hpp"

#include "latentforge/rng.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <numeric>
#include <set>
#include <unordered_set>

namespace latentforge::landscape {

namespace {

enum Stream : std::uint64_t {
  kDirections = 1,
  kTokens,
  kSites,
  kWeights,
  kWildtype,
  kResidues,
};

Matrix gaussian(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = normal(rng);
  return m;
}

char random_residue_except(Rng& rng, char avoid) {
  std::uniform_int_distribution<int> pick(0, data::kVocab - 2);
  int idx = pick(rng);
  if (idx >= data::residue_index(avoid)) ++idx;
  return data::residue_at(idx);
}

}  // namespace

Matrix orthonormalize_rows(Matrix rows) {
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    for (int pass = 0; pass < 2; ++pass)
      for (Eigen::Index j = 0; j < i; ++j) rows.row(i) -= rows.row(i).dot(rows.row(j)) * rows.row(j);
    double norm = rows.row(i).norm();
    if (norm < 1e-12) throw NumericError("orthonormalize_rows: rank-deficient input");
    rows.row(i) /= norm;
  }
  return rows;
}

SyntheticModel::SyntheticModel(const LandscapeConfig& config) : config_(config) {
  const int L = config.length;
  const int d = config.d_model;
  const int m = config.n_motifs;
  if (L < 4) throw ConfigError(fmt::format("landscape length must be >= 4 (got {})", L));
  if (d < 8) throw ConfigError(fmt::format("landscape d_model must be >= 8 (got {})", d));
  if (m < 1 || m > d / 2) throw ConfigError(fmt::format("landscape n_motifs must be in [1, d_model/2] (got {})", m));
  if (config.sites_per_motif < 1) throw ConfigError("landscape sites_per_motif must be >= 1");
  if (!(config.token_scale > 0.0)) throw ConfigError("landscape token_scale must be > 0");

  auto dir_rng = make_rng(config.seed, kDirections);
  motif_directions_ = orthonormalize_rows(gaussian(dir_rng, m, d));

  auto tok_rng = make_rng(config.seed, kTokens);
  token_embeddings_ = gaussian(tok_rng, data::kVocab, d);
  for (Eigen::Index a = 0; a < token_embeddings_.rows(); ++a)
    token_embeddings_.row(a) *= config.token_scale / token_embeddings_.row(a).norm();

  // Motif sites: disjoint when they fit, otherwise drawn independently.
  auto site_rng = make_rng(config.seed, kSites);
  const int per_motif = std::min(config.sites_per_motif, L);
  std::vector<int> perm(static_cast<std::size_t>(L));
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), site_rng);
  motif_sites_.resize(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    auto& sites = motif_sites_[static_cast<std::size_t>(i)];
    if (m * per_motif <= L) {
      sites.assign(perm.begin() + i * per_motif, perm.begin() + (i + 1) * per_motif);
    } else {
      std::vector<int> p(static_cast<std::size_t>(L));
      std::iota(p.begin(), p.end(), 0);
      std::shuffle(p.begin(), p.end(), site_rng);
      sites.assign(p.begin(), p.begin() + per_motif);
    }
    std::sort(sites.begin(), sites.end());
  }
  position_motifs_.assign(static_cast<std::size_t>(L), {});
  for (int i = 0; i < m; ++i)
    for (int p : motif_sites_[static_cast<std::size_t>(i)]) position_motifs_[static_cast<std::size_t>(p)].push_back(i);

  auto res_rng = make_rng(config.seed, kResidues);
  std::vector<int> residues(data::kVocab);
  std::iota(residues.begin(), residues.end(), 0);
  std::shuffle(residues.begin(), residues.end(), res_rng);
  std::uniform_int_distribution<int> any_residue(0, data::kVocab - 1);
  for (int i = 0; i < m; ++i)
    motif_residues_.push_back(data::residue_at(i < data::kVocab ? residues[static_cast<std::size_t>(i)] : any_residue(res_rng)));

  auto w_rng = make_rng(config.seed, kWeights);
  std::uniform_real_distribution<double> magnitude(0.5, 1.5);
  std::bernoulli_distribution coin(0.5);
  motif_weights_.resize(m);
  for (int i = 0; i < m; ++i) {
    const bool negative = coin(w_rng);
    const double sign = config.signed_weights && negative ? -1.0 : 1.0;
    motif_weights_(i) = sign * magnitude(w_rng);
  }
  if (config.epistasis) {
    for (int i = 0; i + 1 < m; i += 2) {
      double sign = coin(w_rng) ? 1.0 : -1.0;
      epistasis_.push_back({i, i + 1, sign * magnitude(w_rng)});
    }
  }

  readout_ = token_embeddings_.transpose();
  for (int i = 0; i < m; ++i)
    readout_.col(data::residue_index(motif_residues_[static_cast<std::size_t>(i)])) +=
        config.readout_gain * motif_directions_.row(i).transpose();

  // Wildtype: random background; every motif partially present (at least one
  // site with and, when possible, one site without its preferred residue).
  auto wt_rng = make_rng(config.seed, kWildtype);
  wildtype_.resize(static_cast<std::size_t>(L));
  for (auto& c : wildtype_) c = data::residue_at(any_residue(wt_rng));
  for (int i = 0; i < m; ++i) {
    auto sites = motif_sites_[static_cast<std::size_t>(i)];
    const char pref = motif_residues_[static_cast<std::size_t>(i)];
    std::shuffle(sites.begin(), sites.end(), wt_rng);
    const int n = static_cast<int>(sites.size());
    int carrying = 1;
    if (n > 1) carrying = std::uniform_int_distribution<int>(1, n - 1)(wt_rng);
    for (int s = 0; s < n; ++s) {
      auto& c = wildtype_[static_cast<std::size_t>(sites[static_cast<std::size_t>(s)])];
      c = s < carrying ? pref : random_residue_except(wt_rng, pref);
    }
  }
}

SyntheticModel make_synthetic(const LandscapeConfig& config) { return SyntheticModel(config); }

void SyntheticModel::check_length(std::string_view sequence) const {
  if (static_cast<int>(sequence.size()) != config_.length)
    throw DataError(fmt::format("sequence length {} does not match landscape length {}", sequence.size(), config_.length));
}

Vector SyntheticModel::motif_occupancy(std::string_view sequence) const {
  check_length(sequence);
  Vector g(config_.n_motifs);
  for (int i = 0; i < config_.n_motifs; ++i) {
    const auto& sites = motif_sites_[static_cast<std::size_t>(i)];
    int hits = 0;
    for (int p : sites) hits += sequence[static_cast<std::size_t>(p)] == motif_residues_[static_cast<std::size_t>(i)];
    g(i) = static_cast<double>(hits) / static_cast<double>(sites.size());
  }
  return g;
}

double SyntheticModel::motif_term(std::string_view sequence) const {
  return motif_weights_.dot(motif_occupancy(sequence));
}

double SyntheticModel::true_fitness(std::string_view sequence) const {
  Vector g = motif_occupancy(sequence);
  double f = motif_weights_.dot(g);
  for (const auto& e : epistasis_) f += e.coupling * g(e.first) * g(e.second);
  return f;
}

Matrix SyntheticModel::embed(std::string_view sequence) const {
  Vector g = motif_occupancy(sequence);
  Matrix x(config_.length, config_.d_model);
  for (int p = 0; p < config_.length; ++p) {
    x.row(p) = token_embeddings_.row(data::residue_index(sequence[static_cast<std::size_t>(p)]));
    for (int i : position_motifs_[static_cast<std::size_t>(p)]) x.row(p) += g(i) * motif_directions_.row(i);
  }
  return x;
}

Matrix SyntheticModel::logits_from_embedding(const Matrix& embedding) const {
  if (embedding.cols() != config_.d_model)
    throw DataError(fmt::format("embedding has {} columns, model expects {}", embedding.cols(), config_.d_model));
  return embedding * readout_;
}

std::vector<int> SyntheticModel::background_positions() const {
  std::vector<int> out;
  for (int p = 0; p < config_.length; ++p)
    if (position_motifs_[static_cast<std::size_t>(p)].empty()) out.push_back(p);
  return out;
}

std::string SyntheticModel::with_full_motif(std::string sequence, int motif) const {
  check_length(sequence);
  for (int p : motif_sites_.at(static_cast<std::size_t>(motif)))
    sequence[static_cast<std::size_t>(p)] = motif_residues_[static_cast<std::size_t>(motif)];
  return sequence;
}

std::string SyntheticModel::without_motif(std::string sequence, int motif) const {
  check_length(sequence);
  const char pref = motif_residues_.at(static_cast<std::size_t>(motif));
  for (int p : motif_sites_[static_cast<std::size_t>(motif)]) {
    auto& c = sequence[static_cast<std::size_t>(p)];
    if (c == pref) c = data::residue_at((data::residue_index(pref) + 1) % data::kVocab);
  }
  return sequence;
}

std::vector<std::string> sample_msa_like(const SyntheticModel& model, int n, std::uint64_t seed, double drift) {
  auto rng = make_rng(seed, 0x6d7361);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> any_residue(0, data::kVocab - 1);
  std::vector<std::string> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int s = 0; s < n; ++s) {
    std::string seq = model.wildtype();
    for (int p : model.background_positions())
      if (unit(rng) < drift) seq[static_cast<std::size_t>(p)] = data::residue_at(any_residue(rng));
    for (int i = 0; i < model.n_motifs(); ++i) {
      const double q = unit(rng);
      const char pref = model.motif_residues()[static_cast<std::size_t>(i)];
      for (int p : model.motif_sites()[static_cast<std::size_t>(i)])
        seq[static_cast<std::size_t>(p)] = unit(rng) < q ? pref : random_residue_except(rng, pref);
    }
    out.push_back(std::move(seq));
  }
  return out;
}

std::vector<int> assay_positions(const SyntheticModel& model, const DmsConfig& config) {
  std::set<int> positions;
  for (const auto& sites : model.motif_sites()) positions.insert(sites.begin(), sites.end());
  auto background = model.background_positions();
  auto rng = make_rng(config.seed, 0x706f73);
  std::shuffle(background.begin(), background.end(), rng);
  const int target = std::min(config.n_assay_positions, model.length());
  for (int p : background) {
    if (static_cast<int>(positions.size()) >= target) break;
    positions.insert(p);
  }
  return {positions.begin(), positions.end()};
}

data::DmsDataset make_dms(const SyntheticModel& model, const DmsConfig& config) {
  if (config.n_records < 2) throw ConfigError("dataset n_records must be >= 2");
  if (config.max_mutations < 1) throw ConfigError("dataset max_mutations must be >= 1");
  const auto positions = assay_positions(model, config);
  auto rng = make_rng(config.seed, 0x646d73);
  std::normal_distribution<double> noise(0.0, 1.0);

  data::DmsDataset ds;
  ds.wildtype = model.wildtype();
  ds.wildtype_fitness = model.true_fitness(ds.wildtype);
  std::unordered_set<std::string> seen;
  auto add = [&](std::vector<data::Mutation> muts) {
    std::sort(muts.begin(), muts.end());
    std::string seq = data::apply_mutations(ds.wildtype, muts);
    if (!seen.insert(seq).second) return false;
    double f = model.true_fitness(seq);
    if (config.noise_sd > 0.0 && !muts.empty()) f += config.noise_sd * noise(rng);
    ds.records.push_back({std::move(seq), std::move(muts), f});
    return true;
  };
  add({});

  std::vector<data::Mutation> singles;
  for (int p : positions) {
    const char from = ds.wildtype[static_cast<std::size_t>(p)];
    for (char to : data::kAlphabet)
      if (to != from) singles.push_back({p, from, to});
  }
  std::shuffle(singles.begin(), singles.end(), rng);
  const int budget = config.n_records - 1;
  int n_singles = static_cast<int>(std::lround(config.single_fraction * budget));
  if (config.max_mutations == 1) n_singles = budget;
  n_singles = std::min<int>(n_singles, static_cast<int>(singles.size()));
  for (int i = 0; i < n_singles; ++i) add({singles[static_cast<std::size_t>(i)]});

  const int max_count = std::min<int>(config.max_mutations, static_cast<int>(positions.size()));
  if (max_count >= 2) {
    std::uniform_int_distribution<int> count_dist(2, max_count);
    int attempts = 0;
    while (static_cast<int>(ds.records.size()) < config.n_records && attempts < 100 * config.n_records) {
      ++attempts;
      const int count = count_dist(rng);
      auto pick = positions;
      std::shuffle(pick.begin(), pick.end(), rng);
      std::vector<data::Mutation> muts;
      for (int c = 0; c < count; ++c) {
        const int p = pick[static_cast<std::size_t>(c)];
        const char from = ds.wildtype[static_cast<std::size_t>(p)];
        muts.push_back({p, from, random_residue_except(rng, from)});
      }
      add(std::move(muts));
    }
  }
  return ds;
}

EmbeddingStore export_store(const SequenceModel& model, const std::vector<std::string>& sequences,
                            const std::vector<std::string>& ids, bool with_logits) {
  if (sequences.size() != ids.size()) throw DataError("export_store: ids and sequences differ in length");
  EmbeddingStore store;
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    Matrix x = model.embed(sequences[i]);
    std::optional<MatrixF> lg;
    if (with_logits) lg = to_float(model.logits_from_embedding(x));
    store.add(ids[i], to_float(x), std::move(lg));
  }
  return store;
}

std::vector<std::string> record_ids(const data::DmsDataset& ds) {
  std::vector<std::string> ids;
  ids.reserve(ds.records.size());
  for (const auto& r : ds.records) ids.push_back(data::format_mutant(r.mutations));
  return ids;
}

}  // namespace latentforge::landscape
