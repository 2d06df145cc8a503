#include "latentforge/oracle.hpp"

#include "latentforge/adam.hpp"
#include "latentforge/rng.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

namespace latentforge::oracle {

namespace {

constexpr int kHidden1 = 128;
constexpr int kHidden2 = 64;

using IndexRows = std::vector<std::vector<int>>;

IndexRows one_hot_indices(const std::vector<std::string>& seqs, int length) {
  IndexRows out;
  out.reserve(seqs.size());
  for (const auto& s : seqs) {
    if (static_cast<int>(s.size()) != length)
      throw DataError(fmt::format("oracle expects length {}, got {}", length, s.size()));
    std::vector<int> idx(s.size());
    for (std::size_t p = 0; p < s.size(); ++p) idx[p] = static_cast<int>(p) * data::kVocab + data::residue_index(s[p]);
    out.push_back(std::move(idx));
  }
  return out;
}

struct Activations {
  Matrix a1, h1, a2, h2;
  Vector out;
};

Activations forward(const MlpModel& m, const IndexRows& x) {
  Activations act;
  const auto n = static_cast<Eigen::Index>(x.size());
  act.a1 = m.b1.replicate(n, 1);
  for (Eigen::Index i = 0; i < n; ++i)
    for (int j : x[static_cast<std::size_t>(i)]) act.a1.row(i) += m.w1.row(j);
  act.h1 = act.a1.cwiseMax(0.0);
  act.a2 = (act.h1 * m.w2).rowwise() + m.b2;
  act.h2 = act.a2.cwiseMax(0.0);
  act.out = ((act.h2 * m.w3).rowwise() + m.b3).col(0);
  return act;
}

double mse(const Vector& pred, const Vector& y) { return (pred - y).squaredNorm() / static_cast<double>(y.size()); }

struct MlpGrads {
  Matrix w1, w2, w3;
  RowVector b1, b2, b3;
};

MlpGrads backward(const MlpModel& m, const IndexRows& x, const Activations& act, const Vector& y) {
  const auto n = static_cast<double>(y.size());
  MlpGrads g;
  const Matrix d_out = (2.0 / n) * (act.out - y);  // n x 1
  g.w3 = act.h2.transpose() * d_out;
  g.b3 = d_out.colwise().sum();
  const Matrix d_a2 = (d_out * m.w3.transpose()).cwiseProduct((act.a2.array() > 0.0).cast<double>().matrix());
  g.w2 = act.h1.transpose() * d_a2;
  g.b2 = d_a2.colwise().sum();
  const Matrix d_a1 = (d_a2 * m.w2.transpose()).cwiseProduct((act.a1.array() > 0.0).cast<double>().matrix());
  g.b1 = d_a1.colwise().sum();
  g.w1 = Matrix::Zero(m.w1.rows(), m.w1.cols());
  for (Eigen::Index i = 0; i < d_a1.rows(); ++i)
    for (int j : x[static_cast<std::size_t>(i)]) g.w1.row(j) += d_a1.row(i);
  return g;
}

Matrix uniform_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double bound) {
  std::uniform_real_distribution<double> u(-bound, bound);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

}  // namespace

double MlpModel::predict(std::string_view sequence) const {
  return predict(std::vector<std::string>{std::string(sequence)})(0);
}

Vector MlpModel::predict(const std::vector<std::string>& sequences) const {
  return forward(*this, one_hot_indices(sequences, length)).out;
}

MlpModel init_mlp(int length, std::uint64_t seed) {
  if (length < 1) throw ConfigError("MLP length must be >= 1");
  Rng rng = make_rng(seed, 0x3170);
  const int in = length * data::kVocab;
  MlpModel m;
  m.length = length;
  // A one-hot row has exactly `length` active inputs, which is the fan-in
  // that matters for the first layer.
  m.w1 = uniform_matrix(rng, in, kHidden1, std::sqrt(6.0 / length));
  m.w2 = uniform_matrix(rng, kHidden1, kHidden2, std::sqrt(6.0 / kHidden1));
  m.w3 = uniform_matrix(rng, kHidden2, 1, std::sqrt(3.0 / kHidden2));
  m.b1 = RowVector::Zero(kHidden1);
  m.b2 = RowVector::Zero(kHidden2);
  m.b3 = RowVector::Zero(1);
  return m;
}

bool EarlyStopper::observe(double loss) {
  improved_ = best_epoch_ < 0 || loss < best_;
  if (improved_) {
    best_ = loss;
    best_epoch_ = epoch_;
    since_best_ = 0;
  } else {
    ++since_best_;
  }
  ++epoch_;
  return since_best_ >= patience_;
}

MlpTrainResult train_mlp(const data::DmsDataset& ds, const MlpConfig& cfg) {
  if (ds.size() < 10) throw DataError(fmt::format("MLP oracle needs at least 10 records, got {}", ds.size()));
  if (!(cfg.split > 0.0 && cfg.split <= 1.0)) throw ConfigError("MLP split must lie in (0, 1]");
  if (cfg.max_epochs < 1 || cfg.patience < 1) throw ConfigError("MLP max_epochs and patience must be >= 1");

  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = make_rng(cfg.seed, 0x5917);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = cfg.split >= 1.0 ? order.size()
                                        : std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(cfg.split * static_cast<double>(order.size()))),
                                                                  1, order.size() - 1);
  auto gather = [&](std::size_t begin, std::size_t end, std::vector<std::string>& seqs, Vector& y) {
    y.resize(static_cast<Eigen::Index>(end - begin));
    for (std::size_t i = begin; i < end; ++i) {
      seqs.push_back(ds.records[order[i]].sequence);
      y(static_cast<Eigen::Index>(i - begin)) = ds.records[order[i]].fitness;
    }
  };
  std::vector<std::string> train_seqs, val_seqs;
  Vector train_y, val_y;
  gather(0, n_train, train_seqs, train_y);
  if (cfg.split >= 1.0) {
    val_seqs = train_seqs;
    val_y = train_y;
  } else {
    gather(n_train, order.size(), val_seqs, val_y);
  }
  const int length = static_cast<int>(ds.wildtype.size());
  const IndexRows train_x = one_hot_indices(train_seqs, length);
  const IndexRows val_x = one_hot_indices(val_seqs, length);

  MlpModel model = init_mlp(length, cfg.seed);
  AdamConfig adam{cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay};
  auto mw1 = AdamMoments<Matrix>::zeros_like(model.w1);
  auto mw2 = AdamMoments<Matrix>::zeros_like(model.w2);
  auto mw3 = AdamMoments<Matrix>::zeros_like(model.w3);
  auto mb1 = AdamMoments<RowVector>::zeros_like(model.b1);
  auto mb2 = AdamMoments<RowVector>::zeros_like(model.b2);
  auto mb3 = AdamMoments<RowVector>::zeros_like(model.b3);

  MlpTrainResult result;
  result.model = model;
  EarlyStopper stopper(cfg.patience);
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const Activations act = forward(model, train_x);
    const double train_loss = mse(act.out, train_y);
    if (!std::isfinite(train_loss)) throw NumericError(fmt::format("MLP loss became non-finite at epoch {}", epoch));
    const MlpGrads g = backward(model, train_x, act, train_y);
    adam_update(model.w1, g.w1, mw1, adam, epoch);
    adam_update(model.w2, g.w2, mw2, adam, epoch);
    adam_update(model.w3, g.w3, mw3, adam, epoch);
    adam_update(model.b1, g.b1, mb1, adam, epoch);
    adam_update(model.b2, g.b2, mb2, adam, epoch);
    adam_update(model.b3, g.b3, mb3, adam, epoch);

    const double val_loss = mse(forward(model, val_x).out, val_y);
    if (!std::isfinite(val_loss)) throw NumericError(fmt::format("MLP validation loss became non-finite at epoch {}", epoch));
    result.train_loss.push_back(train_loss);
    result.val_loss.push_back(val_loss);
    const bool stop = stopper.observe(val_loss);
    if (stopper.improved()) result.model = model;
    if (stop) break;
  }
  result.best_epoch = stopper.best_epoch();
  result.best_val_loss = stopper.best();
  result.final_train_mse = mse(forward(result.model, train_x).out, train_y);
  return result;
}

double top_percent_mean(std::vector<double> scores, int percent) {
  if (scores.empty()) throw DataError("no scores to summarize");
  const auto n = static_cast<long>(scores.size());
  const long k = std::clamp((n * percent + 99) / 100, 1L, n);
  std::sort(scores.begin(), scores.end(), std::greater<>());
  return std::accumulate(scores.begin(), scores.begin() + k, 0.0) / static_cast<double>(k);
}

DesignStats design_stats(const std::vector<double>& scores) {
  if (scores.empty()) throw DataError("no scores to summarize");
  DesignStats s;
  s.n = static_cast<int>(scores.size());
  s.mean = std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(s.n);
  s.max = *std::max_element(scores.begin(), scores.end());
  s.top10 = top_percent_mean(scores, 10);
  s.top20 = top_percent_mean(scores, 20);
  return s;
}

Scorer lookup_scorer(const data::DmsDataset& ds) {
  auto table = std::make_shared<std::unordered_map<std::string, double>>();
  for (const auto& r : ds.records) table->emplace(r.sequence, r.fitness);
  return [table](const std::string& seq) {
    auto it = table->find(seq);
    if (it == table->end()) throw DataError(fmt::format("design not in the lookup table: {}", seq));
    return it->second;
  };
}

Scorer mlp_scorer(const MlpModel& model) {
  return [model](const std::string& seq) { return model.predict(seq); };
}

DesignStats evaluate_designs(const Scorer& score, const std::vector<DesignCandidate>& designs) {
  if (designs.empty()) throw DataError("no designs to evaluate");
  std::vector<double> scores;
  scores.reserve(designs.size());
  for (const auto& d : designs) scores.push_back(score(d.sequence));
  return design_stats(scores);
}

nlohmann::json to_json(const DesignStats& s) {
  return {{"n", s.n}, {"mean", s.mean}, {"max", s.max}, {"top10", s.top10}, {"top20", s.top20}};
}

Checkpoint to_checkpoint(const MlpModel& m) {
  Checkpoint ckpt;
  ckpt.header = {{"kind", "mlp"}, {"length", m.length}, {"layers", {m.length * data::kVocab, kHidden1, kHidden2, 1}}};
  ckpt.add_tensor("w1", m.w1);
  ckpt.add_tensor("b1", m.b1);
  ckpt.add_tensor("w2", m.w2);
  ckpt.add_tensor("b2", m.b2);
  ckpt.add_tensor("w3", m.w3);
  ckpt.add_tensor("b3", m.b3);
  return ckpt;
}

MlpModel mlp_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.header.value("kind", "") != "mlp") throw DataError("checkpoint is not an MLP checkpoint");
  MlpModel m;
  m.length = ckpt.header.at("length").get<int>();
  m.w1 = ckpt.tensor("w1");
  m.w2 = ckpt.tensor("w2");
  m.w3 = ckpt.tensor("w3");
  m.b1 = ckpt.tensor("b1").row(0);
  m.b2 = ckpt.tensor("b2").row(0);
  m.b3 = ckpt.tensor("b3").row(0);
  if (m.w1.rows() != m.length * data::kVocab || m.w1.cols() != kHidden1 || m.w2.rows() != kHidden1 ||
      m.w2.cols() != kHidden2 || m.w3.rows() != kHidden2 || m.w3.cols() != 1)
    throw DataError("MLP checkpoint has unexpected tensor shapes");
  return m;
}

}  // namespace latentforge::oracle
