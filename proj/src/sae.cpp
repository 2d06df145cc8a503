#include "latentforge/sae.hpp"

#include "latentforge/rng.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace latentforge::sae {

namespace {

// Value-descending order with ties broken toward the lower index.
struct ByValueThenIndex {
  const double* row;
  bool operator()(int a, int b) const { return row[a] > row[b] || (row[a] == row[b] && a < b); }
};

void select_top(const double* row, std::vector<int>& candidates, int k) {
  ByValueThenIndex cmp{row};
  if (k < static_cast<int>(candidates.size())) {
    std::nth_element(candidates.begin(), candidates.begin() + k, candidates.end(), cmp);
    candidates.resize(static_cast<std::size_t>(k));
  }
  std::sort(candidates.begin(), candidates.end(), cmp);
}

void check_rows(const Matrix& x, const SaeParams& p) {
  if (x.cols() != p.d_model())
    throw DataError(fmt::format("input has {} columns, SAE expects d_model = {}", x.cols(), p.d_model()));
}

}  // namespace

void SaeParams::validate() const {
  if (w_enc.rows() < 1 || w_enc.cols() < 1) throw ConfigError("SAE encoder is empty");
  if (w_dec.rows() != w_enc.cols() || w_dec.cols() != w_enc.rows())
    throw ConfigError("SAE decoder shape does not match encoder");
  if (b_pre.size() != w_enc.cols()) throw ConfigError("SAE b_pre length does not match d_model");
  if (k < 1 || k > d_sae()) throw ConfigError(fmt::format("SAE k = {} must be in [1, d_sae = {}]", k, d_sae()));
  if (k_aux < 0 || k_aux > d_sae())
    throw ConfigError(fmt::format("SAE k_aux = {} must be in [0, d_sae = {}]", k_aux, d_sae()));
  if (!w_enc.allFinite() || !w_dec.allFinite() || !b_pre.allFinite()) throw NumericError("SAE parameters are not finite");
}

int epochs_for_msa_size(std::size_t n) {
  if (n < 500) return 1000;
  if (n < 1000) return 500;
  if (n < 5000) return 100;
  return 10;
}

IndexMatrix topk_indices(const Matrix& pre, int k) {
  if (k < 1) throw ConfigError(fmt::format("TopK k must be >= 1 (got {})", k));
  if (k > pre.cols()) throw ConfigError(fmt::format("TopK k = {} exceeds d_sae = {}", k, pre.cols()));
  IndexMatrix out(pre.rows(), k);
  std::vector<int> candidates;
  for (Eigen::Index r = 0; r < pre.rows(); ++r) {
    candidates.resize(static_cast<std::size_t>(pre.cols()));
    std::iota(candidates.begin(), candidates.end(), 0);
    select_top(pre.row(r).data(), candidates, k);
    for (int j = 0; j < k; ++j) out(r, j) = candidates[static_cast<std::size_t>(j)];
  }
  return out;
}

Matrix topk_rows(const Matrix& pre, int k) {
  IndexMatrix idx = topk_indices(pre, k);
  Matrix z = Matrix::Zero(pre.rows(), pre.cols());
  for (Eigen::Index r = 0; r < idx.rows(); ++r)
    for (Eigen::Index j = 0; j < idx.cols(); ++j) z(r, idx(r, j)) = pre(r, idx(r, j));
  return z;
}

Matrix pre_activations(const Matrix& x, const SaeParams& p) {
  check_rows(x, p);
  return (x.rowwise() - p.b_pre) * p.w_enc.transpose();
}

Matrix encode(const Matrix& x, const SaeParams& p) { return topk_rows(pre_activations(x, p), p.k); }

Matrix decode(const Matrix& z, const SaeParams& p) {
  if (z.cols() != p.d_sae())
    throw DataError(fmt::format("latents have {} columns, SAE expects d_sae = {}", z.cols(), p.d_sae()));
  return (z * p.w_dec.transpose()).rowwise() + p.b_pre;
}

LossEvaluation loss_and_gradients(const Matrix& x, const SaeParams& p, const std::vector<bool>& dead,
                                  bool with_gradients) {
  check_rows(x, p);
  const Eigen::Index rows = x.rows();
  const Eigen::Index s = p.d_sae();
  const double denom = static_cast<double>(rows) * static_cast<double>(p.d_model());
  if (rows == 0) throw DataError("SAE loss on zero rows");

  LossEvaluation ev;
  const Matrix xc = x.rowwise() - p.b_pre;
  const Matrix pre = xc * p.w_enc.transpose();

  const IndexMatrix top = topk_indices(pre, p.k);
  Matrix z = Matrix::Zero(rows, s);
  ev.active.main.resize(static_cast<std::size_t>(rows));
  for (Eigen::Index r = 0; r < rows; ++r) {
    auto& act = ev.active.main[static_cast<std::size_t>(r)];
    for (Eigen::Index j = 0; j < top.cols(); ++j) {
      z(r, top(r, j)) = pre(r, top(r, j));
      act.push_back(top(r, j));
    }
  }
  const Matrix e = xc - z * p.w_dec.transpose();
  ev.losses.mse = e.squaredNorm() / denom;

  std::vector<int> dead_idx;
  if (!dead.empty()) {
    if (static_cast<Eigen::Index>(dead.size()) != s) throw DataError("dead mask length does not match d_sae");
    for (int j = 0; j < s; ++j)
      if (dead[static_cast<std::size_t>(j)]) dead_idx.push_back(j);
  }
  const bool use_aux = !dead_idx.empty() && p.k_aux > 0;
  Matrix z_aux;
  Matrix resid;
  ev.active.aux.assign(static_cast<std::size_t>(rows), {});
  if (use_aux) {
    const int k_aux = std::min<int>(p.k_aux, static_cast<int>(dead_idx.size()));
    z_aux = Matrix::Zero(rows, s);
    std::vector<int> candidates;
    for (Eigen::Index r = 0; r < rows; ++r) {
      candidates = dead_idx;
      select_top(pre.row(r).data(), candidates, k_aux);
      for (int j : candidates) z_aux(r, j) = pre(r, j);
      ev.active.aux[static_cast<std::size_t>(r)] = candidates;
    }
    resid = e - z_aux * p.w_dec.transpose();
    ev.losses.aux = resid.squaredNorm() / denom;
  }
  ev.losses.total = ev.losses.mse + p.alpha * ev.losses.aux;
  if (!with_gradients) return ev;

  // d total / d e, including the aux term's dependence on e.
  Matrix g_e = (2.0 / denom) * e;
  Matrix g_r;
  if (use_aux) {
    g_r = (2.0 * p.alpha / denom) * resid;
    g_e += g_r;
  }
  Matrix g_z = -g_e * p.w_dec;
  ev.grads.w_dec = -g_e.transpose() * z;
  Matrix g_pre = Matrix::Zero(rows, s);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index j = 0; j < top.cols(); ++j) g_pre(r, top(r, j)) += g_z(r, top(r, j));
  if (use_aux) {
    Matrix g_zaux = -g_r * p.w_dec;
    ev.grads.w_dec -= g_r.transpose() * z_aux;
    for (Eigen::Index r = 0; r < rows; ++r)
      for (int j : ev.active.aux[static_cast<std::size_t>(r)]) g_pre(r, j) += g_zaux(r, j);
  }
  ev.grads.w_enc = g_pre.transpose() * xc;
  const Matrix g_xc = g_pre * p.w_enc + g_e;
  ev.grads.b_pre = -g_xc.colwise().sum();
  return ev;
}

SaeLosses sae_losses(const Matrix& x, const SaeParams& p, const std::vector<bool>& dead) {
  return loss_and_gradients(x, p, dead, false).losses;
}

std::vector<bool> SaeTrainState::dead_mask() const {
  std::vector<bool> dead(tokens_since_fired.size());
  for (std::size_t j = 0; j < dead.size(); ++j) dead[j] = tokens_since_fired[j] >= dead_threshold;
  return dead;
}

SaeLosses sae_losses(const Matrix& x, const SaeParams& p, const SaeTrainState& state) {
  return sae_losses(x, p, state.dead_mask());
}

SaeParams init_params(const Matrix& rows, const SaeConfig& cfg) {
  if (rows.rows() == 0 || rows.cols() == 0) throw DataError("cannot initialize an SAE from an empty dataset");
  if (cfg.d_sae < 1) throw ConfigError("sae.d_sae must be >= 1");
  const Eigen::Index d = rows.cols();
  auto rng = make_rng(cfg.seed, 0x696e6974);
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(d)));

  SaeParams p;
  p.k = cfg.k;
  p.k_aux = cfg.k_aux;
  p.alpha = cfg.alpha;
  p.w_enc.resize(cfg.d_sae, d);
  for (Eigen::Index r = 0; r < p.w_enc.rows(); ++r)
    for (Eigen::Index c = 0; c < d; ++c) p.w_enc(r, c) = normal(rng);
  p.w_dec = p.w_enc.transpose();
  for (Eigen::Index j = 0; j < p.w_dec.cols(); ++j) p.w_dec.col(j).normalize();
  p.b_pre = rows.colwise().mean();
  p.validate();
  return p;
}

double reconstruction_mse(const Matrix& rows, const SaeParams& p) {
  return sae_losses(rows, p, std::vector<bool>{}).mse;
}

SaeTrainState train_sae(const Matrix& rows, const SaeConfig& cfg) {
  if (rows.rows() == 0) throw DataError("SAE training set is empty");
  if (cfg.batch < 1) throw ConfigError("sae.batch must be >= 1");
  if (cfg.epochs < 0) throw ConfigError("sae.epochs must be >= 0");
  if (cfg.dead_threshold < 1) throw ConfigError("sae.dead_threshold must be >= 1");

  SaeTrainState st;
  st.params = init_params(rows, cfg);
  st.enc_moments = AdamMoments<Matrix>::zeros_like(st.params.w_enc);
  st.dec_moments = AdamMoments<Matrix>::zeros_like(st.params.w_dec);
  st.bias_moments = AdamMoments<RowVector>::zeros_like(st.params.b_pre);
  st.tokens_since_fired.assign(static_cast<std::size_t>(cfg.d_sae), 0);
  st.dead_threshold = cfg.dead_threshold;
  st.seed = cfg.seed;

  AdamConfig adam;
  adam.lr = cfg.lr;

  auto rng = make_rng(cfg.seed, 0x747261696e);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(rows.rows()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::vector<char> fired(static_cast<std::size_t>(cfg.d_sae));
  Matrix batch;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    EpochStats stats;
    stats.epoch = epoch;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch), order.size() - start);
      batch.resize(static_cast<Eigen::Index>(n), rows.cols());
      for (std::size_t i = 0; i < n; ++i) batch.row(static_cast<Eigen::Index>(i)) = rows.row(order[start + i]);

      LossEvaluation ev = loss_and_gradients(batch, st.params, st.dead_mask());
      if (!std::isfinite(ev.losses.total))
        throw NumericError(fmt::format("non-finite SAE loss at epoch {} step {} (mse={}, aux={})", epoch, st.step,
                                       ev.losses.mse, ev.losses.aux));

      // Only the component orthogonal to each unit decoder column is applied.
      auto& w_dec = st.params.w_dec;
      for (Eigen::Index j = 0; j < w_dec.cols(); ++j)
        ev.grads.w_dec.col(j) -= w_dec.col(j).dot(ev.grads.w_dec.col(j)) * w_dec.col(j);

      ++st.step;
      adam_update(st.params.w_enc, ev.grads.w_enc, st.enc_moments, adam, st.step);
      adam_update(st.params.w_dec, ev.grads.w_dec, st.dec_moments, adam, st.step);
      adam_update(st.params.b_pre, ev.grads.b_pre, st.bias_moments, adam, st.step);
      for (Eigen::Index j = 0; j < w_dec.cols(); ++j) w_dec.col(j).normalize();

      std::fill(fired.begin(), fired.end(), 0);
      for (const auto& act : ev.active.main)
        for (int j : act) fired[static_cast<std::size_t>(j)] = 1;
      for (std::size_t j = 0; j < fired.size(); ++j)
        st.tokens_since_fired[j] = fired[j] ? 0 : st.tokens_since_fired[j] + static_cast<long>(n);

      const double w = static_cast<double>(n);
      stats.mse += w * ev.losses.mse;
      stats.aux += w * ev.losses.aux;
      stats.total += w * ev.losses.total;
    }
    const double total_rows = static_cast<double>(order.size());
    stats.mse /= total_rows;
    stats.aux /= total_rows;
    stats.total /= total_rows;
    auto dead = st.dead_mask();
    stats.dead_fraction = static_cast<double>(std::count(dead.begin(), dead.end(), true)) / static_cast<double>(dead.size());
    st.trace.push_back(stats);
  }
  return st;
}

SaeTrainState train_sae(const EmbeddingStore& store, const SaeConfig& cfg) {
  if (store.empty()) throw DataError("SAE training store is empty");
  return train_sae(store.stacked_rows(), cfg);
}

GradCheckResult grad_check(const SaeParams& p, const Matrix& x, double eps, const std::vector<bool>& dead) {
  GradCheckResult result;
  const LossEvaluation base = loss_and_gradients(x, p, dead);

  SaeParams probe = p;
  auto check = [&](double& slot, double analytic) {
    const double saved = slot;
    slot = saved + eps;
    const LossEvaluation plus = loss_and_gradients(x, probe, dead, false);
    slot = saved - eps;
    const LossEvaluation minus = loss_and_gradients(x, probe, dead, false);
    slot = saved;
    if (plus.active != base.active || minus.active != base.active) {
      ++result.boundary_crossings;
      return;
    }
    const double numeric = (plus.losses.total - minus.losses.total) / (2.0 * eps);
    const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
    result.max_rel_err = std::max(result.max_rel_err, std::abs(analytic - numeric) / scale);
    ++result.checked;
  };

  for (Eigen::Index r = 0; r < p.w_enc.rows(); ++r)
    for (Eigen::Index c = 0; c < p.w_enc.cols(); ++c) check(probe.w_enc(r, c), base.grads.w_enc(r, c));
  for (Eigen::Index r = 0; r < p.w_dec.rows(); ++r)
    for (Eigen::Index c = 0; c < p.w_dec.cols(); ++c) check(probe.w_dec(r, c), base.grads.w_dec(r, c));
  for (Eigen::Index c = 0; c < p.b_pre.size(); ++c) check(probe.b_pre(c), base.grads.b_pre(c));
  return result;
}

Checkpoint to_checkpoint(const SaeParams& p, const SaeConfig& cfg, long step) {
  Checkpoint ckpt;
  ckpt.header = {
      {"kind", "sae"},
      {"d_sae", p.d_sae()},
      {"d_model", p.d_model()},
      {"k", p.k},
      {"k_aux", p.k_aux},
      {"alpha", p.alpha},
      {"step", step},
      {"seed", cfg.seed},
      {"config",
       {{"d_sae", cfg.d_sae},
        {"k", cfg.k},
        {"alpha", cfg.alpha},
        {"k_aux", cfg.k_aux},
        {"lr", cfg.lr},
        {"epochs", cfg.epochs},
        {"batch", cfg.batch},
        {"seed", cfg.seed},
        {"dead_threshold", cfg.dead_threshold}}},
  };
  ckpt.add_tensor("w_enc", p.w_enc);
  ckpt.add_tensor("w_dec", p.w_dec);
  ckpt.add_tensor("b_pre", Matrix(p.b_pre));
  return ckpt;
}

SaeParams params_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.header.value("kind", "") != "sae") throw DataError("checkpoint is not an SAE checkpoint");
  SaeParams p;
  try {
    p.k = ckpt.header.at("k").get<int>();
    p.k_aux = ckpt.header.at("k_aux").get<int>();
    p.alpha = ckpt.header.at("alpha").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(fmt::format("SAE checkpoint header: {}", e.what()));
  }
  p.w_enc = ckpt.tensor("w_enc");
  p.w_dec = ckpt.tensor("w_dec");
  p.b_pre = ckpt.tensor("b_pre").row(0);
  p.validate();
  return p;
}

}  // namespace latentforge::sae
