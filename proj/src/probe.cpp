#include "latentforge/probe.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace latentforge::probe {

Vector mean_pool(const Matrix& m) {
  if (m.rows() == 0 || m.cols() == 0) throw DataError("mean_pool on an empty matrix");
  return m.colwise().mean().transpose();
}

double ProbeModel::predict(const Vector& pooled) const {
  if (pooled.size() != w.size())
    throw DataError(fmt::format("probe expects {} features, got {}", w.size(), pooled.size()));
  return w.dot(pooled) + intercept;
}

Vector ProbeModel::predict(const Matrix& features) const {
  if (features.cols() != w.size())
    throw DataError(fmt::format("probe expects {} features, got {}", w.size(), features.cols()));
  return (features * w).array() + intercept;
}

ProbeModel ridge_fit(const Matrix& X, const Vector& y, double lambda, RidgeOptions options) {
  const Eigen::Index n = X.rows();
  const Eigen::Index d = X.cols();
  if (n < 1) throw DataError("ridge_fit needs at least one sample");
  if (y.size() != n) throw DataError("ridge_fit: X and y disagree on sample count");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("ridge lambda must be finite and >= 0");
  if (!X.allFinite() || !y.allFinite()) throw NumericError("ridge_fit: non-finite inputs");

  const RowVector x_mean = X.colwise().mean();
  const double y_mean = y.mean();
  Matrix xc = X.rowwise() - x_mean;
  const Vector yc = y.array() - y_mean;

  RowVector scale = RowVector::Ones(d);
  if (options.standardize) {
    scale = (xc.colwise().squaredNorm() / static_cast<double>(n)).cwiseSqrt();
    for (Eigen::Index j = 0; j < d; ++j)
      if (scale(j) < 1e-12) scale(j) = 1.0;
    xc = xc.array().rowwise() / scale.array();
  }

  const bool dual = options.solver == RidgeSolver::dual || (options.solver == RidgeSolver::automatic && n < d);
  Vector w;
  if (dual) {
    Matrix gram = xc * xc.transpose();
    gram.diagonal().array() += lambda;
    Vector coef = lambda > 0.0 ? Vector(gram.ldlt().solve(yc)) : Vector(gram.completeOrthogonalDecomposition().solve(yc));
    w = xc.transpose() * coef;
  } else {
    Matrix normal = xc.transpose() * xc;
    normal.diagonal().array() += lambda;
    const Vector rhs = xc.transpose() * yc;
    w = lambda > 0.0 ? Vector(normal.ldlt().solve(rhs)) : Vector(normal.completeOrthogonalDecomposition().solve(rhs));
  }
  if (options.standardize) w = w.array() / scale.transpose().array();
  if (!w.allFinite()) throw NumericError("ridge_fit produced non-finite weights");

  ProbeModel model;
  model.w = std::move(w);
  model.intercept = y_mean - x_mean.dot(model.w);
  model.lambda = lambda;
  return model;
}

Vector average_ranks(const Vector& values) {
  const Eigen::Index n = values.size();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return values(a) < values(b); });
  Vector ranks(n);
  Eigen::Index i = 0;
  while (i < n) {
    Eigen::Index j = i;
    while (j + 1 < n && values(order[static_cast<std::size_t>(j + 1)]) == values(order[static_cast<std::size_t>(i)])) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (Eigen::Index t = i; t <= j; ++t) ranks(order[static_cast<std::size_t>(t)]) = avg;
    i = j + 1;
  }
  return ranks;
}

SpearmanResult spearman(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw DataError(fmt::format("spearman: length mismatch ({} vs {})", a.size(), b.size()));
  if (a.size() < 2) throw DataError("spearman needs at least two observations");
  const Vector ra = average_ranks(a);
  const Vector rb = average_ranks(b);
  const Vector ca = ra.array() - ra.mean();
  const Vector cb = rb.array() - rb.mean();
  const double na = ca.squaredNorm();
  const double nb = cb.squaredNorm();
  if (na == 0.0 || nb == 0.0) return {0.0, true};
  const double rho = ca.dot(cb) / std::sqrt(na * nb);
  return {std::clamp(rho, -1.0, 1.0), false};
}

std::vector<double> default_lambda_grid() { return {1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3}; }

ProbeFit fit_probe_with_validation(const Matrix& train_x, const Vector& train_y, const Matrix& val_x,
                                   const Vector& val_y, const std::vector<double>& grid, FeatureKind kind,
                                   RidgeOptions options) {
  if (grid.empty()) throw ConfigError("lambda grid is empty");
  if (train_x.rows() == 0 || val_x.rows() == 0) throw DataError("probe validation needs nonempty train and val sets");

  ProbeFit fit;
  int best = -1;
  double best_rho = 0.0;
  double best_lambda = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    ProbeModel m = ridge_fit(train_x, train_y, grid[i], options);
    double rho = 0.0;
    bool degenerate = true;
    if (val_x.rows() >= 2) {
      auto s = spearman(m.predict(val_x), val_y);
      rho = s.rho;
      degenerate = s.degenerate;
    }
    fit.val_spearman.push_back(degenerate ? std::nan("") : rho);
    if (degenerate) continue;
    if (best < 0 || rho > best_rho || (rho == best_rho && grid[i] > best_lambda)) {
      best = static_cast<int>(i);
      best_rho = rho;
      best_lambda = grid[i];
    }
  }
  if (best < 0) {
    fit.degenerate = true;
    best_lambda = *std::max_element(grid.begin(), grid.end());
  }

  Matrix all_x(train_x.rows() + val_x.rows(), train_x.cols());
  all_x << train_x, val_x;
  Vector all_y(train_y.size() + val_y.size());
  all_y << train_y, val_y;
  fit.model = ridge_fit(all_x, all_y, best_lambda, options);
  fit.model.kind = kind;
  return fit;
}

Vector pooled_features(const FeatureSource& source, const Matrix& embedding, const Matrix* logits) {
  switch (source.kind) {
    case FeatureKind::layer_embedding:
      return mean_pool(embedding);
    case FeatureKind::sae_latents:
      if (!source.sae) throw ConfigError("sae_latents features need an SAE");
      return mean_pool(sae::encode(embedding, *source.sae));
    case FeatureKind::logits:
      if (logits) return mean_pool(*logits);
      if (!source.model) throw ConfigError("logits features need stored logits or a sequence model");
      return mean_pool(source.model->logits_from_embedding(embedding));
  }
  throw ConfigError("unknown feature kind");
}

Vector sequence_features(const FeatureSource& source, std::string_view sequence) {
  if (!source.model) throw ConfigError("sequence_features needs a sequence model");
  return pooled_features(source, source.model->embed(sequence));
}

Matrix feature_table(const EmbeddingStore& store, const std::vector<std::string>& ids, const FeatureSource& source) {
  Matrix table;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto& entry = store.at(ids[i]);
    const Matrix emb = to_double(entry.embedding);
    Matrix lg;
    if (entry.logits) lg = to_double(*entry.logits);
    Vector f = pooled_features(source, emb, entry.logits ? &lg : nullptr);
    if (i == 0) table.resize(static_cast<Eigen::Index>(ids.size()), f.size());
    table.row(static_cast<Eigen::Index>(i)) = f.transpose();
  }
  return table;
}

Checkpoint to_checkpoint(const ProbeModel& model) {
  Checkpoint ckpt;
  ckpt.header = {{"kind", "probe"},
                 {"feature_kind", to_string(model.kind)},
                 {"lambda", model.lambda},
                 {"intercept", model.intercept}};
  ckpt.add_tensor("w", Matrix(model.w.transpose()));
  return ckpt;
}

ProbeModel probe_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.header.value("kind", "") != "probe") throw DataError("checkpoint is not a probe checkpoint");
  ProbeModel m;
  m.kind = feature_kind_from_string(ckpt.header.at("feature_kind").get<std::string>());
  m.lambda = ckpt.header.at("lambda").get<double>();
  m.intercept = ckpt.header.at("intercept").get<double>();
  m.w = ckpt.tensor("w").row(0).transpose();
  return m;
}

}  // namespace latentforge::probe
