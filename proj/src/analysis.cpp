#include "latentforge/analysis.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace latentforge::analysis {

double top_fraction_variance(const Vector& w, double fraction) {
  if (w.size() == 0) throw DataError("top_fraction_variance of an empty vector");
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("fraction must lie in (0, 1]");
  const auto d = static_cast<std::size_t>(w.size());
  const auto k = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(d) - 1e-9)), 1, d);
  // Exact check: the rounded mean of equal values can leave spurious deviations.
  if (w.maxCoeff() == w.minCoeff()) return 0.0;
  const Vector dev2 = (w.array() - w.mean()).square();
  const double total = dev2.sum();
  std::vector<Eigen::Index> order(d);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return std::abs(w(a)) > std::abs(w(b)); });
  double top = 0.0;
  for (std::size_t i = 0; i < k; ++i) top += dev2(order[i]);
  return top / total;
}

std::string Histogram::csv() const {
  std::string out = "bin_lower,bin_upper,count\n";
  const double width = counts.empty() ? 0.0 : (upper - lower) / static_cast<double>(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i)
    out += fmt::format("{},{},{}\n", lower + width * static_cast<double>(i), lower + width * static_cast<double>(i + 1),
                       counts[i]);
  out += fmt::format("clipped,,{}\n", clipped);
  return out;
}

Histogram weight_histogram(const Vector& w, int bins, double clip) {
  if (bins < 1) throw ConfigError("histogram needs at least one bin");
  if (!(clip > 0.0)) throw ConfigError("histogram clip must be > 0");
  Histogram h;
  h.lower = -clip;
  h.upper = clip;
  h.counts.assign(static_cast<std::size_t>(bins), 0);
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    const double v = w(i);
    if (std::abs(v) > clip) {
      ++h.clipped;
      continue;
    }
    auto bin = static_cast<int>(std::floor((v + clip) / (2.0 * clip) * bins));
    ++h.counts[static_cast<std::size_t>(std::clamp(bin, 0, bins - 1))];
  }
  return h;
}

std::vector<Attribution> activation_diff(const sae::SaeParams& sae, const SequenceModel& model,
                                         std::string_view wildtype, std::string_view variant,
                                         const probe::ProbeModel& probe, int n_latents) {
  if (wildtype.size() != variant.size()) throw DataError("activation_diff: sequences differ in length");
  if (probe.w.size() != sae.d_sae()) throw ConfigError("activation_diff: probe and SAE widths differ");
  if (n_latents < 0) throw ConfigError("n_latents must be >= 0");
  const Matrix z_wt = sae::encode(model.embed(wildtype), sae);
  const Matrix z_var = sae::encode(model.embed(variant), sae);

  std::vector<int> order(static_cast<std::size_t>(sae.d_sae()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return probe.w(a) > probe.w(b); });
  auto active = [&](int j) { return (z_wt.col(j).array() != 0.0).any() || (z_var.col(j).array() != 0.0).any(); };

  std::vector<int> chosen;
  int taken = 0;
  for (int j : order) {
    if (taken == n_latents || probe.w(j) <= 0.0) break;
    if (active(j)) chosen.push_back(j), ++taken;
  }
  taken = 0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if (taken == n_latents || probe.w(*it) >= 0.0) break;
    if (active(*it)) chosen.push_back(*it), ++taken;
  }

  std::vector<Attribution> rows;
  for (int j : chosen)
    for (Eigen::Index p = 0; p < z_wt.rows(); ++p)
      rows.push_back({j, static_cast<int>(p), std::abs(z_var(p, j) - z_wt(p, j)), probe.w(j)});
  std::sort(rows.begin(), rows.end(), [](const Attribution& a, const Attribution& b) {
    if (a.abs_diff != b.abs_diff) return a.abs_diff > b.abs_diff;
    if (a.latent != b.latent) return a.latent < b.latent;
    return a.position < b.position;
  });
  return rows;
}

std::string attribution_csv(const std::vector<Attribution>& rows) {
  std::string out = "latent,position,abs_diff,probe_weight\n";
  for (const auto& r : rows) out += fmt::format("{},{},{},{}\n", r.latent, r.position + 1, r.abs_diff, r.probe_weight);
  return out;
}

}  // namespace latentforge::analysis
