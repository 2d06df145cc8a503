#pragma once

#include "latentforge/landscape.hpp"
#include "latentforge/probe.hpp"
#include "latentforge/sae.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace latentforge::analysis {

/// Share of the weights' total squared deviation from their mean carried by
/// the ceil(fraction * d) entries of largest |w| (ties to the lower index).
/// 0 when the total is 0.
double top_fraction_variance(const Vector& w, double fraction);

struct Histogram {
  double lower = 0.0;
  double upper = 0.0;
  std::vector<int> counts;  // equal-width bins over [lower, upper]
  int clipped = 0;          // weights with |w| > clip, left out of the bins

  std::string csv() const;  // bin_lower,bin_upper,count then a clipped row
};

Histogram weight_histogram(const Vector& w, int bins = 30, double clip = 3.0);

struct Attribution {
  int latent = 0;
  int position = 0;
  double abs_diff = 0.0;
  double probe_weight = 0.0;
};

/// Per-position |z_variant - z_wildtype| for the `n_latents` most positive
/// and `n_latents` most negative probe-weight latents that fire on either
/// sequence. Sorted by abs_diff descending, then latent, then position.
std::vector<Attribution> activation_diff(const sae::SaeParams& sae, const SequenceModel& model,
                                         std::string_view wildtype, std::string_view variant,
                                         const probe::ProbeModel& probe, int n_latents = 5);

std::string attribution_csv(const std::vector<Attribution>& rows);

}  // namespace latentforge::analysis
