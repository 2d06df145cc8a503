#pragma once

#include <Eigen/Core>

#include <cmath>

namespace latentforge {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled (AdamW); 0 gives plain Adam
};

// First/second moment buffers shaped like one parameter tensor.
template <typename Tensor>
struct AdamMoments {
  Tensor m;
  Tensor v;

  static AdamMoments zeros_like(const Tensor& param) {
    return {Tensor::Zero(param.rows(), param.cols()), Tensor::Zero(param.rows(), param.cols())};
  }
};

/// One bias-corrected Adam step at 1-based iteration `step`.
template <typename Tensor>
void adam_update(Tensor& param, const Tensor& grad, AdamMoments<Tensor>& mom, const AdamConfig& cfg, long step) {
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  if (cfg.weight_decay != 0.0) param *= (1.0 - cfg.lr * cfg.weight_decay);
  mom.m = cfg.beta1 * mom.m + (1.0 - cfg.beta1) * grad;
  mom.v = cfg.beta2 * mom.v + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
  param.array() -= cfg.lr * (mom.m.array() / c1) / ((mom.v.array() / c2).sqrt() + cfg.eps);
}

}  // namespace latentforge
