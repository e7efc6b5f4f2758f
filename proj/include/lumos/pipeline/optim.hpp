#pragma once

#include <map>
#include <string>
#include <vector>

#include "lumos/numcore/nn.hpp"

namespace lumos::pipeline {

struct AdamWConfig {
  double lr = 5e-5;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  double weight_decay = 0.01;
};

/// Adam with decoupled weight decay. Moments are keyed by parameter name and
/// kept in float64.
class AdamW {
 public:
  AdamW() = default;
  explicit AdamW(AdamWConfig config) : config(config) {}

  /// Updates every trainable parameter that holds a gradient, then clears all
  /// gradients. Parameters without a gradient keep their moments untouched.
  void step(const ParamList& params);

  AdamWConfig config;
  std::size_t t = 0;
  std::map<std::string, std::vector<double>> m, v;
};

/// Global L2 norm over the gradients present in params.
double grad_norm(const ParamList& params);
/// Scales gradients so their global norm is at most max_norm. Returns the
/// norm before scaling.
double clip_grad_norm(const ParamList& params, double max_norm);
void zero_grads(const ParamList& params);

}  // namespace lumos::pipeline
