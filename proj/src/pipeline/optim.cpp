#include "lumos/pipeline/optim.hpp"

#include <cmath>

namespace lumos::pipeline {

void AdamW::step(const ParamList& params) {
  ++t;
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(t));
  for (const auto& [name, p] : params) {
    if (!p->trainable || !p->tensor.has_grad()) continue;
    Tensor& w = p->tensor;
    dispatch(w.dtype(), [&]<class T>() {
      auto vals = w.mutable_data<T>();
      const auto& g = w.node().template grad<T>();
      auto& mm = m[name];
      auto& vv = v[name];
      if (mm.size() != vals.size()) {
        mm.assign(vals.size(), 0.0);
        vv.assign(vals.size(), 0.0);
      }
      for (std::size_t i = 0; i < vals.size(); ++i) {
        const double gi = g[i];
        mm[i] = config.beta1 * mm[i] + (1.0 - config.beta1) * gi;
        vv[i] = config.beta2 * vv[i] + (1.0 - config.beta2) * gi * gi;
        double x = vals[i];
        x -= config.lr * config.weight_decay * x;
        x -= config.lr * (mm[i] / bc1) / (std::sqrt(vv[i] / bc2) + config.eps);
        vals[i] = static_cast<T>(x);
      }
    });
  }
  zero_grads(params);
}

double grad_norm(const ParamList& params) {
  double sq = 0.0;
  for (const auto& [name, p] : params) {
    if (!p->tensor.has_grad()) continue;
    dispatch(p->tensor.dtype(), [&]<class T>() {
      for (T g : p->tensor.node().template grad<T>()) sq += static_cast<double>(g) * g;
    });
  }
  return std::sqrt(sq);
}

double clip_grad_norm(const ParamList& params, double max_norm) {
  const double norm = grad_norm(params);
  if (max_norm <= 0.0 || norm <= max_norm) return norm;
  const double s = max_norm / norm;
  for (const auto& [name, p] : params) {
    if (!p->tensor.has_grad()) continue;
    dispatch(p->tensor.dtype(), [&]<class T>() {
      for (T& g : p->tensor.node().template grad<T>()) g = static_cast<T>(g * s);
    });
  }
  return norm;
}

void zero_grads(const ParamList& params) {
  for (const auto& [name, p] : params) p->tensor.zero_grad();
}

}  // namespace lumos::pipeline
