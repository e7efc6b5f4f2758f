#pragma once

#include <vector>

#include "lumos/numcore/nn.hpp"

namespace lumos::testing {

/// Overwrites every parameter with N(0, stddev^2) draws so zero-initialised
/// projections take part in gradient checks.
inline void randomize(const ParamList& params, Rng& rng, double stddev = 0.5) {
  for (const auto& [name, p] : params) {
    dispatch(p->tensor.dtype(), [&]<class T>() {
      for (T& v : p->tensor.mutable_data<T>()) v = static_cast<T>(stddev * rng.normal());
    });
  }
}

inline std::vector<Tensor> tensors_of(const ParamList& params) {
  std::vector<Tensor> out;
  for (const auto& [name, p] : params) out.push_back(p->tensor);
  return out;
}

}  // namespace lumos::testing
