#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "lumos/numcore/tensor.hpp"

namespace lumos {

/// Seeded generator with platform-independent derived distributions (the
/// standard distributions are implementation-defined, this is not).
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n);
  /// Standard normal (Box-Muller, no cached second value).
  double normal();

  Tensor normal_tensor(const Shape& shape, DType dtype = DType::f32, double stddev = 1.0);

  std::string state() const;
  void restore(const std::string& state);

 private:
  std::mt19937_64 engine_;
};

}  // namespace lumos
