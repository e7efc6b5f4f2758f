#pragma once

#include <string>
#include <utility>
#include <vector>

#include "lumos/numcore/ops.hpp"
#include "lumos/numcore/rng.hpp"

namespace lumos {

/// A named leaf tensor. Frozen parameters never accumulate gradients.
struct Parameter {
  Tensor tensor;
  bool trainable = true;

  Parameter() = default;
  explicit Parameter(Tensor t, bool train = true);

  void set_trainable(bool on);
  /// Replaces the value with a converted copy, preserving the trainable flag.
  void convert(DType dtype);
};

using ParamRef = std::pair<std::string, Parameter*>;
using ParamList = std::vector<ParamRef>;

inline std::string join_name(const std::string& prefix, const std::string& name) {
  return prefix.empty() ? name : prefix + "." + name;
}

void set_trainable(const ParamList& params, bool on);
void convert_params(const ParamList& params, DType dtype);
std::size_t count_elements(const ParamList& params);

enum class Init { normal, zero };

class Linear {
 public:
  Linear() = default;
  Linear(std::size_t in, std::size_t out, Rng& rng, Init init = Init::normal, bool bias = true);
  Tensor forward(const Tensor& x) const;
  void collect(const std::string& prefix, ParamList& out);

  Parameter weight;  // [in, out]
  Parameter bias;    // [out] or undefined
};

class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride,
         std::size_t padding, Rng& rng, Init init = Init::normal);
  Tensor forward(const Tensor& x) const;
  void collect(const std::string& prefix, ParamList& out);

  Parameter weight;  // [out, in, k, k]
  Parameter bias;    // [out]
  std::size_t stride = 1, padding = 0;
};

class GroupNorm {
 public:
  GroupNorm() = default;
  GroupNorm(std::size_t groups, std::size_t channels);
  Tensor forward(const Tensor& x) const;
  void collect(const std::string& prefix, ParamList& out);

  Parameter gain, bias;
  std::size_t groups = 1;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  explicit LayerNorm(std::size_t dim);
  Tensor forward(const Tensor& x) const;
  void collect(const std::string& prefix, ParamList& out);

  Parameter gain, bias;
};

/// Single-head attention with separate query and key/value sources.
class Attention {
 public:
  Attention() = default;
  /// `zero_out` zero-initialises the output projection.
  Attention(std::size_t query_dim, std::size_t context_dim, std::size_t inner_dim, Rng& rng,
            bool zero_out);
  AttentionOutput forward(const Tensor& x, const Tensor& context) const;
  void collect(const std::string& prefix, ParamList& out);

  Linear to_q, to_k, to_v, to_out;
};

/// Linear -> GELU -> Linear.
class FeedForward {
 public:
  FeedForward() = default;
  FeedForward(std::size_t dim, std::size_t hidden, Rng& rng, bool zero_out);
  Tensor forward(const Tensor& x) const;
  void collect(const std::string& prefix, ParamList& out);

  Linear fc1, fc2;
};

}  // namespace lumos
