#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "lumos/numcore/rng.hpp"
#include "lumos/pipeline/bundle.hpp"
#include "lumos/pipeline/optim.hpp"

namespace lumos::pipeline {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Everything needed to resume training bitwise.
struct TrainingState {
  std::size_t step = 0;
  AdamW optimizer;
  Rng rng;
};

/// File layout: one line of UTF-8 JSON (the manifest), '\n', then the tensor
/// payloads as little-endian IEEE-754 values. Manifest entries
/// {name, dtype, shape, byte_offset, byte_len, trainable} address the payload
/// region, offsets counted from its first byte. Optimizer moments are stored as
/// float64 tensors named optim.m.<param> and optim.v.<param>.
///
/// checkpoint_hash = FNV-1a 64 of the manifest serialised without that field,
/// followed by the payload bytes.
std::string serialize_checkpoint(ModelBundle& bundle, const TrainingState* state);
void save_checkpoint(const std::filesystem::path& path, ModelBundle& bundle,
                     const TrainingState* state = nullptr);

struct LoadedCheckpoint {
  std::unique_ptr<ModelBundle> bundle;
  std::optional<TrainingState> state;
  nlohmann::json manifest;
  std::string hash;
};

/// Verifies the hash and every tensor's name, dtype and shape.
LoadedCheckpoint parse_checkpoint(const std::string& bytes);
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

/// Hash of a parameter's dtype, shape and value bytes.
std::string tensor_hash(const Tensor& t);

}  // namespace lumos::pipeline
