#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lumos/instruct/describer.hpp"
#include "lumos/pipeline/bundle.hpp"

namespace lumos::pipeline {

/// Cross-attention weights of one U-Net attention layer for one image,
/// captured at the final denoising step.
struct AttentionMap {
  std::size_t level = 0;
  std::size_t layer = 0;  // position among the U-Net's attention layers
  std::size_t height = 0, width = 0;
  std::size_t tokens = 0;      // p_s tokens
  std::vector<float> weights;  // [height * width, tokens], rows sum to 1
};

/// Noise stream of image i in a batch sampled with `seed`. Image 0 uses the
/// stream of a single-image call with the same seed.
std::uint64_t image_seed(std::uint64_t seed, std::size_t index);

/// Batched sampling: z_T ~ N(0, I), spaced reverse steps
/// with eps_theta(z_t, t, z_l, p_s), x = D(z_0). texts[i] conditions ys[i].
/// Attention of image 0 is appended to `attention` when given.
std::vector<Image> enhance_batch(const ModelBundle& bundle, const std::vector<const Image*>& ys,
                                 const std::vector<std::string>& texts, std::uint64_t seed,
                                 std::size_t steps, std::vector<AttentionMap>* attention = nullptr);
/// As above with an explicit noise seed per image.
std::vector<Image> enhance_batch(const ModelBundle& bundle, const std::vector<const Image*>& ys,
                                 const std::vector<std::string>& texts,
                                 const std::vector<std::uint64_t>& seeds, std::size_t steps,
                                 std::vector<AttentionMap>* attention = nullptr);

Image enhance(const ModelBundle& bundle, const Image& y, const std::string& text, std::uint64_t seed,
              std::size_t steps, std::vector<AttentionMap>* attention = nullptr);

struct PassRecord {
  instruct::Instruction instruction;
  std::uint64_t seed = 0;
  Image image;
  std::vector<AttentionMap> attention;
  double seconds = 0.0;
  std::optional<std::string> warning;  // describer failure, previous instruction reused
};

struct EnhancementJob {
  Image input;
  std::size_t k = 1;
  std::size_t steps = 50;
  std::vector<PassRecord> passes;
};

/// Iterative refinement: pass 1 uses `initial`; pass j >= 2 asks `describer` for an
/// instruction from pass j-1's output. Every pass samples with the same seed
/// and conditions on the original y. Describer errors are recorded as
/// warnings and the previous instruction is reused.
EnhancementJob iterative_enhance(const ModelBundle& bundle, const Image& y, const instruct::Instruction& initial,
                                 std::size_t k, std::uint64_t seed, std::size_t steps,
                                 instruct::Describer* describer, bool capture_attention = false);

/// Describer for passes after the first, as configured.
std::unique_ptr<instruct::Describer> make_describer(const InstructConfig& config);

/// Job metadata; image_names[j] names pass j's output file when given.
nlohmann::json job_to_json(const EnhancementJob& job, const std::vector<std::string>& image_names = {});
nlohmann::json instruction_to_json(const instruct::Instruction& ins);

}  // namespace lumos::pipeline
