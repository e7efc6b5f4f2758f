#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include <json.hpp>

#include "lumos/data/synth.hpp"
#include "lumos/pipeline/checkpoint.hpp"

namespace lumos::pipeline {

/// Training-time instruction: the template fill of the ground-truth scene
/// under the facet mask, or the heuristic description of x0 when the sample
/// has no scene.
instruct::Instruction training_instruction(const data::PairedSample& s, instruct::FacetMask mask);

/// A sample prepared for diffusion training: normalised latent, low-light
/// image and instruction token ids.
struct TrainItem {
  std::string id;
  Tensor z0;  // [1, c, h, w]
  Tensor y;   // [1, 3, H, W]
  std::vector<std::int32_t> ids;
};

/// Encodes x0 with the (frozen) codec and tokenizes each instruction.
std::vector<TrainItem> prepare_items(const ModelBundle& bundle, const std::vector<data::PairedSample>& samples);

struct CodecReport {
  std::size_t steps = 0;
  double final_loss = 0.0;
  double val_psnr = 0.0;
};

/// Deterministic autoencoder training with L2 reconstruction on x0 and y,
/// batch train.batch, AdamW at train.codec_lr. No-op for the identity codec.
CodecReport train_codec(ModelBundle& bundle, const std::vector<data::PairedSample>& train,
                        const std::vector<data::PairedSample>& val,
                        const std::function<void(const nlohmann::json&)>& log = {});

/// Mean PSNR of decode(encode(x0)) against x0.
double codec_roundtrip_psnr(const ModelBundle& bundle, const std::vector<data::PairedSample>& samples);

/// Sets shift/scale so the training latents have zero mean and unit std, and
/// records their normalised min/max.
void fit_latent_stats(ModelBundle& bundle, const std::vector<data::PairedSample>& train);

TrainingState initial_state(const ModelBundle& bundle);

/// One training step on a batch drawn from items with state.rng. Throws
/// NonFiniteError (leaving parameters untouched) when the loss is not finite.
double train_step(ModelBundle& bundle, const std::vector<TrainItem>& items, TrainingState& state);

/// Loss on a single given batch with fixed timesteps and noise. Optionally
/// backpropagates.
Tensor diffusion_loss(const ModelBundle& bundle, const std::vector<const TrainItem*>& batch,
                      const std::vector<std::size_t>& ts, const Tensor& eps);

/// Per-element epsilon MSE over items with timesteps and noise drawn from
/// Rng(seed), so repeated calls compare like with like.
double validation_mse(const ModelBundle& bundle, const std::vector<TrainItem>& items, std::uint64_t seed = 1234,
                      std::size_t batch = 16);

struct TrainLoopOptions {
  std::optional<std::filesystem::path> out_dir;  // checkpoints and train_log.jsonl
  std::function<void(const nlohmann::json&)> on_log;
};

/// Runs train_step until state.step == config.train.steps, logging
/// {step, loss, lr, val_mse?} records every log_every/val_every steps and
/// checkpointing every ckpt_every steps plus at the end (out_dir/final.ckpt).
void train_loop(ModelBundle& bundle, const std::vector<TrainItem>& train, const std::vector<TrainItem>& val,
                TrainingState& state, const TrainLoopOptions& options = {});

/// Copies the trained codec and its latent statistics between bundles whose
/// codec configs match.
void copy_codec(const ModelBundle& from, ModelBundle& to);

struct TrainRunOptions {
  std::optional<std::filesystem::path> out_dir;
  /// Reuse this bundle's codec instead of training one.
  const ModelBundle* codec_source = nullptr;
  std::function<void(const nlohmann::json&)> on_log;
};

struct TrainRun {
  std::unique_ptr<ModelBundle> bundle;
  TrainingState state;
  CodecReport codec;
  double init_val_mse = 0.0;
  double final_val_mse = 0.0;
  double codec_seconds = 0.0;  // codec stage (or copy) and latent statistics
  double seconds = 0.0;        // whole run
};

/// Fresh model from `config`: codec stage (or copy), latent statistics, then
/// the diffusion loop. Codec records go to out_dir/codec_log.jsonl.
TrainRun train_model(const Config& config, const std::vector<data::PairedSample>& train,
                     const std::vector<data::PairedSample>& val, const TrainRunOptions& options = {});

}  // namespace lumos::pipeline
