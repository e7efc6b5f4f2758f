#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "lumos/codec/codec.hpp"
#include "lumos/denoiser/unet.hpp"
#include "lumos/instruct/instruction.hpp"
#include "lumos/ipfm/ipfm.hpp"

namespace lumos::pipeline {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ScheduleConfig {
  std::string kind = "linear";
  std::size_t T = 1000;
  double beta_start = 1e-4;
  double beta_end = 0.02;
};

/// U-Net shape. Latent channels follow codec.c and the context width follows
/// ipfm.d, so neither is configured here.
struct UNetSection {
  std::size_t base = 64;
  std::vector<std::size_t> mults{1, 2, 2};
  std::vector<std::size_t> attention_levels{1, 2};
  std::size_t groups = 8;
};

struct InstructConfig {
  /// Describer for passes after the first: heuristic | external.
  std::string provider = "heuristic";
  instruct::FacetMask facet_mask;
  std::string endpoint;  // external describer URL
  std::string auth_header;
  std::size_t timeout_ms = 30000;
  std::size_t text_layers = 2;
};

struct TrainConfig {
  std::size_t steps = 3000;
  std::size_t batch = 8;
  double lr = 5e-5;
  double weight_decay = 0.01;
  double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  double grad_clip = 1.0;  // global norm; 0 disables
  bool freeze_backbone = false;
  std::uint64_t seed = 0;
  std::size_t log_every = 50;
  std::size_t val_every = 500;
  std::size_t ckpt_every = 1000;
  std::size_t codec_steps = 600;
  double codec_lr = 2e-3;
};

struct SampleConfig {
  std::size_t S_steps = 50;
  std::size_t k = 2;
};

struct DataConfig {
  std::size_t size = 64;
  std::size_t n = 512;
  std::size_t n_val = 64;
  std::uint64_t seed = 1;
};

struct Config {
  ScheduleConfig schedule;
  UNetSection unet;
  ipfm::IpfmConfig ipfm{ipfm::Mode::adaln, 4, 8, 128, 2};
  codec::CodecConfig codec;
  InstructConfig instruct;
  TrainConfig train;
  SampleConfig sample;
  DataConfig data;

  denoiser::UNetConfig unet_config() const;
  /// Throws ConfigError on inconsistent values.
  void validate() const;
};

/// Missing keys take their defaults; unknown keys and wrongly typed values
/// throw ConfigError naming the offending path.
Config config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const Config& c);
Config load_config(const std::filesystem::path& path);

/// FNV-1a 64 over the canonical JSON dump, as 16 hex digits.
std::string config_hash(const Config& c);

std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t h = 0xcbf29ce484222325ull);
std::string hex64(std::uint64_t v);

}  // namespace lumos::pipeline
