#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <bit>
#include <cstring>
#include <map>

#include "lumos/data/synth.hpp"
#include "lumos/pipeline/checkpoint.hpp"
#include "lumos/pipeline/eval.hpp"
#include "lumos/pipeline/sample.hpp"
#include "lumos/pipeline/train.hpp"

namespace lumos::pipeline {
namespace {

namespace fs = std::filesystem;

Config tiny_config() {
  Config c;
  c.data.size = 16;
  c.codec.width = 8;
  c.unet.base = 8;
  c.unet.mults = {1, 2};
  c.unet.attention_levels = {1};
  c.unet.groups = 4;
  c.ipfm = {ipfm::Mode::adaln, 2, 4, 32, 2};
  c.instruct.text_layers = 1;
  c.train.batch = 4;
  c.train.codec_steps = 20;
  c.train.log_every = 5;
  c.train.val_every = 10;
  c.train.ckpt_every = 10;
  c.sample.S_steps = 4;
  return c;
}

std::map<std::string, std::string> hashes(const ParamList& params) {
  std::map<std::string, std::string> out;
  for (const auto& [name, p] : params) out[name] = tensor_hash(p->tensor);
  return out;
}

std::vector<std::string> names(const ParamList& params, bool trainable_only) {
  std::vector<std::string> out;
  for (const auto& [name, p] : params) {
    if (!trainable_only || p->trainable) out.push_back(name);
  }
  std::sort(out.begin(), out.end());
  return out;
}

struct Fixture {
  explicit Fixture(Config c = tiny_config(), std::size_t n = 16) : bundle(c) {
    samples = data::generate_dataset(n, 7, c.data.size);
    fit_latent_stats(bundle, samples);
    bundle.apply_diffusion_policy();
    items = prepare_items(bundle, samples);
  }
  ModelBundle bundle;
  std::vector<data::PairedSample> samples;
  std::vector<TrainItem> items;
};

class TempDir : public ::testing::Test {
 protected:
  void SetUp() override {
    root = fs::temp_directory_path() /
           ("lumos_pipeline_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(root);
    fs::create_directories(root);
  }
  void TearDown() override { fs::remove_all(root); }
  fs::path root;
};

// ---------------------------------------------------------------- config

TEST(Config, JsonRoundTripKeepsHash) {
  Config c = tiny_config();
  c.instruct.facet_mask = instruct::FacetMask::parse("lighting,spatial");
  c.ipfm.mode = ipfm::Mode::ln;
  const Config back = config_from_json(config_to_json(c));
  EXPECT_EQ(config_hash(back), config_hash(c));
  EXPECT_EQ(config_to_json(back), config_to_json(c));
}

TEST(Config, UnknownKeyAndWrongTypeAreRejected) {
  nlohmann::json j = config_to_json(tiny_config());
  j["train"]["learning_rate"] = 1e-3;
  EXPECT_THROW(config_from_json(j), ConfigError);
  j = config_to_json(tiny_config());
  j["train"]["steps"] = "many";
  EXPECT_THROW(config_from_json(j), ConfigError);
  j = config_to_json(tiny_config());
  j["ipfm"]["mode"] = "film";
  EXPECT_THROW(config_from_json(j), ConfigError);
}

TEST(Config, MissingKeysTakeDefaults) {
  const Config c = config_from_json(nlohmann::json{{"train", {{"steps", 10}}}});
  EXPECT_EQ(c.train.steps, 10u);
  EXPECT_EQ(c.train.batch, 8u);
  EXPECT_DOUBLE_EQ(c.train.lr, 5e-5);
  EXPECT_EQ(c.sample.S_steps, 50u);
  EXPECT_EQ(c.sample.k, 2u);
}

TEST(Config, HashIgnoresCredentialsButNotHyperparameters) {
  Config a = tiny_config();
  Config b = a;
  b.instruct.auth_header = "Bearer secret";
  EXPECT_EQ(config_hash(a), config_hash(b));
  b.train.lr = 1e-4;
  EXPECT_NE(config_hash(a), config_hash(b));
  EXPECT_EQ(config_hash(a).size(), 16u);
}

TEST(Config, ValidateRejectsInconsistentShapes) {
  Config c = tiny_config();
  c.unet.groups = 3;
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny_config();
  c.codec = {"identity", 4, 4, 8};
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Config, DefaultModelFitsParameterBudget) {
  const Config c;
  ModelBundle b(c);
  const std::size_t n = count_elements(b.parameters());
  EXPECT_LE(n, 5'000'000u);
  EXPECT_EQ(c.unet.base, 64u);
}

// ---------------------------------------------------------------- bundle

TEST(Bundle, FreezeBackbonePartition) {
  Config c = tiny_config();
  c.train.freeze_backbone = true;
  ModelBundle b(c);
  b.apply_diffusion_policy();
  EXPECT_EQ(names(b.parameters(), true), names(b.adapter_parameters(), false));
  for (const auto& [name, p] : b.backbone_parameters()) EXPECT_FALSE(p->trainable) << name;
  for (const auto& [name, p] : b.codec_parameters()) EXPECT_FALSE(p->trainable) << name;

  c.train.freeze_backbone = false;
  ModelBundle open(c);
  open.apply_diffusion_policy();
  for (const auto& [name, p] : open.backbone_parameters()) EXPECT_TRUE(p->trainable) << name;
  for (const auto& [name, p] : open.codec_parameters()) EXPECT_FALSE(p->trainable) << name;
}

TEST(Bundle, PartitionCoversEveryParameterOnce) {
  ModelBundle b(tiny_config());
  std::vector<std::string> parts = names(b.codec_parameters(), false);
  for (const auto& n : names(b.backbone_parameters(), false)) parts.push_back(n);
  for (const auto& n : names(b.adapter_parameters(), false)) parts.push_back(n);
  std::sort(parts.begin(), parts.end());
  EXPECT_EQ(std::adjacent_find(parts.begin(), parts.end()), parts.end());
  EXPECT_EQ(parts, names(b.parameters(), false));
}

TEST(Bundle, SameSeedSameInitialisation) {
  ModelBundle a(tiny_config());
  ModelBundle b(tiny_config());
  EXPECT_EQ(hashes(a.parameters()), hashes(b.parameters()));
}

TEST(Bundle, LatentRoundTripMatchesCodec) {
  Fixture f;
  const Tensor x = to_batch({&f.samples[0].x0});
  const Tensor direct = f.bundle.codec.decode(f.bundle.codec.encode(x));
  const Tensor via = f.bundle.decode_latent(f.bundle.encode_latent(x));
  const auto a = direct.data<float>(), b = via.data<float>();
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-5);
}

TEST(Bundle, FittedLatentsAreStandardised) {
  Fixture f(tiny_config(), 32);
  double s = 0, s2 = 0, n = 0;
  for (const auto& it : f.items) {
    for (float v : it.z0.data<float>()) s += v, s2 += double(v) * v, n += 1;
  }
  EXPECT_NEAR(s / n, 0.0, 1e-4);
  EXPECT_NEAR(s2 / n, 1.0, 1e-3);
  EXPECT_LT(f.bundle.latent.lo, 0.0);
  EXPECT_GT(f.bundle.latent.hi, 0.0);
}

// ---------------------------------------------------------------- training

TEST(Train, LossAtInitIsUnitPerElement) {
  Fixture f(tiny_config(), 1024);
  const double mse = validation_mse(f.bundle, f.items, 99, 64);
  EXPECT_GE(mse, 0.95);
  EXPECT_LE(mse, 1.05);
}

TEST(Train, FrozenParametersUntouchedByTraining) {
  Config c = tiny_config();
  c.train.freeze_backbone = true;
  Fixture f(c);
  const auto frozen_before = hashes(f.bundle.backbone_parameters());
  const auto codec_before = hashes(f.bundle.codec_parameters());
  const auto adapters_before = hashes(f.bundle.adapter_parameters());
  TrainingState state = initial_state(f.bundle);
  for (int i = 0; i < 3; ++i) train_step(f.bundle, f.items, state);
  EXPECT_EQ(hashes(f.bundle.backbone_parameters()), frozen_before);
  EXPECT_EQ(hashes(f.bundle.codec_parameters()), codec_before);
  EXPECT_NE(hashes(f.bundle.adapter_parameters()), adapters_before);
  EXPECT_EQ(state.step, 3u);
}

TEST(Train, EveryTrainableParameterReceivesGradient) {
  Fixture f;
  Rng rng(3);
  // Nonzero outputs everywhere so no gradient is blocked by a zero projection.
  for (const auto& [name, p] : f.bundle.parameters()) {
    if (!p->trainable) continue;
    for (float& v : p->tensor.mutable_data<float>()) v += static_cast<float>(0.05 * rng.normal());
  }
  std::vector<const TrainItem*> batch{&f.items[0], &f.items[1]};
  Shape shape = f.items[0].z0.shape();
  shape[0] = 2;
  const Tensor eps = Tensor::from_vector(shape, std::vector<float>(2 * f.items[0].z0.numel(), 0.5f));
  backward(diffusion_loss(f.bundle, batch, {10, 700}, eps));
  for (const auto& [name, p] : f.bundle.parameters()) {
    if (!p->trainable) {
      EXPECT_FALSE(p->tensor.has_grad()) << name;
      continue;
    }
    ASSERT_TRUE(p->tensor.has_grad()) << name;
    double norm = 0;
    for (float g : p->tensor.grad().data<float>()) norm += double(g) * g;
    EXPECT_GT(norm, 0.0) << name;
  }
}

TEST(Train, NonFiniteLossLeavesParametersUntouched) {
  Fixture f;
  for (auto& it : f.items) it.z0.mutable_data<float>()[0] = std::numeric_limits<float>::quiet_NaN();
  const auto before = hashes(f.bundle.parameters());
  TrainingState state = initial_state(f.bundle);
  EXPECT_THROW(train_step(f.bundle, f.items, state), NonFiniteError);
  EXPECT_EQ(hashes(f.bundle.parameters()), before);
  for (const auto& [name, p] : f.bundle.parameters()) EXPECT_FALSE(p->tensor.has_grad()) << name;
}

TEST(Train, TwoHundredStepsOnSixteenPairs) {
  Config c = tiny_config();
  c.train.lr = 1e-3;
  Fixture f(c);
  TrainingState state = initial_state(f.bundle);
  double window = 0;
  for (int i = 0; i < 200; ++i) {
    const double loss = train_step(f.bundle, f.items, state);
    ASSERT_TRUE(std::isfinite(loss));
    if (i >= 180) window += loss;
  }
  EXPECT_LT(window / 20, 0.8);
}

TEST(Train, ResumeReproducesNextStepBitwise) {
  Fixture f;
  TrainingState state = initial_state(f.bundle);
  for (int i = 0; i < 3; ++i) train_step(f.bundle, f.items, state);
  const std::string bytes = serialize_checkpoint(f.bundle, &state);
  const double expected = train_step(f.bundle, f.items, state);

  LoadedCheckpoint loaded = parse_checkpoint(bytes);
  ASSERT_TRUE(loaded.state.has_value());
  EXPECT_EQ(loaded.state->step, 3u);
  const auto items = prepare_items(*loaded.bundle, f.samples);
  const double resumed = train_step(*loaded.bundle, items, *loaded.state);
  EXPECT_EQ(std::bit_cast<std::uint64_t>(resumed), std::bit_cast<std::uint64_t>(expected));
  EXPECT_EQ(hashes(loaded.bundle->parameters()), hashes(f.bundle.parameters()));
}

TEST(Train, IdenticalRunsGiveIdenticalCheckpointHash) {
  auto run = [] {
    Fixture f;
    TrainingState state = initial_state(f.bundle);
    for (int i = 0; i < 4; ++i) train_step(f.bundle, f.items, state);
    return parse_checkpoint(serialize_checkpoint(f.bundle, &state)).hash;
  };
  EXPECT_EQ(run(), run());
}

TEST(Train, CodecTrainingReducesReconstructionError) {
  Config c = tiny_config();
  c.train.codec_steps = 60;
  ModelBundle b(c);
  const auto samples = data::generate_dataset(24, 3, c.data.size);
  const std::vector<data::PairedSample> train(samples.begin(), samples.begin() + 16);
  const std::vector<data::PairedSample> val(samples.begin() + 16, samples.end());
  const double before = codec_roundtrip_psnr(b, val);
  const auto adapters = hashes(b.adapter_parameters());
  const CodecReport report = train_codec(b, train, val);
  EXPECT_EQ(report.steps, 60u);
  EXPECT_GT(report.val_psnr, before + 3.0);
  EXPECT_DOUBLE_EQ(report.val_psnr, codec_roundtrip_psnr(b, val));
  EXPECT_EQ(hashes(b.adapter_parameters()), adapters);
  for (const auto& [name, p] : b.codec_parameters()) EXPECT_FALSE(p->trainable) << name;
}

TEST(Train, IdentityCodecSkipsCodecTraining) {
  Config c = tiny_config();
  c.codec = {"identity", 1, 3, 8};
  ModelBundle b(c);
  const auto samples = data::generate_dataset(4, 3, 16);
  EXPECT_EQ(train_codec(b, samples, samples).steps, 0u);
  EXPECT_TRUE(std::isinf(codec_roundtrip_psnr(b, samples)));
}

TEST_F(TempDir, TrainLoopWritesLogAndCheckpoints) {
  Config c = tiny_config();
  c.train.steps = 20;
  Fixture f(c);
  TrainingState state = initial_state(f.bundle);
  std::vector<nlohmann::json> seen;
  train_loop(f.bundle, f.items, f.items, state, {root, [&](const nlohmann::json& j) { seen.push_back(j); }});
  EXPECT_EQ(state.step, 20u);
  EXPECT_TRUE(fs::exists(root / "step_10.ckpt"));
  EXPECT_TRUE(fs::exists(root / "final.ckpt"));

  std::ifstream log(root / "train_log.jsonl");
  std::string line;
  std::vector<nlohmann::json> records;
  while (std::getline(log, line)) records.push_back(nlohmann::json::parse(line));
  ASSERT_EQ(records.size(), 4u);
  EXPECT_EQ(records, seen);
  std::size_t with_val = 0;
  for (const auto& r : records) {
    EXPECT_TRUE(r.contains("step") && r.contains("loss") && r.contains("lr"));
    for (const auto& [key, value] : r.items()) {
      EXPECT_TRUE(key == "step" || key == "loss" || key == "lr" || key == "val_mse") << key;
    }
    if (r.contains("val_mse")) ++with_val;
  }
  EXPECT_EQ(with_val, 2u);
  EXPECT_EQ(records.back()["step"], 20);

  const LoadedCheckpoint final_ckpt = load_checkpoint(root / "final.ckpt");
  EXPECT_EQ(final_ckpt.state->step, 20u);
  EXPECT_EQ(hashes(final_ckpt.bundle->parameters()), hashes(f.bundle.parameters()));
}

// ---------------------------------------------------------------- checkpoint

TEST(Checkpoint, RoundTripIsBitwise) {
  Fixture f;
  TrainingState state = initial_state(f.bundle);
  train_step(f.bundle, f.items, state);
  const std::string bytes = serialize_checkpoint(f.bundle, &state);
  const LoadedCheckpoint loaded = parse_checkpoint(bytes);
  EXPECT_EQ(hashes(loaded.bundle->parameters()), hashes(f.bundle.parameters()));
  EXPECT_EQ(names(loaded.bundle->parameters(), true), names(f.bundle.parameters(), true));
  EXPECT_EQ(serialize_checkpoint(*loaded.bundle, &*loaded.state), bytes);
  EXPECT_EQ(loaded.bundle->latent.shift, f.bundle.latent.shift);
  EXPECT_EQ(loaded.bundle->latent.scale, f.bundle.latent.scale);
  EXPECT_EQ(loaded.bundle->config_hash, f.bundle.config_hash);
}

TEST(Checkpoint, ManifestDescribesPayload) {
  Fixture f;
  const std::string bytes = serialize_checkpoint(f.bundle, nullptr);
  const auto nl = bytes.find('\n');
  ASSERT_NE(nl, std::string::npos);
  const auto manifest = nlohmann::json::parse(bytes.substr(0, nl));
  EXPECT_EQ(manifest["format"], "lumos-checkpoint");
  std::size_t end = 0;
  for (const auto& t : manifest["tensors"]) {
    EXPECT_EQ(t["byte_offset"].get<std::size_t>(), end);
    std::size_t n = t["dtype"] == "f64" ? 8 : 4;
    for (const auto& d : t["shape"]) n *= d.get<std::size_t>();
    EXPECT_EQ(t["byte_len"].get<std::size_t>(), n);
    end += n;
  }
  EXPECT_EQ(bytes.size() - nl - 1, end);
  EXPECT_EQ(manifest["payload_bytes"].get<std::size_t>(), end);
  EXPECT_FALSE(manifest.contains("training"));
  EXPECT_EQ(manifest["config_hash"], f.bundle.config_hash);

  // First parameter's payload decodes to its values.
  const auto& first = manifest["tensors"][0];
  const auto params = f.bundle.parameters();
  const auto it = std::find_if(params.begin(), params.end(), [&](const auto& p) { return p.first == first["name"]; });
  ASSERT_NE(it, params.end());
  float v0;
  std::memcpy(&v0, bytes.data() + nl + 1 + first["byte_offset"].get<std::size_t>(), 4);
  EXPECT_EQ(v0, it->second->tensor.data<float>()[0]);
}

TEST(Checkpoint, CorruptionIsDetected) {
  Fixture f;
  std::string bytes = serialize_checkpoint(f.bundle, nullptr);
  std::string flipped = bytes;
  flipped[flipped.size() - 3] ^= 0x10;
  EXPECT_THROW(parse_checkpoint(flipped), CheckpointError);
  EXPECT_THROW(parse_checkpoint(bytes.substr(0, bytes.size() - 4)), CheckpointError);
  EXPECT_THROW(parse_checkpoint("not a checkpoint"), CheckpointError);
}

TEST_F(TempDir, SaveAndLoadFile) {
  Fixture f;
  save_checkpoint(root / "a.ckpt", f.bundle);
  const LoadedCheckpoint loaded = load_checkpoint(root / "a.ckpt");
  EXPECT_FALSE(loaded.state.has_value());
  EXPECT_EQ(hashes(loaded.bundle->parameters()), hashes(f.bundle.parameters()));
  EXPECT_THROW(load_checkpoint(root / "missing.ckpt"), CheckpointError);
}

// ---------------------------------------------------------------- sampling

TEST(Enhance, FixedSeedIsDeterministic) {
  Fixture f;
  const Image& y = f.samples[0].y;
  const std::string text = training_instruction(f.samples[0], {}).text;
  const Image a = enhance(f.bundle, y, text, 5, 4);
  const Image b = enhance(f.bundle, y, text, 5, 4);
  const Image c = enhance(f.bundle, y, text, 6, 4);
  EXPECT_EQ(a.data, b.data);
  EXPECT_NE(a.data, c.data);
  EXPECT_EQ(a.height, y.height);
  EXPECT_EQ(a.width, y.width);
}

TEST(Enhance, SingleStepReturnsInRangeImage) {
  Fixture f;
  const Image out = enhance(f.bundle, f.samples[1].y, "a dim room", 0, 1);
  ASSERT_EQ(out.data.size(), f.samples[1].y.data.size());
  for (float v : out.data) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
}

TEST(Enhance, BatchMatchesSingleImageCalls) {
  Fixture f;
  std::vector<const Image*> ys{&f.samples[0].y, &f.samples[1].y};
  std::vector<std::string> texts{"bright lamp", "soft light"};
  const auto batch = enhance_batch(f.bundle, ys, texts, std::vector<std::uint64_t>{11, 12}, 3);
  for (std::size_t i = 0; i < 2; ++i) {
    const Image single = enhance(f.bundle, *ys[i], texts[i], 11 + i, 3);
    ASSERT_EQ(single.data.size(), batch[i].data.size());
    for (std::size_t j = 0; j < single.data.size(); ++j) EXPECT_NEAR(single.data[j], batch[i].data[j], 1e-5);
  }
  EXPECT_EQ(image_seed(42, 0), 42u);
  EXPECT_NE(image_seed(42, 1), image_seed(42, 2));
}

TEST(Enhance, AttentionMapsAreRowStochastic) {
  Fixture f;
  std::vector<AttentionMap> maps;
  enhance(f.bundle, f.samples[0].y, "lamp on the left", 1, 2, &maps);
  ASSERT_FALSE(maps.empty());
  for (const auto& m : maps) {
    EXPECT_EQ(m.tokens, f.bundle.config.ipfm.n_query);
    ASSERT_EQ(m.weights.size(), m.height * m.width * m.tokens);
    for (std::size_t r = 0; r < m.height * m.width; ++r) {
      double s = 0;
      for (std::size_t q = 0; q < m.tokens; ++q) s += m.weights[r * m.tokens + q];
      EXPECT_NEAR(s, 1.0, 1e-5);
    }
  }
}

class RecordingDescriber : public instruct::Describer {
 public:
  instruct::Instruction describe(const Image& image, const instruct::Instruction* previous) override {
    seen.push_back(image);
    previous_text.push_back(previous ? previous->text : "");
    if (fail) throw instruct::DescriberConnectionError("unreachable");
    instruct::Instruction ins;
    ins.text = "described " + std::to_string(seen.size());
    ins.source = instruct::Source::external_vlm;
    return ins;
  }
  std::string name() const override { return "recording"; }
  std::vector<Image> seen;
  std::vector<std::string> previous_text;
  bool fail = false;
};

instruct::Instruction manual(const std::string& text) {
  instruct::Instruction ins;
  ins.text = text;
  return ins;
}

TEST(Iterative, SinglePassEqualsEnhance) {
  Fixture f;
  RecordingDescriber d;
  const auto job = iterative_enhance(f.bundle, f.samples[0].y, manual("warm lamp"), 1, 9, 3, &d);
  ASSERT_EQ(job.passes.size(), 1u);
  EXPECT_TRUE(d.seen.empty());
  EXPECT_EQ(job.passes[0].image.data, enhance(f.bundle, f.samples[0].y, "warm lamp", 9, 3).data);
}

TEST(Iterative, SecondPassDescribesFirstOutput) {
  Fixture f;
  RecordingDescriber d;
  const auto job = iterative_enhance(f.bundle, f.samples[0].y, manual("warm lamp"), 2, 9, 3, &d);
  ASSERT_EQ(job.passes.size(), 2u);
  ASSERT_EQ(d.seen.size(), 1u);
  EXPECT_EQ(d.seen[0].data, job.passes[0].image.data);
  EXPECT_EQ(d.previous_text[0], "warm lamp");
  EXPECT_EQ(job.passes[0].instruction.source, instruct::Source::manual);
  EXPECT_EQ(job.passes[1].instruction.text, "described 1");
  EXPECT_EQ(job.passes[0].seed, job.passes[1].seed);
  EXPECT_EQ(job.passes[1].image.data, enhance(f.bundle, f.samples[0].y, "described 1", 9, 3).data);
  EXPECT_FALSE(job.passes[1].warning.has_value());
}

TEST(Iterative, DescriberFailureReusesPreviousInstruction) {
  Fixture f;
  RecordingDescriber d;
  d.fail = true;
  const auto job = iterative_enhance(f.bundle, f.samples[0].y, manual("warm lamp"), 3, 9, 2, &d);
  ASSERT_EQ(job.passes.size(), 3u);
  EXPECT_EQ(d.seen.size(), 2u);
  for (const auto& p : job.passes) EXPECT_EQ(p.instruction.text, "warm lamp");
  EXPECT_FALSE(job.passes[0].warning.has_value());
  ASSERT_TRUE(job.passes[1].warning.has_value());
  EXPECT_NE(job.passes[1].warning->find("unreachable"), std::string::npos);
}

TEST(Iterative, RejectsZeroPasses) {
  Fixture f;
  EXPECT_THROW(iterative_enhance(f.bundle, f.samples[0].y, manual("x"), 0, 1, 2, nullptr), std::invalid_argument);
}

TEST(Iterative, JobJsonListsPasses) {
  Fixture f;
  RecordingDescriber d;
  const auto job = iterative_enhance(f.bundle, f.samples[0].y, manual("warm lamp"), 2, 9, 2, &d);
  const auto j = job_to_json(job, {"x_1.png", "x_2.png"});
  EXPECT_EQ(j["k"], 2);
  ASSERT_EQ(j["iterations"].size(), 2u);
  EXPECT_EQ(j["iterations"][0]["instruction"]["text"], "warm lamp");
  EXPECT_EQ(j["iterations"][1]["image"], "x_2.png");
  EXPECT_EQ(j["iterations"][1]["seed"], 9);
}

// ---------------------------------------------------------------- evaluation

TEST(Eval, SingleSeedReportHasNoSpread) {
  Fixture f(tiny_config(), 4);
  EvalOptions opt;
  opt.seeds = {3};
  opt.steps = 2;
  const auto report = eval_run(f.bundle, f.samples, opt);
  ASSERT_EQ(report.seeds.size(), 1u);
  EXPECT_EQ(report.seeds[0].images.size(), 4u);
  EXPECT_EQ(report.std_psnr, 0.0);
  EXPECT_EQ(report.mean_psnr, report.seeds[0].mean_psnr);
  double input = 0;
  for (const auto& s : f.samples) input += data::psnr(s.y, s.x0);
  EXPECT_NEAR(report.input_psnr, input / 4, 1e-9);
}

TEST(Eval, SeedOrderDoesNotChangeReport) {
  Fixture f(tiny_config(), 3);
  EvalOptions opt;
  opt.steps = 2;
  opt.batch = 2;
  opt.seeds = {4, 1, 2};
  const auto a = eval_run(f.bundle, f.samples, opt);
  opt.seeds = {2, 4, 1};
  const auto b = eval_run(f.bundle, f.samples, opt);
  EXPECT_EQ(data::to_json(a), data::to_json(b));
}

TEST(Eval, BatchSizeDoesNotChangeScores) {
  Fixture f(tiny_config(), 3);
  EvalOptions opt;
  opt.steps = 2;
  opt.seeds = {1};
  opt.batch = 1;
  const auto a = eval_run(f.bundle, f.samples, opt);
  opt.batch = 3;
  const auto b = eval_run(f.bundle, f.samples, opt);
  EXPECT_NEAR(a.mean_psnr, b.mean_psnr, 1e-4);
}

}  // namespace
}  // namespace lumos::pipeline
