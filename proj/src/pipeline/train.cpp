#include "lumos/pipeline/train.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>

#include "lumos/data/metrics.hpp"
#include "lumos/instruct/describer.hpp"

namespace lumos::pipeline {

using nlohmann::json;

instruct::Instruction training_instruction(const data::PairedSample& s, instruct::FacetMask mask) {
  if (s.scene) return instruct::synthesize_instruction(*s.scene, mask);
  instruct::HeuristicDescriber d(mask);
  return d.describe(s.x0, nullptr);
}

std::vector<TrainItem> prepare_items(const ModelBundle& bundle, const std::vector<data::PairedSample>& samples) {
  NoGradGuard guard;
  std::vector<TrainItem> items;
  items.reserve(samples.size());
  for (const auto& s : samples) {
    TrainItem it;
    it.id = s.id;
    it.z0 = bundle.encode_latent(to_tensor(s.x0)).detach();
    it.y = to_tensor(s.y);
    it.ids = bundle.tokenizer.tokenize(training_instruction(s, bundle.config.instruct.facet_mask).text);
    items.push_back(std::move(it));
  }
  return items;
}

double codec_roundtrip_psnr(const ModelBundle& bundle, const std::vector<data::PairedSample>& samples) {
  NoGradGuard guard;
  double total = 0.0;
  for (const auto& s : samples) {
    const Image back = from_tensor(bundle.codec.decode(bundle.codec.encode(to_tensor(s.x0))));
    total += data::psnr(back, s.x0);
  }
  return samples.empty() ? 0.0 : total / static_cast<double>(samples.size());
}

CodecReport train_codec(ModelBundle& bundle, const std::vector<data::PairedSample>& train,
                        const std::vector<data::PairedSample>& val,
                        const std::function<void(const json&)>& log) {
  CodecReport report;
  if (bundle.codec.identity() || train.empty()) {
    report.val_psnr = val.empty() ? 0.0 : codec_roundtrip_psnr(bundle, val);
    return report;
  }
  const TrainConfig& tc = bundle.config.train;
  bundle.apply_codec_policy();
  const ParamList params = bundle.codec_parameters();
  AdamW opt({tc.codec_lr, tc.beta1, tc.beta2, tc.adam_eps, 0.0});
  Rng rng(tc.seed ^ 0x636f646563ull);
  double window = 0.0;
  for (std::size_t step = 1; step <= tc.codec_steps; ++step) {
    // cosine decay to 5% of the base rate
    const double progress = static_cast<double>(step - 1) / static_cast<double>(tc.codec_steps);
    opt.config.lr = tc.codec_lr * (0.05 + 0.95 * 0.5 * (1.0 + std::cos(M_PI * progress)));
    std::vector<const Image*> imgs;
    for (std::size_t b = 0; b < tc.batch; ++b) {
      const auto& s = train[rng.index(train.size())];
      imgs.push_back(rng.uniform() < 0.75 ? &s.x0 : &s.y);
    }
    const Tensor x = to_batch(imgs);
    const Tensor loss = mse_loss(bundle.codec.decode_raw(bundle.codec.encode(x)), x);
    backward(loss);
    clip_grad_norm(params, tc.grad_clip);
    opt.step(params);
    report.final_loss = loss.item();
    window += report.final_loss;
    if (log && tc.log_every > 0 && step % tc.log_every == 0) {
      log({{"stage", "codec"}, {"step", step}, {"loss", window / static_cast<double>(tc.log_every)},
           {"lr", opt.config.lr}});
      window = 0.0;
    }
  }
  report.steps = tc.codec_steps;
  bundle.apply_diffusion_policy();
  report.val_psnr = val.empty() ? 0.0 : codec_roundtrip_psnr(bundle, val);
  return report;
}

void fit_latent_stats(ModelBundle& bundle, const std::vector<data::PairedSample>& train) {
  NoGradGuard guard;
  double sum = 0.0, sq = 0.0, n = 0.0;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  std::vector<std::vector<double>> latents;
  for (const auto& s : train) {
    latents.push_back(bundle.codec.encode(to_tensor(s.x0)).to_vector());
    for (double v : latents.back()) {
      sum += v;
      sq += v * v;
      n += 1.0;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (n == 0.0) return;
  const double mean = sum / n;
  const double var = std::max(sq / n - mean * mean, 1e-12);
  bundle.latent.shift = mean;
  bundle.latent.scale = 1.0 / std::sqrt(var);
  bundle.latent.lo = (lo - mean) * bundle.latent.scale;
  bundle.latent.hi = (hi - mean) * bundle.latent.scale;
}

TrainingState initial_state(const ModelBundle& bundle) {
  const TrainConfig& tc = bundle.config.train;
  TrainingState st;
  st.optimizer = AdamW({tc.lr, tc.beta1, tc.beta2, tc.adam_eps, tc.weight_decay});
  st.rng = Rng(tc.seed ^ 0x747261696eull);
  return st;
}

Tensor diffusion_loss(const ModelBundle& bundle, const std::vector<const TrainItem*>& batch,
                      const std::vector<std::size_t>& ts, const Tensor& eps) {
  std::vector<Tensor> z0s, ys, e_ts;
  for (const TrainItem* it : batch) {
    z0s.push_back(it->z0);
    ys.push_back(it->y);
    e_ts.push_back(bundle.embed_ids(it->ids));
  }
  const Tensor z0 = concat(z0s, 0);
  const Tensor y = concat(ys, 0);
  const Tensor z_l = bundle.image_encoder.forward(y);
  const Tensor z_t = diffusion::q_sample(z0, ts, eps, bundle.schedule);
  const Tensor p_s = bundle.ipfm.forward_batch(e_ts, ts);
  const Tensor eps_hat = denoiser::eps_theta(bundle.unet, &bundle.control, z_t, ts, z_l, p_s);
  return mse_loss(eps_hat, eps);
}

double train_step(ModelBundle& bundle, const std::vector<TrainItem>& items, TrainingState& state) {
  if (items.empty()) throw std::invalid_argument("train_step: no training items");
  const std::size_t B = bundle.config.train.batch;
  std::vector<const TrainItem*> batch;
  std::vector<std::size_t> ts;
  for (std::size_t b = 0; b < B; ++b) batch.push_back(&items[state.rng.index(items.size())]);
  for (std::size_t b = 0; b < B; ++b) ts.push_back(1 + state.rng.index(bundle.schedule.T));
  Shape shape = items.front().z0.shape();
  shape[0] = B;
  const Tensor eps = state.rng.normal_tensor(shape);

  ParamList params = bundle.parameters();
  double value = 0.0;
  try {
    const Tensor loss = diffusion_loss(bundle, batch, ts, eps);
    value = loss.item();
    if (!std::isfinite(value)) throw NonFiniteError("train_step: loss is not finite");
    backward(loss);
  } catch (const NonFiniteError&) {
    zero_grads(params);
    ++state.step;
    throw;
  }
  clip_grad_norm(params, bundle.config.train.grad_clip);
  state.optimizer.step(params);
  ++state.step;
  return value;
}

double validation_mse(const ModelBundle& bundle, const std::vector<TrainItem>& items, std::uint64_t seed,
                      std::size_t batch) {
  if (items.empty()) return 0.0;
  NoGradGuard guard;
  Rng rng(seed);
  double total = 0.0, count = 0.0;
  for (std::size_t start = 0; start < items.size(); start += batch) {
    const std::size_t n = std::min(batch, items.size() - start);
    std::vector<const TrainItem*> b;
    std::vector<std::size_t> ts;
    for (std::size_t i = 0; i < n; ++i) b.push_back(&items[start + i]);
    for (std::size_t i = 0; i < n; ++i) ts.push_back(1 + rng.index(bundle.schedule.T));
    Shape shape = items.front().z0.shape();
    shape[0] = n;
    const Tensor eps = rng.normal_tensor(shape);
    const double elems = static_cast<double>(numel_of(shape));
    total += diffusion_loss(bundle, b, ts, eps).item() * elems;
    count += elems;
  }
  return total / count;
}

void train_loop(ModelBundle& bundle, const std::vector<TrainItem>& train, const std::vector<TrainItem>& val,
                TrainingState& state, const TrainLoopOptions& options) {
  const TrainConfig& tc = bundle.config.train;
  std::ofstream log_file;
  if (options.out_dir) {
    std::filesystem::create_directories(*options.out_dir);
    log_file.open(*options.out_dir / "train_log.jsonl", std::ios::app);
    if (!log_file) throw std::runtime_error("cannot open " + (*options.out_dir / "train_log.jsonl").string());
  }
  auto emit = [&](const json& rec) {
    if (log_file.is_open()) log_file << rec.dump() << '\n' << std::flush;
    if (options.on_log) options.on_log(rec);
  };
  auto checkpoint = [&](const std::filesystem::path& name) {
    if (!options.out_dir) return;
    try {
      save_checkpoint(*options.out_dir / name, bundle, &state);
    } catch (const std::exception& e) {
      throw std::runtime_error("step " + std::to_string(state.step) + ": " + e.what());
    }
  };

  double window = 0.0;
  std::size_t in_window = 0, consecutive_failures = 0;
  while (state.step < tc.steps) {
    try {
      window += train_step(bundle, train, state);
      ++in_window;
      consecutive_failures = 0;
    } catch (const NonFiniteError& e) {
      emit({{"step", state.step}, {"warning", std::string("step aborted: ") + e.what()}});
      if (++consecutive_failures >= 10) {
        throw std::runtime_error("step " + std::to_string(state.step) + ": 10 consecutive non-finite steps");
      }
    }
    const bool log_now = tc.log_every > 0 && state.step % tc.log_every == 0;
    const bool val_now = tc.val_every > 0 && state.step % tc.val_every == 0 && !val.empty();
    if (log_now || val_now || state.step == tc.steps) {
      json rec{{"step", state.step}, {"lr", state.optimizer.config.lr}};
      rec["loss"] = in_window > 0 ? json(window / static_cast<double>(in_window)) : json(nullptr);
      if (val_now || (state.step == tc.steps && !val.empty())) rec["val_mse"] = validation_mse(bundle, val);
      emit(rec);
      window = 0.0;
      in_window = 0;
    }
    if (tc.ckpt_every > 0 && state.step % tc.ckpt_every == 0) {
      checkpoint("step_" + std::to_string(state.step) + ".ckpt");
    }
  }
  checkpoint("final.ckpt");
}

void copy_codec(const ModelBundle& from, ModelBundle& to) {
  const auto& a = from.config.codec;
  const auto& b = to.config.codec;
  if (a.mode != b.mode || a.f != b.f || a.c != b.c || a.width != b.width) {
    throw std::invalid_argument("copy_codec: codec configs differ");
  }
  auto src = const_cast<ModelBundle&>(from).codec_parameters();
  auto dst = to.codec_parameters();
  for (std::size_t i = 0; i < src.size(); ++i) {
    dispatch(src[i].second->tensor.dtype(), [&]<class T>() {
      const auto v = src[i].second->tensor.data<T>();
      std::copy(v.begin(), v.end(), dst[i].second->tensor.mutable_data<T>().begin());
    });
  }
  to.latent = from.latent;
}

TrainRun train_model(const Config& config, const std::vector<data::PairedSample>& train,
                     const std::vector<data::PairedSample>& val, const TrainRunOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  TrainRun run;
  run.bundle = std::make_unique<ModelBundle>(config);
  ModelBundle& b = *run.bundle;
  if (options.codec_source) {
    copy_codec(*options.codec_source, b);
    run.codec.val_psnr = codec_roundtrip_psnr(b, val);
  } else {
    std::ofstream codec_log;
    if (options.out_dir) {
      std::filesystem::create_directories(*options.out_dir);
      codec_log.open(*options.out_dir / "codec_log.jsonl", std::ios::app);
    }
    run.codec = train_codec(b, train, val, [&](const json& rec) {
      if (codec_log.is_open()) codec_log << rec.dump() << '\n' << std::flush;
      if (options.on_log) options.on_log(rec);
    });
    fit_latent_stats(b, train);
  }
  run.codec_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  b.apply_diffusion_policy();
  const auto train_items = prepare_items(b, train);
  const auto val_items = prepare_items(b, val);
  run.state = initial_state(b);
  if (!val_items.empty()) run.init_val_mse = validation_mse(b, val_items);
  train_loop(b, train_items, val_items, run.state, {options.out_dir, options.on_log});
  if (!val_items.empty()) run.final_val_mse = validation_mse(b, val_items);
  run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return run;
}

}  // namespace lumos::pipeline
