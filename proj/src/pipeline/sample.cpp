#include "lumos/pipeline/sample.hpp"

#include <chrono>

namespace lumos::pipeline {

using nlohmann::json;

std::uint64_t image_seed(std::uint64_t seed, std::size_t index) {
  if (index == 0) return seed;
  // splitmix64 finaliser over (seed, index)
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * static_cast<std::uint64_t>(index);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

namespace {

std::vector<AttentionMap> export_attention(const denoiser::AttentionTrace& trace, std::size_t latent_side) {
  std::vector<AttentionMap> out;
  for (std::size_t i = 0; i < trace.maps.size(); ++i) {
    const Tensor& m = trace.maps[i];  // [N, HW, nq]
    AttentionMap a;
    a.level = trace.levels[i];
    a.layer = i;
    a.height = latent_side >> a.level;
    a.width = a.height;
    a.tokens = m.dim(2);
    const auto all = m.data<float>();
    a.weights.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(m.dim(1) * m.dim(2)));
    out.push_back(std::move(a));
  }
  return out;
}

}  // namespace

std::vector<Image> enhance_batch(const ModelBundle& bundle, const std::vector<const Image*>& ys,
                                 const std::vector<std::string>& texts, std::uint64_t seed, std::size_t steps,
                                 std::vector<AttentionMap>* attention) {
  std::vector<std::uint64_t> seeds;
  for (std::size_t i = 0; i < ys.size(); ++i) seeds.push_back(image_seed(seed, i));
  return enhance_batch(bundle, ys, texts, seeds, steps, attention);
}

std::vector<Image> enhance_batch(const ModelBundle& bundle, const std::vector<const Image*>& ys,
                                 const std::vector<std::string>& texts, const std::vector<std::uint64_t>& seeds,
                                 std::size_t steps, std::vector<AttentionMap>* attention) {
  if (ys.empty()) return {};
  if (texts.size() != ys.size() || seeds.size() != ys.size()) {
    throw std::invalid_argument("enhance: one instruction and one seed per image required");
  }
  if (steps < 1 || steps > bundle.schedule.T) {
    throw std::invalid_argument("enhance: steps must be in 1.." + std::to_string(bundle.schedule.T));
  }
  NoGradGuard guard;
  const Tensor y = to_batch(ys);
  codec::check_image_batch("enhance", y, bundle.config.codec.f << (bundle.config.unet.mults.size() - 1));
  const std::size_t N = ys.size();
  const std::size_t side_h = y.dim(2) / bundle.config.codec.f, side_w = y.dim(3) / bundle.config.codec.f;
  const Shape one{1, bundle.config.codec.c, side_h, side_w};

  const Tensor z_l = bundle.image_encoder.forward(y);
  std::vector<Tensor> e_ts;
  for (const std::string& t : texts) e_ts.push_back(bundle.embed_text(t));

  std::vector<Rng> rngs;
  for (std::uint64_t s : seeds) rngs.emplace_back(s);
  auto draw = [&] {
    std::vector<Tensor> parts;
    for (Rng& r : rngs) parts.push_back(r.normal_tensor(one));
    return concat(parts, 0);
  };

  const diffusion::ClampRange range{bundle.latent.lo, bundle.latent.hi};
  const auto schedule = diffusion::spaced_steps(bundle.schedule.T, steps);
  Tensor z = draw();
  for (std::size_t i = 0; i < schedule.size(); ++i) {
    const std::size_t t = schedule[i];
    const std::size_t t_prev = i + 1 < schedule.size() ? schedule[i + 1] : 0;
    const std::vector<std::size_t> ts(N, t);
    const Tensor p_s = bundle.ipfm.forward_batch(e_ts, ts);
    denoiser::AttentionTrace trace;
    const bool last = t_prev == 0;
    const Tensor eps_hat = denoiser::eps_theta(bundle.unet, &bundle.control, z, ts, z_l, p_s,
                                               attention && last ? &trace : nullptr);
    const Tensor noise = last ? Tensor::zeros(z.shape()) : draw();
    z = diffusion::ddpm_step(z, t, t_prev, eps_hat, bundle.schedule, noise, range);
    if (attention && last) *attention = export_attention(trace, side_h);
  }
  const Tensor x = bundle.decode_latent(z);
  std::vector<Image> out;
  for (std::size_t i = 0; i < N; ++i) out.push_back(from_tensor(x, i));
  return out;
}

Image enhance(const ModelBundle& bundle, const Image& y, const std::string& text, std::uint64_t seed,
              std::size_t steps, std::vector<AttentionMap>* attention) {
  return enhance_batch(bundle, {&y}, {text}, seed, steps, attention).front();
}

EnhancementJob iterative_enhance(const ModelBundle& bundle, const Image& y, const instruct::Instruction& initial,
                                 std::size_t k, std::uint64_t seed, std::size_t steps,
                                 instruct::Describer* describer, bool capture_attention) {
  if (k < 1) throw std::invalid_argument("iterative_enhance: k must be >= 1");
  if (k > 1 && describer == nullptr) throw std::invalid_argument("iterative_enhance: k > 1 needs a describer");
  EnhancementJob job;
  job.input = y;
  job.k = k;
  job.steps = steps;
  instruct::Instruction current = initial;
  for (std::size_t pass = 0; pass < k; ++pass) {
    PassRecord rec;
    if (pass > 0) {
      const PassRecord& prev = job.passes.back();
      try {
        current = describer->describe(prev.image, &prev.instruction);
      } catch (const instruct::DescriberError& e) {
        rec.warning = std::string("describer failed, reusing previous instruction: ") + e.what();
        current = prev.instruction;
      }
    }
    rec.instruction = current;
    rec.seed = seed;
    const auto start = std::chrono::steady_clock::now();
    rec.image = enhance(bundle, y, current.text, seed, steps, capture_attention ? &rec.attention : nullptr);
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    job.passes.push_back(std::move(rec));
  }
  return job;
}

json instruction_to_json(const instruct::Instruction& ins) {
  json j{{"text", ins.text}, {"source", instruct::to_string(ins.source)}};
  json facets = json::object();
  if (ins.lighting) facets["lighting"] = *ins.lighting;
  if (ins.shadows) facets["shadows"] = *ins.shadows;
  if (ins.spatial) facets["spatial"] = *ins.spatial;
  j["facets"] = facets;
  return j;
}

json job_to_json(const EnhancementJob& job, const std::vector<std::string>& image_names) {
  json j{{"k", job.k}, {"steps", job.steps}, {"iterations", json::array()}};
  for (std::size_t i = 0; i < job.passes.size(); ++i) {
    const PassRecord& p = job.passes[i];
    json it{{"iteration", i + 1},
            {"instruction", instruction_to_json(p.instruction)},
            {"seed", p.seed},
            {"seconds", p.seconds},
            {"mean_luma", mean_luma(p.image)}};
    if (i < image_names.size()) it["image"] = image_names[i];
    if (p.warning) it["warning"] = *p.warning;
    j["iterations"].push_back(std::move(it));
  }
  return j;
}

std::unique_ptr<instruct::Describer> make_describer(const InstructConfig& config) {
  if (config.provider == "external") {
    instruct::ExternalDescriberConfig ec;
    ec.url = config.endpoint;
    ec.auth_header = config.auth_header;
    ec.timeout = std::chrono::milliseconds(config.timeout_ms);
    return std::make_unique<instruct::ExternalDescriber>(ec);
  }
  return std::make_unique<instruct::HeuristicDescriber>(config.facet_mask);
}

}  // namespace lumos::pipeline
