#include "lumos/service/service.hpp"

#include <httplib.h>

#include <algorithm>
#include <cmath>

#include "lumos/data/metrics.hpp"

namespace lumos::service {

using nlohmann::json;

// ---------------------------------------------------------------- queue

JobQueue::JobQueue(std::size_t depth) : depth_(depth), worker_([this] { loop(); }) {}

JobQueue::~JobQueue() {
  {
    std::lock_guard lock(mu_);
    stop_ = true;
  }
  wake_.notify_all();
  worker_.join();
}

void JobQueue::run(std::function<void()> job) {
  auto task = std::make_shared<Task>();
  task->fn = std::move(job);
  std::unique_lock lock(mu_);
  const bool idle = !running_ && tasks_.empty();
  if (!idle && tasks_.size() >= depth_) {
    throw HttpError(409, "busy: " + std::to_string(tasks_.size()) + " job(s) already queued");
  }
  tasks_.push_back(task);
  wake_.notify_one();
  finished_.wait(lock, [&] { return task->done; });
  if (task->error) std::rethrow_exception(task->error);
}

std::size_t JobQueue::waiting() const {
  std::lock_guard lock(mu_);
  return tasks_.size();
}

bool JobQueue::busy() const {
  std::lock_guard lock(mu_);
  return running_;
}

void JobQueue::loop() {
  std::unique_lock lock(mu_);
  for (;;) {
    wake_.wait(lock, [&] { return stop_ || !tasks_.empty(); });
    if (tasks_.empty()) return;
    auto task = tasks_.front();
    tasks_.pop_front();
    running_ = true;
    lock.unlock();
    try {
      task->fn();
    } catch (...) {
      task->error = std::current_exception();
    }
    lock.lock();
    running_ = false;
    task->done = true;
    finished_.notify_all();
  }
}

// ---------------------------------------------------------------- helpers

namespace {

template <class T>
T field(const json& body, const char* key, T fallback) {
  if (!body.contains(key) || body[key].is_null()) return fallback;
  try {
    return body[key].get<T>();
  } catch (const json::exception&) {
    throw HttpError(400, std::string("field '") + key + "' has the wrong type");
  }
}

std::size_t unsigned_field(const json& body, const char* key, std::size_t fallback, std::size_t lo,
                           std::size_t hi) {
  if (!body.contains(key) || body[key].is_null()) return fallback;
  if (!body[key].is_number_integer() || body[key].get<std::int64_t>() < 0) {
    throw HttpError(400, std::string("field '") + key + "' must be a non-negative integer");
  }
  const auto v = body[key].get<std::uint64_t>();
  if (v < lo || v > hi) {
    throw HttpError(400, std::string("field '") + key + "' must be in " + std::to_string(lo) + ".." +
                             std::to_string(hi));
  }
  return static_cast<std::size_t>(v);
}

json parse_body(const std::string& text) {
  json body;
  try {
    body = json::parse(text);
  } catch (const json::exception& e) {
    throw HttpError(400, std::string("body is not JSON: ") + e.what());
  }
  if (!body.is_object()) throw HttpError(400, "body must be a JSON object");
  return body;
}

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

template <class F>
void guarded(httplib::Response& res, F&& f) {
  try {
    reply(res, 200, f());
  } catch (const HttpError& e) {
    reply(res, e.status, json{{"error", e.what()}});
  } catch (const std::exception& e) {
    reply(res, 500, json{{"error", e.what()}});
  }
}

}  // namespace

json psnr_proxy_stats(const Image& input, const Image& output) {
  const auto lo = luma(output);
  const double mean_out = mean_luma(output);
  double var = 0.0;
  for (float v : lo) var += (v - mean_out) * (v - mean_out);
  var /= static_cast<double>(lo.size());
  const double mean_in = mean_luma(input);
  const double p = data::psnr(output, input);
  json j{{"mean_luma_input", mean_in},
         {"mean_luma_output", mean_out},
         {"luma_gain", mean_in > 0 ? mean_out / mean_in : 0.0},
         {"contrast_output", std::sqrt(var)},
         {"psnr_vs_input", std::isfinite(p) ? json(p) : json(nullptr)}};
  return j;
}

std::string render_heatmap(const pipeline::AttentionMap& map) {
  Image img(1, map.height, map.width * map.tokens);
  for (std::size_t q = 0; q < map.tokens; ++q) {
    float peak = 0.0f;
    for (std::size_t r = 0; r < map.height * map.width; ++r) peak = std::max(peak, map.weights[r * map.tokens + q]);
    for (std::size_t y = 0; y < map.height; ++y) {
      for (std::size_t x = 0; x < map.width; ++x) {
        const float w = map.weights[(y * map.width + x) * map.tokens + q];
        img.at(0, y, q * map.width + x) = peak > 0 ? w / peak : 0.0f;
      }
    }
  }
  Image rgb(3, img.height, img.width);
  for (std::size_t c = 0; c < 3; ++c) {
    std::copy(img.data.begin(), img.data.end(), rgb.data.begin() + c * img.data.size());
  }
  return encode_png(rgb);
}

// ---------------------------------------------------------------- service

Service::Service(pipeline::LoadedCheckpoint checkpoint, std::unique_ptr<instruct::Describer> describer,
                 ServiceOptions options)
    : bundle_(std::move(checkpoint.bundle)),
      hash_(std::move(checkpoint.hash)),
      describer_(std::move(describer)),
      options_(options),
      queue_(options.queue_depth) {
  if (!bundle_) throw std::invalid_argument("service: checkpoint has no model");
}

Service::Prepared Service::decode_input(const json& body) const {
  if (!body.contains("image_b64") || !body["image_b64"].is_string()) {
    throw HttpError(400, "field 'image_b64' (base64 PNG) is required");
  }
  Prepared out;
  try {
    out.image = decode_png(base64_decode(body["image_b64"].get<std::string>()));
  } catch (const ImageError& e) {
    throw HttpError(400, std::string("image_b64: ") + e.what());
  }
  const auto& cfg = bundle_->config;
  const std::size_t unit = cfg.codec.f << (cfg.unet.mults.size() - 1);
  const std::size_t cap = options_.max_side / unit * unit;
  const std::size_t h = std::min(out.image.height, cap) / unit * unit;
  const std::size_t w = std::min(out.image.width, cap) / unit * unit;
  if (h == 0 || w == 0) {
    throw HttpError(400, "image " + std::to_string(out.image.width) + "x" + std::to_string(out.image.height) +
                             " is smaller than the model's " + std::to_string(unit) + "-pixel unit");
  }
  if (h != out.image.height || w != out.image.width) {
    out.warnings.push_back("input " + std::to_string(out.image.width) + "x" + std::to_string(out.image.height) +
                           " center-cropped to " + std::to_string(w) + "x" + std::to_string(h));
    out.image = center_crop(out.image, h, w);
  }
  return out;
}

std::string Service::store(pipeline::EnhancementJob job) {
  std::lock_guard lock(jobs_mu_);
  char id[24];
  std::snprintf(id, sizeof id, "job-%06llu", static_cast<unsigned long long>(next_job_++));
  jobs_[id] = std::make_shared<const pipeline::EnhancementJob>(std::move(job));
  job_order_.push_back(id);
  while (job_order_.size() > options_.max_jobs) {
    jobs_.erase(job_order_.front());
    job_order_.pop_front();
  }
  return id;
}

json Service::enhance(const json& body) {
  Prepared in = decode_input(body);
  const std::string text = field<std::string>(body, "instruction", "");
  if (text.empty()) throw HttpError(400, "field 'instruction' must be a non-empty string");
  const auto& cfg = bundle_->config;
  const std::size_t k = unsigned_field(body, "k", cfg.sample.k, 1, options_.max_k);
  if (body.contains("seed") && !body["seed"].is_null() && !body["seed"].is_number_unsigned()) {
    throw HttpError(400, "field 'seed' must be a non-negative integer");
  }
  const std::uint64_t seed = field<std::uint64_t>(body, "seed", 0);
  const std::size_t steps = unsigned_field(body, "steps", cfg.sample.S_steps, 1, bundle_->schedule.T);

  pipeline::EnhancementJob job;
  queue_.run([&] {
    job = pipeline::iterative_enhance(*bundle_, in.image, instruct::manual_instruction(text), k, seed, steps,
                                      describer_.get(), true);
  });

  json iterations = json::array();
  for (std::size_t i = 0; i < job.passes.size(); ++i) {
    const auto& p = job.passes[i];
    json it{{"iteration", i + 1},
            {"image_b64", base64_encode(encode_png(p.image))},
            {"instruction_used", p.instruction.text},
            {"instruction", pipeline::instruction_to_json(p.instruction)},
            {"seed", p.seed},
            {"seconds", p.seconds},
            {"psnr_proxy_stats", psnr_proxy_stats(job.input, p.image)}};
    if (p.warning) it["warning"] = *p.warning;
    iterations.push_back(std::move(it));
  }
  json out{{"job_id", store(std::move(job))}, {"iterations", std::move(iterations)},
           {"checkpoint_hash", hash_}, {"k", k}, {"steps", steps}, {"seed", seed}};
  if (!in.warnings.empty()) {
    std::string joined;
    for (const auto& w : in.warnings) joined += (joined.empty() ? "" : "; ") + w;
    out["warning"] = joined;
  }
  return out;
}

json Service::instructions(const json& body) {
  std::optional<instruct::FacetMask> mask;
  if (body.contains("facets") && !body["facets"].is_null()) {
    try {
      mask = instruct::FacetMask::parse(field<std::string>(body, "facets", ""));
    } catch (const std::invalid_argument& e) {
      throw HttpError(400, std::string("facets: ") + e.what());
    }
  }
  instruct::Instruction ins;
  if (body.contains("scene") && !body["scene"].is_null()) {
    instruct::SceneDescriptor scene;
    try {
      scene = body["scene"].get<instruct::SceneDescriptor>();
    } catch (const std::exception& e) {
      throw HttpError(400, std::string("scene: ") + e.what());
    }
    ins = instruct::synthesize_instruction(scene, mask.value_or(bundle_->config.instruct.facet_mask));
  } else {
    const Prepared in = decode_input(body);
    queue_.run([&] {
      if (mask) {
        instruct::HeuristicDescriber preset(*mask);
        ins = preset.describe(in.image, nullptr);
      } else {
        try {
          ins = describer_->describe(in.image, nullptr);
        } catch (const instruct::DescriberError& e) {
          throw HttpError(500, std::string("describer: ") + e.what());
        }
      }
    });
  }
  return json{{"instruction", ins.text}, {"detail", pipeline::instruction_to_json(ins)}};
}

json Service::attention(const std::string& job_id, const std::string& iteration) const {
  std::shared_ptr<const pipeline::EnhancementJob> job;
  {
    std::lock_guard lock(jobs_mu_);
    const auto it = jobs_.find(job_id);
    if (it == jobs_.end()) throw HttpError(404, "unknown job '" + job_id + "'");
    job = it->second;
  }
  std::size_t index = 0;
  const bool numeric = !iteration.empty() && iteration.size() < 6 &&
                       std::all_of(iteration.begin(), iteration.end(), [](char c) { return c >= '0' && c <= '9'; });
  if (numeric) index = std::stoul(iteration);
  if (index < 1 || index > job->passes.size()) {
    throw HttpError(404, "job '" + job_id + "' has no iteration '" + iteration + "'");
  }
  const auto& pass = job->passes[index - 1];
  json maps = json::array();
  for (const auto& m : pass.attention) {
    json rows = json::array();
    for (std::size_t r = 0; r < m.height * m.width; ++r) {
      rows.push_back(std::vector<float>(m.weights.begin() + static_cast<std::ptrdiff_t>(r * m.tokens),
                                        m.weights.begin() + static_cast<std::ptrdiff_t>((r + 1) * m.tokens)));
    }
    maps.push_back({{"level", m.level},
                    {"layer", m.layer},
                    {"height", m.height},
                    {"width", m.width},
                    {"tokens", m.tokens},
                    {"heatmap_b64", base64_encode(render_heatmap(m))},
                    {"weights", std::move(rows)}});
  }
  return json{{"job_id", job_id}, {"iteration", index}, {"instruction_used", pass.instruction.text},
              {"maps", std::move(maps)}};
}

json Service::health() const {
  return json{{"status", "ok"},
              {"checkpoint_hash", hash_},
              {"config_hash", bundle_->config_hash},
              {"describer", describer_->name()},
              {"queue", {{"busy", queue_.busy()}, {"waiting", queue_.waiting()}, {"depth", queue_.depth()}}}};
}

void Service::mount(httplib::Server& server) {
  server.Post("/enhance", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { return enhance(parse_body(req.body)); });
  });
  server.Post("/instructions", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { return instructions(parse_body(req.body)); });
  });
  server.Get(R"(/attention/([^/]+)/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { return attention(req.matches[1], req.matches[2]); });
  });
  server.Get("/health", [this](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] { return health(); });
  });
  server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty()) reply(res, res.status, json{{"error", httplib::status_message(res.status)}});
  });
}

}  // namespace lumos::service
