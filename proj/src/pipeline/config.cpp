#include "lumos/pipeline/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>

namespace lumos::pipeline {

using nlohmann::json;

namespace {

// Reads fields from one object, remembering which keys were consumed so the
// rest can be reported as unknown.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(where(key) + " has the wrong type: " + j_.at(key).dump());
    }
  }

  void get_unsigned(const char* key, std::size_t& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const json& v = j_.at(key);
    if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
      throw ConfigError(where(key) + " must be a non-negative integer, got " + v.dump());
    }
    out = v.get<std::size_t>();
  }

  void get_seed(const char* key, std::uint64_t& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const json& v = j_.at(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
      throw ConfigError(where(key) + " must be a non-negative integer, got " + v.dump());
    }
    out = v.get<std::uint64_t>();
  }

  void get_sizes(const char* key, std::vector<std::size_t>& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const json& v = j_.at(key);
    if (!v.is_array()) throw ConfigError(where(key) + " must be an array");
    out.clear();
    for (const json& e : v) {
      if (!e.is_number_integer() || e.get<std::int64_t>() < 0) {
        throw ConfigError(where(key) + " entries must be non-negative integers");
      }
      out.push_back(e.get<std::size_t>());
    }
  }

  Reader child(const char* key) {
    seen_.insert(key);
    static const json empty = json::object();
    return Reader(j_.contains(key) ? j_.at(key) : empty, where(key));
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw ConfigError("unknown config key " + where(k));
    }
  }

 private:
  std::string where(const std::string& key = {}) const {
    if (key.empty()) return path_.empty() ? "<root>" : path_;
    return path_.empty() ? key : path_ + "." + key;
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

bool power_of_two(std::size_t v) { return v != 0 && (v & (v - 1)) == 0; }

}  // namespace

denoiser::UNetConfig Config::unet_config() const {
  denoiser::UNetConfig u;
  u.latent_channels = codec.c;
  u.base_channels = unet.base;
  u.channel_mults = unet.mults;
  u.attention_levels = unet.attention_levels;
  u.context_dim = ipfm.d;
  u.groups = unet.groups;
  return u;
}

void Config::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  if (schedule.kind != "linear") fail("schedule.kind must be \"linear\"");
  if (schedule.T < 1) fail("schedule.T must be >= 1");
  if (!(schedule.beta_start > 0 && schedule.beta_start <= schedule.beta_end && schedule.beta_end < 1))
    fail("schedule betas must satisfy 0 < beta_start <= beta_end < 1");
  if (unet.base == 0 || unet.mults.empty()) fail("unet.base and unet.mults must be non-empty");
  if (unet.attention_levels.empty()) fail("unet.attention_levels must name at least one level");
  for (std::size_t l : unet.attention_levels)
    if (l >= unet.mults.size()) fail("unet.attention_levels entry out of range");
  if (unet.groups == 0) fail("unet.groups must be positive");
  for (std::size_t m : unet.mults)
    if (m == 0 || (unet.base * m) % unet.groups != 0)
      fail("unet.groups must divide unet.base * mult at every level");
  if (ipfm.d == 0 || ipfm.d % 2 != 0) fail("ipfm.d must be even and positive");
  if (ipfm.n_query == 0) fail("ipfm.n_query must be positive");
  if (codec.mode != "identity" && codec.mode != "learned") fail("codec.mode must be identity|learned");
  if (codec.mode == "identity" && (codec.f != 1 || codec.c != 3)) fail("identity codec needs f=1, c=3");
  if (!power_of_two(codec.f)) fail("codec.f must be a power of two");
  if (instruct.provider != "heuristic" && instruct.provider != "external")
    fail("instruct.provider must be heuristic|external");
  if (instruct.provider == "external" && instruct.endpoint.empty())
    fail("instruct.endpoint is required for the external provider");
  if (train.batch == 0) fail("train.batch must be positive");
  if (!(train.lr > 0)) fail("train.lr must be positive");
  if (sample.S_steps < 1 || sample.S_steps > schedule.T) fail("sample.S_steps must be in 1..T");
  if (sample.k < 1) fail("sample.k must be >= 1");
  const std::size_t div = codec.f << (unet.mults.size() - 1);
  if (data.size == 0 || data.size % div != 0)
    fail("data.size must be divisible by codec.f * 2^(levels-1) = " + std::to_string(div));
  if (data.n_val > data.n) fail("data.n_val exceeds data.n");
}

Config config_from_json(const json& j) {
  Config c;
  Reader root(j, "");
  {
    Reader r = root.child("schedule");
    r.get("kind", c.schedule.kind);
    r.get_unsigned("T", c.schedule.T);
    r.get("beta_start", c.schedule.beta_start);
    r.get("beta_end", c.schedule.beta_end);
    r.finish();
  }
  {
    Reader r = root.child("unet");
    r.get_unsigned("base", c.unet.base);
    r.get_sizes("mults", c.unet.mults);
    r.get_sizes("attention_levels", c.unet.attention_levels);
    r.get_unsigned("groups", c.unet.groups);
    r.finish();
  }
  {
    Reader r = root.child("ipfm");
    std::string mode = ipfm::mode_name(c.ipfm.mode);
    r.get("mode", mode);
    try {
      c.ipfm.mode = ipfm::parse_mode(mode);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("ipfm.mode: ") + e.what());
    }
    r.get_unsigned("n_blocks", c.ipfm.n_blocks);
    r.get_unsigned("n_query", c.ipfm.n_query);
    r.get_unsigned("d", c.ipfm.d);
    r.get_unsigned("ffn_mult", c.ipfm.ffn_mult);
    r.finish();
  }
  {
    Reader r = root.child("codec");
    r.get("mode", c.codec.mode);
    r.get_unsigned("f", c.codec.f);
    r.get_unsigned("c", c.codec.c);
    r.get_unsigned("width", c.codec.width);
    r.finish();
  }
  {
    Reader r = root.child("instruct");
    r.get("provider", c.instruct.provider);
    std::string mask = c.instruct.facet_mask.str();
    r.get("facet_mask", mask);
    try {
      c.instruct.facet_mask = instruct::FacetMask::parse(mask);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("instruct.facet_mask: ") + e.what());
    }
    r.get("endpoint", c.instruct.endpoint);
    r.get("auth_header", c.instruct.auth_header);
    r.get_unsigned("timeout_ms", c.instruct.timeout_ms);
    r.get_unsigned("text_layers", c.instruct.text_layers);
    r.finish();
  }
  {
    Reader r = root.child("train");
    r.get_unsigned("steps", c.train.steps);
    r.get_unsigned("batch", c.train.batch);
    r.get("lr", c.train.lr);
    r.get("weight_decay", c.train.weight_decay);
    r.get("beta1", c.train.beta1);
    r.get("beta2", c.train.beta2);
    r.get("adam_eps", c.train.adam_eps);
    r.get("grad_clip", c.train.grad_clip);
    r.get("freeze_backbone", c.train.freeze_backbone);
    r.get_seed("seed", c.train.seed);
    r.get_unsigned("log_every", c.train.log_every);
    r.get_unsigned("val_every", c.train.val_every);
    r.get_unsigned("ckpt_every", c.train.ckpt_every);
    r.get_unsigned("codec_steps", c.train.codec_steps);
    r.get("codec_lr", c.train.codec_lr);
    r.finish();
  }
  {
    Reader r = root.child("sample");
    r.get_unsigned("S_steps", c.sample.S_steps);
    r.get_unsigned("k", c.sample.k);
    r.finish();
  }
  {
    Reader r = root.child("data");
    r.get_unsigned("size", c.data.size);
    r.get_unsigned("n", c.data.n);
    r.get_unsigned("n_val", c.data.n_val);
    r.get_seed("seed", c.data.seed);
    r.finish();
  }
  root.finish();
  c.validate();
  return c;
}

json config_to_json(const Config& c) {
  return {
      {"schedule",
       {{"kind", c.schedule.kind}, {"T", c.schedule.T}, {"beta_start", c.schedule.beta_start},
        {"beta_end", c.schedule.beta_end}}},
      {"unet",
       {{"base", c.unet.base}, {"mults", c.unet.mults}, {"attention_levels", c.unet.attention_levels},
        {"groups", c.unet.groups}}},
      {"ipfm",
       {{"mode", ipfm::mode_name(c.ipfm.mode)}, {"n_blocks", c.ipfm.n_blocks}, {"n_query", c.ipfm.n_query},
        {"d", c.ipfm.d}, {"ffn_mult", c.ipfm.ffn_mult}}},
      {"codec", {{"mode", c.codec.mode}, {"f", c.codec.f}, {"c", c.codec.c}, {"width", c.codec.width}}},
      {"instruct",
       {{"provider", c.instruct.provider}, {"facet_mask", c.instruct.facet_mask.str()},
        {"endpoint", c.instruct.endpoint}, {"auth_header", c.instruct.auth_header},
        {"timeout_ms", c.instruct.timeout_ms}, {"text_layers", c.instruct.text_layers}}},
      {"train",
       {{"steps", c.train.steps}, {"batch", c.train.batch}, {"lr", c.train.lr},
        {"weight_decay", c.train.weight_decay}, {"beta1", c.train.beta1}, {"beta2", c.train.beta2},
        {"adam_eps", c.train.adam_eps}, {"grad_clip", c.train.grad_clip},
        {"freeze_backbone", c.train.freeze_backbone}, {"seed", c.train.seed},
        {"log_every", c.train.log_every}, {"val_every", c.train.val_every},
        {"ckpt_every", c.train.ckpt_every}, {"codec_steps", c.train.codec_steps},
        {"codec_lr", c.train.codec_lr}}},
      {"sample", {{"S_steps", c.sample.S_steps}, {"k", c.sample.k}}},
      {"data", {{"size", c.data.size}, {"n", c.data.n}, {"n_val", c.data.n_val}, {"seed", c.data.seed}}},
  };
}

Config load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(f);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string config_hash(const Config& c) {
  // auth headers are secrets, not model identity
  json j = config_to_json(c);
  j["instruct"].erase("auth_header");
  const std::string s = j.dump();
  return hex64(fnv1a64(s.data(), s.size()));
}

}  // namespace lumos::pipeline
