#include "lumos/pipeline/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <limits>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace lumos::pipeline {

using nlohmann::json;

namespace {

constexpr const char* kFormat = "lumos-checkpoint";
constexpr int kVersion = 1;

template <class T>
void append_le(std::string& out, std::span<const T> values) {
  const std::size_t start = out.size();
  out.resize(start + values.size() * sizeof(T));
  char* dst = out.data() + start;
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(dst, values.data(), values.size() * sizeof(T));
  } else {
    for (std::size_t i = 0; i < values.size(); ++i) {
      char b[sizeof(T)];
      std::memcpy(b, &values[i], sizeof(T));
      for (std::size_t k = 0; k < sizeof(T); ++k) dst[i * sizeof(T) + k] = b[sizeof(T) - 1 - k];
    }
  }
}

template <class T>
void read_le(const char* src, std::span<T> out) {
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(out.data(), src, out.size() * sizeof(T));
  } else {
    for (std::size_t i = 0; i < out.size(); ++i) {
      char b[sizeof(T)];
      for (std::size_t k = 0; k < sizeof(T); ++k) b[k] = src[i * sizeof(T) + sizeof(T) - 1 - k];
      std::memcpy(&out[i], b, sizeof(T));
    }
  }
}

struct Entry {
  std::string name;
  DType dtype;
  Shape shape;
  bool trainable = false;
};

json entry_json(const Entry& e, std::size_t offset, std::size_t len) {
  return {{"name", e.name},     {"dtype", dtype_name(e.dtype)}, {"shape", e.shape},
          {"byte_offset", offset}, {"byte_len", len},          {"trainable", e.trainable}};
}

// JSON has no infinities: unbounded latent limits are stored as null.
json bound(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
double unbound(const json& j, double missing) { return j.is_null() ? missing : j.get<double>(); }

std::string hash_of(const json& manifest_without_hash, const std::string& payload) {
  const std::string m = manifest_without_hash.dump();
  std::uint64_t h = fnv1a64(m.data(), m.size());
  h = fnv1a64(payload.data(), payload.size(), h);
  return hex64(h);
}

}  // namespace

std::string tensor_hash(const Tensor& t) {
  std::string bytes = dtype_name(t.dtype()) + shape_str(t.shape());
  dispatch(t.dtype(), [&]<class T>() { append_le<T>(bytes, t.data<T>()); });
  return hex64(fnv1a64(bytes.data(), bytes.size()));
}

std::string serialize_checkpoint(ModelBundle& bundle, const TrainingState* state) {
  std::string payload;
  json tensors = json::array();
  for (const auto& [name, p] : bundle.parameters()) {
    const Tensor& t = p->tensor;
    const std::size_t offset = payload.size();
    dispatch(t.dtype(), [&]<class T>() { append_le<T>(payload, t.data<T>()); });
    tensors.push_back(entry_json({name, t.dtype(), t.shape(), p->trainable}, offset, payload.size() - offset));
  }

  json manifest{{"format", kFormat},
                {"version", kVersion},
                {"config", config_to_json(bundle.config)},
                {"config_hash", bundle.config_hash},
                {"schedule",
                 {{"kind", bundle.schedule.kind},
                  {"T", bundle.schedule.T},
                  {"beta_start", bundle.schedule.beta_start},
                  {"beta_end", bundle.schedule.beta_end}}},
                {"latent",
                 {{"shift", bundle.latent.shift},
                  {"scale", bundle.latent.scale},
                  {"lo", bound(bundle.latent.lo)},
                  {"hi", bound(bundle.latent.hi)}}}};
  if (state) {
    json opt{{"t", state->optimizer.t},
             {"lr", state->optimizer.config.lr},
             {"beta1", state->optimizer.config.beta1},
             {"beta2", state->optimizer.config.beta2},
             {"eps", state->optimizer.config.eps},
             {"weight_decay", state->optimizer.config.weight_decay}};
    for (const auto* table : {&state->optimizer.m, &state->optimizer.v}) {
      const char* prefix = table == &state->optimizer.m ? "optim.m." : "optim.v.";
      for (const auto& [name, values] : *table) {
        const std::size_t offset = payload.size();
        append_le<double>(payload, values);
        tensors.push_back(entry_json({prefix + name, DType::f64, {values.size()}, false}, offset,
                                     payload.size() - offset));
      }
    }
    manifest["training"] = {{"step", state->step}, {"optimizer", opt}, {"rng", state->rng.state()}};
  }
  manifest["tensors"] = std::move(tensors);
  manifest["payload_bytes"] = payload.size();
  const std::string hash = hash_of(manifest, payload);
  manifest["checkpoint_hash"] = hash;
  return manifest.dump() + "\n" + payload;
}

void save_checkpoint(const std::filesystem::path& path, ModelBundle& bundle, const TrainingState* state) {
  const std::string bytes = serialize_checkpoint(bundle, state);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw CheckpointError("cannot write checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

LoadedCheckpoint parse_checkpoint(const std::string& bytes) {
  const std::size_t nl = bytes.find('\n');
  if (nl == std::string::npos) throw CheckpointError("checkpoint has no manifest line");
  json manifest;
  try {
    manifest = json::parse(bytes.substr(0, nl));
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("checkpoint manifest is not JSON: ") + e.what());
  }
  if (manifest.value("format", "") != kFormat || manifest.value("version", 0) != kVersion) {
    throw CheckpointError("not a lumos checkpoint (format/version mismatch)");
  }
  const std::string payload = bytes.substr(nl + 1);
  if (manifest.value("payload_bytes", std::size_t{0}) != payload.size()) {
    throw CheckpointError("checkpoint payload is truncated or padded");
  }
  json unhashed = manifest;
  unhashed.erase("checkpoint_hash");
  const std::string hash = hash_of(unhashed, payload);
  if (hash != manifest.value("checkpoint_hash", "")) throw CheckpointError("checkpoint hash mismatch");

  LoadedCheckpoint out;
  out.manifest = manifest;
  out.hash = hash;
  Config config;
  try {
    config = config_from_json(manifest.at("config"));
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("checkpoint config: ") + e.what());
  }
  out.bundle = std::make_unique<ModelBundle>(config);
  ModelBundle& b = *out.bundle;
  const json& lat = manifest.at("latent");
  constexpr double inf = std::numeric_limits<double>::infinity();
  b.latent = {lat.at("shift").get<double>(), lat.at("scale").get<double>(), unbound(lat.at("lo"), -inf),
              unbound(lat.at("hi"), inf)};

  std::map<std::string, const json*> entries;
  for (const json& e : manifest.at("tensors")) entries[e.at("name").get<std::string>()] = &e;
  auto locate = [&](const std::string& name, DType dtype, const Shape& shape) -> const char* {
    const auto it = entries.find(name);
    if (it == entries.end()) throw CheckpointError("checkpoint lacks tensor " + name);
    const json& e = *it->second;
    if (e.at("dtype").get<std::string>() != dtype_name(dtype) || e.at("shape").get<Shape>() != shape) {
      throw CheckpointError("checkpoint tensor " + name + " has dtype/shape " + e.at("dtype").dump() +
                            e.at("shape").dump() + ", expected " + dtype_name(dtype) + shape_str(shape));
    }
    const std::size_t off = e.at("byte_offset").get<std::size_t>();
    const std::size_t len = e.at("byte_len").get<std::size_t>();
    const std::size_t elem = dtype == DType::f32 ? 4 : 8;
    if (len != numel_of(shape) * elem || off + len > payload.size()) {
      throw CheckpointError("checkpoint tensor " + name + " has an invalid byte range");
    }
    return payload.data() + off;
  };

  for (const auto& [name, p] : b.parameters()) {
    Tensor& t = p->tensor;
    const char* src = locate(name, t.dtype(), t.shape());
    dispatch(t.dtype(), [&]<class T>() { read_le<T>(src, t.mutable_data<T>()); });
    p->set_trainable(entries.at(name)->at("trainable").get<bool>());
  }

  if (manifest.contains("training")) {
    const json& tr = manifest.at("training");
    const json& opt = tr.at("optimizer");
    TrainingState st;
    st.step = tr.at("step").get<std::size_t>();
    st.optimizer.config = {opt.at("lr").get<double>(), opt.at("beta1").get<double>(),
                           opt.at("beta2").get<double>(), opt.at("eps").get<double>(),
                           opt.at("weight_decay").get<double>()};
    st.optimizer.t = opt.at("t").get<std::size_t>();
    st.rng.restore(tr.at("rng").get<std::string>());
    for (const auto& [name, e] : entries) {
      for (const auto& [prefix, table] : {std::pair{std::string("optim.m."), &st.optimizer.m},
                                          std::pair{std::string("optim.v."), &st.optimizer.v}}) {
        if (name.rfind(prefix, 0) != 0) continue;
        const Shape shape = e->at("shape").get<Shape>();
        const char* src = locate(name, DType::f64, shape);
        auto& values = (*table)[name.substr(prefix.size())];
        values.resize(numel_of(shape));
        read_le<double>(src, std::span<double>(values));
      }
    }
    out.state = std::move(st);
  }
  return out;
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_checkpoint(ss.str());
}

}  // namespace lumos::pipeline
