#include "lumos/data/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>

namespace lumos::data {

using instruct::Intensity;
using instruct::LightPosition;
using instruct::LightSource;
using instruct::ObjectShape;
using instruct::Place;
using instruct::SceneDescriptor;
using instruct::SceneObject;
using instruct::ShadowDirection;

namespace {

constexpr float kFloorLine = 0.72f;

struct Rgb {
  float r = 0, g = 0, b = 0;
};

Rgb color_of(const std::vector<instruct::Color>& palette, const std::string& name) {
  for (const auto& c : palette) {
    if (c.name == name) return {c.r, c.g, c.b};
  }
  throw std::invalid_argument("unknown colour '" + name + "'");
}

std::array<float, 2> anchor(Place p) {
  switch (p) {
    case Place::left: return {0.24f, 0.5f};
    case Place::right: return {0.76f, 0.5f};
    case Place::center: return {0.5f, 0.5f};
    case Place::top: return {0.5f, 0.24f};
    case Place::bottom: return {0.5f, 0.78f};
  }
  return {0.5f, 0.5f};
}

float level_of(Intensity i) {
  switch (i) {
    case Intensity::bright: return 1.0f;
    case Intensity::moderate: return 0.72f;
    case Intensity::soft: return 0.48f;
  }
  return 1.0f;
}

Rgb tint_of(LightSource s) {
  switch (s) {
    case LightSource::window: return {0.96f, 0.99f, 1.05f};
    case LightSource::lamp: return {1.08f, 0.95f, 0.78f};
    case LightSource::sky: return {1.0f, 1.0f, 1.0f};
    case LightSource::none: return {0.95f, 0.95f, 0.95f};
  }
  return {1, 1, 1};
}

std::array<float, 2> light_point(LightPosition p) {
  switch (p) {
    case LightPosition::left: return {-0.1f, 0.4f};
    case LightPosition::right: return {1.1f, 0.4f};
    case LightPosition::top: return {0.5f, -0.15f};
    case LightPosition::center: return {0.5f, 0.45f};
  }
  return {0.5f, 0.5f};
}

bool inside(const SceneObject& o, float x, float y, float grow = 1.0f) {
  const float h = 0.5f * o.size * grow;
  if (o.shape == ObjectShape::square) return std::abs(x - o.cx) <= h && std::abs(y - o.cy) <= h;
  const float dx = x - o.cx, dy = y - o.cy;
  return dx * dx + dy * dy <= h * h;
}

std::array<float, 2> shadow_offset(ShadowDirection d, float size) {
  const float s = 0.3f * size;
  switch (d) {
    case ShadowDirection::right: return {s, 0.1f * s};
    case ShadowDirection::left: return {-s, 0.1f * s};
    case ShadowDirection::down: return {0.0f, s};
    case ShadowDirection::around: return {0.0f, 0.0f};
  }
  return {0, 0};
}

// Albedo and shadow factor at one subsample.
Rgb albedo_at(const SceneDescriptor& s, float x, float y, float& shade) {
  Rgb base;
  if (s.sky) {
    if (y < 0.7f) {
      const float t = y / 0.7f;
      base = {0.42f + 0.38f * t, 0.62f + 0.26f * t, 0.95f + 0.03f * t};
    } else {
      base = {0.42f, 0.5f, 0.3f};
    }
  } else {
    base = color_of(instruct::wall_palette(), s.wall);
    const float stripe = 0.03f * std::sin(18.0f * x + 5.0f * y);
    base = {base.r + stripe, base.g + stripe, base.b + stripe};
    if (y >= kFloorLine) base = {base.r * 0.55f, base.g * 0.5f, base.b * 0.45f};
  }

  shade = 1.0f;
  for (const SceneObject& o : s.objects) {
    if (s.shadow == ShadowDirection::around) {
      if (inside(o, x, y, 1.35f)) shade = std::min(shade, 0.7f);
    } else {
      const auto off = shadow_offset(s.shadow, o.size);
      if (inside(o, x - off[0], y - off[1])) shade = std::min(shade, 0.55f);
    }
  }

  if (s.reflections && !s.sky && y >= kFloorLine) {
    for (const SceneObject& o : s.objects) {
      const float mirror_y = 2.0f * kFloorLine - y;
      if (inside(o, x, mirror_y)) {
        const Rgb c = color_of(instruct::object_palette(), o.color);
        base = {0.7f * base.r + 0.3f * c.r, 0.7f * base.g + 0.3f * c.g, 0.7f * base.b + 0.3f * c.b};
      }
    }
  }

  for (const SceneObject& o : s.objects) {
    if (inside(o, x, y)) {
      base = color_of(instruct::object_palette(), o.color);
      shade = 1.0f;
    }
  }
  return base;
}

float illumination(const SceneDescriptor& s, float x, float y) {
  const float level = level_of(s.intensity);
  if (s.source == LightSource::none) return level * 0.8f;
  const auto p = light_point(s.position);
  const float d = std::hypot(x - p[0], y - p[1]);
  return level * (0.55f + 0.45f * std::exp(-1.6f * d * d));
}

}  // namespace

SceneDescriptor random_scene(Rng& rng) {
  SceneDescriptor s;
  s.source = static_cast<LightSource>(rng.index(4));
  s.intensity = static_cast<Intensity>(rng.index(3));
  if (s.source == LightSource::sky) {
    s.position = LightPosition::top;
    s.sky = true;
  } else if (s.source == LightSource::none) {
    s.position = LightPosition::center;
  } else {
    s.position = static_cast<LightPosition>(rng.index(4));
  }
  s.shadow = s.source == LightSource::none ? ShadowDirection::around : instruct::shadow_for(s.position);
  if (!s.sky) {
    s.wall = instruct::wall_palette()[rng.index(instruct::wall_palette().size())].name;
    s.reflections = rng.uniform() < 0.5;
  }

  std::vector<Place> places{Place::left, Place::right, Place::center, Place::top, Place::bottom};
  const std::size_t n = 1 + rng.index(3);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = rng.index(places.size());
    SceneObject o;
    o.place = places[k];
    places.erase(places.begin() + static_cast<std::ptrdiff_t>(k));
    o.shape = static_cast<ObjectShape>(rng.index(2));
    o.color = instruct::object_palette()[rng.index(instruct::object_palette().size())].name;
    const auto a = anchor(o.place);
    o.cx = a[0] + static_cast<float>(rng.uniform(-0.04, 0.04));
    o.cy = a[1] + static_cast<float>(rng.uniform(-0.04, 0.04));
    o.size = static_cast<float>(rng.uniform(0.16, 0.28));
    s.objects.push_back(o);
  }
  return s;
}

Image render_scene(const SceneDescriptor& s, std::size_t size) {
  Image img(3, size, size);
  const Rgb tint = tint_of(s.source);
  const float inv = 1.0f / static_cast<float>(size);
  for (std::size_t py = 0; py < size; ++py) {
    for (std::size_t px = 0; px < size; ++px) {
      Rgb acc;
      // 2x2 supersampling for anti-aliased edges
      for (int sy = 0; sy < 2; ++sy) {
        for (int sx = 0; sx < 2; ++sx) {
          const float x = (static_cast<float>(px) + 0.25f + 0.5f * static_cast<float>(sx)) * inv;
          const float y = (static_cast<float>(py) + 0.25f + 0.5f * static_cast<float>(sy)) * inv;
          float shade = 1.0f;
          const Rgb a = albedo_at(s, x, y, shade);
          const float l = illumination(s, x, y) * shade;
          acc.r += a.r * l * tint.r;
          acc.g += a.g * l * tint.g;
          acc.b += a.b * l * tint.b;
        }
      }
      img.at(0, py, px) = 0.25f * acc.r;
      img.at(1, py, px) = 0.25f * acc.g;
      img.at(2, py, px) = 0.25f * acc.b;
    }
  }
  clamp01(img);
  return img;
}

std::vector<float> degradation_noise(const Image& x0, const Degradation& d) {
  std::vector<float> n(x0.data.size(), 0.0f);
  if (d.sigma == 0.0) return n;
  Rng rng(d.noise_seed);
  for (float& v : n) v = static_cast<float>(d.sigma * rng.normal());
  return n;
}

Image degrade(const Image& x0, const Degradation& d) {
  Image y = x0;
  const std::vector<float> n = degradation_noise(x0, d);
  for (std::size_t i = 0; i < y.data.size(); ++i) {
    const double v = d.gain * std::pow(static_cast<double>(x0.data[i]), d.gamma) + n[i];
    y.data[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
  }
  return y;
}

Degradation random_degradation(Rng& rng) {
  Degradation d;
  d.gain = rng.uniform(0.05, 0.4);
  d.gamma = rng.uniform(1.5, 3.0);
  d.sigma = rng.uniform(0.01, 0.05);
  d.noise_seed = rng.next_u64();
  return d;
}

PairedSample generate_scene(Rng& rng, std::size_t size, std::string id) {
  PairedSample s;
  s.id = std::move(id);
  s.scene = random_scene(rng);
  s.x0 = render_scene(*s.scene, size);
  const double target = mean_luma(s.x0);
  // gain < 1 and gamma > 1 make this hold except for pathological noise draws
  do {
    s.degradation = random_degradation(rng);
    s.y = degrade(s.x0, *s.degradation);
  } while (mean_luma(s.y) >= target);
  return s;
}

std::vector<PairedSample> generate_dataset(std::size_t n, std::uint64_t seed, std::size_t size) {
  Rng rng(seed);
  std::vector<PairedSample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    char id[24];
    std::snprintf(id, sizeof id, "%06zu", i);
    out.push_back(generate_scene(rng, size, id));
  }
  return out;
}

void to_json(nlohmann::json& j, const Degradation& d) {
  j = {{"gain", d.gain}, {"gamma", d.gamma}, {"sigma", d.sigma}, {"noise_seed", d.noise_seed}};
}

void from_json(const nlohmann::json& j, Degradation& d) {
  d.gain = j.at("gain").get<double>();
  d.gamma = j.at("gamma").get<double>();
  d.sigma = j.at("sigma").get<double>();
  d.noise_seed = j.at("noise_seed").get<std::uint64_t>();
}

}  // namespace lumos::data
