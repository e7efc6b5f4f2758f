#include "lumos/instruct/scene.hpp"

#include <array>
#include <stdexcept>

namespace lumos::instruct {

const std::vector<Color>& object_palette() {
  static const std::vector<Color> p{
      {"red", 0.85f, 0.15f, 0.12f},   {"green", 0.2f, 0.7f, 0.25f},  {"blue", 0.15f, 0.3f, 0.85f},
      {"yellow", 0.95f, 0.85f, 0.2f}, {"orange", 0.95f, 0.55f, 0.1f}, {"purple", 0.55f, 0.2f, 0.7f},
      {"white", 0.95f, 0.95f, 0.95f}, {"cyan", 0.2f, 0.8f, 0.85f}};
  return p;
}

const std::vector<Color>& wall_palette() {
  static const std::vector<Color> p{{"beige", 0.85f, 0.78f, 0.62f},
                                    {"gray", 0.6f, 0.6f, 0.62f},
                                    {"pale", 0.9f, 0.9f, 0.88f},
                                    {"brown", 0.55f, 0.38f, 0.25f}};
  return p;
}

ShadowDirection shadow_for(LightPosition position) {
  switch (position) {
    case LightPosition::left: return ShadowDirection::right;
    case LightPosition::right: return ShadowDirection::left;
    case LightPosition::top: return ShadowDirection::down;
    case LightPosition::center: return ShadowDirection::around;
  }
  return ShadowDirection::around;
}

namespace {

template <class E, std::size_t N>
std::string name_of(E v, const std::array<const char*, N>& names) {
  return names.at(static_cast<std::size_t>(v));
}

template <class E, std::size_t N>
E parse_enum(const std::string& s, const std::array<const char*, N>& names, const char* what) {
  for (std::size_t i = 0; i < N; ++i)
    if (s == names[i]) return static_cast<E>(i);
  throw std::invalid_argument(std::string("unknown ") + what + " '" + s + "'");
}

constexpr std::array<const char*, 4> kSources{"window", "lamp", "sky", "none"};
constexpr std::array<const char*, 3> kIntensities{"bright", "moderate", "soft"};
constexpr std::array<const char*, 4> kPositions{"left", "right", "top", "center"};
constexpr std::array<const char*, 4> kShadows{"right", "left", "down", "around"};
constexpr std::array<const char*, 2> kShapes{"square", "circle"};
constexpr std::array<const char*, 5> kPlaces{"left", "right", "center", "top", "bottom"};

}  // namespace

std::string to_string(LightSource v) { return name_of(v, kSources); }
std::string to_string(Intensity v) { return name_of(v, kIntensities); }
std::string to_string(LightPosition v) { return name_of(v, kPositions); }
std::string to_string(ShadowDirection v) { return name_of(v, kShadows); }
std::string to_string(ObjectShape v) { return name_of(v, kShapes); }
std::string to_string(Place v) { return name_of(v, kPlaces); }

void to_json(nlohmann::json& j, const SceneObject& o) {
  j = {{"shape", to_string(o.shape)}, {"color", o.color}, {"place", to_string(o.place)},
       {"cx", o.cx}, {"cy", o.cy}, {"size", o.size}};
}

void from_json(const nlohmann::json& j, SceneObject& o) {
  o.shape = parse_enum<ObjectShape>(j.at("shape").get<std::string>(), kShapes, "shape");
  o.color = j.at("color").get<std::string>();
  o.place = parse_enum<Place>(j.at("place").get<std::string>(), kPlaces, "place");
  o.cx = j.at("cx").get<float>();
  o.cy = j.at("cy").get<float>();
  o.size = j.at("size").get<float>();
}

void to_json(nlohmann::json& j, const SceneDescriptor& s) {
  j = {{"light_source", to_string(s.source)},
       {"intensity", to_string(s.intensity)},
       {"light_position", to_string(s.position)},
       {"shadow_direction", to_string(s.shadow)},
       {"reflections", s.reflections},
       {"sky", s.sky},
       {"wall", s.wall},
       {"objects", s.objects}};
}

void from_json(const nlohmann::json& j, SceneDescriptor& s) {
  s.source = parse_enum<LightSource>(j.at("light_source").get<std::string>(), kSources, "light source");
  s.intensity = parse_enum<Intensity>(j.at("intensity").get<std::string>(), kIntensities, "intensity");
  s.position = parse_enum<LightPosition>(j.at("light_position").get<std::string>(), kPositions,
                                         "light position");
  s.shadow = parse_enum<ShadowDirection>(j.at("shadow_direction").get<std::string>(), kShadows,
                                         "shadow direction");
  s.reflections = j.at("reflections").get<bool>();
  s.sky = j.at("sky").get<bool>();
  s.wall = j.at("wall").get<std::string>();
  s.objects = j.at("objects").get<std::vector<SceneObject>>();
}

}  // namespace lumos::instruct
