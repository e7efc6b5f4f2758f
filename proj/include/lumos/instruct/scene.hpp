#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace lumos::instruct {

enum class LightSource { window, lamp, sky, none };
enum class Intensity { bright, moderate, soft };
enum class LightPosition { left, right, top, center };
enum class ShadowDirection { right, left, down, around };
enum class ObjectShape { square, circle };
enum class Place { left, right, center, top, bottom };

struct Color {
  std::string name;
  float r = 0, g = 0, b = 0;
};

/// Fixed palettes: every object and wall colour has exactly one name.
const std::vector<Color>& object_palette();
const std::vector<Color>& wall_palette();

struct SceneObject {
  ObjectShape shape = ObjectShape::square;
  std::string color;  // object_palette() name
  Place place = Place::center;
  float cx = 0.5f, cy = 0.5f, size = 0.2f;  // fractions of the image side
};

/// Ground-truth illumination and layout metadata of a synthetic scene.
struct SceneDescriptor {
  LightSource source = LightSource::window;
  Intensity intensity = Intensity::moderate;
  LightPosition position = LightPosition::left;
  ShadowDirection shadow = ShadowDirection::right;
  bool reflections = false;
  bool sky = false;  // open sky backdrop instead of a wall
  std::string wall;  // wall_palette() name, empty when sky
  std::vector<SceneObject> objects;
};

/// Shadows fall away from the light.
ShadowDirection shadow_for(LightPosition position);

std::string to_string(LightSource v);
std::string to_string(Intensity v);
std::string to_string(LightPosition v);
std::string to_string(ShadowDirection v);
std::string to_string(ObjectShape v);
std::string to_string(Place v);

void to_json(nlohmann::json& j, const SceneObject& o);
void from_json(const nlohmann::json& j, SceneObject& o);
void to_json(nlohmann::json& j, const SceneDescriptor& s);
void from_json(const nlohmann::json& j, SceneDescriptor& s);

}  // namespace lumos::instruct
