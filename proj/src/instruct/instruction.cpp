#include "lumos/instruct/instruction.hpp"

#include <algorithm>
#include <set>
#include <sstream>
#include <stdexcept>

#include "lumos/instruct/tokenizer.hpp"

namespace lumos::instruct {

std::string to_string(Source s) {
  switch (s) {
    case Source::template_fill: return "template";
    case Source::external_vlm: return "external_vlm";
    case Source::manual: return "manual";
    case Source::heuristic: return "heuristic";
  }
  return "?";
}

FacetMask FacetMask::parse(const std::string& text) {
  if (text == "full") return {};
  if (text == "empty" || text.empty()) return {false, false, false};
  FacetMask m{false, false, false};
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item == "lighting") {
      m.lighting = true;
    } else if (item == "shadows") {
      m.shadows = true;
    } else if (item == "spatial") {
      m.spatial = true;
    } else {
      throw std::invalid_argument("unknown facet '" + item + "' (lighting|shadows|spatial)");
    }
  }
  return m;
}

std::string FacetMask::str() const {
  if (lighting && shadows && spatial) return "full";
  if (!any()) return "empty";
  std::string out;
  auto add = [&](bool on, const char* name) {
    if (!on) return;
    if (!out.empty()) out += ',';
    out += name;
  };
  add(lighting, "lighting");
  add(shadows, "shadows");
  add(spatial, "spatial");
  return out;
}

namespace {

const char* source_phrase(LightSource s) {
  switch (s) {
    case LightSource::window: return "natural light from a window";
    case LightSource::lamp: return "warm artificial light from a lamp";
    case LightSource::sky: return "natural daylight from the sky";
    case LightSource::none: return "dim ambient light";
  }
  return "";
}

const char* position_phrase(LightPosition p) {
  switch (p) {
    case LightPosition::left: return "on the left";
    case LightPosition::right: return "on the right";
    case LightPosition::top: return "from above";
    case LightPosition::center: return "at the center";
  }
  return "";
}

const char* shadow_phrase(ShadowDirection d) {
  switch (d) {
    case ShadowDirection::right: return "Shadows fall toward the right";
    case ShadowDirection::left: return "Shadows fall toward the left";
    case ShadowDirection::down: return "Shadows fall toward the bottom";
    case ShadowDirection::around: return "Shadows spread evenly around the objects";
  }
  return "";
}

const char* place_phrase(Place p) {
  switch (p) {
    case Place::left: return "on the left";
    case Place::right: return "on the right";
    case Place::center: return "in the center";
    case Place::top: return "near the top";
    case Place::bottom: return "near the bottom";
  }
  return "";
}

std::string join_items(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i > 0) out += i + 1 == items.size() ? " and " : ", ";
    out += items[i];
  }
  return out;
}

}  // namespace

std::string lighting_text(const SceneDescriptor& s) {
  return std::string("The scene is lit by ") + source_phrase(s.source) + " " +
         position_phrase(s.position) + ", and the light is " + to_string(s.intensity) + ".";
}

std::string shadows_text(const SceneDescriptor& s) {
  return std::string(shadow_phrase(s.shadow)) +
         (s.reflections ? ", and faint reflections are visible on the floor."
                        : ", with no visible reflections.");
}

std::string spatial_text(const SceneDescriptor& s) {
  std::vector<std::string> items;
  for (const SceneObject& o : s.objects) {
    items.push_back("a " + o.color + " " + to_string(o.shape) + " " + place_phrase(o.place));
  }
  std::string text = "The scene shows ";
  text += items.empty() ? std::string("no distinct objects") : join_items(items);
  text += s.sky ? " under an open sky." : " in front of a " + s.wall + " wall.";
  return text;
}

Instruction synthesize_instruction(const SceneDescriptor& scene, FacetMask mask) {
  Instruction ins;
  ins.source = Source::template_fill;
  ins.scene = scene;
  if (mask.lighting) ins.lighting = lighting_text(scene);
  if (mask.shadows) ins.shadows = shadows_text(scene);
  if (mask.spatial) ins.spatial = spatial_text(scene);
  for (const auto* part : {&ins.lighting, &ins.shadows, &ins.spatial}) {
    if (!part->has_value()) continue;
    if (!ins.text.empty()) ins.text += ' ';
    ins.text += **part;
  }
  return ins;
}

Instruction manual_instruction(std::string text) {
  Instruction ins;
  ins.text = std::move(text);
  ins.source = Source::manual;
  return ins;
}

const std::vector<std::string>& template_lexicon() {
  static const std::vector<std::string> words = [] {
    std::vector<std::string> fragments{
        "The scene is lit by , and the light is .", ", and faint reflections are visible on the floor.",
        ", with no visible reflections.", "The scene shows no distinct objects under an open sky.",
        "in front of a wall", "a and"};
    for (auto s : {LightSource::window, LightSource::lamp, LightSource::sky, LightSource::none})
      fragments.push_back(source_phrase(s));
    for (auto p : {LightPosition::left, LightPosition::right, LightPosition::top, LightPosition::center})
      fragments.push_back(position_phrase(p));
    for (auto i : {Intensity::bright, Intensity::moderate, Intensity::soft}) fragments.push_back(to_string(i));
    for (auto d : {ShadowDirection::right, ShadowDirection::left, ShadowDirection::down,
                   ShadowDirection::around})
      fragments.push_back(shadow_phrase(d));
    for (auto p : {Place::left, Place::right, Place::center, Place::top, Place::bottom})
      fragments.push_back(place_phrase(p));
    for (auto s : {ObjectShape::square, ObjectShape::circle}) fragments.push_back(to_string(s));
    for (const Color& c : object_palette()) fragments.push_back(c.name);
    for (const Color& c : wall_palette()) fragments.push_back(c.name);
    std::set<std::string> unique;
    for (const std::string& f : fragments) {
      for (std::string& piece : split_pieces(f)) unique.insert(std::move(piece));
    }
    return std::vector<std::string>(unique.begin(), unique.end());
  }();
  return words;
}

}  // namespace lumos::instruct
