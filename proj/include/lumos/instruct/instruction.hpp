#pragma once

#include <optional>
#include <string>
#include <vector>

#include "lumos/instruct/scene.hpp"

namespace lumos::instruct {

enum class Source { template_fill, external_vlm, manual, heuristic };

std::string to_string(Source s);

/// Which facets an instruction carries, in the fixed order lighting, shadows,
/// spatial.
struct FacetMask {
  bool lighting = true;
  bool shadows = true;
  bool spatial = true;

  bool any() const { return lighting || shadows || spatial; }
  /// "full", "empty", or a comma list of lighting/shadows/spatial.
  static FacetMask parse(const std::string& text);
  std::string str() const;
  bool operator==(const FacetMask&) const = default;
};

struct Instruction {
  std::string text;
  std::optional<std::string> lighting, shadows, spatial;
  Source source = Source::manual;
  /// Scene the text was generated from, when known.
  std::optional<SceneDescriptor> scene;
};

std::string lighting_text(const SceneDescriptor& scene);
std::string shadows_text(const SceneDescriptor& scene);
std::string spatial_text(const SceneDescriptor& scene);

/// Deterministic template fill. Present facets are joined by a single space;
/// an empty mask yields the empty instruction "".
Instruction synthesize_instruction(const SceneDescriptor& scene, FacetMask mask = {});

Instruction manual_instruction(std::string text);

/// Every word and punctuation mark the templates can emit, sorted.
const std::vector<std::string>& template_lexicon();

}  // namespace lumos::instruct
