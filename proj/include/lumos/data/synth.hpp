#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lumos/codec/image.hpp"
#include "lumos/instruct/scene.hpp"
#include "lumos/numcore/rng.hpp"

namespace lumos::data {

/// y = clamp(gain * x0^gamma + n), n ~ N(0, sigma^2) drawn from Rng(noise_seed)
/// in CHW order.
struct Degradation {
  double gain = 1.0;
  double gamma = 1.0;
  double sigma = 0.0;
  std::uint64_t noise_seed = 0;
};

struct PairedSample {
  std::string id;
  Image x0;  // normal light
  Image y;   // low light
  std::optional<instruct::SceneDescriptor> scene;
  std::optional<Degradation> degradation;
};

/// Random but self-consistent scene: sky light implies an open sky, shadows
/// fall away from the light, ambient light spreads shadows around objects.
instruct::SceneDescriptor random_scene(Rng& rng);

/// Renders the normal-light image of a scene at size x size.
Image render_scene(const instruct::SceneDescriptor& scene, std::size_t size);

Image degrade(const Image& x0, const Degradation& d);
/// The noise field degrade() adds, same layout as the image.
std::vector<float> degradation_noise(const Image& x0, const Degradation& d);

/// Draws gain in [0.05, 0.4], gamma in [1.5, 3], sigma in [0.01, 0.05].
Degradation random_degradation(Rng& rng);

PairedSample generate_scene(Rng& rng, std::size_t size = 64, std::string id = {});

/// n samples with ids 000000.. from a single seed.
std::vector<PairedSample> generate_dataset(std::size_t n, std::uint64_t seed, std::size_t size = 64);

void to_json(nlohmann::json& j, const Degradation& d);
void from_json(const nlohmann::json& j, Degradation& d);

}  // namespace lumos::data
