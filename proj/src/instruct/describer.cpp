#include "lumos/instruct/describer.hpp"

#include <httplib.h>

#include <cmath>
#include <json.hpp>

namespace lumos::instruct {

const char* const kVlmPrompt =
    "Provide a detailed description of the lighting conditions (including light source, "
    "position, intensity), shadows and reflections distribution, and scene information in "
    "this image";

Instruction HeuristicDescriber::describe(const Image& image, const Instruction* previous) {
  SceneDescriptor scene;
  scene.source = LightSource::none;
  scene.wall = "gray";
  if (previous && previous->scene) scene = *previous->scene;

  const double m = mean_luma(image);
  scene.intensity = m >= bright_min ? Intensity::bright
                    : m >= moderate_min ? Intensity::moderate
                                        : Intensity::soft;

  // Left/right over the upper 70% (above a typical floor band); top against
  // the middle band, since the bottom of a scene is usually floor.
  const auto l = luma(image);
  const std::size_t h = image.height, w = image.width;
  const std::size_t floor_row = h * 7 / 10;
  double left = 0, right = 0, top = 0, middle = 0;
  double side_n = 0, top_n = 0, middle_n = 0;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double v = l[y * w + x];
      if (y < floor_row && 3 * x < w) left += v, side_n += 1;
      if (y < floor_row && 3 * x >= 2 * w) right += v;
      if (3 * y < h) top += v, top_n += 1;
      if (3 * y >= h && 3 * y < 2 * h) middle += v, middle_n += 1;
    }
  }
  const double dx = side_n > 0 ? (right - left) / side_n : 0.0;
  const double dy = top_n > 0 && middle_n > 0 ? top / top_n - middle / middle_n : 0.0;
  if (std::max(std::abs(dx), dy) < direction_min) {
    scene.position = LightPosition::center;
  } else if (std::abs(dx) >= dy) {
    scene.position = dx > 0 ? LightPosition::right : LightPosition::left;
  } else {
    scene.position = LightPosition::top;
  }
  scene.shadow = shadow_for(scene.position);

  Instruction ins = synthesize_instruction(scene, mask_);
  ins.source = Source::heuristic;
  return ins;
}

ExternalDescriber::ExternalDescriber(ExternalDescriberConfig config) : config_(std::move(config)) {
  const auto scheme = config_.url.find("://");
  if (scheme == std::string::npos) throw std::invalid_argument("describer url needs a scheme: " + config_.url);
  const auto slash = config_.url.find('/', scheme + 3);
  origin_ = config_.url.substr(0, slash);
  path_ = slash == std::string::npos ? "/" : config_.url.substr(slash);
}

Instruction ExternalDescriber::describe(const Image& image, const Instruction*) {
  httplib::Client client(origin_);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());
  httplib::Headers headers;
  if (!config_.auth_header.empty()) headers.emplace("Authorization", config_.auth_header);

  const nlohmann::json body{{"prompt", kVlmPrompt}, {"image_b64", base64_encode(encode_png(image))}};
  const auto start = std::chrono::steady_clock::now();
  const auto res = client.Post(path_, headers, body.dump(), "application/json");
  const auto elapsed = std::chrono::steady_clock::now() - start;
  if (!res) {
    const auto err = res.error();
    if (err == httplib::Error::ConnectionTimeout ||
        (err == httplib::Error::Read && elapsed >= config_.timeout * 9 / 10)) {
      throw DescriberTimeoutError("describer timed out after " +
                                  std::to_string(config_.timeout.count()) + " ms: " + config_.url);
    }
    throw DescriberConnectionError("describer request to " + config_.url +
                                   " failed: " + httplib::to_string(err));
  }
  if (res->status != 200) {
    throw DescriberReplyError("describer returned HTTP " + std::to_string(res->status));
  }
  nlohmann::json reply;
  try {
    reply = nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::exception& e) {
    throw DescriberReplyError(std::string("describer reply is not JSON: ") + e.what());
  }
  if (!reply.is_object() || !reply.contains("text") || !reply["text"].is_string()) {
    throw DescriberReplyError("describer reply lacks a string 'text' field");
  }
  Instruction ins;
  ins.text = reply["text"].get<std::string>();
  ins.source = Source::external_vlm;
  return ins;
}

}  // namespace lumos::instruct
