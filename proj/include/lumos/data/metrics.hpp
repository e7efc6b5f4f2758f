#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "lumos/codec/image.hpp"

namespace lumos::data {

/// 10 log10(peak^2 / MSE). Identical inputs give +infinity.
double psnr(std::span<const double> a, std::span<const double> b, double peak = 1.0);
double psnr(const Image& a, const Image& b, double peak = 1.0);

/// Windowed SSIM: 11x11 Gaussian window (sigma 1.5) over valid positions,
/// C1 = (0.01 peak)^2, C2 = (0.03 peak)^2, averaged over windows and channels.
/// `a` and `b` are single-channel planes of h x w.
double ssim_plane(std::span<const double> a, std::span<const double> b, std::size_t h,
                  std::size_t w, double peak = 1.0);
double ssim(const Image& a, const Image& b, double peak = 1.0);

struct ImageScore {
  std::string id;
  double psnr = 0.0;
  double ssim = 0.0;
};

struct SeedResult {
  std::uint64_t seed = 0;
  std::vector<ImageScore> images;
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
};

/// Fills mean_psnr and mean_ssim from images.
void finalize(SeedResult& r);

struct EvalReport {
  std::vector<SeedResult> seeds;  // ascending seed
  double mean_psnr = 0.0, std_psnr = 0.0;
  double mean_ssim = 0.0, std_ssim = 0.0;
  /// Scores of the unenhanced inputs against the references.
  double input_psnr = 0.0, input_ssim = 0.0;
  nlohmann::json provenance = nlohmann::json::object();
};

/// Cross-seed mean and population std of the per-seed means. Seeds are sorted
/// first, so the result does not depend on their order.
EvalReport aggregate(std::vector<SeedResult> seeds);

/// Infinite PSNR values serialise as null with "psnr_infinite": true.
nlohmann::json to_json(const EvalReport& report);

}  // namespace lumos::data
