#include "lumos/data/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "lumos/numcore/tensor.hpp"

namespace lumos::data {

namespace {

constexpr std::size_t kWindow = 11;
constexpr double kSigma = 1.5;

void require_same(const Image& a, const Image& b, const char* op) {
  if (a.channels != b.channels || a.height != b.height || a.width != b.width) {
    throw ShapeError(std::string(op) + ": image shapes differ");
  }
}

std::vector<double> widen(const std::vector<float>& v) { return {v.begin(), v.end()}; }

std::array<double, kWindow> gaussian_1d() {
  std::array<double, kWindow> g{};
  double total = 0.0;
  for (std::size_t i = 0; i < kWindow; ++i) {
    const double x = static_cast<double>(i) - 5.0;
    g[i] = std::exp(-x * x / (2.0 * kSigma * kSigma));
    total += g[i];
  }
  for (double& v : g) v /= total;
  return g;
}

// Valid-mode separable filtering of an h x w plane.
std::vector<double> filter_valid(const std::vector<double>& x, std::size_t h, std::size_t w,
                                 const std::array<double, kWindow>& g) {
  const std::size_t ow = w - kWindow + 1, oh = h - kWindow + 1;
  std::vector<double> rows(h * ow);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x0 = 0; x0 < ow; ++x0) {
      double s = 0.0;
      for (std::size_t k = 0; k < kWindow; ++k) s += g[k] * x[y * w + x0 + k];
      rows[y * ow + x0] = s;
    }
  }
  std::vector<double> out(oh * ow);
  for (std::size_t y0 = 0; y0 < oh; ++y0) {
    for (std::size_t x = 0; x < ow; ++x) {
      double s = 0.0;
      for (std::size_t k = 0; k < kWindow; ++k) s += g[k] * rows[(y0 + k) * ow + x];
      out[y0 * ow + x] = s;
    }
  }
  return out;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

}  // namespace

double psnr(std::span<const double> a, std::span<const double> b, double peak) {
  if (a.size() != b.size()) throw ShapeError("psnr: sizes differ");
  if (a.empty()) throw ShapeError("psnr: empty input");
  // Neumaier-compensated sum of squared errors
  double se = 0.0, comp = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    const double term = d * d;
    const double t = se + term;
    comp += std::abs(se) >= term ? (se - t) + term : (term - t) + se;
    se = t;
  }
  const double mse = (se + comp) / static_cast<double>(a.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak) - 10.0 * std::log10(mse);
}

double psnr(const Image& a, const Image& b, double peak) {
  require_same(a, b, "psnr");
  return psnr(widen(a.data), widen(b.data), peak);
}

double ssim_plane(std::span<const double> a, std::span<const double> b, std::size_t h,
                  std::size_t w, double peak) {
  if (a.size() != h * w || b.size() != h * w) throw ShapeError("ssim: plane sizes differ");
  if (h < kWindow || w < kWindow) {
    throw ShapeError("ssim: image " + std::to_string(w) + "x" + std::to_string(h) +
                     " is smaller than the 11x11 window");
  }
  static const auto g = gaussian_1d();
  const double c1 = (0.01 * peak) * (0.01 * peak);
  const double c2 = (0.03 * peak) * (0.03 * peak);
  std::vector<double> va(a.begin(), a.end()), vb(b.begin(), b.end());
  std::vector<double> aa(h * w), bb(h * w), ab(h * w);
  for (std::size_t i = 0; i < h * w; ++i) {
    aa[i] = va[i] * va[i];
    bb[i] = vb[i] * vb[i];
    ab[i] = va[i] * vb[i];
  }
  const auto mu_a = filter_valid(va, h, w, g);
  const auto mu_b = filter_valid(vb, h, w, g);
  const auto e_aa = filter_valid(aa, h, w, g);
  const auto e_bb = filter_valid(bb, h, w, g);
  const auto e_ab = filter_valid(ab, h, w, g);
  std::vector<double> map(mu_a.size());
  for (std::size_t i = 0; i < map.size(); ++i) {
    const double ma = mu_a[i], mb = mu_b[i];
    const double var_a = e_aa[i] - ma * ma;
    const double var_b = e_bb[i] - mb * mb;
    const double cov = e_ab[i] - ma * mb;
    map[i] = ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) /
             ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
  }
  return mean_of(map);
}

double ssim(const Image& a, const Image& b, double peak) {
  require_same(a, b, "ssim");
  const std::size_t plane = a.height * a.width;
  double total = 0.0;
  for (std::size_t c = 0; c < a.channels; ++c) {
    const std::vector<double> pa(a.data.begin() + c * plane, a.data.begin() + (c + 1) * plane);
    const std::vector<double> pb(b.data.begin() + c * plane, b.data.begin() + (c + 1) * plane);
    total += ssim_plane(pa, pb, a.height, a.width, peak);
  }
  return total / static_cast<double>(a.channels);
}

void finalize(SeedResult& r) {
  double p = 0.0, s = 0.0;
  for (const ImageScore& i : r.images) {
    p += i.psnr;
    s += i.ssim;
  }
  const double n = static_cast<double>(r.images.size());
  r.mean_psnr = r.images.empty() ? 0.0 : p / n;
  r.mean_ssim = r.images.empty() ? 0.0 : s / n;
}

EvalReport aggregate(std::vector<SeedResult> seeds) {
  std::sort(seeds.begin(), seeds.end(),
            [](const SeedResult& a, const SeedResult& b) { return a.seed < b.seed; });
  EvalReport r;
  r.seeds = std::move(seeds);
  if (r.seeds.empty()) return r;
  const double n = static_cast<double>(r.seeds.size());
  for (const SeedResult& s : r.seeds) {
    r.mean_psnr += s.mean_psnr;
    r.mean_ssim += s.mean_ssim;
  }
  r.mean_psnr /= n;
  r.mean_ssim /= n;
  for (const SeedResult& s : r.seeds) {
    r.std_psnr += (s.mean_psnr - r.mean_psnr) * (s.mean_psnr - r.mean_psnr);
    r.std_ssim += (s.mean_ssim - r.mean_ssim) * (s.mean_ssim - r.mean_ssim);
  }
  r.std_psnr = std::sqrt(r.std_psnr / n);
  r.std_ssim = std::sqrt(r.std_ssim / n);
  return r;
}

namespace {

void put_psnr(nlohmann::json& j, const char* key, double v) {
  if (std::isinf(v)) {
    j[key] = nullptr;
    j[std::string(key) + "_infinite"] = true;
  } else {
    j[key] = v;
  }
}

}  // namespace

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json j;
  j["seeds"] = nlohmann::json::array();
  for (const SeedResult& s : r.seeds) {
    nlohmann::json js{{"seed", s.seed}, {"mean_ssim", s.mean_ssim}};
    put_psnr(js, "mean_psnr", s.mean_psnr);
    js["images"] = nlohmann::json::array();
    for (const ImageScore& i : s.images) {
      nlohmann::json ji{{"id", i.id}, {"ssim", i.ssim}};
      put_psnr(ji, "psnr", i.psnr);
      js["images"].push_back(std::move(ji));
    }
    j["seeds"].push_back(std::move(js));
  }
  put_psnr(j, "mean_psnr", r.mean_psnr);
  j["std_psnr"] = std::isfinite(r.std_psnr) ? nlohmann::json(r.std_psnr) : nlohmann::json(nullptr);
  j["mean_ssim"] = r.mean_ssim;
  j["std_ssim"] = r.std_ssim;
  put_psnr(j, "input_psnr", r.input_psnr);
  j["input_ssim"] = r.input_ssim;
  j["provenance"] = r.provenance;
  return j;
}

}  // namespace lumos::data
