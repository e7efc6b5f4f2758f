#include "lumos/data/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <map>

namespace lumos::data {

namespace fs = std::filesystem;

namespace {

std::map<std::string, fs::path> pngs_by_stem(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DatasetError("not a directory: " + dir.string());
  std::map<std::string, fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png") out.emplace(entry.path().stem().string(), entry.path());
  }
  return out;
}

Image load_cropped(const fs::path& path, std::size_t size) {
  Image img;
  try {
    img = read_png(path);
  } catch (const ImageError& e) {
    throw DatasetError(path.string() + ": " + e.what());
  }
  if (img.height < size || img.width < size) {
    throw DatasetError(path.string() + ": " + std::to_string(img.width) + "x" +
                       std::to_string(img.height) + " is smaller than the training size " +
                       std::to_string(size));
  }
  return center_crop(img, size, size);
}

}  // namespace

void write_dataset(const std::vector<PairedSample>& samples, const fs::path& root) {
  for (const char* sub : {"low", "high", "meta"}) fs::create_directories(root / sub);
  for (const PairedSample& s : samples) {
    write_png(s.y, root / "low" / (s.id + ".png"));
    write_png(s.x0, root / "high" / (s.id + ".png"));
    nlohmann::json meta{{"id", s.id}};
    if (s.scene) meta["scene"] = *s.scene;
    if (s.degradation) meta["degradation"] = *s.degradation;
    std::ofstream f(root / "meta" / (s.id + ".json"));
    f << meta.dump(2) << '\n';
    if (!f) throw DatasetError("cannot write " + (root / "meta" / (s.id + ".json")).string());
  }
}

std::vector<PairedSample> load_paired_dir(const fs::path& low_dir, const fs::path& high_dir,
                                          std::size_t size) {
  const auto low = pngs_by_stem(low_dir);
  const auto high = pngs_by_stem(high_dir);
  std::vector<PairedSample> out;
  for (const auto& [stem, low_path] : low) {
    const auto it = high.find(stem);
    if (it == high.end()) continue;
    PairedSample s;
    s.id = stem;
    s.y = load_cropped(low_path, size);
    s.x0 = load_cropped(it->second, size);
    out.push_back(std::move(s));
  }
  if (out.empty()) {
    throw DatasetError("no matching file names between " + low_dir.string() + " and " +
                       high_dir.string());
  }
  return out;
}

std::vector<PairedSample> load_dataset(const fs::path& root, std::size_t size) {
  auto samples = load_paired_dir(root / "low", root / "high", size);
  for (PairedSample& s : samples) {
    const fs::path meta = root / "meta" / (s.id + ".json");
    if (!fs::exists(meta)) continue;
    std::ifstream f(meta);
    try {
      const auto j = nlohmann::json::parse(f);
      if (j.contains("scene")) s.scene = j.at("scene").get<instruct::SceneDescriptor>();
      if (j.contains("degradation")) s.degradation = j.at("degradation").get<Degradation>();
    } catch (const nlohmann::json::exception& e) {
      throw DatasetError(meta.string() + ": " + e.what());
    }
  }
  return samples;
}

Split split_tail(std::vector<PairedSample> samples, std::size_t n_val) {
  if (n_val > samples.size()) {
    throw DatasetError("validation size " + std::to_string(n_val) + " exceeds dataset size " +
                       std::to_string(samples.size()));
  }
  Split s;
  const auto cut = samples.end() - static_cast<std::ptrdiff_t>(n_val);
  s.val.assign(std::make_move_iterator(cut), std::make_move_iterator(samples.end()));
  samples.erase(cut, samples.end());
  s.train = std::move(samples);
  return s;
}

}  // namespace lumos::data
