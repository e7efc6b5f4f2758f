#pragma once

#include <filesystem>
#include <stdexcept>
#include <vector>

#include "lumos/data/synth.hpp"

namespace lumos::data {

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Writes root/low/<id>.png, root/high/<id>.png and root/meta/<id>.json.
void write_dataset(const std::vector<PairedSample>& samples, const std::filesystem::path& root);

/// Pairs PNGs with matching stems in the two folders, sorted by stem. Each
/// image is center-cropped to size x size; a smaller image is an error.
std::vector<PairedSample> load_paired_dir(const std::filesystem::path& low_dir,
                                          const std::filesystem::path& high_dir, std::size_t size);

/// load_paired_dir on root/low and root/high, attaching root/meta/<id>.json
/// scene and degradation records when present.
std::vector<PairedSample> load_dataset(const std::filesystem::path& root, std::size_t size);

/// Deterministic split: the last n_val samples are validation.
struct Split {
  std::vector<PairedSample> train, val;
};
Split split_tail(std::vector<PairedSample> samples, std::size_t n_val);

}  // namespace lumos::data
