#pragma once

#include <cstdint>
#include <vector>

#include "lumos/data/metrics.hpp"
#include "lumos/data/synth.hpp"
#include "lumos/instruct/describer.hpp"
#include "lumos/pipeline/bundle.hpp"

namespace lumos::pipeline {

struct EvalOptions {
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::size_t steps = 50;
  std::size_t k = 1;
  std::size_t batch = 16;
};

/// First-pass instruction for evaluation: the training instruction when the
/// sample has a scene, else the heuristic description of y.
instruct::Instruction eval_instruction(const ModelBundle& bundle, const data::PairedSample& s);

/// Enhances every sample once per seed (k iterative passes) and scores the
/// final pass against x0. Provenance records the config hash, steps, k and
/// the sample count.
data::EvalReport eval_run(const ModelBundle& bundle, const std::vector<data::PairedSample>& samples,
                          const EvalOptions& options, instruct::Describer* describer = nullptr);

}  // namespace lumos::pipeline
