#include "lumos/pipeline/eval.hpp"

#include "lumos/pipeline/sample.hpp"
#include "lumos/pipeline/train.hpp"

namespace lumos::pipeline {

instruct::Instruction eval_instruction(const ModelBundle& bundle, const data::PairedSample& s) {
  if (s.scene) return training_instruction(s, bundle.config.instruct.facet_mask);
  instruct::HeuristicDescriber d(bundle.config.instruct.facet_mask);
  return d.describe(s.y, nullptr);
}

data::EvalReport eval_run(const ModelBundle& bundle, const std::vector<data::PairedSample>& samples,
                          const EvalOptions& options, instruct::Describer* describer) {
  if (options.k > 1 && describer == nullptr) throw std::invalid_argument("eval_run: k > 1 needs a describer");
  std::vector<instruct::Instruction> initial;
  for (const auto& s : samples) initial.push_back(eval_instruction(bundle, s));

  std::vector<data::SeedResult> results;
  for (std::uint64_t seed : options.seeds) {
    data::SeedResult r;
    r.seed = seed;
    for (std::size_t start = 0; start < samples.size(); start += options.batch) {
      const std::size_t n = std::min(options.batch, samples.size() - start);
      std::vector<const Image*> ys;
      std::vector<instruct::Instruction> current;
      for (std::size_t i = 0; i < n; ++i) {
        ys.push_back(&samples[start + i].y);
        current.push_back(initial[start + i]);
      }
      std::vector<Image> out;
      for (std::size_t pass = 0; pass < options.k; ++pass) {
        if (pass > 0) {
          for (std::size_t i = 0; i < n; ++i) {
            try {
              current[i] = describer->describe(out[i], &current[i]);
            } catch (const instruct::DescriberError&) {
              // keep the previous instruction, as iterative_enhance does
            }
          }
        }
        std::vector<std::string> texts;
        for (const auto& ins : current) texts.push_back(ins.text);
        // per-image streams keyed by global index, so chunking cannot change results
        std::vector<std::uint64_t> seeds;
        for (std::size_t i = 0; i < n; ++i) seeds.push_back(image_seed(seed, start + i));
        out = enhance_batch(bundle, ys, texts, seeds, options.steps);
      }
      for (std::size_t i = 0; i < n; ++i) {
        const auto& s = samples[start + i];
        r.images.push_back({s.id, data::psnr(out[i], s.x0), data::ssim(out[i], s.x0)});
      }
    }
    data::finalize(r);
    results.push_back(std::move(r));
  }

  data::EvalReport report = data::aggregate(std::move(results));
  double ip = 0.0, is = 0.0;
  for (const auto& s : samples) {
    ip += data::psnr(s.y, s.x0);
    is += data::ssim(s.y, s.x0);
  }
  if (!samples.empty()) {
    report.input_psnr = ip / static_cast<double>(samples.size());
    report.input_ssim = is / static_cast<double>(samples.size());
  }
  report.provenance = {{"config_hash", bundle.config_hash},
                       {"steps", options.steps},
                       {"k", options.k},
                       {"samples", samples.size()},
                       {"facet_mask", bundle.config.instruct.facet_mask.str()},
                       {"ipfm_mode", ipfm::mode_name(bundle.config.ipfm.mode)},
                       {"resolution", samples.empty() ? 0 : samples.front().x0.height},
                       {"seed_meaning", "sampling noise seed; data and weights fixed"}};
  return report;
}

}  // namespace lumos::pipeline
