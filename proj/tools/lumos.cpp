#include <httplib.h>

#include <CLI11.hpp>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "lumos/data/dataset.hpp"
#include "lumos/pipeline/eval.hpp"
#include "lumos/pipeline/sample.hpp"
#include "lumos/pipeline/train.hpp"
#include "lumos/service/service.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace lumos;
using namespace lumos::pipeline;

namespace {

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
};

Config base_config(const Globals& g) {
  Config c = g.config_path.empty() ? Config{} : load_config(g.config_path);
  if (g.seed) c.train.seed = *g.seed;
  return c;
}

// Model shape comes from the checkpoint; --config may still swap the
// describer and the sampling defaults.
void apply_inference_overrides(const Globals& g, ModelBundle& bundle) {
  if (g.config_path.empty()) return;
  const Config c = load_config(g.config_path);
  bundle.config.instruct = c.instruct;
  bundle.config.sample = c.sample;
}

fs::path out_dir(const Globals& g, const char* fallback) {
  fs::path p = g.out.empty() ? fs::path(fallback) : fs::path(g.out);
  fs::create_directories(p);
  return p;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << j.dump(2) << '\n';
}

std::vector<data::PairedSample> samples_for(const Config& c, const std::string& dir) {
  if (dir.empty()) return data::generate_dataset(c.data.n, c.data.seed, c.data.size);
  return data::load_dataset(dir, c.data.size);
}

httplib::Server* g_server = nullptr;
void stop_server(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lumos: instruction-conditioned latent diffusion for low-light enhancement"};
  app.require_subcommand(1);
  Globals g;
  std::uint64_t seed_value = 0;
  app.add_option("--config", g.config_path, "JSON config file")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed_value, "Seed override");
  app.add_option("--out", g.out, "Output directory (or file for eval)");

  // datagen
  auto* datagen = app.add_subcommand("datagen", "Write a synthetic paired dataset (low/, high/, meta/)");
  std::size_t dg_n = 0, dg_size = 0;
  datagen->add_option("--n", dg_n, "Number of pairs (default config data.n)");
  datagen->add_option("--size", dg_size, "Image side (default config data.size)");

  // train
  auto* train = app.add_subcommand("train", "Train codec and diffusion model");
  std::string tr_data, tr_resume, tr_codec;
  std::size_t tr_steps = 0;
  train->add_option("--data", tr_data, "Dataset root with low/ and high/ (default: synthetic from config)");
  train->add_option("--resume", tr_resume, "Checkpoint to continue from")->check(CLI::ExistingFile);
  train->add_option("--codec-from", tr_codec, "Reuse the codec of this checkpoint")->check(CLI::ExistingFile);
  train->add_option("--steps", tr_steps, "Override train.steps");

  // enhance
  auto* enh = app.add_subcommand("enhance", "Enhance one image with k passes");
  std::string en_ckpt, en_in, en_instruction;
  std::size_t en_k = 0, en_steps = 0;
  bool en_attention = false;
  enh->add_option("--ckpt", en_ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  enh->add_option("--in", en_in, "Low-light PNG")->required()->check(CLI::ExistingFile);
  enh->add_option("--instruction", en_instruction, "First-pass instruction; omit or \"auto\" to describe the input");
  enh->add_option("--k", en_k, "Passes (default sample.k)");
  enh->add_option("--steps", en_steps, "Sampling steps (default sample.S_steps)");
  enh->add_flag("--attention", en_attention, "Also write attention_<j>.json");

  // eval
  auto* ev = app.add_subcommand("eval", "Multi-seed PSNR/SSIM evaluation; prints an EvalReport");
  std::string ev_ckpt, ev_data;
  std::size_t ev_seeds = 5, ev_steps = 0, ev_k = 1, ev_limit = 0, ev_batch = 16;
  ev->add_option("--ckpt", ev_ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  ev->add_option("--data", ev_data, "Dataset root (default: validation tail of the synthetic set)");
  ev->add_option("--seeds", ev_seeds, "Number of seeds, starting at --seed (default 0)")->check(CLI::PositiveNumber);
  ev->add_option("--steps", ev_steps, "Sampling steps (default sample.S_steps)");
  ev->add_option("--k", ev_k, "Passes per image")->check(CLI::PositiveNumber);
  ev->add_option("--limit", ev_limit, "Use only the first N pairs");
  ev->add_option("--batch", ev_batch, "Images per sampling batch")->check(CLI::PositiveNumber);

  // serve
  auto* serve = app.add_subcommand("serve", "HTTP service");
  std::string sv_ckpt, sv_host = "127.0.0.1";
  int sv_port = 8080;
  service::ServiceOptions sv_opts;
  serve->add_option("--ckpt", sv_ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  serve->add_option("--host", sv_host, "Bind address");
  serve->add_option("--port", sv_port, "Port (0 picks a free one)");
  serve->add_option("--queue-depth", sv_opts.queue_depth, "Jobs allowed to wait");
  serve->add_option("--max-side", sv_opts.max_side, "Input crop limit");

  // instruct
  auto* ins = app.add_subcommand("instruct", "Print the instruction a provider would emit");
  std::string in_image, in_scene, in_facets;
  ins->add_option("--in", in_image, "Image to describe")->check(CLI::ExistingFile);
  ins->add_option("--scene", in_scene, "Scene JSON file (template provider)")->check(CLI::ExistingFile);
  ins->add_option("--facets", in_facets, "full | empty | comma list of lighting,shadows,spatial");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  if (seed_opt->count() > 0) g.seed = seed_value;

  try {
    if (datagen->parsed()) {
      Config c = base_config(g);
      if (g.seed) c.data.seed = *g.seed;
      const std::size_t n = dg_n ? dg_n : c.data.n;
      const std::size_t size = dg_size ? dg_size : c.data.size;
      const fs::path dir = out_dir(g, "data");
      data::write_dataset(data::generate_dataset(n, c.data.seed, size), dir);
      std::cout << json{{"pairs", n}, {"size", size}, {"seed", c.data.seed}, {"out", dir.string()}}.dump() << '\n';
      return 0;
    }

    if (train->parsed()) {
      auto on_log = [](const json& rec) { std::cout << rec.dump() << '\n' << std::flush; };
      const fs::path dir = out_dir(g, "run");
      if (!tr_resume.empty()) {
        LoadedCheckpoint ck = load_checkpoint(tr_resume);
        if (!ck.state) throw std::runtime_error(tr_resume + " holds no training state");
        if (tr_steps) ck.bundle->config.train.steps = tr_steps;
        const Config& c = ck.bundle->config;
        const auto split = data::split_tail(samples_for(c, tr_data), c.data.n_val);
        ck.bundle->apply_diffusion_policy();
        const auto train_items = prepare_items(*ck.bundle, split.train);
        const auto val_items = prepare_items(*ck.bundle, split.val);
        train_loop(*ck.bundle, train_items, val_items, *ck.state, {dir, on_log});
        return 0;
      }
      Config c = base_config(g);
      if (tr_steps) c.train.steps = tr_steps;
      c.validate();
      write_json(dir / "config.json", config_to_json(c));
      const auto split = data::split_tail(samples_for(c, tr_data), c.data.n_val);
      std::optional<LoadedCheckpoint> codec_ck;
      TrainRunOptions opts{dir, nullptr, on_log};
      if (!tr_codec.empty()) {
        codec_ck = load_checkpoint(tr_codec);
        opts.codec_source = codec_ck->bundle.get();
      }
      const TrainRun run = train_model(c, split.train, split.val, opts);
      std::cout << json{{"final", (dir / "final.ckpt").string()},
                        {"codec_val_psnr", run.codec.val_psnr},
                        {"init_val_mse", run.init_val_mse},
                        {"final_val_mse", run.final_val_mse},
                        {"seconds", run.seconds}}
                       .dump()
                << '\n';
      return 0;
    }

    if (enh->parsed()) {
      LoadedCheckpoint ck = load_checkpoint(en_ckpt);
      ModelBundle& b = *ck.bundle;
      apply_inference_overrides(g, b);
      const Image y = read_png(en_in);
      const std::size_t k = en_k ? en_k : b.config.sample.k;
      const std::size_t steps = en_steps ? en_steps : b.config.sample.S_steps;
      auto describer = make_describer(b.config.instruct);
      const instruct::Instruction first = (en_instruction.empty() || en_instruction == "auto")
                                              ? describer->describe(y, nullptr)
                                              : instruct::manual_instruction(en_instruction);
      const EnhancementJob job =
          iterative_enhance(b, y, first, k, g.seed.value_or(0), steps, describer.get(), en_attention);
      const fs::path dir = out_dir(g, ".");
      std::vector<std::string> names;
      for (std::size_t j = 0; j < job.passes.size(); ++j) {
        names.push_back("xhat_" + std::to_string(j + 1) + ".png");
        write_png(job.passes[j].image, dir / names.back());
        if (en_attention) {
          json maps = json::array();
          for (const auto& m : job.passes[j].attention) {
            maps.push_back({{"level", m.level}, {"layer", m.layer}, {"height", m.height}, {"width", m.width},
                            {"tokens", m.tokens}, {"weights", m.weights}});
          }
          write_json(dir / ("attention_" + std::to_string(j + 1) + ".json"), json{{"maps", maps}});
        }
      }
      json meta = job_to_json(job, names);
      meta["checkpoint_hash"] = ck.hash;
      meta["input"] = en_in;
      write_json(dir / "job.json", meta);
      for (const auto& p : job.passes) {
        if (p.warning) std::cerr << "warning: " << *p.warning << '\n';
      }
      std::cout << meta.dump() << '\n';
      return 0;
    }

    if (ev->parsed()) {
      LoadedCheckpoint ck = load_checkpoint(ev_ckpt);
      ModelBundle& b = *ck.bundle;
      apply_inference_overrides(g, b);
      std::vector<data::PairedSample> samples =
          ev_data.empty() ? data::split_tail(samples_for(b.config, ""), b.config.data.n_val).val
                          : data::load_dataset(ev_data, b.config.data.size);
      if (ev_limit && ev_limit < samples.size()) samples.resize(ev_limit);
      EvalOptions opt;
      opt.seeds.clear();
      for (std::size_t i = 0; i < ev_seeds; ++i) opt.seeds.push_back(g.seed.value_or(0) + i);
      opt.steps = ev_steps ? ev_steps : b.config.sample.S_steps;
      opt.k = ev_k;
      opt.batch = ev_batch;
      auto describer = make_describer(b.config.instruct);
      const data::EvalReport report = eval_run(b, samples, opt, describer.get());
      json j = data::to_json(report);
      j["provenance"]["checkpoint_hash"] = ck.hash;
      if (!g.out.empty()) write_json(g.out, j);
      std::cout << j.dump(2) << '\n';
      return 0;
    }

    if (serve->parsed()) {
      LoadedCheckpoint ck = load_checkpoint(sv_ckpt);
      apply_inference_overrides(g, *ck.bundle);
      auto describer = make_describer(ck.bundle->config.instruct);
      service::Service svc(std::move(ck), std::move(describer), sv_opts);
      httplib::Server server;
      svc.mount(server);
      g_server = &server;
      std::signal(SIGINT, stop_server);
      std::signal(SIGTERM, stop_server);
      const int port = sv_port == 0 ? server.bind_to_any_port(sv_host) : (server.bind_to_port(sv_host, sv_port) ? sv_port : -1);
      if (port < 0) throw std::runtime_error("cannot bind " + sv_host + ":" + std::to_string(sv_port));
      std::cout << json{{"listening", sv_host + ":" + std::to_string(port)}, {"checkpoint_hash", svc.checkpoint_hash()}}.dump()
                << '\n'
                << std::flush;
      server.listen_after_bind();
      return 0;
    }

    if (ins->parsed()) {
      const Config c = base_config(g);
      const instruct::FacetMask mask = in_facets.empty() ? c.instruct.facet_mask : instruct::FacetMask::parse(in_facets);
      instruct::Instruction out;
      if (!in_scene.empty()) {
        std::ifstream f(in_scene);
        out = instruct::synthesize_instruction(json::parse(f).get<instruct::SceneDescriptor>(), mask);
      } else if (!in_image.empty()) {
        InstructConfig ic = c.instruct;
        ic.facet_mask = mask;
        out = make_describer(ic)->describe(read_png(in_image), nullptr);
      } else {
        std::cerr << "instruct: give --in <image> or --scene <file>\n" << ins->help();
        return 1;
      }
      std::cout << instruction_to_json(out).dump() << '\n';
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\nconfig schema with defaults:\n"
              << config_to_json(Config{}).dump(2) << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
