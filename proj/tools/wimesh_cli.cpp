// SPDX-License-Identifier: Apache-2.0
//
// wimesh command-line front end: scene simulation, CSI sanitation, 2D AoA
// estimation, body-image extraction, mesh fitting, metrics, and benchmarks.

#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "wimesh/pipeline.hpp"

namespace {

namespace fs = std::filesystem;
using namespace wimesh;

struct CommonFlags {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::string search_mode;
  std::optional<double> snr_db;
  std::optional<int> frames;
  std::optional<int> receivers;
};

void add_common(CLI::App* cmd, CommonFlags* flags, bool config_required = true) {
  auto* opt = cmd->add_option("--config", flags->config_path, "pipeline config JSON");
  if (config_required) opt->required();
  cmd->add_option("--out", flags->out_dir, "output directory");
  cmd->add_option("--seed", flags->seed, "seed recorded in every output");
  cmd->add_option("--search", flags->search_mode, "search mode")
      ->check(CLI::IsMember({"exhaustive", "coarse"}));
  cmd->add_option("--snr-db", flags->snr_db, "override scene SNR (dB)");
  cmd->add_option("--frames", flags->frames, "number of frames");
  cmd->add_option("--receivers", flags->receivers, "receiver count")
      ->check(CLI::IsMember({1, 2}));
}

PipelineConfig load_config(const CommonFlags& flags) {
  PipelineConfig cfg;
  if (!flags.config_path.empty()) {
    if (!fs::exists(flags.config_path))
      throw MissingInputError(flags.config_path + ": config file not found");
    cfg = PipelineConfig::from_json_file(flags.config_path);
  }
  if (!flags.out_dir.empty()) cfg.out_dir = flags.out_dir;
  if (flags.seed) cfg.seed = *flags.seed;
  if (flags.search_mode == "exhaustive") cfg.search.mode = SearchMode::exhaustive;
  if (flags.search_mode == "coarse") cfg.search.mode = SearchMode::coarse_to_fine;
  if (flags.snr_db) cfg.snr_override_db = *flags.snr_db;
  if (flags.frames) cfg.frames = *flags.frames;
  if (flags.receivers) cfg.num_receivers = *flags.receivers;
  return cfg;
}

void require_input(const std::string& path) {
  if (!fs::exists(path)) throw MissingInputError(path + ": input not found");
}

int cmd_simulate(const CommonFlags& flags, const std::string& scene_arg) {
  PipelineConfig cfg = load_config(flags);
  if (!scene_arg.empty()) cfg.scene_path = scene_arg;
  if (cfg.scene_path.empty()) throw ConfigError("simulate: no scene given");
  const SceneSpec spec = load_scene(cfg.scene_path);
  fs::create_directories(cfg.out_dir);
  const std::string hash = cfg.config_hash();
  const auto traces = simulate_traces(spec, cfg);
  for (std::size_t r = 0; r < traces.size(); ++r)
    write_trace(cfg.out_dir + "/rx" + std::to_string(r) + ".wcsi", traces[r]);
  if (!spec.body_params.empty())
    write_params_file(cfg.out_dir + "/gt_params.json", spec.body_params, hash, cfg.seed);
  std::printf("simulate: %zu receiver trace(s), %d frames x %d packets -> %s\n",
              traces.size(), cfg.frames, cfg.packets_per_frame, cfg.out_dir.c_str());
  return 0;
}

int cmd_sanitize(const std::string& in_path, const std::string& out_path) {
  require_input(in_path);
  const CsiTrace trace = read_trace(in_path);
  CsiTrace clean = sanitize(trace);
  quantize_trace(&clean);
  write_trace(out_path, clean);
  std::printf("sanitize: %zu packets -> %s\n", clean.packets.size(), out_path.c_str());
  return 0;
}

int cmd_estimate(const CommonFlags& flags, const std::string& in_path, int receiver) {
  PipelineConfig cfg = load_config(flags);
  require_input(in_path);
  const CsiTrace trace = read_trace(in_path);
  fs::create_directories(cfg.out_dir);
  const std::string provenance =
      "config " + cfg.config_hash() + " seed " + std::to_string(cfg.seed);
  EstimateStats stats;
  const auto images = estimate_frames(cfg, trace, receiver, &stats);
  for (std::size_t f = 0; f < images.size(); ++f) {
    const std::string stem = cfg.out_dir + "/aoa_rx" + std::to_string(receiver) + "_f" +
                             (f < 10 ? "0" : "") + std::to_string(f);
    write_image_pgm(stem + ".pgm", images[f].values, provenance);
    write_image_csv(stem + ".csv", images[f].values, provenance);
  }
  std::printf("estimate: %zu frame(s), %llu steering evaluations\n", images.size(),
              static_cast<unsigned long long>(stats.steering_evaluations));
  return 0;
}

int cmd_extract(const CommonFlags& flags, const std::string& in_dir) {
  PipelineConfig cfg = load_config(flags);
  std::array<std::vector<AoaImage>, kTensorReceivers> images;
  for (int r = 0; r < kTensorReceivers; ++r) {
    for (int f = 0;; ++f) {
      const std::string path = in_dir + "/aoa_rx" + std::to_string(r) + "_f" +
                               (f < 10 ? "0" : "") + std::to_string(f) + ".csv";
      if (!fs::exists(path)) break;
      AoaImage img;
      img.values = read_image_csv(path);
      img.frame_index = f;
      img.receiver_index = r;
      images[r].push_back(std::move(img));
    }
    if (images[r].empty())
      throw MissingInputError(in_dir + ": no aoa_rx" + std::to_string(r) + "_f*.csv frames");
  }
  fs::create_directories(cfg.out_dir);
  const std::string provenance =
      "config " + cfg.config_hash() + " seed " + std::to_string(cfg.seed);
  const ExtractResult extract = extract_bodies(cfg, images);
  for (int r = 0; r < kTensorReceivers; ++r) {
    for (std::size_t f = 0; f < extract.bodies[r].size(); ++f) {
      const std::string stem = cfg.out_dir + "/body_rx" + std::to_string(r) + "_f" +
                               (f < 10 ? "0" : "") + std::to_string(f);
      write_image_pgm(stem + ".pgm", extract.bodies[r][f].values, provenance);
      write_image_csv(stem + ".csv", extract.bodies[r][f].values, provenance);
    }
    write_image_pgm(cfg.out_dir + "/composite_rx" + std::to_string(r) + ".pgm",
                    extract.aggregate.composite[r], provenance);
  }
  write_tensor(cfg.out_dir + "/tensor.wmt", extract.aggregate.tensor);
  std::printf("extract: tensor + %d body frames per receiver -> %s\n", kTensorFrames,
              cfg.out_dir.c_str());
  return 0;
}

int cmd_fit(const CommonFlags& flags, const std::string& tensor_path,
            const std::string& scene_arg) {
  PipelineConfig cfg = load_config(flags);
  if (!scene_arg.empty()) cfg.scene_path = scene_arg;
  if (cfg.scene_path.empty()) throw ConfigError("fit: no scene given (receiver poses)");
  require_input(tensor_path);
  const SceneSpec spec = load_scene(cfg.scene_path);
  const InputTensor tensor = read_tensor(tensor_path);

  RenderConfig render = cfg.render;
  render.tx_position = spec.scene.tx.position;
  const BodyRenderer renderer(standard_body(), render);
  std::array<DevicePose, 2> rx{spec.scene.receivers[0],
                               spec.scene.receivers[std::min<std::size_t>(
                                   1, spec.scene.receivers.size() - 1)]};
  const FitResult fit = fit_sequence(tensor, rx, renderer, cfg.fit);

  fs::create_directories(cfg.out_dir);
  const std::string hash = cfg.config_hash();
  write_params_file(cfg.out_dir + "/fit_result.json", fit.params_seq, hash, cfg.seed);
  for (int t = 0; t < kTensorFrames; ++t) {
    const BodyMesh mesh = smpl_map(standard_body(), fit.params_seq[t].shape,
                                   fit.params_seq[t].pose, fit.params_seq[t].translation);
    write_mesh_obj(cfg.out_dir + "/pred_f" + std::string(t < 10 ? "0" : "") +
                       std::to_string(t) + ".obj",
                   mesh);
  }
  std::printf("fit: converged=%d objective %.6f -> %s\n", fit.converged ? 1 : 0,
              fit.objective_trace.back(), cfg.out_dir.c_str());
  return 0;
}

int cmd_eval(const CommonFlags& flags, const std::string& pred_path,
             const std::string& truth_path) {
  PipelineConfig cfg = load_config(flags);
  require_input(pred_path);
  require_input(truth_path);
  const auto pred = read_params_file(pred_path);
  const auto truth = read_params_file(truth_path);
  const MetricsReport report = evaluate_params(pred, truth, cfg.config_hash(), cfg.seed);
  fs::create_directories(cfg.out_dir);
  write_metrics(cfg.out_dir + "/metrics.json", report);
  std::printf("eval: mean PVE %.3f cm, mean MPJPE %.3f cm, L_total %.6f\n",
              report.mean_pve_cm, report.mean_mpjpe_cm, report.loss.total);
  return 0;
}

int cmd_pipeline(const CommonFlags& flags) {
  const PipelineConfig cfg = load_config(flags);
  const PipelineResult result = run_pipeline(cfg);
  if (result.has_metrics)
    std::printf("pipeline: mean PVE %.3f cm, mean MPJPE %.3f cm -> %s\n",
                result.metrics.mean_pve_cm, result.metrics.mean_mpjpe_cm,
                cfg.out_dir.c_str());
  else
    std::printf("pipeline: done (no ground truth in scene) -> %s\n", cfg.out_dir.c_str());
  return 0;
}

int cmd_bench(const CommonFlags& flags, const std::string& scene_arg) {
  PipelineConfig cfg = load_config(flags);
  if (!scene_arg.empty()) cfg.scene_path = scene_arg;
  if (cfg.scene_path.empty()) throw ConfigError("bench: no scene given");
  const SceneSpec spec = load_scene(cfg.scene_path);
  const BenchResult bench = run_bench(cfg, spec);
  std::printf("bench: exhaustive %llu evals in %.1f ms\n",
              static_cast<unsigned long long>(bench.evals_exhaustive), bench.ms_exhaustive);
  std::printf("bench: coarse     %llu evals in %.1f ms (%.1f%% of exhaustive)\n",
              static_cast<unsigned long long>(bench.evals_coarse), bench.ms_coarse,
              100.0 * bench.evals_coarse / std::max<std::uint64_t>(1, bench.evals_exhaustive));
  std::printf("bench: identical argmax: %s\n", bench.identical_argmax ? "yes" : "no");
  return 0;
}

int cmd_gen_scenes(const std::string& out_dir) {
  fs::create_directories(out_dir);
  for (const auto& name : demo_scene_names())
    save_scene(out_dir + "/" + name + ".json", make_demo_scene(name));
  std::printf("gen-scenes: wrote %zu scene(s) -> %s\n", demo_scene_names().size(),
              out_dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"wimesh: WiFi multipath 2D-AoA imaging and body-mesh fitting"};
  app.require_subcommand(1);

  CommonFlags flags;
  std::string scene_arg, in_path, out_path, pred_path, truth_path;
  int receiver = 0;

  auto* simulate = app.add_subcommand("simulate", "synthesize CSI traces from a scene");
  add_common(simulate, &flags);
  simulate->add_option("--scene", scene_arg, "scene JSON (overrides config)");

  auto* sanitize_cmd = app.add_subcommand("sanitize", "remove per-packet phase ramps");
  sanitize_cmd->add_option("--in", in_path, "input .wcsi")->required();
  sanitize_cmd->add_option("--out-file", out_path, "output .wcsi")->required();

  auto* estimate = app.add_subcommand("estimate", "2D AoA images from a sanitized trace");
  add_common(estimate, &flags);
  estimate->add_option("--in", in_path, "input .wcsi")->required();
  estimate->add_option("--receiver", receiver, "receiver index for file naming");

  auto* extract = app.add_subcommand("extract", "body images + input tensor from AoA CSVs");
  add_common(extract, &flags);
  extract->add_option("--in", in_path, "directory with aoa_rx*_f*.csv")->required();

  auto* fit = app.add_subcommand("fit", "fit body parameters to an input tensor");
  add_common(fit, &flags);
  fit->add_option("--in", in_path, "input tensor .wmt")->required();
  fit->add_option("--scene", scene_arg, "scene JSON (receiver poses)");

  auto* eval = app.add_subcommand("eval", "PVE / MPJPE / loss metrics");
  add_common(eval, &flags, false);
  eval->add_option("--pred", pred_path, "predicted params JSON")->required();
  eval->add_option("--truth", truth_path, "ground-truth params JSON")->required();

  auto* pipeline = app.add_subcommand("pipeline", "run every stage end to end");
  add_common(pipeline, &flags);

  auto* bench = app.add_subcommand("bench", "exhaustive vs coarse-to-fine search cost");
  add_common(bench, &flags);
  bench->add_option("--scene", scene_arg, "scene JSON (overrides config)");

  std::string gen_out = "scenes";
  auto* gen = app.add_subcommand("gen-scenes", "write the bundled demo scenes");
  gen->add_option("--out", gen_out, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (simulate->parsed()) return cmd_simulate(flags, scene_arg);
    if (sanitize_cmd->parsed()) return cmd_sanitize(in_path, out_path);
    if (estimate->parsed()) return cmd_estimate(flags, in_path, receiver);
    if (extract->parsed()) return cmd_extract(flags, in_path);
    if (fit->parsed()) return cmd_fit(flags, in_path, scene_arg);
    if (eval->parsed()) return cmd_eval(flags, pred_path, truth_path);
    if (pipeline->parsed()) return cmd_pipeline(flags);
    if (bench->parsed()) return cmd_bench(flags, scene_arg);
    if (gen->parsed()) return cmd_gen_scenes(gen_out);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const MissingInputError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
