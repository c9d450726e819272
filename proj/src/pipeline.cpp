// SPDX-License-Identifier: Apache-2.0
#include "wimesh/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <span>

#include <json.hpp>

namespace wimesh {

namespace {

using ordered_json = nlohmann::ordered_json;

Real ms_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<Real, std::milli>(std::chrono::steady_clock::now() - t0)
      .count();
}

ordered_json params_json(const std::vector<BodyParams>& params) {
  ordered_json frames = ordered_json::array();
  for (const auto& p : params) {
    ordered_json o;
    o["gamma"] = ordered_json::array();
    for (int i = 0; i < 72; ++i) o["gamma"].push_back(p.pose.gamma(i));
    o["beta"] = ordered_json::array();
    for (int i = 0; i < 10; ++i) o["beta"].push_back(p.shape.beta(i));
    o["translation"] =
        ordered_json::array({p.translation.x(), p.translation.y(), p.translation.z()});
    frames.push_back(o);
  }
  return frames;
}

std::vector<BodyParams> params_from_json(const ordered_json& frames) {
  std::vector<BodyParams> out;
  for (const auto& o : frames) {
    BodyParams p;
    for (int i = 0; i < 72; ++i) p.pose.gamma(i) = o.at("gamma")[i].get<Real>();
    for (int i = 0; i < 10; ++i) p.shape.beta(i) = o.at("beta")[i].get<Real>();
    const auto& t = o.at("translation");
    p.translation = Vec3(t[0].get<Real>(), t[1].get<Real>(), t[2].get<Real>());
    out.push_back(p);
  }
  return out;
}

void dump_json(const std::string& path, const ordered_json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error(path + ": cannot open output file");
  out << j.dump(2) << "\n";
}

ordered_json load_json(const std::string& path) {
  if (!std::filesystem::exists(path)) throw MissingInputError(path + ": file not found");
  std::ifstream in(path);
  ordered_json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ConfigError(path + ": invalid JSON (" + e.what() + ")");
  }
  return j;
}

}  // namespace

PipelineConfig PipelineConfig::from_json_file(const std::string& path) {
  const ordered_json j = load_json(path);
  PipelineConfig cfg;
  try {
    if (j.contains("radio")) {
      const auto& r = j["radio"];
      cfg.radio.carrier_freq_hz = r.value("carrier_freq_hz", cfg.radio.carrier_freq_hz);
      cfg.radio.bandwidth_hz = r.value("bandwidth_hz", cfg.radio.bandwidth_hz);
      cfg.radio.num_subcarriers = r.value("num_subcarriers", cfg.radio.num_subcarriers);
      cfg.radio.num_tx = r.value("num_tx", cfg.radio.num_tx);
      cfg.radio.num_rx = r.value("num_rx", cfg.radio.num_rx);
      cfg.radio.tx_spacing_m = r.value("tx_spacing_m", cfg.radio.tx_spacing_m);
      cfg.radio.rx_spacing_m = r.value("rx_spacing_m", cfg.radio.rx_spacing_m);
      cfg.radio.subcarrier_spacing_hz = cfg.radio.bandwidth_hz / cfg.radio.num_subcarriers;
      cfg.radio.validate();
    }
    if (j.contains("search")) {
      const auto& s = j["search"];
      const std::string mode = s.value("mode", std::string("coarse"));
      if (mode == "exhaustive")
        cfg.search.mode = SearchMode::exhaustive;
      else if (mode == "coarse" || mode == "coarse_to_fine")
        cfg.search.mode = SearchMode::coarse_to_fine;
      else
        throw ConfigError("search.mode must be exhaustive or coarse");
      cfg.search.coarse_step_deg = s.value("coarse_step_deg", cfg.search.coarse_step_deg);
      cfg.search.refine_radius_deg = s.value("refine_radius_deg", cfg.search.refine_radius_deg);
      cfg.search.top_q = s.value("top_q", cfg.search.top_q);
      cfg.search.aod_points = s.value("aod_points", cfg.search.aod_points);
      cfg.search.tof_points = s.value("tof_points", cfg.search.tof_points);
      cfg.search.tof_span_s = s.value("tof_span_s", cfg.search.tof_span_s);
      cfg.search.covariance.decimation =
          s.value("decimation", cfg.search.covariance.decimation);
      cfg.search.covariance.forward_backward =
          s.value("forward_backward", cfg.search.covariance.forward_backward);
      cfg.search.source_ratio = s.value("source_ratio", cfg.search.source_ratio);
      cfg.search.fixed_num_sources =
          s.value("fixed_num_sources", cfg.search.fixed_num_sources);
    }
    if (j.contains("pipeline")) {
      const auto& p = j["pipeline"];
      cfg.frames = p.value("frames", cfg.frames);
      cfg.packets_per_frame = p.value("packets_per_frame", cfg.packets_per_frame);
      cfg.num_receivers = p.value("num_receivers", cfg.num_receivers);
      cfg.static_window = p.value("static_window", cfg.static_window);
      cfg.kappa = p.value("kappa", cfg.kappa);
      cfg.write_csv = p.value("write_csv", cfg.write_csv);
    }
    if (j.contains("render")) {
      const auto& r = j["render"];
      cfg.render.samples = r.value("samples", cfg.render.samples);
      cfg.render.blob_sigma_deg = r.value("blob_sigma_deg", cfg.render.blob_sigma_deg);
      cfg.render.specular_exponent =
          r.value("specular_exponent", cfg.render.specular_exponent);
      cfg.render.normalize = r.value("normalize", cfg.render.normalize);
      cfg.render.sample_seed = r.value("sample_seed", cfg.render.sample_seed);
    }
    if (j.contains("fit")) {
      const auto& f = j["fit"];
      cfg.fit.max_iters = f.value("max_iters", cfg.fit.max_iters);
      cfg.fit.fd_step = f.value("fd_step", cfg.fit.fd_step);
      cfg.fit.pose_prior_weight = f.value("pose_prior_weight", cfg.fit.pose_prior_weight);
      cfg.fit.smoothness_weight = f.value("smoothness_weight", cfg.fit.smoothness_weight);
      cfg.fit.tolerance = f.value("tolerance", cfg.fit.tolerance);
      cfg.fit.max_iters = std::max(1, cfg.fit.max_iters);
      cfg.fit.fit_shape = f.value("fit_shape", cfg.fit.fit_shape);
      if (f.contains("init_translation")) {
        const auto& t = f["init_translation"];
        cfg.fit.init_translation = Vec3(t[0].get<Real>(), t[1].get<Real>(), t[2].get<Real>());
      }
      const std::string obj = f.value("objective", std::string("per_frame"));
      if (obj == "per_frame")
        cfg.fit.objective_mode = FitConfig::ObjectiveMode::per_frame;
      else if (obj == "composite")
        cfg.fit.objective_mode = FitConfig::ObjectiveMode::composite;
      else
        throw ConfigError("fit.objective must be per_frame or composite");
      const std::string init = f.value("init_mode", std::string("template"));
      if (init == "template") {
        cfg.fit.init_mode = FitConfig::InitMode::template_init;
      } else if (init == "previous_window") {
        cfg.fit.init_mode = FitConfig::InitMode::previous_window;
      } else if (init == "triangulate") {
        cfg.fit.init_mode = FitConfig::InitMode::template_init;
        cfg.triangulate_init = true;
      } else {
        throw ConfigError("fit.init_mode must be template, previous_window, or triangulate");
      }
    }
    cfg.seed = j.value("seed", cfg.seed);
    cfg.scene_path = j.value("scene", cfg.scene_path);
    cfg.out_dir = j.value("out_dir", cfg.out_dir);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return cfg;
}

std::string PipelineConfig::canonical_echo() const {
  ordered_json j;
  j["radio"] = {{"carrier_freq_hz", radio.carrier_freq_hz},
                {"bandwidth_hz", radio.bandwidth_hz},
                {"num_subcarriers", radio.num_subcarriers},
                {"num_tx", radio.num_tx},
                {"num_rx", radio.num_rx},
                {"tx_spacing_m", radio.tx_spacing_m},
                {"rx_spacing_m", radio.rx_spacing_m}};
  j["search"] = {{"mode", search.mode == SearchMode::exhaustive ? "exhaustive" : "coarse"},
                 {"coarse_step_deg", search.coarse_step_deg},
                 {"refine_radius_deg", search.refine_radius_deg},
                 {"top_q", search.top_q},
                 {"aod_points", search.aod_points},
                 {"tof_points", search.tof_points},
                 {"tof_span_s", search.tof_span_s},
                 {"decimation", search.covariance.decimation},
                 {"forward_backward", search.covariance.forward_backward},
                 {"source_ratio", search.source_ratio},
                 {"fixed_num_sources", search.fixed_num_sources}};
  j["pipeline"] = {{"frames", frames},
                   {"packets_per_frame", packets_per_frame},
                   {"num_receivers", num_receivers},
                   {"static_window", static_window},
                   {"kappa", kappa}};
  j["render"] = {{"samples", render.samples},
                 {"blob_sigma_deg", render.blob_sigma_deg},
                 {"specular_exponent", render.specular_exponent},
                 {"normalize", render.normalize},
                 {"sample_seed", render.sample_seed}};
  j["fit"] = {{"max_iters", fit.max_iters},
              {"objective",
               fit.objective_mode == FitConfig::ObjectiveMode::composite ? "composite"
                                                                         : "per_frame"},
              {"fd_step", fit.fd_step},
              {"pose_prior_weight", fit.pose_prior_weight},
              {"smoothness_weight", fit.smoothness_weight},
              {"tolerance", fit.tolerance},
              {"fit_shape", fit.fit_shape},
              {"init_translation", {fit.init_translation.x(), fit.init_translation.y(),
                                    fit.init_translation.z()}},
              {"triangulate_init", triangulate_init}};
  j["scene"] = scene_path;
  j["seed"] = seed;
  if (snr_override_db) j["snr_override_db"] = *snr_override_db;
  return j.dump();
}

MetricsReport evaluate_params(const std::vector<BodyParams>& predicted,
                              const std::vector<BodyParams>& truth,
                              const std::string& config_hash, std::uint64_t seed) {
  if (predicted.size() != truth.size() || predicted.empty())
    throw std::invalid_argument("evaluate_params: sequence length mismatch or empty");
  MetricsReport report;
  report.config_hash = config_hash;
  report.seed = seed;
  const BodyTemplate& tmpl = standard_body();
  for (std::size_t t = 0; t < predicted.size(); ++t) {
    const BodyMesh pred = smpl_map(tmpl, predicted[t].shape, predicted[t].pose,
                                   predicted[t].translation);
    const BodyMesh gt = smpl_map(tmpl, truth[t].shape, truth[t].pose, truth[t].translation);
    report.pve_cm.push_back(pve(pred, gt));
    report.mpjpe_cm.push_back(mpjpe(pred, gt));
  }
  Real sp = 0.0, sj = 0.0;
  for (std::size_t t = 0; t < predicted.size(); ++t) {
    sp += report.pve_cm[t];
    sj += report.mpjpe_cm[t];
  }
  report.mean_pve_cm = sp / static_cast<Real>(predicted.size());
  report.mean_mpjpe_cm = sj / static_cast<Real>(predicted.size());
  report.loss = param_loss(predicted, truth);
  return report;
}

void write_metrics(const std::string& path, const MetricsReport& report) {
  ordered_json j;
  j["config_hash"] = report.config_hash;
  j["seed"] = report.seed;
  j["per_frame"] = ordered_json::array();
  for (std::size_t t = 0; t < report.pve_cm.size(); ++t)
    j["per_frame"].push_back({{"frame", t},
                              {"pve_cm", report.pve_cm[t]},
                              {"mpjpe_cm", report.mpjpe_cm[t]}});
  j["mean_pve_cm"] = report.mean_pve_cm;
  j["mean_mpjpe_cm"] = report.mean_mpjpe_cm;
  j["loss"] = {{"pose", report.loss.pose},
               {"shape", report.loss.shape},
               {"total", report.loss.total}};
  dump_json(path, j);
}

void write_params_file(const std::string& path, const std::vector<BodyParams>& params,
                       const std::string& config_hash, std::uint64_t seed) {
  ordered_json j;
  j["config_hash"] = config_hash;
  j["seed"] = seed;
  j["frames"] = params_json(params);
  dump_json(path, j);
}

std::vector<BodyParams> read_params_file(const std::string& path) {
  const ordered_json j = load_json(path);
  try {
    return params_from_json(j.at("frames"));
  } catch (const std::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

std::vector<CsiTrace> simulate_traces(const SceneSpec& spec, const PipelineConfig& config) {
  const int receivers = std::min<int>(config.num_receivers,
                                      static_cast<int>(spec.scene.receivers.size()));
  if (receivers < 1) throw std::invalid_argument("simulate_traces: no receivers");

  ImpairmentSpec imp = spec.impairments;
  imp.seed = spec.impairments.seed ^ (config.seed * 0x9e3779b97f4a7c15ULL);
  if (config.snr_override_db) imp.snr_db = *config.snr_override_db;

  std::vector<CsiTrace> traces(receivers);
  for (int r = 0; r < receivers; ++r) {
    traces[r].radio = config.radio;
    traces[r].packets.reserve(static_cast<std::size_t>(config.frames) *
                              config.packets_per_frame);
    for (int f = 0; f < config.frames; ++f) {
      const int frame_index =
          spec.scene.body_frames.empty()
              ? 0
              : std::min<int>(f, static_cast<int>(spec.scene.body_frames.size()) - 1);
      const auto paths = scene_to_paths(spec.scene, r, frame_index);
      SynthesisOptions opts;
      opts.stream_id = static_cast<std::uint64_t>(r) + 1;
      opts.packet_index_base = static_cast<std::uint64_t>(f) * config.packets_per_frame;
      opts.start_timestamp_ns =
          static_cast<std::int64_t>(f) * config.packets_per_frame * opts.packet_interval_ns;
      CsiTrace chunk =
          synthesize_csi(paths, config.radio, config.packets_per_frame, imp, opts);
      for (auto& p : chunk.packets) traces[r].packets.push_back(std::move(p));
    }
    quantize_trace(&traces[r]);
  }
  return traces;
}

std::vector<AoaImage> estimate_frames(const PipelineConfig& config, const CsiTrace& sanitized,
                                      int receiver_index, EstimateStats* stats) {
  // dimensions travel with the trace; element spacings are not stored in the
  // file and come from the configuration
  RadioConfig radio = sanitized.radio;
  radio.tx_spacing_m = config.radio.tx_spacing_m;
  radio.rx_spacing_m = config.radio.rx_spacing_m;
  const ArrayGeometry geometry = ArrayGeometry::l_shaped(radio.num_rx, radio.rx_spacing_m);
  std::vector<AoaImage> images;
  const int ppf = config.packets_per_frame;
  const int frames = static_cast<int>(sanitized.packets.size()) / ppf;
  for (int f = 0; f < frames; ++f) {
    EstimateStats frame_stats;
    const std::span<const CsiPacket> window(sanitized.packets.data() +
                                            static_cast<std::size_t>(f) * ppf, ppf);
    AoaImage image = estimate_frame(radio, geometry, window, config.search,
                                    &frame_stats);
    image.frame_index = f;
    image.receiver_index = receiver_index;
    images.push_back(std::move(image));
    if (stats) {
      stats->steering_evaluations += frame_stats.steering_evaluations;
      stats->clamped_cells += frame_stats.clamped_cells;
      stats->num_sources = frame_stats.num_sources;
    }
  }
  return images;
}

ExtractResult extract_bodies(const PipelineConfig& config,
                             const std::array<std::vector<AoaImage>, kTensorReceivers>& frames) {
  ExtractResult out;
  std::array<std::vector<BodyImage>, kTensorReceivers> window_bodies;
  std::array<std::vector<std::int64_t>, kTensorReceivers> timestamps;

  for (int r = 0; r < kTensorReceivers; ++r) {
    const auto& seq = frames[r];
    if (static_cast<int>(seq.size()) < kTensorFrames)
      throw std::invalid_argument("extract_bodies: need >= 15 frames per receiver");
    const int w = config.static_window > 1
                      ? std::min<int>(config.static_window, static_cast<int>(seq.size()))
                      : static_cast<int>(seq.size());
    const std::vector<AoaImage> profile_window(seq.begin(), seq.begin() + w);
    out.profiles[r] = estimate_static(profile_window);

    const int first = static_cast<int>(seq.size()) - kTensorFrames;
    for (int t = first; t < static_cast<int>(seq.size()); ++t) {
      const Image residual = subtract_static(seq[t].values, out.profiles[r]);
      out.bodies[r].push_back(adaptive_threshold(residual, config.kappa));
      timestamps[r].push_back(static_cast<std::int64_t>(seq[t].frame_index) + 1);
    }
    window_bodies[r] = out.bodies[r];
  }
  out.aggregate = aggregate_frames(window_bodies, timestamps);
  return out;
}

PipelineResult run_pipeline(const PipelineConfig& config) {
  namespace fs = std::filesystem;
  if (config.scene_path.empty()) throw ConfigError("pipeline: config has no scene path");
  const SceneSpec spec = load_scene(config.scene_path);
  fs::create_directories(config.out_dir);
  const std::string hash = config.config_hash();
  const auto out = [&](const std::string& name) { return config.out_dir + "/" + name; };
  const std::string provenance = "config " + hash + " seed " + std::to_string(config.seed);

  PipelineResult result;
  std::vector<std::pair<std::string, Real>> stage_ms;
  auto t0 = std::chrono::steady_clock::now();

  // simulate
  std::vector<CsiTrace> traces = simulate_traces(spec, config);
  for (std::size_t r = 0; r < traces.size(); ++r)
    write_trace(out("rx" + std::to_string(r) + ".wcsi"), traces[r]);
  if (!spec.body_params.empty())
    write_params_file(out("gt_params.json"), spec.body_params, hash, config.seed);
  stage_ms.emplace_back("simulate", ms_since(t0));
  t0 = std::chrono::steady_clock::now();

  // sanitize
  std::vector<CsiTrace> clean;
  clean.reserve(traces.size());
  for (const auto& tr : traces) clean.push_back(sanitize(tr));
  stage_ms.emplace_back("sanitize", ms_since(t0));
  t0 = std::chrono::steady_clock::now();

  // estimate
  std::array<std::vector<AoaImage>, kTensorReceivers> images;
  for (int r = 0; r < kTensorReceivers; ++r) {
    if (r < static_cast<int>(clean.size())) {
      images[r] = estimate_frames(config, clean[r], r, &result.estimate_stats);
    } else {
      // single-receiver run: second receiver slot stays empty
      images[r].resize(config.frames);
      for (int f = 0; f < config.frames; ++f) {
        images[r][f].values = Image::Zero(kImageSize, kImageSize);
        images[r][f].frame_index = f;
        images[r][f].receiver_index = r;
      }
    }
    for (std::size_t f = 0; f < images[r].size(); ++f) {
      const std::string stem =
          "aoa_rx" + std::to_string(r) + "_f" + (f < 10 ? "0" : "") + std::to_string(f);
      write_image_pgm(out(stem + ".pgm"), images[r][f].values, provenance);
      if (config.write_csv) write_image_csv(out(stem + ".csv"), images[r][f].values, provenance);
    }
  }
  stage_ms.emplace_back("estimate", ms_since(t0));
  t0 = std::chrono::steady_clock::now();

  // extract
  ExtractResult extract = extract_bodies(config, images);
  for (int r = 0; r < kTensorReceivers; ++r) {
    for (std::size_t f = 0; f < extract.bodies[r].size(); ++f) {
      const std::string stem =
          "body_rx" + std::to_string(r) + "_f" + (f < 10 ? "0" : "") + std::to_string(f);
      write_image_pgm(out(stem + ".pgm"), extract.bodies[r][f].values, provenance);
      if (config.write_csv)
        write_image_csv(out(stem + ".csv"), extract.bodies[r][f].values, provenance);
    }
    write_image_pgm(out("composite_rx" + std::to_string(r) + ".pgm"),
                    extract.aggregate.composite[r], provenance);
  }
  write_tensor(out("tensor.wmt"), extract.aggregate.tensor);
  stage_ms.emplace_back("extract", ms_since(t0));
  t0 = std::chrono::steady_clock::now();

  // fit
  RenderConfig render = config.render;
  render.tx_position = spec.scene.tx.position;
  const BodyRenderer renderer(standard_body(), render);
  std::array<DevicePose, 2> rx_poses{spec.scene.receivers[0],
                                     spec.scene.receivers[std::min<std::size_t>(
                                         1, spec.scene.receivers.size() - 1)]};
  FitConfig fit_cfg = config.fit;
  if (config.triangulate_init) {
    const std::vector<Vec3> positions =
        triangulate_positions(extract.aggregate, rx_poses, config.fit.init_translation);
    fit_cfg.init_mode = FitConfig::InitMode::previous_window;
    fit_cfg.init_params.assign(kTensorFrames, BodyParams{});
    for (int t = 0; t < kTensorFrames; ++t) fit_cfg.init_params[t].translation = positions[t];
  }
  const FitResult fit = fit_sequence(extract.aggregate.tensor, rx_poses, renderer, fit_cfg);
  write_params_file(out("fit_result.json"), fit.params_seq, hash, config.seed);
  {
    ordered_json extra;
    extra["config_hash"] = hash;
    extra["seed"] = config.seed;
    extra["converged"] = fit.converged;
    extra["objective_trace"] = fit.objective_trace;
    dump_json(out("fit_trace.json"), extra);
  }
  for (int t = 0; t < kTensorFrames; ++t) {
    const BodyMesh mesh = smpl_map(standard_body(), fit.params_seq[t].shape,
                                   fit.params_seq[t].pose, fit.params_seq[t].translation);
    const std::string stem = "pred_f" + std::string(t < 10 ? "0" : "") + std::to_string(t);
    write_mesh_obj(out(stem + ".obj"), mesh);
  }
  stage_ms.emplace_back("fit", ms_since(t0));
  t0 = std::chrono::steady_clock::now();

  // eval (when the scene carries ground truth)
  if (!spec.body_params.empty()) {
    std::vector<BodyParams> gt = spec.body_params;
    if (static_cast<int>(gt.size()) > kTensorFrames)
      gt.assign(gt.end() - kTensorFrames, gt.end());
    while (static_cast<int>(gt.size()) < kTensorFrames) gt.push_back(gt.back());
    result.metrics = evaluate_params(fit.params_seq, gt, hash, config.seed);
    result.has_metrics = true;
    write_metrics(out("metrics.json"), result.metrics);
  }
  stage_ms.emplace_back("eval", ms_since(t0));

  // manifest: provenance for the binary artifacts, which have fixed layouts
  {
    ordered_json manifest;
    manifest["config_hash"] = hash;
    manifest["seed"] = config.seed;
    manifest["config"] = ordered_json::parse(config.canonical_echo());
    std::vector<std::string> names;
    for (const auto& entry : fs::directory_iterator(config.out_dir))
      if (entry.path().filename() != "manifest.json")
        names.push_back(entry.path().filename().string());
    std::sort(names.begin(), names.end());
    manifest["files"] = names;
    dump_json(out("manifest.json"), manifest);
  }

  result.metrics.stage_ms = stage_ms;
  for (const auto& [stage, ms] : stage_ms)
    std::printf("stage %-10s %10.1f ms\n", stage.c_str(), ms);
  return result;
}

BenchResult run_bench(const PipelineConfig& config, const SceneSpec& spec) {
  PipelineConfig one = config;
  one.frames = 1;
  const std::vector<CsiTrace> traces = simulate_traces(spec, one);
  const CsiTrace clean = sanitize(traces[0]);
  const std::span<const CsiPacket> window(clean.packets.data(), clean.packets.size());

  BenchResult bench;
  SearchConfig search = config.search;
  EstimateStats stats;

  auto t0 = std::chrono::steady_clock::now();
  search.mode = SearchMode::exhaustive;
  const AoaImage full = estimate_frame(config.radio, config.geometry(), window, search, &stats);
  bench.ms_exhaustive = ms_since(t0);
  bench.evals_exhaustive = stats.steering_evaluations;

  t0 = std::chrono::steady_clock::now();
  search.mode = SearchMode::coarse_to_fine;
  const AoaImage coarse = estimate_frame(config.radio, config.geometry(), window, search, &stats);
  bench.ms_coarse = ms_since(t0);
  bench.evals_coarse = stats.steering_evaluations;

  bench.identical_argmax = argmax_cell(full.values) == argmax_cell(coarse.values);
  return bench;
}

std::vector<Vec3> triangulate_positions(const AggregateResult& aggregate,
                                        const std::array<DevicePose, 2>& receivers,
                                        const Vec3& fallback) {
  std::vector<Vec3> positions(kTensorFrames, fallback);
  for (int t = 0; t < kTensorFrames; ++t) {
    Vec3 dir[2];
    bool ok = true;
    for (int r = 0; r < 2 && ok; ++r) {
      const Image img = aggregate.tensor.slice(t, r);
      Real weight = 0.0, el_sum = 0.0, az_sum = 0.0;
      for (int el = 0; el < kImageSize; ++el)
        for (int az = 0; az < kImageSize; ++az) {
          const Real v = img(el, az);
          if (v <= 0.0) continue;
          weight += v;
          el_sum += v * el;
          az_sum += v * az;
        }
      if (weight <= 0.0) {
        ok = false;
        break;
      }
      const Real el = deg2rad(el_sum / weight);
      const Real az = deg2rad(az_sum / weight);
      const Vec3 local(std::sin(el) * std::cos(az), std::sin(el) * std::sin(az), std::cos(el));
      dir[r] = receivers[r].rotation() * local;
    }
    if (!ok) continue;
    // midpoint of the common perpendicular of the two centroid rays
    const Vec3 p0 = receivers[0].position;
    const Vec3 p1 = receivers[1].position;
    const Real a = dir[0].dot(dir[0]);
    const Real b = dir[0].dot(dir[1]);
    const Real c = dir[1].dot(dir[1]);
    const Vec3 w = p0 - p1;
    const Real denom = a * c - b * b;
    if (std::abs(denom) < 1e-9) continue;  // near-parallel rays
    const Real s0 = (b * dir[1].dot(w) - c * dir[0].dot(w)) / denom;
    const Real s1 = (a * dir[1].dot(w) - b * dir[0].dot(w)) / denom;
    if (s0 <= 0.0 || s1 <= 0.0) continue;  // behind a receiver
    positions[t] = 0.5 * (p0 + s0 * dir[0] + p1 + s1 * dir[1]);
  }
  return positions;
}

std::vector<BodyParams> walking_params(int frames) {
  std::vector<BodyParams> seq(frames);
  for (int t = 0; t < frames; ++t) {
    BodyParams& p = seq[t];
    const Real phase = 2.0 * kPi * t / frames;
    const Real swing = std::sin(phase);
    p.shape.beta.setZero();
    p.pose.gamma.setZero();
    // torso turns while walking, sweeping the specular lobes
    p.pose.set_joint_rotation(0, Vec3(0.0, 0.0, -0.5 + 1.2 * t / std::max(1, frames - 1)));
    p.pose.set_joint_rotation(1, Vec3(0.35 * swing, 0.0, 0.0));    // L hip
    p.pose.set_joint_rotation(2, Vec3(-0.35 * swing, 0.0, 0.0));   // R hip
    p.pose.set_joint_rotation(4, Vec3(0.25 * std::max(0.0, -swing), 0.0, 0.0));  // L knee
    p.pose.set_joint_rotation(5, Vec3(0.25 * std::max(0.0, swing), 0.0, 0.0));   // R knee
    p.pose.set_joint_rotation(16, Vec3(0.0, 0.0, 0.45 * swing));   // L shoulder
    p.pose.set_joint_rotation(17, Vec3(0.0, 0.0, 0.45 * swing));   // R shoulder
    p.translation = Vec3(0.35 + 0.06 * t, 1.9 + 0.02 * t, 0.95);
  }
  return seq;
}

SceneSpec make_demo_scene(const std::string& name) {
  SceneSpec spec;
  Scene& sc = spec.scene;
  sc.tx = DevicePose{Vec3(0.5, 3.2, 0.8), 0.0};
  sc.receivers = {DevicePose{Vec3(0.0, 0.0, 0.0), 0.0},
                  DevicePose{Vec3(2.2, 0.3, 0.0), 20.0}};
  spec.impairments.sto_slope_std_s = 2e-9;
  spec.impairments.common_phase = true;
  spec.impairments.snr_db = 25.0;
  spec.impairments.seed = 7;

  auto reflector = [](Real x, Real y, Real z, Real refl) {
    Scatterer s;
    s.position = Vec3(x, y, z);
    s.reflectivity = refl;
    return s;
  };

  if (name == "single_path") {
    sc.include_los = false;
    sc.body_frames = {{reflector(0.9, 1.8, 1.1, 1.0)}};
    spec.impairments.snr_db = 20.0;
    return spec;
  }
  if (name == "two_path") {
    sc.include_los = false;
    sc.body_frames = {{reflector(0.4, 1.9, 1.0, 1.0), reflector(1.3, 1.7, 1.0, 1.0)}};
    spec.impairments.snr_db = 20.0;
    return spec;
  }
  if (name == "static_only") {
    sc.static_reflectors = {reflector(-1.2, 2.0, 1.5, 0.8), reflector(1.8, 2.8, 0.3, 0.9),
                            reflector(0.2, 3.2, 1.9, 0.7)};
    return spec;
  }
  if (name == "clutter") {
    sc.static_reflectors = {reflector(-2.2, 2.8, 1.8, 0.35), reflector(2.8, 3.6, 0.3, 0.35),
                            reflector(0.2, 4.4, 2.2, 0.3)};
    sc.include_second_bounce = true;
    const int frames = kTensorFrames;
    for (int t = 0; t < frames; ++t) {
      std::vector<Scatterer> body;
      const Real dx = 0.05 * t;
      body.push_back(reflector(0.55 + dx, 1.7, 0.45, 0.55));
      body.push_back(reflector(0.62 + dx, 1.75, 0.85, 0.6));
      body.push_back(reflector(0.58 + dx, 1.68, 1.25, 0.6));
      body.push_back(reflector(0.75 + dx, 1.72, 1.0, 0.5));
      body.push_back(reflector(0.42 + dx, 1.78, 1.0, 0.5));
      body.push_back(reflector(0.60 + dx, 1.73, 1.55, 0.45));
      sc.body_frames.push_back(std::move(body));
    }
    return spec;
  }
  if (name == "walking") {
    sc.static_reflectors = {reflector(-1.3, 2.4, 1.4, 0.8)};
    spec.body_params = walking_params(kTensorFrames);
    spec.samples_per_frame = 32;
    spec.body_reflectivity = 0.6;
    spec.body_sample_seed = 3;
    sc.body_frames = animate_body(standard_body(), spec.body_params, spec.samples_per_frame,
                                  spec.body_sample_seed, spec.body_reflectivity);
    return spec;
  }
  if (name == "single_pose") {
    sc.static_reflectors = {reflector(-1.3, 2.4, 1.4, 0.8)};
    BodyParams p;
    p.shape.beta << 0.6, -0.4, 0.3, 0.5, 0.2, 0.0, 0.0, 0.0, 0.0, 0.0;
    p.pose.set_joint_rotation(16, Vec3(0.0, 0.0, 0.5));
    p.pose.set_joint_rotation(17, Vec3(0.0, 0.0, -0.4));
    p.pose.set_joint_rotation(18, Vec3(0.0, 0.0, 0.4));
    p.pose.set_joint_rotation(1, Vec3(0.25, 0.0, 0.0));
    p.translation = Vec3(0.7, 2.0, 0.95);
    spec.body_params.assign(kTensorFrames, p);
    spec.samples_per_frame = 32;
    spec.body_reflectivity = 0.6;
    sc.body_frames = animate_body(standard_body(), spec.body_params, spec.samples_per_frame,
                                  spec.body_sample_seed, spec.body_reflectivity);
    return spec;
  }
  throw ConfigError("unknown demo scene: " + name);
}

std::vector<std::string> demo_scene_names() {
  return {"single_path", "two_path", "static_only", "clutter", "walking", "single_pose"};
}

}  // namespace wimesh
