// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <string>
#include <vector>

#include "wimesh/io.hpp"
#include "wimesh/mesh_fitter.hpp"

namespace wimesh {

/// End-to-end run settings; loadable from JSON with per-field defaults.
struct PipelineConfig {
  RadioConfig radio;
  SearchConfig search;
  int frames = kTensorFrames;
  int packets_per_frame = 33;
  int num_receivers = 2;
  int static_window = 30;  // frames in the static-profile window (clamped to stream)
  Real kappa = 2.0;
  RenderConfig render;
  FitConfig fit;
  bool triangulate_init = false;  // per-frame translation init from the two views
  std::uint64_t seed = 1;
  std::string scene_path;
  std::string out_dir = "out";
  bool write_csv = false;
  std::optional<Real> snr_override_db;  // overrides the scene's impairment SNR

  ArrayGeometry geometry() const {
    return ArrayGeometry::l_shaped(radio.num_rx, radio.rx_spacing_m);
  }

  static PipelineConfig from_json_file(const std::string& path);
  /// Canonical serialized echo; its FNV-1a hash is embedded in artifacts.
  std::string canonical_echo() const;
  std::string config_hash() const { return fnv1a_hex(canonical_echo()); }
};

struct MetricsReport {
  std::vector<Real> pve_cm;
  std::vector<Real> mpjpe_cm;
  Real mean_pve_cm = 0.0;
  Real mean_mpjpe_cm = 0.0;
  ParamLoss loss;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, Real>> stage_ms;  // printed, never serialized
};

MetricsReport evaluate_params(const std::vector<BodyParams>& predicted,
                              const std::vector<BodyParams>& truth,
                              const std::string& config_hash, std::uint64_t seed);

void write_metrics(const std::string& path, const MetricsReport& report);

/// Per-frame parameter sequences as JSON ("frames": [{gamma, beta, translation}]).
void write_params_file(const std::string& path, const std::vector<BodyParams>& params,
                       const std::string& config_hash, std::uint64_t seed);
std::vector<BodyParams> read_params_file(const std::string& path);

/// Per-receiver CSI traces for the configured frame count; per-frame paths,
/// packet indices global across frames, samples quantized to the trace
/// format's f32 precision.
std::vector<CsiTrace> simulate_traces(const SceneSpec& spec, const PipelineConfig& config);

/// Per-frame AoA images from a sanitized trace.
std::vector<AoaImage> estimate_frames(const PipelineConfig& config, const CsiTrace& sanitized,
                                      int receiver_index, EstimateStats* stats = nullptr);

struct ExtractResult {
  std::array<StaticProfile, kTensorReceivers> profiles;
  std::array<std::vector<BodyImage>, kTensorReceivers> bodies;
  AggregateResult aggregate;
};

/// Static subtraction, adaptive threshold, and tensor assembly over the last
/// kTensorFrames frames of each receiver stream.
ExtractResult extract_bodies(const PipelineConfig& config,
                             const std::array<std::vector<AoaImage>, kTensorReceivers>& frames);

struct PipelineResult {
  MetricsReport metrics;
  bool has_metrics = false;
  EstimateStats estimate_stats;
};

/// simulate -> sanitize -> estimate -> extract -> fit -> eval, writing every
/// stage artifact under config.out_dir. Stage timings go to stdout only, so
/// artifact bytes depend only on config + seed.
PipelineResult run_pipeline(const PipelineConfig& config);

struct BenchResult {
  std::uint64_t evals_exhaustive = 0;
  std::uint64_t evals_coarse = 0;
  bool identical_argmax = false;
  Real ms_exhaustive = 0.0;
  Real ms_coarse = 0.0;
};

/// Exhaustive vs coarse-to-fine on the scene's first frame, first receiver.
BenchResult run_bench(const PipelineConfig& config, const SceneSpec& spec);

/// Bundled demo scenes: "single_path", "two_path", "static_only", "clutter",
/// "walking", "single_pose".
SceneSpec make_demo_scene(const std::string& name);
std::vector<std::string> demo_scene_names();

/// Procedural 15-frame walking parameter sequence (turning torso, swinging
/// arms and legs, forward translation).
std::vector<BodyParams> walking_params(int frames = kTensorFrames);

/// Per-frame body position by intersecting the centroid rays of the two
/// receivers' body images; frames without support fall back to `fallback`.
std::vector<Vec3> triangulate_positions(const AggregateResult& aggregate,
                                        const std::array<DevicePose, 2>& receivers,
                                        const Vec3& fallback);

}  // namespace wimesh
