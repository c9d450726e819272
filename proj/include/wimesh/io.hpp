// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wimesh/body_model.hpp"
#include "wimesh/csi_sanitizer.hpp"
#include "wimesh/image_pipeline.hpp"
#include "wimesh/music_estimator.hpp"
#include "wimesh/scene_simulator.hpp"

namespace wimesh {

/// Malformed file contents (bad magic, truncation); message carries the byte
/// offset and, for packet data, the packet index.
struct FormatError : std::runtime_error {
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

/// Missing or unreadable input file.
struct MissingInputError : std::runtime_error {
  explicit MissingInputError(const std::string& what) : std::runtime_error(what) {}
};

/// Invalid configuration contents.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// CSI trace file ("WCSI", little-endian): 32-byte header = magic/version
// word, f64 carrier_hz, f64 subcarrier_spacing_hz, u16 num_tx, u16 num_rx,
// u16 num_subcarriers, u16 reserved, u32 packet_count; then per packet a u64
// timestamp_ns and num_tx*num_rx*num_subcarriers complex values as f32 pairs
// in flat_index order. Complex samples are stored at f32 precision.
void write_trace(const std::string& path, const CsiTrace& trace);
CsiTrace read_trace(const std::string& path);

/// Quantize complex samples to f32 in place, so in-memory pipelines match
/// file-chained stage runs exactly.
void quantize_trace(CsiTrace* trace);

// Input tensor file ("WMT1"): 16-byte header = magic, u32 receivers, u32
// elevation bins, u32 azimuth bins; then 15 * receivers * el * az f32 values
// in (frame, receiver, elevation, azimuth) order, plus 15 u64 timestamps.
void write_tensor(const std::string& path, const InputTensor& tensor);
InputTensor read_tensor(const std::string& path);

/// 16-bit binary PGM, min-max scaled; the sidecar (path + ".txt") records the
/// scale and provenance so values can be recovered.
void write_image_pgm(const std::string& path, const Image& image,
                     const std::string& provenance);

/// Raw CSV (one row per elevation bin), full precision, '#' comment headers.
void write_image_csv(const std::string& path, const Image& image,
                     const std::string& provenance);
Image read_image_csv(const std::string& path);

/// Wavefront OBJ (meters) plus a joints CSV sidecar (path + ".joints.csv").
void write_mesh_obj(const std::string& path, const BodyMesh& mesh);

/// Scene description plus the ground truth it may carry.
struct SceneSpec {
  Scene scene;
  ImpairmentSpec impairments;
  std::vector<BodyParams> body_params;  // empty unless body.mode == "params"
  int samples_per_frame = 32;
  Real body_reflectivity = 0.5;
  std::uint64_t body_sample_seed = 0;
};

SceneSpec load_scene(const std::string& path);
void save_scene(const std::string& path, const SceneSpec& spec);

/// FNV-1a 64-bit over a string, hex-encoded; used as the config hash embedded
/// in artifacts.
std::string fnv1a_hex(const std::string& bytes);

}  // namespace wimesh
