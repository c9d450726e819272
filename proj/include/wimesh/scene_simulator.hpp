// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <vector>

#include "wimesh/array_model.hpp"
#include "wimesh/body_model.hpp"
#include "wimesh/csi_sanitizer.hpp"
#include "wimesh/types.hpp"

namespace wimesh {

/// Device placement: position plus yaw about +Z, so the local X-Z array plane
/// keeps the global up axis and the elevation convention survives rotation.
struct DevicePose {
  Vec3 position = Vec3::Zero();
  Real yaw_deg = 0.0;

  Mat3 rotation() const;           // local -> world
  Vec3 to_local(const Vec3& world) const;
  Vec3 axis_x() const { return rotation().col(0); }
  Vec3 axis_y() const { return rotation().col(1); }
};

struct Scatterer {
  Vec3 position = Vec3::Zero();
  Complex reflectivity = 1.0;
  std::optional<Vec3> normal;  // unit, outward; enables the specular lobe

  void validate() const;
};

enum class PathClass { line_of_sight, static_reflector, body, second_bounce };

/// One propagation path with its receiver-side signature and complex gain.
/// Paths flagged phase_jitter get an independent random phase per packet
/// (body micro-motion decorrelates across the packet window).
struct ScenePath {
  PathSignature signature;
  Complex gain = 1.0;
  PathClass cls = PathClass::body;
  bool phase_jitter = false;
};

struct ImpairmentSpec {
  Real sto_slope_std_s = 0.0;       // per-packet random delay std
  bool common_phase = false;        // per-packet uniform random phase
  std::optional<Real> snr_db;       // empty = noiseless
  std::uint64_t seed = 0;
};

struct Scene {
  DevicePose tx;
  std::vector<DevicePose> receivers;
  std::vector<Scatterer> static_reflectors;
  std::vector<std::vector<Scatterer>> body_frames;  // per frame
  bool include_los = true;
  bool include_second_bounce = false;
  Real specular_exponent = 4.0;
  bool body_path_jitter = true;

  void validate() const;
};

/// Geometry of every propagation path reaching one receiver for one frame:
/// LoS (optional), one path per static reflector, one per body scatterer, and
/// optionally body->static second bounces. Gains decay as 1/(leg product)
/// with a max(0, n.b)^s specular lobe when a normal is present.
std::vector<ScenePath> scene_to_paths(const Scene& scene, int receiver_index,
                                      int frame_index);

struct SynthesisOptions {
  std::int64_t start_timestamp_ns = 0;
  std::int64_t packet_interval_ns = 1'000'000;  // 1000 packets/s
  std::uint64_t stream_id = 0;                  // disambiguates receivers
  std::uint64_t packet_index_base = 0;          // global packet counter offset
};

/// Superpose path steering vectors into a CSI trace with impairments and
/// noise. Per-packet randomness is counter-seeded: results are identical
/// whether packets are synthesized serially or in parallel.
CsiTrace synthesize_csi(const std::vector<ScenePath>& paths, const RadioConfig& config,
                        int num_packets, const ImpairmentSpec& impairments,
                        const SynthesisOptions& options = {});

/// Deterministic area-weighted surface samples of the body mesh per frame,
/// with outward face normals. The same seed yields the same sample layout in
/// every frame, so identical params give identical scatterers.
std::vector<std::vector<Scatterer>> animate_body(const BodyTemplate& tmpl,
                                                 const std::vector<BodyParams>& params_seq,
                                                 int samples_per_frame,
                                                 std::uint64_t seed = 0,
                                                 Real reflectivity = 0.5);

}  // namespace wimesh
