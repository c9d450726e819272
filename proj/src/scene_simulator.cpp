// SPDX-License-Identifier: Apache-2.0
#include "wimesh/scene_simulator.hpp"

#include <cmath>
#include <stdexcept>

#include "wimesh/parallel.hpp"
#include "wimesh/rng.hpp"

namespace wimesh {

namespace {

constexpr std::uint64_t kStreamSto = 1;
constexpr std::uint64_t kStreamCommonPhase = 2;
constexpr std::uint64_t kStreamNoise = 3;
constexpr std::uint64_t kStreamJitter = 4;

// Arrival direction of a source point in the receiver frame. Throws when the
// point falls behind the array plane (y < 0 locally).
Direction arrival_direction(const DevicePose& rx, const Vec3& source) {
  const Vec3 local = rx.to_local(source);
  const Real norm = local.norm();
  if (norm <= 0.0) throw std::invalid_argument("arrival_direction: source at receiver");
  const Vec3 u = local / norm;
  if (u.y() < -1e-9)
    throw std::invalid_argument("arrival_direction: scatterer behind the array plane (y < 0)");
  Direction dir;
  dir.elevation_deg = rad2deg(std::acos(std::clamp(u.z(), -1.0, 1.0)));
  dir.azimuth_deg = rad2deg(std::atan2(std::max(u.y(), 0.0), u.x()));
  dir.azimuth_deg = std::clamp(dir.azimuth_deg, 0.0, 180.0);
  return dir;
}

Real departure_angle_deg(const DevicePose& tx, const Vec3& target) {
  const Vec3 d = (target - tx.position).normalized();
  const Real s = std::clamp(d.dot(tx.axis_x()), -1.0, 1.0);
  return rad2deg(std::asin(s));
}

Real specular_weight(const Scatterer& s, const Vec3& tx_pos, const Vec3& rx_pos,
                     Real exponent) {
  if (!s.normal) return 1.0;
  const Vec3 to_tx = (tx_pos - s.position).normalized();
  const Vec3 to_rx = (rx_pos - s.position).normalized();
  Vec3 bisector = to_tx + to_rx;
  const Real n = bisector.norm();
  if (n <= 1e-12) return 0.0;
  bisector /= n;
  const Real c = std::max(0.0, s.normal->dot(bisector));
  return std::pow(c, exponent);
}

}  // namespace

Mat3 DevicePose::rotation() const {
  const Real y = deg2rad(yaw_deg);
  Mat3 r;
  r << std::cos(y), -std::sin(y), 0.0, std::sin(y), std::cos(y), 0.0, 0.0, 0.0, 1.0;
  return r;
}

Vec3 DevicePose::to_local(const Vec3& world) const {
  return rotation().transpose() * (world - position);
}

void Scatterer::validate() const {
  if (!std::isfinite(reflectivity.real()) || !std::isfinite(reflectivity.imag()))
    throw std::invalid_argument("Scatterer: reflectivity must be finite");
  if (normal && std::abs(normal->norm() - 1.0) > 1e-6)
    throw std::invalid_argument("Scatterer: normal must be unit length");
}

void Scene::validate() const {
  if (receivers.empty()) throw std::invalid_argument("Scene: need at least one receiver");
  for (const auto& s : static_reflectors) s.validate();
  for (const auto& frame : body_frames)
    for (const auto& s : frame) s.validate();
}

std::vector<ScenePath> scene_to_paths(const Scene& scene, int receiver_index,
                                      int frame_index) {
  scene.validate();
  if (receiver_index < 0 || receiver_index >= static_cast<int>(scene.receivers.size()))
    throw std::invalid_argument("scene_to_paths: receiver index out of range");
  if (!scene.body_frames.empty() &&
      (frame_index < 0 || frame_index >= static_cast<int>(scene.body_frames.size())))
    throw std::invalid_argument("scene_to_paths: frame index out of range");

  const DevicePose& rx = scene.receivers[receiver_index];
  const Vec3 tx_pos = scene.tx.position;
  std::vector<ScenePath> paths;

  auto reflected_path = [&](const Scatterer& s, PathClass cls, bool jitter) {
    const Real leg_tx = (s.position - tx_pos).norm();
    const Real leg_rx = (rx.position - s.position).norm();
    if (leg_tx <= 0.0 || leg_rx <= 0.0)
      throw std::invalid_argument("scene_to_paths: scatterer coincides with a device");
    ScenePath p;
    p.signature.direction = arrival_direction(rx, s.position);
    p.signature.aod_deg = departure_angle_deg(scene.tx, s.position);
    p.signature.tof_s = (leg_tx + leg_rx) / kSpeedOfLight;
    p.gain = s.reflectivity / (leg_tx * leg_rx) *
             specular_weight(s, tx_pos, rx.position, scene.specular_exponent);
    p.cls = cls;
    p.phase_jitter = jitter;
    return p;
  };

  if (scene.include_los) {
    const Real leg = (rx.position - tx_pos).norm();
    if (leg <= 0.0) throw std::invalid_argument("scene_to_paths: tx and rx coincide");
    ScenePath los;
    los.signature.direction = arrival_direction(rx, tx_pos);
    los.signature.aod_deg = departure_angle_deg(scene.tx, rx.position);
    los.signature.tof_s = leg / kSpeedOfLight;
    los.gain = 1.0 / leg;
    los.cls = PathClass::line_of_sight;
    los.phase_jitter = false;
    paths.push_back(los);
  }

  for (const auto& s : scene.static_reflectors)
    paths.push_back(reflected_path(s, PathClass::static_reflector, false));

  if (!scene.body_frames.empty()) {
    const auto& body = scene.body_frames[frame_index];
    for (const auto& s : body)
      paths.push_back(reflected_path(s, PathClass::body, scene.body_path_jitter));

    if (scene.include_second_bounce) {
      for (const auto& b : body) {
        for (const auto& st : scene.static_reflectors) {
          const Real l1 = (b.position - tx_pos).norm();
          const Real l2 = (st.position - b.position).norm();
          const Real l3 = (rx.position - st.position).norm();
          if (l1 <= 0.0 || l2 <= 0.0 || l3 <= 0.0) continue;
          ScenePath p;
          p.signature.direction = arrival_direction(rx, st.position);
          p.signature.aod_deg = departure_angle_deg(scene.tx, b.position);
          p.signature.tof_s = (l1 + l2 + l3) / kSpeedOfLight;
          p.gain = b.reflectivity * st.reflectivity / (l1 * l2 * l3) *
                   specular_weight(b, tx_pos, st.position, scene.specular_exponent);
          p.cls = PathClass::second_bounce;
          p.phase_jitter = scene.body_path_jitter;
          paths.push_back(p);
        }
      }
    }
  }
  return paths;
}

CsiTrace synthesize_csi(const std::vector<ScenePath>& paths, const RadioConfig& config,
                        int num_packets, const ImpairmentSpec& impairments,
                        const SynthesisOptions& options) {
  if (num_packets < 1) throw std::invalid_argument("synthesize_csi: need >= 1 packet");
  config.validate();
  const int dim = config.joint_dim();

  // Per-path steering vectors are packet-invariant.
  const ArrayGeometry geometry = ArrayGeometry::l_shaped(config.num_rx, config.rx_spacing_m);
  std::vector<CVec> steering;
  steering.reserve(paths.size());
  for (const auto& p : paths) steering.push_back(joint_steering_vector(config, geometry, p.signature));

  CsiTrace trace;
  trace.radio = config;
  trace.packets.resize(num_packets);

  // Mean signal power for noise scaling, from the deterministic noiseless sum
  // of one representative packet per jitter draw; measured directly below.
  std::vector<CVec> noiseless(num_packets);

  parallel_for(0, num_packets, [&](std::int64_t t) {
    const std::uint64_t pkt = options.packet_index_base + static_cast<std::uint64_t>(t);
    CVec x = CVec::Zero(dim);
    Rng jitter_rng = Rng::stream(impairments.seed + options.stream_id, kStreamJitter, pkt);
    for (std::size_t p = 0; p < paths.size(); ++p) {
      Complex g = paths[p].gain;
      if (paths[p].phase_jitter) g *= std::polar(1.0, jitter_rng.uniform(0.0, 2.0 * kPi));
      x.noalias() += g * steering[p];
    }
    // Per-packet STO ramp across subcarriers.
    if (impairments.sto_slope_std_s > 0.0) {
      Rng sto_rng = Rng::stream(impairments.seed + options.stream_id, kStreamSto, pkt);
      const Real eps = sto_rng.normal() * impairments.sto_slope_std_s;
      const Real c0 = -2.0 * kPi * config.subcarrier_spacing_hz * eps;
      for (int v = 0; v < config.num_tx; ++v)
        for (int y = 0; y < config.num_rx; ++y)
          for (int k = 0; k < config.num_subcarriers; ++k)
            x(config.flat_index(v, y, k)) *= std::polar(1.0, c0 * k);
    }
    if (impairments.common_phase) {
      Rng phase_rng = Rng::stream(impairments.seed + options.stream_id, kStreamCommonPhase, pkt);
      x *= std::polar(1.0, phase_rng.uniform(0.0, 2.0 * kPi));
    }
    noiseless[t] = std::move(x);
  });

  Real noise_variance = 0.0;
  if (impairments.snr_db) {
    Real power = 0.0;
    for (const auto& x : noiseless) power += x.squaredNorm();
    power /= static_cast<Real>(num_packets) * dim;
    noise_variance = power / std::pow(10.0, *impairments.snr_db / 10.0);
  }

  parallel_for(0, num_packets, [&](std::int64_t t) {
    CsiPacket& pkt = trace.packets[t];
    pkt.timestamp_ns = options.start_timestamp_ns + t * options.packet_interval_ns;
    pkt.h = std::move(noiseless[t]);
    if (noise_variance > 0.0) {
      const std::uint64_t idx = options.packet_index_base + static_cast<std::uint64_t>(t);
      Rng noise_rng = Rng::stream(impairments.seed + options.stream_id, kStreamNoise, idx);
      for (int i = 0; i < dim; ++i) pkt.h(i) += noise_rng.complex_normal(noise_variance);
    }
  });

  return trace;
}

std::vector<std::vector<Scatterer>> animate_body(const BodyTemplate& tmpl,
                                                 const std::vector<BodyParams>& params_seq,
                                                 int samples_per_frame, std::uint64_t seed,
                                                 Real reflectivity) {
  if (samples_per_frame < 1)
    throw std::invalid_argument("animate_body: need >= 1 sample per frame");

  // Sample layout (face index + barycentric coordinates) is drawn once from
  // the template so frames with identical params share identical samples.
  const BodyMesh rest = smpl_map(tmpl, ShapeParams{}, PoseParams{}, Vec3::Zero());
  const int nf = static_cast<int>(rest.faces.rows());
  RVec area(nf);
  for (int f = 0; f < nf; ++f) {
    const Vec3 a = rest.vertices.row(rest.faces(f, 0));
    const Vec3 b = rest.vertices.row(rest.faces(f, 1));
    const Vec3 c = rest.vertices.row(rest.faces(f, 2));
    area(f) = 0.5 * (b - a).cross(c - a).norm();
  }
  RVec cdf(nf);
  Real run = 0.0;
  for (int f = 0; f < nf; ++f) {
    run += area(f);
    cdf(f) = run;
  }
  const Real total = run;

  Rng rng = Rng::stream(seed, 0x5a5a, 0);
  struct SampleSpec {
    int face;
    Real u, v;
  };
  std::vector<SampleSpec> layout(samples_per_frame);
  for (auto& s : layout) {
    const Real target = rng.uniform() * total;
    int lo = 0, hi = nf - 1;
    while (lo < hi) {
      const int mid = (lo + hi) / 2;
      if (cdf(mid) < target) lo = mid + 1; else hi = mid;
    }
    s.face = lo;
    Real u = rng.uniform();
    Real v = rng.uniform();
    if (u + v > 1.0) { u = 1.0 - u; v = 1.0 - v; }
    s.u = u;
    s.v = v;
  }

  std::vector<std::vector<Scatterer>> frames(params_seq.size());
  for (std::size_t t = 0; t < params_seq.size(); ++t) {
    const BodyParams& p = params_seq[t];
    const BodyMesh mesh = smpl_map(tmpl, p.shape, p.pose, p.translation);
    frames[t].reserve(samples_per_frame);
    for (const auto& s : layout) {
      const Vec3 a = mesh.vertices.row(mesh.faces(s.face, 0));
      const Vec3 b = mesh.vertices.row(mesh.faces(s.face, 1));
      const Vec3 c = mesh.vertices.row(mesh.faces(s.face, 2));
      Scatterer sc;
      sc.position = a + s.u * (b - a) + s.v * (c - a);
      sc.reflectivity = reflectivity;
      const Vec3 n = (b - a).cross(c - a);
      const Real len = n.norm();
      if (len > 1e-15) sc.normal = Vec3(n / len);
      frames[t].push_back(sc);
    }
  }
  return frames;
}

}  // namespace wimesh
