// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "wimesh/pipeline.hpp"
#include "wimesh/rng.hpp"
#include "wimesh/scene_simulator.hpp"

using namespace wimesh;

namespace {

Scene empty_scene() {
  Scene sc;
  sc.tx = DevicePose{Vec3(0.0, 2.0, 0.5), 0.0};
  sc.receivers = {DevicePose{Vec3(0.0, 0.0, 0.0), 0.0}};
  sc.include_los = false;
  return sc;
}

}  // namespace

TEST_CASE("scene_to_paths geometry") {
  SUBCASE("empty scene, LoS off, gives no paths") {
    CHECK(scene_to_paths(empty_scene(), 0, 0).empty());
  }

  SUBCASE("scatterer straight above a co-located tx/rx pair") {
    Scene sc = empty_scene();
    const Real h = 1.7;
    sc.tx.position = Vec3(0.0, 1e-9, 0.0);  // nudged into the front half-space
    sc.body_frames = {{Scatterer{Vec3(0.0, 0.0, h), 1.0, std::nullopt}}};
    const auto paths = scene_to_paths(sc, 0, 0);
    REQUIRE(paths.size() == 1);
    CHECK(paths[0].signature.direction.elevation_deg == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(paths[0].signature.tof_s == doctest::Approx(2.0 * h / kSpeedOfLight).epsilon(1e-9));
    CHECK(paths[0].cls == PathClass::body);
  }

  SUBCASE("gain decays as the product of leg lengths") {
    Scene sc = empty_scene();
    sc.body_frames = {{Scatterer{Vec3(0.6, 1.5, 0.9), Complex(0.8, 0.0), std::nullopt}}};
    const auto paths = scene_to_paths(sc, 0, 0);
    const Real l1 = (sc.body_frames[0][0].position - sc.tx.position).norm();
    const Real l2 = sc.body_frames[0][0].position.norm();
    CHECK(std::abs(paths[0].gain) == doctest::Approx(0.8 / (l1 * l2)).epsilon(1e-12));
  }

  SUBCASE("scatterer behind the array plane is rejected") {
    Scene sc = empty_scene();
    sc.body_frames = {{Scatterer{Vec3(0.2, -0.5, 0.9), 1.0, std::nullopt}}};
    CHECK_THROWS_AS(scene_to_paths(sc, 0, 0), std::invalid_argument);
  }

  SUBCASE("specular lobe scales the gain by max(0, n.b)^s") {
    Scene sc = empty_scene();
    sc.specular_exponent = 4.0;
    Scatterer s;
    s.position = Vec3(0.3, 1.5, 1.5);
    const Vec3 to_tx = (sc.tx.position - s.position).normalized();
    const Vec3 to_rx = (sc.receivers[0].position - s.position).normalized();
    const Vec3 bisector = (to_tx + to_rx).normalized();

    s.normal = bisector;  // mirror-aligned: full gain
    sc.body_frames = {{s}};
    const auto facing = scene_to_paths(sc, 0, 0);
    const Real l1 = (s.position - sc.tx.position).norm();
    const Real l2 = s.position.norm();
    CHECK(std::abs(facing[0].gain) == doctest::Approx(1.0 / (l1 * l2)).epsilon(1e-9));

    sc.body_frames[0][0].normal = Vec3(-bisector);  // facing away: lobe clips to zero
    const auto away = scene_to_paths(sc, 0, 0);
    CHECK(std::abs(away[0].gain) == 0.0);
  }

  SUBCASE("LoS amplitude exceeds any single body-path amplitude in demo scenes") {
    for (const auto& name : {"static_only", "clutter", "walking", "single_pose"}) {
      const SceneSpec spec = make_demo_scene(name);
      if (!spec.scene.include_los) continue;
      for (int r = 0; r < static_cast<int>(spec.scene.receivers.size()); ++r) {
        const int frames = std::max<int>(1, static_cast<int>(spec.scene.body_frames.size()));
        for (int f = 0; f < frames; ++f) {
          const auto paths = scene_to_paths(spec.scene, r, f);
          Real los = 0.0, body = 0.0;
          for (const auto& p : paths) {
            if (p.cls == PathClass::line_of_sight) los = std::abs(p.gain);
            else if (p.cls == PathClass::body || p.cls == PathClass::second_bounce)
              body = std::max(body, std::abs(p.gain));
          }
          CHECK(los > body);
        }
      }
    }
  }

  SUBCASE("second bounce paths are weaker than their direct counterparts") {
    const SceneSpec spec = make_demo_scene("clutter");
    const auto paths = scene_to_paths(spec.scene, 0, 0);
    Real direct_min = 1e30, bounce_max = 0.0;
    for (const auto& p : paths) {
      if (p.cls == PathClass::body) direct_min = std::min(direct_min, std::abs(p.gain));
      if (p.cls == PathClass::second_bounce) bounce_max = std::max(bounce_max, std::abs(p.gain));
    }
    CHECK(bounce_max > 0.0);
    CHECK(bounce_max < direct_min);
  }
}

TEST_CASE("synthesize_csi forward model") {
  RadioConfig cfg;
  const ArrayGeometry geom = ArrayGeometry::l_shaped(cfg.num_rx, cfg.rx_spacing_m);

  SUBCASE("single path, noiseless, no impairments: exact steering product") {
    std::vector<ScenePath> paths(1);
    paths[0].signature = PathSignature{{48.0, 65.0}, -12.0, 4e-8};
    paths[0].gain = Complex(0.4, -0.2);
    const CsiTrace trace = synthesize_csi(paths, cfg, 2, ImpairmentSpec{});
    const CVec a = joint_steering_vector(cfg, geom, paths[0].signature);
    for (const auto& pkt : trace.packets)
      for (int i = 0; i < a.size(); ++i)
        CHECK(std::abs(pkt.h(i) - paths[0].gain * a(i)) < 1e-12);
  }

  SUBCASE("impairments are pure phase: amplitude spectra identical across packets") {
    std::vector<ScenePath> paths(2);
    paths[0].signature = PathSignature{{48.0, 65.0}, -12.0, 4e-8};
    paths[0].gain = 0.5;
    paths[1].signature = PathSignature{{110.0, 80.0}, 25.0, 9e-8};
    paths[1].gain = Complex(0.2, 0.3);
    ImpairmentSpec imp;
    imp.common_phase = true;
    imp.sto_slope_std_s = 4e-9;
    imp.seed = 3;
    const CsiTrace trace = synthesize_csi(paths, cfg, 5, imp);
    for (std::size_t t = 1; t < trace.packets.size(); ++t)
      for (int i = 0; i < cfg.joint_dim(); ++i)
        CHECK(std::abs(std::abs(trace.packets[t].h(i)) - std::abs(trace.packets[0].h(i))) <
              1e-9);
  }

  SUBCASE("synthesis is linear in the path set") {
    std::vector<ScenePath> a(1), b(1), both(2);
    a[0].signature = PathSignature{{48.0, 65.0}, -12.0, 4e-8};
    a[0].gain = 0.5;
    b[0].signature = PathSignature{{110.0, 80.0}, 25.0, 9e-8};
    b[0].gain = Complex(0.2, 0.3);
    both = {a[0], b[0]};
    ImpairmentSpec imp;
    imp.sto_slope_std_s = 5e-9;
    imp.common_phase = true;
    imp.seed = 11;
    const CsiTrace ta = synthesize_csi(a, cfg, 3, imp);
    const CsiTrace tb = synthesize_csi(b, cfg, 3, imp);
    const CsiTrace tab = synthesize_csi(both, cfg, 3, imp);
    for (std::size_t t = 0; t < tab.packets.size(); ++t)
      for (int i = 0; i < cfg.joint_dim(); ++i)
        CHECK(std::abs(tab.packets[t].h(i) - ta.packets[t].h(i) - tb.packets[t].h(i)) < 1e-9);
  }

  SUBCASE("per-packet common phase leaves outer products unchanged") {
    std::vector<ScenePath> paths(1);
    paths[0].signature = PathSignature{{70.0, 50.0}, 5.0, 2e-8};
    paths[0].gain = 1.0;
    ImpairmentSpec off;
    ImpairmentSpec on;
    on.common_phase = true;
    on.seed = off.seed = 21;
    const CsiTrace t_off = synthesize_csi(paths, cfg, 4, off);
    const CsiTrace t_on = synthesize_csi(paths, cfg, 4, on);
    for (std::size_t t = 0; t < 4; ++t) {
      const CMat r_off = t_off.packets[t].h * t_off.packets[t].h.adjoint();
      const CMat r_on = t_on.packets[t].h * t_on.packets[t].h.adjoint();
      CHECK((r_off - r_on).cwiseAbs().maxCoeff() < 1e-9);
    }
  }

  SUBCASE("requested SNR is met within 0.5 dB over >= 1e5 samples") {
    std::vector<ScenePath> paths(1);
    paths[0].signature = PathSignature{{60.0, 70.0}, 0.0, 5e-8};
    paths[0].gain = 0.7;
    ImpairmentSpec clean;
    ImpairmentSpec noisy;
    noisy.snr_db = 20.0;
    noisy.seed = clean.seed = 5;
    const int packets = 150;  // 150 * 810 = 121500 samples
    const CsiTrace t_clean = synthesize_csi(paths, cfg, packets, clean);
    const CsiTrace t_noisy = synthesize_csi(paths, cfg, packets, noisy);
    Real p_sig = 0.0, p_noise = 0.0;
    for (int t = 0; t < packets; ++t) {
      p_sig += t_clean.packets[t].h.squaredNorm();
      p_noise += (t_noisy.packets[t].h - t_clean.packets[t].h).squaredNorm();
    }
    const Real snr_db = 10.0 * std::log10(p_sig / p_noise);
    CHECK(std::abs(snr_db - 20.0) < 0.5);
  }

  SUBCASE("deterministic given seed, serial or parallel") {
    std::vector<ScenePath> paths(1);
    paths[0].signature = PathSignature{{60.0, 70.0}, 0.0, 5e-8};
    paths[0].gain = 0.7;
    paths[0].phase_jitter = true;
    ImpairmentSpec imp;
    imp.snr_db = 15.0;
    imp.sto_slope_std_s = 3e-9;
    imp.common_phase = true;
    imp.seed = 77;
    const CsiTrace t1 = synthesize_csi(paths, cfg, 32, imp);
    const CsiTrace t2 = synthesize_csi(paths, cfg, 32, imp);
    for (int t = 0; t < 32; ++t)
      for (int i = 0; i < cfg.joint_dim(); ++i)
        CHECK(t1.packets[t].h(i) == t2.packets[t].h(i));
  }
}

TEST_CASE("animate_body sampling") {
  const BodyTemplate& tmpl = standard_body();
  std::vector<BodyParams> seq(2);
  seq[1].translation = Vec3(1.0, 0.0, 0.0);

  const auto frames = animate_body(tmpl, seq, 64, 5, 0.5);
  REQUIRE(frames.size() == 2);
  REQUIRE(frames[0].size() == 64);

  SUBCASE("rigid translation moves every sample identically") {
    for (int i = 0; i < 64; ++i) {
      const Vec3 d = frames[1][i].position - frames[0][i].position;
      CHECK((d - Vec3(1.0, 0.0, 0.0)).norm() < 1e-12);
      CHECK(frames[0][i].normal.has_value());
      CHECK(std::abs(frames[0][i].normal->norm() - 1.0) < 1e-9);
    }
  }

  SUBCASE("identical params give identical samples under the same seed") {
    std::vector<BodyParams> twice(2);
    const auto f2 = animate_body(tmpl, twice, 32, 9, 0.5);
    for (int i = 0; i < 32; ++i)
      CHECK((f2[0][i].position - f2[1][i].position).norm() == 0.0);
  }

  SUBCASE("zero-pose samples lie on the template surface") {
    const BodyMesh mesh = smpl_map(tmpl, ShapeParams{}, PoseParams{}, Vec3::Zero());
    for (int i = 0; i < 16; ++i) {
      Real best = 1e30;
      for (int v = 0; v < mesh.vertices.rows(); ++v)
        best = std::min(best, (frames[0][i].position - Vec3(mesh.vertices.row(v))).norm());
      CHECK(best < 0.06);  // within a capsule facet of a vertex
    }
  }
}
