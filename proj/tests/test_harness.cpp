// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "wimesh/pipeline.hpp"
#include "wimesh/rng.hpp"

using namespace wimesh;
namespace fs = std::filesystem;

namespace {

std::string temp_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir.string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

CsiTrace small_trace(int packets) {
  RadioConfig cfg;
  std::vector<ScenePath> paths(1);
  paths[0].signature = PathSignature{{75.0, 60.0}, 10.0, 12e-9};
  paths[0].gain = Complex(0.4, 0.1);
  ImpairmentSpec imp;
  imp.snr_db = 15.0;
  imp.sto_slope_std_s = 1e-9;
  imp.common_phase = true;
  imp.seed = 31;
  return synthesize_csi(paths, cfg, packets, imp);
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(WIMESH_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

}  // namespace

TEST_CASE("trace files: round trip, header size, corruption reporting") {
  const std::string dir = temp_dir("wimesh_trace_test");

  SUBCASE("write -> read -> write is byte-identical; values survive at f32") {
    CsiTrace trace = small_trace(3);
    const std::string p1 = dir + "/a.wcsi";
    const std::string p2 = dir + "/b.wcsi";
    write_trace(p1, trace);
    const CsiTrace back = read_trace(p1);
    REQUIRE(back.packets.size() == trace.packets.size());
    CHECK(back.radio.num_rx == trace.radio.num_rx);
    CHECK(back.packets[1].timestamp_ns == trace.packets[1].timestamp_ns);
    for (int i = 0; i < 30; ++i) {
      CHECK(back.packets[0].h(i).real() ==
            static_cast<float>(trace.packets[0].h(i).real()));
      CHECK(back.packets[0].h(i).imag() ==
            static_cast<float>(trace.packets[0].h(i).imag()));
    }
    write_trace(p2, back);
    CHECK(slurp(p1) == slurp(p2));
  }

  SUBCASE("empty trace is a valid 32-byte header-only file") {
    CsiTrace empty;
    const std::string p = dir + "/empty.wcsi";
    write_trace(p, empty);
    CHECK(fs::file_size(p) == 32);
    const CsiTrace back = read_trace(p);
    CHECK(back.packets.empty());
  }

  SUBCASE("bad magic names byte offset 0") {
    const std::string p = dir + "/bad.wcsi";
    std::ofstream out(p, std::ios::binary);
    out << "XXXX0123456789012345678901234567";
    out.close();
    try {
      read_trace(p);
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()).find("offset 0") != std::string::npos);
    }
  }

  SUBCASE("truncation mid-packet names the packet index") {
    CsiTrace trace = small_trace(3);
    const std::string p = dir + "/trunc.wcsi";
    write_trace(p, trace);
    const std::string full = slurp(p);
    const std::string cut = full.substr(0, 32 + (8 + 810 * 8) + 100);  // inside packet 1
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << cut;
    out.close();
    try {
      read_trace(p);
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()).find("packet 1") != std::string::npos);
    }
  }

  SUBCASE("missing file raises MissingInputError") {
    CHECK_THROWS_AS(read_trace(dir + "/absent.wcsi"), MissingInputError);
  }
}

TEST_CASE("scene files: save / load round trip") {
  const std::string dir = temp_dir("wimesh_scene_test");
  const SceneSpec spec = make_demo_scene("single_pose");
  const std::string p = dir + "/scene.json";
  save_scene(p, spec);
  const SceneSpec back = load_scene(p);

  CHECK(back.scene.receivers.size() == spec.scene.receivers.size());
  CHECK((back.scene.tx.position - spec.scene.tx.position).norm() < 1e-12);
  REQUIRE(back.body_params.size() == spec.body_params.size());
  for (std::size_t t = 0; t < back.body_params.size(); ++t) {
    CHECK((back.body_params[t].pose.gamma - spec.body_params[t].pose.gamma)
              .cwiseAbs()
              .maxCoeff() < 1e-12);
    CHECK((back.body_params[t].translation - spec.body_params[t].translation).norm() < 1e-12);
  }
  CHECK(back.scene.body_frames.size() == spec.scene.body_frames.size());
  // regenerated scatterers are identical (same params, samples, seed)
  CHECK((back.scene.body_frames[0][5].position - spec.scene.body_frames[0][5].position)
            .norm() == 0.0);

  SUBCASE("malformed scene JSON raises ConfigError") {
    const std::string bad = dir + "/bad.json";
    std::ofstream out(bad);
    out << "{ not json";
    out.close();
    CHECK_THROWS_AS(load_scene(bad), ConfigError);
  }
  SUBCASE("missing scene raises MissingInputError") {
    CHECK_THROWS_AS(load_scene(dir + "/absent.json"), MissingInputError);
  }
}

TEST_CASE("params files and metrics") {
  const std::string dir = temp_dir("wimesh_params_test");
  std::vector<BodyParams> params(kTensorFrames);
  Rng rng(5);
  for (auto& p : params) {
    for (int i = 0; i < 72; ++i) p.pose.gamma(i) = 0.1 * rng.normal();
    for (int i = 0; i < 10; ++i) p.shape.beta(i) = 0.5 * rng.normal();
    p.translation = Vec3(rng.normal(), rng.normal(), rng.normal());
  }
  const std::string p = dir + "/params.json";
  write_params_file(p, params, "cafebabe", 7);
  const auto back = read_params_file(p);
  REQUIRE(back.size() == params.size());
  for (std::size_t t = 0; t < params.size(); ++t)
    CHECK((back[t].pose.gamma - params[t].pose.gamma).cwiseAbs().maxCoeff() < 1e-12);

  SUBCASE("metrics means equal recomputed means; json embeds hash and seed") {
    std::vector<BodyParams> truth(kTensorFrames);
    const MetricsReport report = evaluate_params(params, truth, "cafebabe", 7);
    Real mean = 0.0;
    for (const Real v : report.pve_cm) mean += v;
    mean /= report.pve_cm.size();
    CHECK(report.mean_pve_cm == doctest::Approx(mean).epsilon(1e-9));
    const std::string mp = dir + "/metrics.json";
    write_metrics(mp, report);
    const std::string text = slurp(mp);
    CHECK(text.find("cafebabe") != std::string::npos);
    CHECK(text.find("\"seed\": 7") != std::string::npos);
  }
}

TEST_CASE("image exports are deterministic and self-describing") {
  const std::string dir = temp_dir("wimesh_image_test");
  Rng rng(11);
  Image img(kImageSize, kImageSize);
  for (int r = 0; r < kImageSize; ++r)
    for (int c = 0; c < kImageSize; ++c) img(r, c) = rng.uniform(0.0, 5.0);

  write_image_pgm(dir + "/a.pgm", img, "config deadbeef seed 1");
  write_image_pgm(dir + "/b.pgm", img, "config deadbeef seed 1");
  CHECK(slurp(dir + "/a.pgm") == slurp(dir + "/b.pgm"));
  const std::string sidecar = slurp(dir + "/a.pgm.txt");
  CHECK(sidecar.find("min") != std::string::npos);
  CHECK(sidecar.find("deadbeef") != std::string::npos);

  write_image_csv(dir + "/a.csv", img, "config deadbeef seed 1");
  const Image back = read_image_csv(dir + "/a.csv");
  CHECK((back - img).abs().maxCoeff() == 0.0);  // %.17g round-trips doubles
}

TEST_CASE("obj export") {
  const std::string dir = temp_dir("wimesh_obj_test");
  const BodyMesh mesh = smpl_map(standard_body(), ShapeParams{}, PoseParams{}, Vec3(1, 2, 0));
  write_mesh_obj(dir + "/body.obj", mesh);
  const std::string text = slurp(dir + "/body.obj");
  std::size_t v_count = 0, f_count = 0;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("v ", 0) == 0) ++v_count;
    if (line.rfind("f ", 0) == 0) ++f_count;
  }
  CHECK(v_count == static_cast<std::size_t>(mesh.vertices.rows()));
  CHECK(f_count == static_cast<std::size_t>(mesh.faces.rows()));
  const std::string joints = slurp(dir + "/body.obj.joints.csv");
  CHECK(joints.find("joint,x,y,z") == 0);
}

TEST_CASE("pipeline config: defaults, overrides, errors") {
  const std::string dir = temp_dir("wimesh_config_test");
  const std::string p = dir + "/config.json";
  {
    std::ofstream out(p);
    out << R"({"seed": 9, "search": {"mode": "exhaustive", "top_q": 4},
               "pipeline": {"frames": 15, "packets_per_frame": 20}})";
  }
  const PipelineConfig cfg = PipelineConfig::from_json_file(p);
  CHECK(cfg.seed == 9);
  CHECK(cfg.search.mode == SearchMode::exhaustive);
  CHECK(cfg.search.top_q == 4);
  CHECK(cfg.packets_per_frame == 20);
  CHECK(cfg.radio.num_rx == 9);  // untouched default

  // the hash covers the echoed config
  PipelineConfig other = cfg;
  other.seed = 10;
  CHECK(cfg.config_hash() != other.config_hash());

  {
    std::ofstream out(dir + "/bad.json");
    out << R"({"search": {"mode": "warp"}})";
  }
  CHECK_THROWS_AS(PipelineConfig::from_json_file(dir + "/bad.json"), ConfigError);
  {
    std::ofstream out(dir + "/parse.json");
    out << "{";
  }
  CHECK_THROWS_AS(PipelineConfig::from_json_file(dir + "/parse.json"), ConfigError);
}

TEST_CASE("cli: exit codes and stage chaining") {
  const std::string dir = temp_dir("wimesh_cli_test");

  // missing config -> 3; malformed config -> 2
  CHECK(run_cli("simulate --config " + dir + "/absent.json") == 3);
  {
    std::ofstream out(dir + "/bad.json");
    out << R"({"search": {"mode": "warp"}})";
  }
  CHECK(run_cli("simulate --config " + dir + "/bad.json --scene x.json") == 2);

  // gen-scenes then a short simulate/sanitize/estimate chain
  CHECK(run_cli("gen-scenes --out " + dir + "/scenes") == 0);
  CHECK(fs::exists(dir + "/scenes/single_path.json"));

  {
    std::ofstream out(dir + "/config.json");
    out << R"({"pipeline": {"frames": 1, "packets_per_frame": 20}, "seed": 3})";
  }
  CHECK(run_cli("simulate --config " + dir + "/config.json --scene " + dir +
                "/scenes/single_path.json --out " + dir + "/sim") == 0);
  CHECK(fs::exists(dir + "/sim/rx0.wcsi"));

  CHECK(run_cli("sanitize --in " + dir + "/sim/rx0.wcsi --out-file " + dir +
                "/sim/rx0_clean.wcsi") == 0);
  CHECK(run_cli("estimate --config " + dir + "/config.json --in " + dir +
                "/sim/rx0_clean.wcsi --out " + dir + "/est") == 0);
  CHECK(fs::exists(dir + "/est/aoa_rx0_f00.pgm"));
  CHECK(fs::exists(dir + "/est/aoa_rx0_f00.csv"));

  // single-receiver run writes only rx0
  CHECK(run_cli("simulate --config " + dir + "/config.json --scene " + dir +
                "/scenes/single_path.json --receivers 1 --out " + dir + "/sim1rx") == 0);
  CHECK(fs::exists(dir + "/sim1rx/rx0.wcsi"));
  CHECK_FALSE(fs::exists(dir + "/sim1rx/rx1.wcsi"));

  // rerun simulate: byte-identical trace (determinism smoke)
  CHECK(run_cli("simulate --config " + dir + "/config.json --scene " + dir +
                "/scenes/single_path.json --out " + dir + "/sim2") == 0);
  CHECK(slurp(dir + "/sim/rx0.wcsi") == slurp(dir + "/sim2/rx0.wcsi"));
}
