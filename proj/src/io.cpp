// SPDX-License-Identifier: Apache-2.0
#include "wimesh/io.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace wimesh {

namespace {

using ordered_json = nlohmann::ordered_json;

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}
void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_f32(std::string& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}
void put_f64(std::string& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(out, bits);
}

struct Reader {
  const std::string& data;
  std::size_t pos = 0;
  const std::string& path;

  void need(std::size_t n, const std::string& what) const {
    if (pos + n > data.size())
      throw FormatError(path + ": truncated " + what + " at byte offset " +
                        std::to_string(pos));
  }
  std::uint16_t u16(const std::string& what) {
    need(2, what);
    std::uint16_t v = 0;
    for (int i = 1; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(data[pos + i]);
    pos += 2;
    return v;
  }
  std::uint32_t u32(const std::string& what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(data[pos + i]);
    pos += 4;
    return v;
  }
  std::uint64_t u64(const std::string& what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(data[pos + i]);
    pos += 8;
    return v;
  }
  float f32(const std::string& what) {
    const std::uint32_t bits = u32(what);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  double f64(const std::string& what) {
    const std::uint64_t bits = u64(what);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingInputError(path + ": cannot open input file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error(path + ": cannot open output file");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error(path + ": write failed");
}

Vec3 json_vec3(const ordered_json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 3) throw ConfigError(what + ": expected [x, y, z]");
  return Vec3(j[0].get<Real>(), j[1].get<Real>(), j[2].get<Real>());
}

ordered_json vec3_json(const Vec3& v) { return ordered_json::array({v.x(), v.y(), v.z()}); }

Complex json_complex(const ordered_json& j, const std::string& what) {
  if (j.is_number()) return Complex(j.get<Real>(), 0.0);
  if (j.is_array() && j.size() == 2) return Complex(j[0].get<Real>(), j[1].get<Real>());
  throw ConfigError(what + ": expected number or [re, im]");
}

}  // namespace

void write_trace(const std::string& path, const CsiTrace& trace) {
  const RadioConfig& cfg = trace.radio;
  std::string out;
  out.reserve(32 + trace.packets.size() * (8 + static_cast<std::size_t>(cfg.joint_dim()) * 8));
  out += "WCSI";
  put_f64(out, cfg.carrier_freq_hz);
  put_f64(out, cfg.subcarrier_spacing_hz);
  put_u16(out, static_cast<std::uint16_t>(cfg.num_tx));
  put_u16(out, static_cast<std::uint16_t>(cfg.num_rx));
  put_u16(out, static_cast<std::uint16_t>(cfg.num_subcarriers));
  put_u16(out, 0);
  put_u32(out, static_cast<std::uint32_t>(trace.packets.size()));
  for (const auto& p : trace.packets) {
    if (p.h.size() != cfg.joint_dim())
      throw std::invalid_argument("write_trace: packet size mismatch");
    put_u64(out, static_cast<std::uint64_t>(p.timestamp_ns));
    for (int i = 0; i < p.h.size(); ++i) {
      put_f32(out, static_cast<float>(p.h(i).real()));
      put_f32(out, static_cast<float>(p.h(i).imag()));
    }
  }
  write_file(path, out);
}

CsiTrace read_trace(const std::string& path) {
  const std::string data = read_file(path);
  Reader r{data, 0, path};
  r.need(4, "magic");
  if (data.compare(0, 4, "WCSI") != 0)
    throw FormatError(path + ": bad magic at byte offset 0");
  r.pos = 4;

  CsiTrace trace;
  trace.radio.carrier_freq_hz = r.f64("header");
  trace.radio.subcarrier_spacing_hz = r.f64("header");
  trace.radio.num_tx = r.u16("header");
  trace.radio.num_rx = r.u16("header");
  trace.radio.num_subcarriers = r.u16("header");
  r.u16("header");  // reserved
  const std::uint32_t count = r.u32("header");
  trace.radio.bandwidth_hz = trace.radio.subcarrier_spacing_hz * trace.radio.num_subcarriers;
  trace.radio.validate();

  const int dim = trace.radio.joint_dim();
  trace.packets.resize(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string what = "packet " + std::to_string(i);
    CsiPacket& p = trace.packets[i];
    p.timestamp_ns = static_cast<std::int64_t>(r.u64(what));
    p.h.resize(dim);
    for (int k = 0; k < dim; ++k) {
      const float re = r.f32(what);
      const float im = r.f32(what);
      p.h(k) = Complex(re, im);
    }
  }
  return trace;
}

void quantize_trace(CsiTrace* trace) {
  for (auto& p : trace->packets)
    for (int i = 0; i < p.h.size(); ++i)
      p.h(i) = Complex(static_cast<float>(p.h(i).real()),
                       static_cast<float>(p.h(i).imag()));
}

void write_tensor(const std::string& path, const InputTensor& tensor) {
  std::string out;
  out += "WMT1";
  put_u32(out, kTensorReceivers);
  put_u32(out, kImageSize);
  put_u32(out, kImageSize);
  for (const Real v : tensor.data) put_f32(out, static_cast<float>(v));
  for (const auto t : tensor.frame_timestamps_ns) put_u64(out, static_cast<std::uint64_t>(t));
  write_file(path, out);
}

InputTensor read_tensor(const std::string& path) {
  const std::string data = read_file(path);
  Reader r{data, 0, path};
  r.need(4, "magic");
  if (data.compare(0, 4, "WMT1") != 0)
    throw FormatError(path + ": bad magic at byte offset 0");
  r.pos = 4;
  const std::uint32_t receivers = r.u32("header");
  const std::uint32_t el = r.u32("header");
  const std::uint32_t az = r.u32("header");
  if (receivers != kTensorReceivers || el != kImageSize || az != kImageSize)
    throw FormatError(path + ": unsupported tensor dimensions");
  InputTensor tensor;
  for (auto& v : tensor.data) v = r.f32("tensor data");
  for (auto& t : tensor.frame_timestamps_ns)
    t = static_cast<std::int64_t>(r.u64("timestamps"));
  return tensor;
}

void write_image_pgm(const std::string& path, const Image& image,
                     const std::string& provenance) {
  const Real lo = image.minCoeff();
  const Real hi = image.maxCoeff();
  const Real scale = hi > lo ? 65535.0 / (hi - lo) : 0.0;

  std::string out;
  out += "P5\n";
  out += std::to_string(image.cols()) + " " + std::to_string(image.rows()) + "\n65535\n";
  for (Eigen::Index r = 0; r < image.rows(); ++r)
    for (Eigen::Index c = 0; c < image.cols(); ++c) {
      const auto v = static_cast<std::uint16_t>(std::lround((image(r, c) - lo) * scale));
      out.push_back(static_cast<char>((v >> 8) & 0xff));  // PGM samples are big-endian
      out.push_back(static_cast<char>(v & 0xff));
    }
  write_file(path, out);

  char buf[128];
  std::string sidecar;
  std::snprintf(buf, sizeof buf, "min %.17g\nmax %.17g\n", lo, hi);
  sidecar += buf;
  sidecar += provenance;
  sidecar += "\n";
  write_file(path + ".txt", sidecar);
}

void write_image_csv(const std::string& path, const Image& image,
                     const std::string& provenance) {
  std::string out = "# " + provenance + "\n";
  char buf[64];
  for (Eigen::Index r = 0; r < image.rows(); ++r) {
    for (Eigen::Index c = 0; c < image.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", image(r, c));
      out += buf;
      out.push_back(c + 1 < image.cols() ? ',' : '\n');
    }
  }
  write_file(path, out);
}

Image read_image_csv(const std::string& path) {
  const std::string data = read_file(path);
  std::vector<std::vector<Real>> rows;
  std::istringstream in(data);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    rows.emplace_back();
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) rows.back().push_back(std::stod(cell));
  }
  if (rows.empty()) throw FormatError(path + ": no data rows");
  Image image(static_cast<Eigen::Index>(rows.size()),
              static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != rows[0].size())
      throw FormatError(path + ": ragged row " + std::to_string(r));
    for (std::size_t c = 0; c < rows[r].size(); ++c)
      image(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  }
  return image;
}

void write_mesh_obj(const std::string& path, const BodyMesh& mesh) {
  std::string out;
  char buf[128];
  for (int i = 0; i < mesh.vertices.rows(); ++i) {
    std::snprintf(buf, sizeof buf, "v %.6f %.6f %.6f\n", mesh.vertices(i, 0),
                  mesh.vertices(i, 1), mesh.vertices(i, 2));
    out += buf;
  }
  for (int f = 0; f < mesh.faces.rows(); ++f) {
    std::snprintf(buf, sizeof buf, "f %d %d %d\n", mesh.faces(f, 0) + 1,
                  mesh.faces(f, 1) + 1, mesh.faces(f, 2) + 1);
    out += buf;
  }
  write_file(path, out);

  std::string joints = "joint,x,y,z\n";
  for (int j = 0; j < 24; ++j) {
    std::snprintf(buf, sizeof buf, "%d,%.9f,%.9f,%.9f\n", j, mesh.joints(j, 0),
                  mesh.joints(j, 1), mesh.joints(j, 2));
    joints += buf;
  }
  write_file(path + ".joints.csv", joints);
}

SceneSpec load_scene(const std::string& path) {
  if (!std::filesystem::exists(path))
    throw MissingInputError(path + ": scene file not found");
  ordered_json j;
  try {
    std::ifstream in(path);
    in >> j;
  } catch (const std::exception& e) {
    throw ConfigError(path + ": invalid JSON (" + e.what() + ")");
  }

  SceneSpec spec;
  try {
    auto parse_pose = [&](const ordered_json& p) {
      DevicePose pose;
      pose.position = json_vec3(p.at("position"), "pose.position");
      pose.yaw_deg = p.value("yaw_deg", 0.0);
      return pose;
    };
    spec.scene.tx = parse_pose(j.at("tx"));
    for (const auto& r : j.at("receivers")) spec.scene.receivers.push_back(parse_pose(r));

    if (j.contains("static_reflectors")) {
      for (const auto& s : j["static_reflectors"]) {
        Scatterer sc;
        sc.position = json_vec3(s.at("position"), "reflector.position");
        if (s.contains("reflectivity"))
          sc.reflectivity = json_complex(s["reflectivity"], "reflector.reflectivity");
        if (s.contains("normal")) sc.normal = json_vec3(s["normal"], "reflector.normal").normalized();
        spec.scene.static_reflectors.push_back(sc);
      }
    }

    spec.scene.include_los = j.value("include_los", true);
    spec.scene.include_second_bounce = j.value("include_second_bounce", false);
    spec.scene.specular_exponent = j.value("specular_exponent", 4.0);
    spec.scene.body_path_jitter = j.value("body_path_jitter", true);

    if (j.contains("body")) {
      const auto& body = j["body"];
      const std::string mode = body.value("mode", "none");
      if (mode == "scatterers") {
        for (const auto& frame : body.at("frames")) {
          std::vector<Scatterer> fs;
          for (const auto& s : frame) {
            Scatterer sc;
            sc.position = json_vec3(s.at("position"), "body.position");
            if (s.contains("reflectivity"))
              sc.reflectivity = json_complex(s["reflectivity"], "body.reflectivity");
            if (s.contains("normal"))
              sc.normal = json_vec3(s["normal"], "body.normal").normalized();
            fs.push_back(sc);
          }
          spec.scene.body_frames.push_back(std::move(fs));
        }
      } else if (mode == "params") {
        spec.samples_per_frame = body.value("samples_per_frame", 32);
        spec.body_reflectivity = body.value("reflectivity", 0.5);
        spec.body_sample_seed = body.value("sample_seed", std::uint64_t{0});
        for (const auto& p : body.at("params_seq")) {
          BodyParams bp;
          const auto& gamma = p.at("gamma");
          const auto& beta = p.at("beta");
          if (gamma.size() != 72 || beta.size() != 10)
            throw ConfigError("body.params_seq: gamma must have 72 and beta 10 entries");
          for (int i = 0; i < 72; ++i) bp.pose.gamma(i) = gamma[i].get<Real>();
          for (int i = 0; i < 10; ++i) bp.shape.beta(i) = beta[i].get<Real>();
          bp.translation = json_vec3(p.at("translation"), "body.translation");
          spec.body_params.push_back(bp);
        }
        spec.scene.body_frames = animate_body(standard_body(), spec.body_params,
                                              spec.samples_per_frame, spec.body_sample_seed,
                                              spec.body_reflectivity);
      } else if (mode != "none") {
        throw ConfigError("body.mode must be none, scatterers, or params");
      }
    }

    if (j.contains("impairments")) {
      const auto& imp = j["impairments"];
      spec.impairments.sto_slope_std_s = imp.value("sto_slope_std_s", 0.0);
      spec.impairments.common_phase = imp.value("common_phase", false);
      if (imp.contains("snr_db") && !imp["snr_db"].is_string())
        spec.impairments.snr_db = imp["snr_db"].get<Real>();
      spec.impairments.seed = imp.value("seed", std::uint64_t{0});
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  spec.scene.validate();
  return spec;
}

void save_scene(const std::string& path, const SceneSpec& spec) {
  ordered_json j;
  auto pose_json = [](const DevicePose& p) {
    ordered_json o;
    o["position"] = vec3_json(p.position);
    o["yaw_deg"] = p.yaw_deg;
    return o;
  };
  j["tx"] = pose_json(spec.scene.tx);
  j["receivers"] = ordered_json::array();
  for (const auto& r : spec.scene.receivers) j["receivers"].push_back(pose_json(r));
  j["static_reflectors"] = ordered_json::array();
  for (const auto& s : spec.scene.static_reflectors) {
    ordered_json o;
    o["position"] = vec3_json(s.position);
    o["reflectivity"] = ordered_json::array({s.reflectivity.real(), s.reflectivity.imag()});
    if (s.normal) o["normal"] = vec3_json(*s.normal);
    j["static_reflectors"].push_back(o);
  }
  j["include_los"] = spec.scene.include_los;
  j["include_second_bounce"] = spec.scene.include_second_bounce;
  j["specular_exponent"] = spec.scene.specular_exponent;
  j["body_path_jitter"] = spec.scene.body_path_jitter;

  ordered_json body;
  if (!spec.body_params.empty()) {
    body["mode"] = "params";
    body["samples_per_frame"] = spec.samples_per_frame;
    body["reflectivity"] = spec.body_reflectivity;
    body["sample_seed"] = spec.body_sample_seed;
    body["params_seq"] = ordered_json::array();
    for (const auto& p : spec.body_params) {
      ordered_json o;
      o["gamma"] = ordered_json::array();
      for (int i = 0; i < 72; ++i) o["gamma"].push_back(p.pose.gamma(i));
      o["beta"] = ordered_json::array();
      for (int i = 0; i < 10; ++i) o["beta"].push_back(p.shape.beta(i));
      o["translation"] = vec3_json(p.translation);
      body["params_seq"].push_back(o);
    }
  } else if (!spec.scene.body_frames.empty()) {
    body["mode"] = "scatterers";
    body["frames"] = ordered_json::array();
    for (const auto& frame : spec.scene.body_frames) {
      ordered_json fj = ordered_json::array();
      for (const auto& s : frame) {
        ordered_json o;
        o["position"] = vec3_json(s.position);
        o["reflectivity"] = ordered_json::array({s.reflectivity.real(), s.reflectivity.imag()});
        if (s.normal) o["normal"] = vec3_json(*s.normal);
        fj.push_back(o);
      }
      body["frames"].push_back(fj);
    }
  } else {
    body["mode"] = "none";
  }
  j["body"] = body;

  ordered_json imp;
  imp["sto_slope_std_s"] = spec.impairments.sto_slope_std_s;
  imp["common_phase"] = spec.impairments.common_phase;
  if (spec.impairments.snr_db)
    imp["snr_db"] = *spec.impairments.snr_db;
  else
    imp["snr_db"] = "noiseless";
  imp["seed"] = spec.impairments.seed;
  j["impairments"] = imp;

  write_file(path, j.dump(2) + "\n");
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace wimesh
