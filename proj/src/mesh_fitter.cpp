// SPDX-License-Identifier: Apache-2.0
#include "wimesh/mesh_fitter.hpp"

#include <cmath>
#include <stdexcept>

#include "wimesh/parallel.hpp"
#include "wimesh/rng.hpp"

namespace wimesh {

namespace {

struct ProjectedSample {
  Real az_deg, el_deg, weight;
};

// Area-weighted face/barycentric layout from a vertex set.
template <typename SampleVec>
void draw_layout(const MatX3& vertices, const Faces& faces, int samples,
                 std::uint64_t seed, SampleVec* layout) {
  const int nf = static_cast<int>(faces.rows());
  RVec cdf(nf);
  Real run = 0.0;
  for (int f = 0; f < nf; ++f) {
    const Vec3 a = vertices.row(faces(f, 0));
    const Vec3 b = vertices.row(faces(f, 1));
    const Vec3 c = vertices.row(faces(f, 2));
    run += 0.5 * (b - a).cross(c - a).norm();
    cdf(f) = run;
  }
  Rng rng = Rng::stream(seed, 0xb0d7, 0);
  layout->resize(samples);
  for (auto& s : *layout) {
    const Real target = rng.uniform() * run;
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
}

// Project one surface point into receiver angles with the specular weight;
// returns false when the point is behind the array plane.
template <typename Sample>
bool project_sample(const BodyMesh& mesh, const Sample& s, const DevicePose& receiver,
                    const RenderConfig& config, ProjectedSample* out) {
  const Vec3 a = mesh.vertices.row(mesh.faces(s.face, 0));
  const Vec3 b = mesh.vertices.row(mesh.faces(s.face, 1));
  const Vec3 c = mesh.vertices.row(mesh.faces(s.face, 2));
  const Vec3 p = a + s.u * (b - a) + s.v * (c - a);

  const Vec3 local = receiver.to_local(p);
  const Real norm = local.norm();
  if (norm <= 0.0 || local.y() < 0.0) return false;
  const Vec3 u = local / norm;
  out->el_deg = rad2deg(std::acos(std::clamp(u.z(), -1.0, 1.0)));
  out->az_deg = rad2deg(std::atan2(u.y(), u.x()));

  Real weight = 1.0;
  const Vec3 n3 = (b - a).cross(c - a);
  const Real nl = n3.norm();
  if (nl > 1e-15) {
    const Vec3 normal = n3 / nl;
    const Vec3 to_rx = (receiver.position - p).normalized();
    Vec3 bisector = to_rx;
    if (config.tx_position) {
      bisector = Vec3(*config.tx_position - p).normalized() + to_rx;
      const Real bl = bisector.norm();
      if (bl <= 1e-12) return false;
      bisector /= bl;
    }
    weight = std::pow(std::max(0.0, normal.dot(bisector)), config.specular_exponent);
  }
  out->weight = weight;
  return true;
}

void splat(Image* image, const ProjectedSample& s, Real sigma) {
  if (s.weight <= 0.0) return;
  const int rows = static_cast<int>(image->rows());
  const int cols = static_cast<int>(image->cols());
  // 4 sigma support: the edge weight (~3e-4 of the peak) keeps the objective
  // smooth enough for finite-difference gradients
  const Real radius = 4.0 * sigma;
  const int el_lo = std::max(0, static_cast<int>(std::ceil(s.el_deg - radius)));
  const int el_hi = std::min(rows - 1, static_cast<int>(std::floor(s.el_deg + radius)));
  const int az_lo = std::max(0, static_cast<int>(std::ceil(s.az_deg - radius)));
  const int az_hi = std::min(cols - 1, static_cast<int>(std::floor(s.az_deg + radius)));
  const Real inv = 1.0 / (2.0 * sigma * sigma);
  for (int el = el_lo; el <= el_hi; ++el) {
    const Real de = el - s.el_deg;
    for (int az = az_lo; az <= az_hi; ++az) {
      const Real da = az - s.az_deg;
      (*image)(el, az) += s.weight * std::exp(-(de * de + da * da) * inv);
    }
  }
}

Real ncc(const Image& a, const Image& b) {
  const Real na = std::sqrt((a * a).sum());
  const Real nb = std::sqrt((b * b).sum());
  if (na <= 0.0 || nb <= 0.0) return 0.0;
  return (a * b).sum() / (na * nb);
}

}  // namespace

RenderedImage render_aoa(const BodyMesh& mesh, const DevicePose& receiver,
                         int az_bins, int el_bins, const RenderConfig& config) {
  if (config.samples < 1) throw std::invalid_argument("render_aoa: need >= 1 sample");
  if (config.blob_sigma_deg <= 0.0)
    throw std::invalid_argument("render_aoa: blob sigma must be positive");
  struct LocalSample {
    int face;
    Real u, v;
  };
  std::vector<LocalSample> local_layout;
  draw_layout(mesh.vertices, mesh.faces, config.samples, config.sample_seed, &local_layout);

  RenderedImage out;
  out.values = Image::Zero(el_bins, az_bins);
  int visible = 0;
  for (const auto& s : local_layout) {
    ProjectedSample proj;
    if (!project_sample(mesh, s, receiver, config, &proj)) continue;
    ++visible;
    splat(&out.values, proj, config.blob_sigma_deg);
  }
  out.behind_array = visible == 0;
  if (config.normalize) {
    const Real total = out.values.sum();
    if (total > 0.0) out.values /= total;
  }
  return out;
}

BodyRenderer::BodyRenderer(const BodyTemplate& tmpl, const RenderConfig& config)
    : tmpl_(&tmpl), config_(config) {
  if (config.samples < 1) throw std::invalid_argument("BodyRenderer: need >= 1 sample");
  if (config.blob_sigma_deg <= 0.0)
    throw std::invalid_argument("BodyRenderer: blob sigma must be positive");
  draw_layout(tmpl.vertices(), tmpl.faces(), config.samples, config.sample_seed, &layout_);
}

RenderedImage BodyRenderer::render(const BodyMesh& mesh, const DevicePose& receiver) const {
  RenderedImage out;
  out.values = Image::Zero(kImageSize, kImageSize);
  int visible = 0;
  for (const auto& s : layout_) {
    ProjectedSample proj;
    if (!project_sample(mesh, s, receiver, config_, &proj)) continue;
    ++visible;
    splat(&out.values, proj, config_.blob_sigma_deg);
  }
  out.behind_array = visible == 0;
  if (config_.normalize) {
    const Real total = out.values.sum();
    if (total > 0.0) out.values /= total;
  }
  return out;
}

InputTensor BodyRenderer::render_window(const std::vector<BodyParams>& params,
                                        const std::array<DevicePose, 2>& receivers) const {
  if (static_cast<int>(params.size()) != kTensorFrames)
    throw std::invalid_argument("render_window: need exactly 15 frames");
  InputTensor tensor;
  for (int t = 0; t < kTensorFrames; ++t) {
    const BodyMesh mesh =
        smpl_map(*tmpl_, params[t].shape, params[t].pose, params[t].translation);
    for (int r = 0; r < kTensorReceivers; ++r)
      tensor.set_slice(t, r, render(mesh, receivers[r]).values);
    tensor.frame_timestamps_ns[t] = t + 1;
  }
  return tensor;
}

void FitConfig::validate() const {
  if (max_iters < 1) throw std::invalid_argument("FitConfig: max_iters must be >= 1");
  if (fd_step <= 0.0) throw std::invalid_argument("FitConfig: fd_step must be positive");
  if (translation_step <= 0.0 || pose_step <= 0.0 || shape_step <= 0.0)
    throw std::invalid_argument("FitConfig: line-search steps must be positive");
}

namespace {

// Cached per-(frame, receiver) image terms plus prior terms; block updates
// touch only the entries they invalidate.
struct FitState {
  ShapeParams beta;
  std::vector<PoseParams> gamma;  // 15
  std::vector<Vec3> trans;        // 15
  Eigen::Matrix<Real, Eigen::Dynamic, 2> image_term;  // 15 x 2

  Real pose_prior(const FitConfig& cfg) const {
    if (cfg.pose_prior_weight == 0.0) return 0.0;
    Real s = 0.0;
    for (const auto& g : gamma) s += g.gamma.cwiseAbs().sum();
    return cfg.pose_prior_weight * s;
  }
  Real smoothness(const FitConfig& cfg) const {
    if (cfg.smoothness_weight == 0.0) return 0.0;
    Real s = 0.0;
    for (std::size_t t = 1; t < gamma.size(); ++t)
      s += (gamma[t].gamma - gamma[t - 1].gamma).cwiseAbs().sum();
    return cfg.smoothness_weight * s;
  }
  Real total(const FitConfig& cfg) const {
    return image_term.sum() + pose_prior(cfg) + smoothness(cfg);
  }
};

struct FitWorkspace {
  const InputTensor* observed;
  const std::array<DevicePose, 2>* receivers;
  const BodyRenderer* renderer;
  const FitConfig* cfg;

  Real frame_image_terms(const ShapeParams& beta, const PoseParams& pose, const Vec3& trans,
                         int frame, Real out_terms[2]) const {
    const BodyMesh mesh = smpl_map(renderer->body(), beta, pose, trans);
    Real sum = 0.0;
    for (int r = 0; r < kTensorReceivers; ++r) {
      const RenderedImage img = renderer->render(mesh, (*receivers)[r]);
      const Real corr = ncc(img.values, observed->slice(frame, r));
      out_terms[r] = 1.0 - corr;
      sum += out_terms[r];
    }
    return sum;
  }

  // Partial objective of one frame's pose: image terms + own prior +
  // smoothness edges to fixed neighbors.
  Real pose_partial(const FitState& st, int t, const PoseParams& candidate,
                    Real out_terms[2]) const {
    Real val = frame_image_terms(st.beta, candidate, st.trans[t], t, out_terms);
    if (cfg->pose_prior_weight != 0.0)
      val += cfg->pose_prior_weight * candidate.gamma.cwiseAbs().sum();
    if (cfg->smoothness_weight != 0.0) {
      if (t > 0)
        val += cfg->smoothness_weight * (candidate.gamma - st.gamma[t - 1].gamma).cwiseAbs().sum();
      if (t + 1 < static_cast<int>(st.gamma.size()))
        val += cfg->smoothness_weight * (st.gamma[t + 1].gamma - candidate.gamma).cwiseAbs().sum();
    }
    return val;
  }

  Real pose_partial_current(const FitState& st, int t) const {
    Real val = st.image_term(t, 0) + st.image_term(t, 1);
    if (cfg->pose_prior_weight != 0.0)
      val += cfg->pose_prior_weight * st.gamma[t].gamma.cwiseAbs().sum();
    if (cfg->smoothness_weight != 0.0) {
      if (t > 0)
        val += cfg->smoothness_weight *
               (st.gamma[t].gamma - st.gamma[t - 1].gamma).cwiseAbs().sum();
      if (t + 1 < static_cast<int>(st.gamma.size()))
        val += cfg->smoothness_weight *
               (st.gamma[t + 1].gamma - st.gamma[t].gamma).cwiseAbs().sum();
    }
    return val;
  }
};

constexpr Real kAcceptMargin = 1e-12;

}  // namespace

Real objective(const std::vector<BodyParams>& window, const InputTensor& observed,
               const std::array<DevicePose, 2>& receivers, const BodyRenderer& renderer,
               const FitConfig& config) {
  if (static_cast<int>(window.size()) != kTensorFrames)
    throw std::invalid_argument("objective: need exactly 15 frames");
  config.validate();
  FitWorkspace ws{&observed, &receivers, &renderer, &config};
  Real total = 0.0;
  if (config.objective_mode == FitConfig::ObjectiveMode::composite) {
    for (int r = 0; r < kTensorReceivers; ++r) {
      Image render_comp = Image::Zero(kImageSize, kImageSize);
      Image observed_comp = Image::Zero(kImageSize, kImageSize);
      for (int t = 0; t < kTensorFrames; ++t) {
        const BodyMesh mesh =
            smpl_map(renderer.body(), window[t].shape, window[t].pose, window[t].translation);
        render_comp = render_comp.max(renderer.render(mesh, receivers[r]).values);
        observed_comp = observed_comp.max(observed.slice(t, r));
      }
      total += 1.0 - ncc(render_comp, observed_comp);
    }
  } else {
    for (int t = 0; t < kTensorFrames; ++t) {
      Real terms[2];
      total += ws.frame_image_terms(window[t].shape, window[t].pose, window[t].translation, t,
                                    terms);
    }
  }
  if (config.pose_prior_weight != 0.0)
    for (const auto& p : window)
      total += config.pose_prior_weight * p.pose.gamma.cwiseAbs().sum();
  if (config.smoothness_weight != 0.0)
    for (std::size_t t = 1; t < window.size(); ++t)
      total += config.smoothness_weight *
               (window[t].pose.gamma - window[t - 1].pose.gamma).cwiseAbs().sum();
  if (!std::isfinite(total)) throw std::runtime_error("objective: non-finite value");
  return total;
}

namespace {
FitResult fit_sequence_composite(const InputTensor& observed,
                                 const std::array<DevicePose, 2>& receivers,
                                 const BodyRenderer& renderer, const FitConfig& config);
}  // namespace

FitResult fit_sequence(const InputTensor& observed,
                       const std::array<DevicePose, 2>& receivers,
                       const BodyRenderer& renderer, const FitConfig& config) {
  config.validate();
  observed.validate();
  if (config.objective_mode == FitConfig::ObjectiveMode::composite)
    return fit_sequence_composite(observed, receivers, renderer, config);

  FitState st;
  st.gamma.assign(kTensorFrames, PoseParams{});
  st.trans.assign(kTensorFrames, config.init_translation);
  st.image_term.resize(kTensorFrames, 2);
  if (config.init_mode == FitConfig::InitMode::previous_window) {
    if (static_cast<int>(config.init_params.size()) != kTensorFrames)
      throw std::invalid_argument("fit_sequence: previous_window init needs 15 param sets");
    st.beta = config.init_params[0].shape;
    for (int t = 0; t < kTensorFrames; ++t) {
      st.gamma[t] = config.init_params[t].pose;
      st.trans[t] = config.init_params[t].translation;
    }
  }

  FitWorkspace ws{&observed, &receivers, &renderer, &config};
  for (int t = 0; t < kTensorFrames; ++t) {
    Real terms[2];
    ws.frame_image_terms(st.beta, st.gamma[t], st.trans[t], t, terms);
    st.image_term(t, 0) = terms[0];
    st.image_term(t, 1) = terms[1];
  }

  FitResult result;
  result.objective_trace.push_back(st.total(config));

  // Backtracking line search along -gradient; first decrease wins.
  auto line_search = [&](auto eval, Real current, const RVec& grad, Real step0,
                         RVec* accepted_delta) {
    const Real gnorm = grad.norm();
    if (!(gnorm > 0.0)) return false;
    const RVec dir = -grad / gnorm;
    Real step = step0;
    for (int k = 0; k < 9; ++k, step *= 0.5) {
      const RVec delta = dir * step;
      const Real value = eval(delta);
      if (value < current - kAcceptMargin) {
        *accepted_delta = delta;
        return true;
      }
    }
    return false;
  };

  bool converged = false;
  for (int iter = 0; iter < config.max_iters && !converged; ++iter) {
    bool improved = false;
    const Real iter_start = result.objective_trace.back();

    // Translation block, per frame.
    for (int t = 0; t < kTensorFrames; ++t) {
      RVec grad(3);
      Real probes[6];
      parallel_for(0, 6, [&](std::int64_t p) {
        const int dim = static_cast<int>(p / 2);
        const Real sign = (p % 2 == 0) ? 1.0 : -1.0;
        Vec3 cand = st.trans[t];
        cand(dim) += sign * config.fd_step;
        Real terms[2];
        probes[p] = ws.frame_image_terms(st.beta, st.gamma[t], cand, t, terms);
      });
      for (int d = 0; d < 3; ++d)
        grad(d) = (probes[2 * d] - probes[2 * d + 1]) / (2.0 * config.fd_step);

      const Real current = st.image_term(t, 0) + st.image_term(t, 1);
      RVec delta;
      const bool ok = line_search(
          [&](const RVec& dv) {
            Real terms[2];
            return ws.frame_image_terms(st.beta, st.gamma[t], Vec3(st.trans[t] + Vec3(dv)), t,
                                        terms);
          },
          current, grad, config.translation_step, &delta);
      if (ok) {
        st.trans[t] += Vec3(delta);
        Real terms[2];
        ws.frame_image_terms(st.beta, st.gamma[t], st.trans[t], t, terms);
        st.image_term(t, 0) = terms[0];
        st.image_term(t, 1) = terms[1];
        result.objective_trace.push_back(st.total(config));
        improved = true;
      }
    }

    // Pose block, per frame.
    for (int t = 0; t < kTensorFrames; ++t) {
      RVec grad(72);
      std::vector<Real> probes(144);
      parallel_for(0, 144, [&](std::int64_t p) {
        const int dim = static_cast<int>(p / 2);
        const Real sign = (p % 2 == 0) ? 1.0 : -1.0;
        PoseParams cand = st.gamma[t];
        cand.gamma(dim) += sign * config.fd_step;
        Real terms[2];
        probes[p] = ws.pose_partial(st, t, cand, terms);
      });
      for (int d = 0; d < 72; ++d)
        grad(d) = (probes[2 * d] - probes[2 * d + 1]) / (2.0 * config.fd_step);

      const Real current = ws.pose_partial_current(st, t);
      RVec delta;
      const bool ok = line_search(
          [&](const RVec& dv) {
            PoseParams cand = st.gamma[t];
            cand.gamma += dv;
            Real terms[2];
            return ws.pose_partial(st, t, cand, terms);
          },
          current, grad, config.pose_step, &delta);
      if (ok) {
        st.gamma[t].gamma += delta;
        st.gamma[t] = st.gamma[t].canonicalized();
        Real terms[2];
        ws.frame_image_terms(st.beta, st.gamma[t], st.trans[t], t, terms);
        st.image_term(t, 0) = terms[0];
        st.image_term(t, 1) = terms[1];
        result.objective_trace.push_back(st.total(config));
        improved = true;
      }
    }

    // Shape block, shared across the window.
    if (config.fit_shape) {
      auto total_image = [&](const ShapeParams& beta) {
        Real sum = 0.0;
        for (int t = 0; t < kTensorFrames; ++t) {
          Real terms[2];
          sum += ws.frame_image_terms(beta, st.gamma[t], st.trans[t], t, terms);
        }
        return sum;
      };
      RVec grad(10);
      std::vector<Real> probes(20);
      parallel_for(0, 20, [&](std::int64_t p) {
        const int dim = static_cast<int>(p / 2);
        const Real sign = (p % 2 == 0) ? 1.0 : -1.0;
        ShapeParams cand = st.beta;
        cand.beta(dim) += sign * config.fd_step;
        probes[p] = total_image(cand);
      });
      for (int d = 0; d < 10; ++d)
        grad(d) = (probes[2 * d] - probes[2 * d + 1]) / (2.0 * config.fd_step);

      const Real current = st.image_term.sum();
      RVec delta;
      const bool ok = line_search(
          [&](const RVec& dv) {
            ShapeParams cand = st.beta;
            cand.beta += dv;
            return total_image(cand);
          },
          current, grad, config.shape_step, &delta);
      if (ok) {
        st.beta.beta += delta;
        st.beta.beta = st.beta.beta.cwiseMax(-3.0).cwiseMin(3.0);
        for (int t = 0; t < kTensorFrames; ++t) {
          Real terms[2];
          ws.frame_image_terms(st.beta, st.gamma[t], st.trans[t], t, terms);
          st.image_term(t, 0) = terms[0];
          st.image_term(t, 1) = terms[1];
        }
        result.objective_trace.push_back(st.total(config));
        improved = true;
      }
    }

    if (!improved) {
      converged = true;
      break;
    }
    const Real iter_end = result.objective_trace.back();
    if (iter_start - iter_end < config.tolerance * std::max(1.0, std::abs(iter_start)))
      converged = true;
  }

  result.converged = converged;
  result.params_seq.resize(kTensorFrames);
  for (int t = 0; t < kTensorFrames; ++t) {
    result.params_seq[t].shape = st.beta;
    result.params_seq[t].pose = st.gamma[t];
    result.params_seq[t].translation = st.trans[t];
  }
  if (!std::isfinite(result.objective_trace.back()))
    throw std::runtime_error("fit_sequence: non-finite objective");
  return result;
}

namespace {

// Composite-objective variant: the image term correlates max-over-time
// renders against max-over-time observations, so every probe rebuilds the
// composite from a per-frame render cache.
FitResult fit_sequence_composite(const InputTensor& observed,
                                 const std::array<DevicePose, 2>& receivers,
                                 const BodyRenderer& renderer, const FitConfig& config) {
  ShapeParams beta;
  std::vector<PoseParams> gamma(kTensorFrames);
  std::vector<Vec3> trans(kTensorFrames, config.init_translation);
  if (config.init_mode == FitConfig::InitMode::previous_window) {
    if (static_cast<int>(config.init_params.size()) != kTensorFrames)
      throw std::invalid_argument("fit_sequence: previous_window init needs 15 param sets");
    beta = config.init_params[0].shape;
    for (int t = 0; t < kTensorFrames; ++t) {
      gamma[t] = config.init_params[t].pose;
      trans[t] = config.init_params[t].translation;
    }
  }

  std::array<Image, kTensorReceivers> observed_comp;
  for (int r = 0; r < kTensorReceivers; ++r) {
    observed_comp[r] = Image::Zero(kImageSize, kImageSize);
    for (int t = 0; t < kTensorFrames; ++t)
      observed_comp[r] = observed_comp[r].max(observed.slice(t, r));
  }

  // rendered[t][r] cache
  std::vector<std::array<Image, kTensorReceivers>> rendered(kTensorFrames);
  auto render_frame = [&](const ShapeParams& b, const PoseParams& g, const Vec3& tr) {
    const BodyMesh mesh = smpl_map(renderer.body(), b, g, tr);
    std::array<Image, kTensorReceivers> out;
    for (int r = 0; r < kTensorReceivers; ++r)
      out[r] = renderer.render(mesh, receivers[r]).values;
    return out;
  };
  for (int t = 0; t < kTensorFrames; ++t) rendered[t] = render_frame(beta, gamma[t], trans[t]);

  auto image_total_with = [&](int frame, const std::array<Image, kTensorReceivers>* probe) {
    Real total = 0.0;
    for (int r = 0; r < kTensorReceivers; ++r) {
      Image comp = Image::Zero(kImageSize, kImageSize);
      for (int t = 0; t < kTensorFrames; ++t)
        comp = comp.max(t == frame && probe ? (*probe)[r] : rendered[t][r]);
      total += 1.0 - ncc(comp, observed_comp[r]);
    }
    return total;
  };
  auto priors = [&]() {
    Real s = 0.0;
    if (config.pose_prior_weight != 0.0)
      for (const auto& g : gamma) s += config.pose_prior_weight * g.gamma.cwiseAbs().sum();
    if (config.smoothness_weight != 0.0)
      for (int t = 1; t < kTensorFrames; ++t)
        s += config.smoothness_weight * (gamma[t].gamma - gamma[t - 1].gamma).cwiseAbs().sum();
    return s;
  };
  auto pose_terms = [&](int t, const PoseParams& candidate) {
    Real s = 0.0;
    if (config.pose_prior_weight != 0.0)
      s += config.pose_prior_weight * candidate.gamma.cwiseAbs().sum();
    if (config.smoothness_weight != 0.0) {
      if (t > 0)
        s += config.smoothness_weight * (candidate.gamma - gamma[t - 1].gamma).cwiseAbs().sum();
      if (t + 1 < kTensorFrames)
        s += config.smoothness_weight * (gamma[t + 1].gamma - candidate.gamma).cwiseAbs().sum();
    }
    return s;
  };

  FitResult result;
  result.objective_trace.push_back(image_total_with(-1, nullptr) + priors());

  auto line_search = [&](auto eval, Real current, const RVec& grad, Real step0,
                         RVec* accepted) {
    const Real gnorm = grad.norm();
    if (!(gnorm > 0.0)) return false;
    const RVec dir = -grad / gnorm;
    Real step = step0;
    for (int k = 0; k < 9; ++k, step *= 0.5) {
      const RVec delta = dir * step;
      if (eval(delta) < current - kAcceptMargin) {
        *accepted = delta;
        return true;
      }
    }
    return false;
  };

  bool converged = false;
  for (int iter = 0; iter < config.max_iters && !converged; ++iter) {
    bool improved = false;
    const Real iter_start = result.objective_trace.back();

    for (int t = 0; t < kTensorFrames; ++t) {
      // translation block
      {
        RVec grad(3);
        std::vector<Real> probes(6);
        parallel_for(0, 6, [&](std::int64_t p) {
          Vec3 cand = trans[t];
          cand(static_cast<int>(p / 2)) += (p % 2 == 0 ? 1.0 : -1.0) * config.fd_step;
          const auto imgs = render_frame(beta, gamma[t], cand);
          probes[p] = image_total_with(t, &imgs);
        });
        for (int d = 0; d < 3; ++d)
          grad(d) = (probes[2 * d] - probes[2 * d + 1]) / (2.0 * config.fd_step);
        const Real current = image_total_with(-1, nullptr);
        RVec delta;
        if (line_search(
                [&](const RVec& dv) {
                  const auto imgs = render_frame(beta, gamma[t], Vec3(trans[t] + Vec3(dv)));
                  return image_total_with(t, &imgs);
                },
                current, grad, config.translation_step, &delta)) {
          trans[t] += Vec3(delta);
          rendered[t] = render_frame(beta, gamma[t], trans[t]);
          result.objective_trace.push_back(image_total_with(-1, nullptr) + priors());
          improved = true;
        }
      }
      // pose block
      {
        RVec grad(72);
        std::vector<Real> probes(144);
        parallel_for(0, 144, [&](std::int64_t p) {
          PoseParams cand = gamma[t];
          cand.gamma(static_cast<int>(p / 2)) += (p % 2 == 0 ? 1.0 : -1.0) * config.fd_step;
          const auto imgs = render_frame(beta, cand, trans[t]);
          probes[p] = image_total_with(t, &imgs) + pose_terms(t, cand);
        });
        for (int d = 0; d < 72; ++d)
          grad(d) = (probes[2 * d] - probes[2 * d + 1]) / (2.0 * config.fd_step);
        const Real current = image_total_with(-1, nullptr) + pose_terms(t, gamma[t]);
        RVec delta;
        if (line_search(
                [&](const RVec& dv) {
                  PoseParams cand = gamma[t];
                  cand.gamma += dv;
                  const auto imgs = render_frame(beta, cand, trans[t]);
                  return image_total_with(t, &imgs) + pose_terms(t, cand);
                },
                current, grad, config.pose_step, &delta)) {
          gamma[t].gamma += delta;
          gamma[t] = gamma[t].canonicalized();
          rendered[t] = render_frame(beta, gamma[t], trans[t]);
          result.objective_trace.push_back(image_total_with(-1, nullptr) + priors());
          improved = true;
        }
      }
    }

    // shape block
    if (config.fit_shape) {
      auto total_image = [&](const ShapeParams& b) {
        Real total = 0.0;
        std::vector<std::array<Image, kTensorReceivers>> probe(kTensorFrames);
        for (int t = 0; t < kTensorFrames; ++t) probe[t] = render_frame(b, gamma[t], trans[t]);
        for (int r = 0; r < kTensorReceivers; ++r) {
          Image comp = Image::Zero(kImageSize, kImageSize);
          for (int t = 0; t < kTensorFrames; ++t) comp = comp.max(probe[t][r]);
          total += 1.0 - ncc(comp, observed_comp[r]);
        }
        return total;
      };
      RVec grad(10);
      std::vector<Real> probes(20);
      parallel_for(0, 20, [&](std::int64_t p) {
        ShapeParams cand = beta;
        cand.beta(static_cast<int>(p / 2)) += (p % 2 == 0 ? 1.0 : -1.0) * config.fd_step;
        probes[p] = total_image(cand);
      });
      for (int d = 0; d < 10; ++d)
        grad(d) = (probes[2 * d] - probes[2 * d + 1]) / (2.0 * config.fd_step);
      const Real current = image_total_with(-1, nullptr);
      RVec delta;
      if (line_search(
              [&](const RVec& dv) {
                ShapeParams cand = beta;
                cand.beta += dv;
                return total_image(cand);
              },
              current, grad, config.shape_step, &delta)) {
        beta.beta += delta;
        beta.beta = beta.beta.cwiseMax(-3.0).cwiseMin(3.0);
        for (int t = 0; t < kTensorFrames; ++t)
          rendered[t] = render_frame(beta, gamma[t], trans[t]);
        result.objective_trace.push_back(image_total_with(-1, nullptr) + priors());
        improved = true;
      }
    }

    if (!improved) {
      converged = true;
      break;
    }
    const Real iter_end = result.objective_trace.back();
    if (iter_start - iter_end < config.tolerance * std::max(1.0, std::abs(iter_start)))
      converged = true;
  }

  result.converged = converged;
  result.params_seq.resize(kTensorFrames);
  for (int t = 0; t < kTensorFrames; ++t) {
    result.params_seq[t].shape = beta;
    result.params_seq[t].pose = gamma[t];
    result.params_seq[t].translation = trans[t];
  }
  if (!std::isfinite(result.objective_trace.back()))
    throw std::runtime_error("fit_sequence: non-finite objective");
  return result;
}

}  // namespace

}  // namespace wimesh
