// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <optional>
#include <vector>

#include "wimesh/body_model.hpp"
#include "wimesh/image_pipeline.hpp"
#include "wimesh/scene_simulator.hpp"
#include "wimesh/types.hpp"

namespace wimesh {

struct RenderConfig {
  int samples = 400;
  Real blob_sigma_deg = 2.0;
  Real specular_exponent = 4.0;
  bool normalize = false;              // unit-energy output
  std::optional<Vec3> tx_position;     // bisector lobe; monostatic when absent
  std::uint64_t sample_seed = 1;
};

struct RenderedImage {
  Image values;
  bool behind_array = false;  // every sample fell behind the array plane
};

/// Project mesh surface samples into the receiver's (azimuth, elevation)
/// grid, depositing specular-weighted Gaussian blobs. Sample layout is drawn
/// deterministically from the mesh's own face areas.
RenderedImage render_aoa(const BodyMesh& mesh, const DevicePose& receiver,
                         int az_bins, int el_bins, const RenderConfig& config);

/// Renderer with a sample layout frozen from the template rest surface, so
/// images vary continuously with pose and shape during fitting.
class BodyRenderer {
 public:
  BodyRenderer(const BodyTemplate& tmpl, const RenderConfig& config);

  RenderedImage render(const BodyMesh& mesh, const DevicePose& receiver) const;

  /// Observation tensor rendered from known parameters (closed-loop input).
  InputTensor render_window(const std::vector<BodyParams>& params,
                            const std::array<DevicePose, 2>& receivers) const;

  const RenderConfig& config() const { return config_; }
  const BodyTemplate& body() const { return *tmpl_; }

 private:
  const BodyTemplate* tmpl_;
  RenderConfig config_;
  struct Sample {
    int face;
    Real u, v;
  };
  std::vector<Sample> layout_;
};

struct FitConfig {
  int max_iters = 20;
  Real fd_step = 1e-3;
  Real pose_prior_weight = 0.0;
  Real smoothness_weight = 0.0;
  std::uint64_t seed = 0;
  enum class InitMode { template_init, previous_window } init_mode = InitMode::template_init;
  // per_frame correlates each (frame, receiver) pair; composite correlates the
  // max-over-time images, mimicking multi-frame aggregation in the objective.
  enum class ObjectiveMode { per_frame, composite } objective_mode = ObjectiveMode::per_frame;
  Vec3 init_translation = Vec3::Zero();
  std::vector<BodyParams> init_params;  // used by previous_window
  Real tolerance = 1e-6;
  bool fit_shape = true;
  Real translation_step = 0.08;
  Real pose_step = 0.25;
  Real shape_step = 0.5;

  void validate() const;
};

/// Image-plus-prior objective: sum over 15 frames x 2 receivers of
/// (1 - normalized cross-correlation) plus L1 pose prior and temporal
/// smoothness terms. Correlation against an all-zero image counts as 0.
Real objective(const std::vector<BodyParams>& window, const InputTensor& observed,
               const std::array<DevicePose, 2>& receivers, const BodyRenderer& renderer,
               const FitConfig& config);

struct FitResult {
  std::vector<BodyParams> params_seq;  // 15 frames; shape shared
  std::vector<Real> objective_trace;   // full objective at accepted steps
  bool converged = false;
};

/// Block-coordinate descent (translation -> pose -> shape) with central
/// finite-difference gradients and backtracking line search. Shape is fitted
/// once per window; pose and translation per frame. Deterministic.
FitResult fit_sequence(const InputTensor& observed,
                       const std::array<DevicePose, 2>& receivers,
                       const BodyRenderer& renderer, const FitConfig& config);

}  // namespace wimesh
