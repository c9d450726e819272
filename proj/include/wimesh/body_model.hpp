// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <vector>

#include "wimesh/types.hpp"

namespace wimesh {

using MatX3 = Eigen::Matrix<Real, Eigen::Dynamic, 3>;
using Mat24x3 = Eigen::Matrix<Real, 24, 3>;
using Faces = Eigen::Matrix<int, Eigen::Dynamic, 3>;

/// 10 shape coefficients, each in [-3, 3]. Semantic mapping (documented
/// linear basis, one factor per coefficient):
///   0 overall size (standing height +7 cm per unit)
///   1 torso length   2 limb length    3 limb girth
///   4 shoulder width 5 pelvis width   6 head size
///   7..9 reserved (no effect)
struct ShapeParams {
  Eigen::Matrix<Real, 10, 1> beta = Eigen::Matrix<Real, 10, 1>::Zero();
};

/// 72 pose coefficients: 24 axis-angle triplets, joint 0 = global root
/// rotation. Canonical form keeps each triplet's norm <= pi.
struct PoseParams {
  Eigen::Matrix<Real, 72, 1> gamma = Eigen::Matrix<Real, 72, 1>::Zero();

  Vec3 joint_rotation(int j) const { return gamma.segment<3>(3 * j); }
  void set_joint_rotation(int j, const Vec3& aa) { gamma.segment<3>(3 * j) = aa; }

  PoseParams canonicalized() const;
  void validate() const;  // throws when a triplet exceeds pi
};

/// Full per-frame body state. The 82-vector (gamma ++ beta) excludes the
/// root translation, which the fitter carries separately.
struct BodyParams {
  ShapeParams shape;
  PoseParams pose;
  Vec3 translation = Vec3::Zero();

  Eigen::Matrix<Real, 82, 1> to_vector() const {
    Eigen::Matrix<Real, 82, 1> v;
    v.head<72>() = pose.gamma;
    v.tail<10>() = shape.beta;
    return v;
  }
  static BodyParams from_vector(const Eigen::Matrix<Real, 82, 1>& v, const Vec3& t);
};

/// Rigid transform (rotation + translation), kept explicit so identity
/// compositions stay exact.
struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  RigidTransform then(const RigidTransform& child) const {
    return {rotation * child.rotation, rotation * child.translation + translation};
  }
};

/// Rodrigues rotation; exact identity for zero-length axis-angle.
Mat3 rodrigues(const Vec3& axis_angle);

/// Kinematic tree in the conventional 24-joint layout (pelvis root, left/right
/// legs, spine chain, neck/head, collar/arm chains).
struct KinematicTree {
  std::array<int, 24> parent;
  Mat24x3 rest_joints;                       // prefix sums of bone offsets
  Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic> skin_weights;  // V x 24

  void validate() const;
};

/// Immutable reference body: capsule surface over the 24-joint skeleton.
/// Surface tessellation is deterministic; vertex count hits the requested
/// target when (target - 46) is a nonnegative multiple of 6, otherwise the
/// nearest feasible count.
class BodyTemplate {
 public:
  static BodyTemplate build(int target_vertices = 1000);

  const std::array<int, 24>& parent() const { return parent_; }
  const Mat24x3& bone_offsets() const { return bone_offsets_; }
  const Mat24x3& rest_joints() const { return rest_joints_; }
  const MatX3& vertices() const { return vertices_; }
  const Faces& faces() const { return faces_; }
  int num_vertices() const { return static_cast<int>(vertices_.rows()); }
  Real standing_height_m() const { return standing_height_; }

  /// Shape-scaled skeleton: bone offsets and capsule radii after applying the
  /// linear shape basis. Beta outside [-3, 3] is clamped; *clamped reports it.
  void shaped_skeleton(const ShapeParams& beta, Mat24x3* offsets,
                       std::array<Real, 24>* radii, bool* clamped) const;

  /// Surface regenerated from a shaped skeleton with the template tessellation
  /// (same vertex count/order as vertices()).
  void shaped_surface(const Mat24x3& offsets, const std::array<Real, 24>& radii,
                      MatX3* vertices) const;

  /// Dense V x 24 skin-weight matrix plus shaped rest joints, spec shape.
  KinematicTree kinematic_tree(const ShapeParams& beta) const;

  // Two-bone skinning pairs; w2 = 1 - w1 exactly.
  const Eigen::VectorXi& skin_joint1() const { return skin_j1_; }
  const Eigen::VectorXi& skin_joint2() const { return skin_j2_; }
  const RVec& skin_weight1() const { return skin_w1_; }

 private:
  std::array<int, 24> parent_;
  Mat24x3 bone_offsets_;
  std::array<Real, 24> bone_radius_;
  Mat24x3 rest_joints_;
  MatX3 vertices_;
  Faces faces_;
  Eigen::VectorXi vertex_bone_;
  Eigen::VectorXi skin_j1_, skin_j2_;
  RVec skin_w1_;
  std::array<int, 24> bone_rings_;
  int segments_ = 6;
  Real standing_height_ = 0.0;
};

/// Shared default template (1000 vertices), built once.
const BodyTemplate& standard_body();

struct FkResult {
  Mat24x3 joints;                          // world positions
  std::array<RigidTransform, 24> world;    // per-joint world transforms
};

/// Forward kinematics over a shaped skeleton: child transform = parent
/// transform * translate(bone offset) * rotate(axis-angle of the child).
FkResult forward_kinematics(const std::array<int, 24>& parent, const Mat24x3& offsets,
                            const PoseParams& pose);

struct BodyMesh {
  MatX3 vertices;
  Mat24x3 joints;
  Faces faces;
  Vec3 root_translation = Vec3::Zero();
  bool beta_clamped = false;
};

/// Shape + pose + translation to surface mesh: shape-scaled capsule template,
/// forward kinematics, linear blend skinning, translate.
BodyMesh smpl_map(const BodyTemplate& tmpl, const ShapeParams& beta,
                  const PoseParams& gamma, const Vec3& translation);

/// Mean per-vertex Euclidean distance, centimeters.
Real pve(const BodyMesh& pred, const BodyMesh& truth, bool pelvis_align = false);

/// Mean per-joint Euclidean distance, centimeters.
Real mpjpe(const BodyMesh& pred, const BodyMesh& truth, bool pelvis_align = false);

struct ParamLoss {
  Real pose = 0.0;   // mean L1 over gamma vectors
  Real shape = 0.0;  // mean L1 over beta vectors
  Real total = 0.0;  // 1 * pose + 0.05 * shape
};

inline constexpr Real kPoseLossWeight = 1.0;
inline constexpr Real kShapeLossWeight = 0.05;

ParamLoss param_loss(const std::vector<BodyParams>& pred,
                     const std::vector<BodyParams>& truth);

}  // namespace wimesh
