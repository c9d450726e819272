// SPDX-License-Identifier: Apache-2.0
#include "wimesh/body_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace wimesh {

namespace {

// Parent list of the standard 24-joint body tree.
constexpr std::array<int, 24> kParent = {-1, 0, 0,  0,  1,  2,  3,  4,
                                         5,  6, 7,  8,  9,  9,  9,  12,
                                         13, 14, 16, 17, 18, 19, 20, 21};

// Rest bone offsets (x lateral, y forward, z up), meters. Row j is the offset
// of joint j from its parent; row 0 is the root rest position.
const Mat24x3& rest_offsets() {
  static const Mat24x3 offsets = [] {
    Mat24x3 o = Mat24x3::Zero();
    auto set = [&o](int j, Real x, Real y, Real z) { o.row(j) << x, y, z; };
    set(0, 0.0, 0.0, 0.0);        // pelvis (root)
    set(1, 0.09, 0.0, -0.05);     // L hip
    set(2, -0.09, 0.0, -0.05);    // R hip
    set(3, 0.0, 0.0, 0.11);       // spine1
    set(4, 0.0, 0.0, -0.42);      // L knee
    set(5, 0.0, 0.0, -0.42);      // R knee
    set(6, 0.0, 0.0, 0.12);       // spine2
    set(7, 0.0, 0.0, -0.44);      // L ankle
    set(8, 0.0, 0.0, -0.44);      // R ankle
    set(9, 0.0, 0.0, 0.12);       // spine3
    set(10, 0.0, 0.13, -0.07);    // L foot
    set(11, 0.0, 0.13, -0.07);    // R foot
    set(12, 0.0, 0.0, 0.14);      // neck
    set(13, 0.08, 0.0, 0.08);     // L collar
    set(14, -0.08, 0.0, 0.08);    // R collar
    set(15, 0.0, 0.0, 0.10);      // head
    set(16, 0.10, 0.0, 0.02);     // L shoulder
    set(17, -0.10, 0.0, 0.02);    // R shoulder
    set(18, 0.27, 0.0, 0.0);      // L elbow
    set(19, -0.27, 0.0, 0.0);     // R elbow
    set(20, 0.25, 0.0, 0.0);      // L wrist
    set(21, -0.25, 0.0, 0.0);     // R wrist
    set(22, 0.08, 0.0, 0.0);      // L hand
    set(23, -0.08, 0.0, 0.0);     // R hand
    return o;
  }();
  return offsets;
}

constexpr std::array<Real, 24> kBoneRadius = {
    0.0,    // root, unused
    0.07, 0.07,   // hips
    0.10,         // spine1
    0.07, 0.07,   // thighs
    0.105,        // spine2
    0.05, 0.05,   // shins
    0.10,         // spine3
    0.035, 0.035, // feet
    0.05,         // neck
    0.04, 0.04,   // collars
    0.09,         // head
    0.045, 0.045, // shoulders
    0.04, 0.04,   // upper arms
    0.035, 0.035, // forearms
    0.025, 0.025  // hands
};

constexpr std::array<int, 5> kTorsoBones = {3, 6, 9, 12, 15};
constexpr std::array<int, 12> kLimbBones = {4, 5, 7, 8, 10, 11, 18, 19, 20, 21, 22, 23};
constexpr std::array<int, 12> kGirthBones = {4, 5, 7, 8, 10, 11, 18, 19, 20, 21, 22, 23};
constexpr std::array<int, 4> kShoulderBones = {13, 14, 16, 17};
constexpr std::array<int, 2> kPelvisBones = {1, 2};

Mat24x3 prefix_sum_joints(const std::array<int, 24>& parent, const Mat24x3& offsets) {
  Mat24x3 joints;
  joints.row(0) = offsets.row(0);
  for (int j = 1; j < 24; ++j) joints.row(j) = joints.row(parent[j]) + offsets.row(j);
  return joints;
}

Real point_segment_distance(const Vec3& p, const Vec3& a, const Vec3& b) {
  const Vec3 ab = b - a;
  const Real len2 = ab.squaredNorm();
  if (len2 <= 0.0) return (p - a).norm();
  const Real t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

// Orthonormal frame perpendicular to a unit axis; deterministic.
void perpendicular_frame(const Vec3& axis, Vec3* u, Vec3* v) {
  const Vec3 ref = std::abs(axis.x()) < 0.9 ? Vec3(1, 0, 0) : Vec3(0, 1, 0);
  *u = axis.cross(ref).normalized();
  *v = axis.cross(*u);
}

}  // namespace

PoseParams PoseParams::canonicalized() const {
  PoseParams out = *this;
  for (int j = 0; j < 24; ++j) {
    Vec3 aa = out.joint_rotation(j);
    Real angle = aa.norm();
    if (angle <= kPi || angle == 0.0) continue;
    Vec3 axis = aa / angle;
    angle = std::fmod(angle, 2.0 * kPi);
    if (angle > kPi) {
      angle = 2.0 * kPi - angle;
      axis = -axis;
    }
    out.set_joint_rotation(j, axis * angle);
  }
  return out;
}

void PoseParams::validate() const {
  for (int j = 0; j < 24; ++j)
    if (gamma.segment<3>(3 * j).norm() > kPi + 1e-9)
      throw std::invalid_argument("PoseParams: axis-angle norm exceeds pi");
}

BodyParams BodyParams::from_vector(const Eigen::Matrix<Real, 82, 1>& v, const Vec3& t) {
  BodyParams p;
  p.pose.gamma = v.head<72>();
  p.shape.beta = v.tail<10>();
  p.translation = t;
  return p;
}

Mat3 rodrigues(const Vec3& axis_angle) {
  const Real angle = axis_angle.norm();
  if (angle < 1e-12) return Mat3::Identity();
  const Vec3 axis = axis_angle / angle;
  Mat3 k;
  k << 0, -axis.z(), axis.y(), axis.z(), 0, -axis.x(), -axis.y(), axis.x(), 0;
  return Mat3::Identity() + std::sin(angle) * k + (1.0 - std::cos(angle)) * (k * k);
}

void KinematicTree::validate() const {
  if (parent[0] != -1) throw std::invalid_argument("KinematicTree: joint 0 must be root");
  for (int j = 1; j < 24; ++j)
    if (parent[j] < 0 || parent[j] >= j)
      throw std::invalid_argument("KinematicTree: parents must precede children");
  for (Eigen::Index r = 0; r < skin_weights.rows(); ++r) {
    if (skin_weights.row(r).minCoeff() < 0.0)
      throw std::invalid_argument("KinematicTree: negative skin weight");
    if (std::abs(skin_weights.row(r).sum() - 1.0) > 1e-9)
      throw std::invalid_argument("KinematicTree: skin-weight row does not sum to 1");
  }
}

BodyTemplate BodyTemplate::build(int target_vertices) {
  BodyTemplate t;
  t.parent_ = kParent;
  t.bone_offsets_ = rest_offsets();
  t.bone_radius_ = kBoneRadius;
  t.rest_joints_ = prefix_sum_joints(t.parent_, t.bone_offsets_);
  t.segments_ = 6;

  // Ring budget: 2 poles + rings * segments per bone; >= 2 rings per bone.
  const int bones = 23;
  const int min_rings = 2;
  int total_rings = (target_vertices - 2 * bones) / t.segments_;
  total_rings = std::max(total_rings, bones * min_rings);

  // Distribute rings proportionally to lateral capsule area, largest
  // remainder, deterministic.
  std::array<Real, 24> area{};
  Real area_sum = 0.0;
  for (int j = 1; j < 24; ++j) {
    const Real len = t.bone_offsets_.row(j).norm();
    area[j] = t.bone_radius_[j] * (len + 2.0 * t.bone_radius_[j]);
    area_sum += area[j];
  }
  std::array<int, 24> rings{};
  std::array<Real, 24> frac{};
  int assigned = 0;
  for (int j = 1; j < 24; ++j) {
    const Real share = total_rings * area[j] / area_sum;
    rings[j] = std::max(min_rings, static_cast<int>(std::floor(share)));
    frac[j] = share - std::floor(share);
    assigned += rings[j];
  }
  while (assigned < total_rings) {
    int best = 1;
    for (int j = 2; j < 24; ++j)
      if (frac[j] > frac[best]) best = j;
    ++rings[best];
    frac[best] = -1.0;
    ++assigned;
  }
  while (assigned > total_rings) {
    int best = 1;
    for (int j = 2; j < 24; ++j)
      if (rings[j] > rings[best] || (rings[j] == rings[best] && frac[j] < frac[best]))
        best = j;
    if (rings[best] <= min_rings) break;
    --rings[best];
    --assigned;
  }
  t.bone_rings_ = rings;

  t.shaped_surface(t.bone_offsets_, t.bone_radius_, &t.vertices_);

  // Faces and vertex->bone labels mirror the vertex generation order.
  std::vector<std::array<int, 3>> faces;
  std::vector<int> vbone;
  int base = 0;
  const int seg = t.segments_;
  for (int j = 1; j < 24; ++j) {
    const int r = rings[j];
    const int pole0 = base;
    const int ring0 = base + 1;           // r rings of seg vertices
    const int pole1 = base + 1 + r * seg;
    for (int s = 0; s < seg; ++s)
      faces.push_back({pole0, ring0 + (s + 1) % seg, ring0 + s});
    for (int i = 0; i + 1 < r; ++i)
      for (int s = 0; s < seg; ++s) {
        const int a = ring0 + i * seg + s;
        const int b = ring0 + i * seg + (s + 1) % seg;
        const int c = a + seg;
        const int d = b + seg;
        faces.push_back({a, b, c});
        faces.push_back({b, d, c});
      }
    const int last = ring0 + (r - 1) * seg;
    for (int s = 0; s < seg; ++s)
      faces.push_back({pole1, last + s, last + (s + 1) % seg});
    const int count = 2 + r * seg;
    for (int i = 0; i < count; ++i) vbone.push_back(j);
    base += count;
  }
  t.faces_.resize(static_cast<int>(faces.size()), 3);
  for (std::size_t f = 0; f < faces.size(); ++f)
    t.faces_.row(static_cast<int>(f)) << faces[f][0], faces[f][1], faces[f][2];
  t.vertex_bone_ = Eigen::Map<Eigen::VectorXi>(vbone.data(), static_cast<int>(vbone.size()));

  // Outward orientation: flip faces whose normal points toward the bone axis.
  for (int f = 0; f < t.faces_.rows(); ++f) {
    const Vec3 a = t.vertices_.row(t.faces_(f, 0));
    const Vec3 b = t.vertices_.row(t.faces_(f, 1));
    const Vec3 c = t.vertices_.row(t.faces_(f, 2));
    const int bone = t.vertex_bone_(t.faces_(f, 0));
    const Vec3 p0 = t.rest_joints_.row(t.parent_[bone]);
    const Vec3 p1 = t.rest_joints_.row(bone);
    const Vec3 centroid = (a + b + c) / 3.0;
    Vec3 axis_pt = p0;
    const Vec3 ab = p1 - p0;
    const Real len2 = ab.squaredNorm();
    if (len2 > 0.0) {
      const Real u = std::clamp((centroid - p0).dot(ab) / len2, 0.0, 1.0);
      axis_pt = p0 + u * ab;
    }
    const Vec3 n = (b - a).cross(c - a);
    if (n.dot(centroid - axis_pt) < 0.0) std::swap(t.faces_(f, 1), t.faces_(f, 2));
  }

  // Skin weights: two nearest bone segments, inverse distance, attached to the
  // parent joint of each bone (the joint whose rotation moves that segment).
  const int nv = t.num_vertices();
  t.skin_j1_.resize(nv);
  t.skin_j2_.resize(nv);
  t.skin_w1_.resize(nv);
  for (int i = 0; i < nv; ++i) {
    const Vec3 p = t.vertices_.row(i);
    int b1 = -1, b2 = -1;
    Real d1 = 1e30, d2 = 1e30;
    for (int j = 1; j < 24; ++j) {
      const Real d = point_segment_distance(p, t.rest_joints_.row(t.parent_[j]),
                                            t.rest_joints_.row(j));
      if (d < d1) {
        d2 = d1; b2 = b1;
        d1 = d; b1 = j;
      } else if (d < d2) {
        d2 = d; b2 = j;
      }
    }
    const int j1 = t.parent_[b1];
    const int j2 = t.parent_[b2];
    if (j1 == j2 || d2 >= 1e29) {
      t.skin_j1_(i) = j1;
      t.skin_j2_(i) = j1;
      t.skin_w1_(i) = 1.0;
      continue;
    }
    // Inverse-distance pair; w1 >= 0.5 so (1 - w1) is exact.
    Real w1 = d1 <= 1e-12 ? 1.0 : d2 / (d1 + d2);
    t.skin_j1_(i) = j1;
    t.skin_j2_(i) = j2;
    t.skin_w1_(i) = w1;
  }

  t.standing_height_ = t.vertices_.col(2).maxCoeff() - t.vertices_.col(2).minCoeff();
  return t;
}

void BodyTemplate::shaped_surface(const Mat24x3& offsets, const std::array<Real, 24>& radii,
                                  MatX3* vertices) const {
  const Mat24x3 joints = prefix_sum_joints(parent_, offsets);
  std::vector<Vec3> verts;
  const int seg = segments_;
  for (int j = 1; j < 24; ++j) {
    const Vec3 p0 = joints.row(parent_[j]);
    const Vec3 p1 = joints.row(j);
    const Real r = radii[j];
    Vec3 axis = p1 - p0;
    const Real len = axis.norm();
    axis = len > 0.0 ? Vec3(axis / len) : Vec3(0, 0, 1);
    Vec3 u, v;
    perpendicular_frame(axis, &u, &v);

    const int rng = bone_rings_[j];
    verts.push_back(p0 - r * axis);  // bottom pole
    // Rings sweep bottom cap -> cylinder -> top cap.
    const int cap = std::max(1, rng / 4);
    const int cyl = rng - 2 * cap;
    for (int i = 0; i < rng; ++i) {
      Real axial;   // along the axis measured from p0
      Real radial;  // ring radius
      if (i < cap) {
        const Real a = 0.5 * kPi * (i + 1) / (cap + 1);
        axial = -r * std::cos(a);
        radial = r * std::sin(a);
      } else if (i < cap + cyl) {
        const int c = i - cap;
        axial = len * (c + 1) / (cyl + 1);
        radial = r;
      } else {
        const int c = i - cap - cyl;
        const Real a = 0.5 * kPi * (cap - c) / (cap + 1);
        axial = len + r * std::cos(a);
        radial = r * std::sin(a);
      }
      const Vec3 center = p0 + axial * axis;
      for (int s = 0; s < seg; ++s) {
        const Real th = 2.0 * kPi * s / seg;
        verts.push_back(center + radial * (std::cos(th) * u + std::sin(th) * v));
      }
    }
    verts.push_back(p1 + r * axis);  // top pole
  }
  vertices->resize(static_cast<int>(verts.size()), 3);
  for (std::size_t i = 0; i < verts.size(); ++i) vertices->row(static_cast<int>(i)) = verts[i];
}

void BodyTemplate::shaped_skeleton(const ShapeParams& beta_in, Mat24x3* offsets,
                                   std::array<Real, 24>* radii, bool* clamped) const {
  Eigen::Matrix<Real, 10, 1> beta = beta_in.beta;
  bool any_clamped = false;
  for (int i = 0; i < 10; ++i) {
    if (beta(i) < -3.0 || beta(i) > 3.0) {
      beta(i) = std::clamp(beta(i), -3.0, 3.0);
      any_clamped = true;
    }
  }
  if (clamped) *clamped = any_clamped;

  const Real s_all = 1.0 + (0.07 / standing_height_) * beta(0);
  const Real s_torso = 1.0 + 0.04 * beta(1);
  const Real s_limb = 1.0 + 0.05 * beta(2);
  const Real s_girth = 1.0 + 0.10 * beta(3);
  const Real s_shoulder = 1.0 + 0.06 * beta(4);
  const Real s_pelvis = 1.0 + 0.06 * beta(5);
  const Real s_head = 1.0 + 0.08 * beta(6);

  Mat24x3 o = bone_offsets_;
  std::array<Real, 24> r = bone_radius_;

  for (int j : kTorsoBones) o.row(j) *= s_torso;
  for (int j : kLimbBones) o.row(j) *= s_limb;
  for (int j : kGirthBones) r[j] *= s_girth;
  for (int j : kShoulderBones) o(j, 0) *= s_shoulder;
  for (int j : kPelvisBones) o(j, 0) *= s_pelvis;
  o.row(15) *= s_head;
  r[15] *= s_head;

  o *= s_all;
  for (int j = 1; j < 24; ++j) r[j] *= s_all;

  *offsets = o;
  *radii = r;
}

KinematicTree BodyTemplate::kinematic_tree(const ShapeParams& beta) const {
  Mat24x3 offsets;
  std::array<Real, 24> radii;
  shaped_skeleton(beta, &offsets, &radii, nullptr);
  KinematicTree tree;
  tree.parent = parent_;
  tree.rest_joints = prefix_sum_joints(parent_, offsets);
  tree.skin_weights.setZero(num_vertices(), 24);
  for (int i = 0; i < num_vertices(); ++i) {
    if (skin_j1_(i) == skin_j2_(i)) {
      tree.skin_weights(i, skin_j1_(i)) = 1.0;
    } else {
      tree.skin_weights(i, skin_j1_(i)) = skin_w1_(i);
      tree.skin_weights(i, skin_j2_(i)) = 1.0 - skin_w1_(i);
    }
  }
  return tree;
}

const BodyTemplate& standard_body() {
  static const BodyTemplate tmpl = BodyTemplate::build(1000);
  return tmpl;
}

FkResult forward_kinematics(const std::array<int, 24>& parent, const Mat24x3& offsets,
                            const PoseParams& pose) {
  FkResult out;
  for (int j = 0; j < 24; ++j) {
    RigidTransform local;
    local.rotation = rodrigues(pose.joint_rotation(j));
    local.translation = offsets.row(j);
    out.world[j] = (j == 0) ? local : parent[j] >= 0 ? out.world[parent[j]].then(local) : local;
    out.joints.row(j) = out.world[j].translation;
  }
  return out;
}

BodyMesh smpl_map(const BodyTemplate& tmpl, const ShapeParams& beta,
                  const PoseParams& gamma, const Vec3& translation) {
  Mat24x3 offsets;
  std::array<Real, 24> radii;
  bool clamped = false;
  tmpl.shaped_skeleton(beta, &offsets, &radii, &clamped);

  MatX3 shaped_verts;
  tmpl.shaped_surface(offsets, radii, &shaped_verts);
  const Mat24x3 shaped_joints = prefix_sum_joints(tmpl.parent(), offsets);

  const FkResult fk = forward_kinematics(tmpl.parent(), offsets, gamma);

  // Skinning transforms: world * inverse bind (bind = translate to shaped
  // rest joint, identity rotation).
  std::array<RigidTransform, 24> skin;
  for (int j = 0; j < 24; ++j) {
    skin[j].rotation = fk.world[j].rotation;
    skin[j].translation =
        fk.world[j].rotation * Vec3(-shaped_joints.row(j).transpose()) + fk.world[j].translation;
  }

  BodyMesh mesh;
  mesh.faces = tmpl.faces();
  mesh.beta_clamped = clamped;
  mesh.root_translation = translation;
  mesh.vertices.resize(shaped_verts.rows(), 3);
  // Delta-form blend so identity transforms reproduce the shaped template
  // bit-exactly.
  const Eigen::VectorXi& j1 = tmpl.skin_joint1();
  const Eigen::VectorXi& j2 = tmpl.skin_joint2();
  const RVec& w1 = tmpl.skin_weight1();
  for (int i = 0; i < shaped_verts.rows(); ++i) {
    const Vec3 v = shaped_verts.row(i);
    Vec3 out = v;
    const Real wa = w1(i);
    out += wa * (skin[j1(i)].apply(v) - v);
    if (j2(i) != j1(i)) out += (1.0 - wa) * (skin[j2(i)].apply(v) - v);
    mesh.vertices.row(i) = out + translation;
  }
  mesh.joints = fk.joints;
  mesh.joints.rowwise() += translation.transpose();
  return mesh;
}

static Real mean_distance_cm(const MatX3& a, const MatX3& b) {
  Real sum = 0.0;
  for (int i = 0; i < a.rows(); ++i) sum += (a.row(i) - b.row(i)).norm();
  return 100.0 * sum / static_cast<Real>(a.rows());
}

Real pve(const BodyMesh& pred, const BodyMesh& truth, bool pelvis_align) {
  if (pred.vertices.rows() != truth.vertices.rows())
    throw std::invalid_argument("pve: vertex count mismatch");
  if (!pelvis_align) return mean_distance_cm(pred.vertices, truth.vertices);
  MatX3 a = pred.vertices;
  MatX3 b = truth.vertices;
  a.rowwise() -= pred.joints.row(0);
  b.rowwise() -= truth.joints.row(0);
  return mean_distance_cm(a, b);
}

Real mpjpe(const BodyMesh& pred, const BodyMesh& truth, bool pelvis_align) {
  if (pred.joints.rows() != truth.joints.rows())
    throw std::invalid_argument("mpjpe: joint count mismatch");
  MatX3 a = pred.joints;
  MatX3 b = truth.joints;
  if (pelvis_align) {
    a.rowwise() -= pred.joints.row(0);
    b.rowwise() -= truth.joints.row(0);
  }
  return mean_distance_cm(a, b);
}

ParamLoss param_loss(const std::vector<BodyParams>& pred,
                     const std::vector<BodyParams>& truth) {
  if (pred.size() != truth.size() || pred.empty())
    throw std::invalid_argument("param_loss: sequence length mismatch or empty");
  ParamLoss loss;
  for (std::size_t t = 0; t < pred.size(); ++t) {
    loss.pose += (pred[t].pose.gamma - truth[t].pose.gamma).cwiseAbs().sum();
    loss.shape += (pred[t].shape.beta - truth[t].shape.beta).cwiseAbs().sum();
  }
  loss.pose /= static_cast<Real>(pred.size());
  loss.shape /= static_cast<Real>(pred.size());
  loss.total = kPoseLossWeight * loss.pose + kShapeLossWeight * loss.shape;
  return loss;
}

}  // namespace wimesh
