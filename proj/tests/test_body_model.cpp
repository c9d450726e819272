// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "wimesh/body_model.hpp"
#include "wimesh/rng.hpp"

using namespace wimesh;

namespace {

PoseParams random_pose(Rng& rng, Real scale = 0.6) {
  PoseParams p;
  for (int j = 0; j < 24; ++j) {
    Vec3 aa(rng.normal(), rng.normal(), rng.normal());
    p.set_joint_rotation(j, aa * (scale * rng.uniform()));
  }
  return p.canonicalized();
}

ShapeParams random_shape(Rng& rng) {
  ShapeParams s;
  for (int i = 0; i < 10; ++i) s.beta(i) = rng.uniform(-2.0, 2.0);
  return s;
}

}  // namespace

TEST_CASE("template construction") {
  const BodyTemplate& tmpl = standard_body();
  CHECK(tmpl.num_vertices() == 1000);
  CHECK(tmpl.num_vertices() >= 200);
  CHECK(tmpl.standing_height_m() > 1.4);
  CHECK(tmpl.standing_height_m() < 2.0);

  SUBCASE("faces index valid vertices and point outward on average") {
    const Faces& f = tmpl.faces();
    for (int i = 0; i < f.rows(); ++i)
      for (int c = 0; c < 3; ++c) {
        CHECK(f(i, c) >= 0);
        CHECK(f(i, c) < tmpl.num_vertices());
      }
  }

  SUBCASE("kinematic tree invariants") {
    const KinematicTree tree = tmpl.kinematic_tree(ShapeParams{});
    tree.validate();
    CHECK(tree.parent[0] == -1);
    CHECK(tree.skin_weights.rows() == tmpl.num_vertices());
    for (int i = 0; i < tree.skin_weights.rows(); ++i)
      CHECK(std::abs(tree.skin_weights.row(i).sum() - 1.0) < 1e-9);
  }

  SUBCASE("pose canonicalization caps triplet norms at pi") {
    PoseParams p;
    p.set_joint_rotation(4, Vec3(0.0, 0.0, 5.0));
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    const PoseParams c = p.canonicalized();
    c.validate();
    CHECK(c.joint_rotation(4).norm() <= kPi + 1e-12);
    // same rotation, reduced representation
    const Mat3 r1 = rodrigues(p.joint_rotation(4));
    const Mat3 r2 = rodrigues(c.joint_rotation(4));
    CHECK((r1 - r2).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("smpl_map identity and translation") {
  const BodyTemplate& tmpl = standard_body();

  SUBCASE("zero configuration reproduces the template exactly") {
    const BodyMesh mesh = smpl_map(tmpl, ShapeParams{}, PoseParams{}, Vec3::Zero());
    REQUIRE(mesh.vertices.rows() == tmpl.num_vertices());
    CHECK((mesh.vertices - tmpl.vertices()).cwiseAbs().maxCoeff() == 0.0);
    CHECK((mesh.joints - tmpl.rest_joints()).cwiseAbs().maxCoeff() == 0.0);
    CHECK_FALSE(mesh.beta_clamped);
  }

  SUBCASE("pure translation moves every vertex and joint") {
    const Vec3 t(1.0, 0.0, 0.0);
    const BodyMesh mesh = smpl_map(tmpl, ShapeParams{}, PoseParams{}, t);
    for (int i = 0; i < mesh.vertices.rows(); ++i)
      CHECK((Vec3(mesh.vertices.row(i)) - (Vec3(tmpl.vertices().row(i)) + t)).norm() == 0.0);
    for (int j = 0; j < 24; ++j)
      CHECK((Vec3(mesh.joints.row(j)) - (Vec3(tmpl.rest_joints().row(j)) + t)).norm() == 0.0);
  }

  SUBCASE("height factor adds exactly 7 cm per unit") {
    auto height = [&](Real b0) {
      ShapeParams s;
      s.beta(0) = b0;
      const BodyMesh m = smpl_map(tmpl, s, PoseParams{}, Vec3::Zero());
      return m.vertices.col(2).maxCoeff() - m.vertices.col(2).minCoeff();
    };
    const Real h0 = height(0.0);
    CHECK(height(1.0) - h0 == doctest::Approx(0.07).epsilon(1e-9));
    CHECK(height(-2.0) - h0 == doctest::Approx(-0.14).epsilon(1e-9));
    CHECK(h0 == doctest::Approx(tmpl.standing_height_m()).epsilon(1e-12));
  }

  SUBCASE("out-of-range beta clamps and flags") {
    ShapeParams s;
    s.beta(0) = 5.0;
    const BodyMesh clamped = smpl_map(tmpl, s, PoseParams{}, Vec3::Zero());
    CHECK(clamped.beta_clamped);
    ShapeParams edge;
    edge.beta(0) = 3.0;
    const BodyMesh at_edge = smpl_map(tmpl, edge, PoseParams{}, Vec3::Zero());
    CHECK((clamped.vertices - at_edge.vertices).cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("82-parameter vector is gamma then beta") {
    BodyParams p;
    p.pose.gamma(3) = 0.5;
    p.shape.beta(9) = -1.5;
    const auto v = p.to_vector();
    REQUIRE(v.size() == 82);
    CHECK(v(3) == 0.5);
    CHECK(v(81) == -1.5);
    const BodyParams q = BodyParams::from_vector(v, Vec3(1, 2, 3));
    CHECK(q.pose.gamma(3) == 0.5);
    CHECK(q.shape.beta(9) == -1.5);
    CHECK(q.translation == Vec3(1, 2, 3));
  }
}

TEST_CASE("forward kinematics") {
  const BodyTemplate& tmpl = standard_body();

  SUBCASE("zero pose returns the rest joints bit-exactly") {
    const FkResult fk = forward_kinematics(tmpl.parent(), tmpl.bone_offsets(), PoseParams{});
    CHECK((fk.joints - tmpl.rest_joints()).cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("root rotation by pi about z mirrors joints through the z-axis") {
    PoseParams p;
    p.set_joint_rotation(0, Vec3(0.0, 0.0, kPi));
    const FkResult fk = forward_kinematics(tmpl.parent(), tmpl.bone_offsets(), p);
    const Mat24x3& rest = tmpl.rest_joints();
    for (int j = 0; j < 24; ++j) {
      CHECK(fk.joints(j, 0) == doctest::Approx(-rest(j, 0)).epsilon(1e-9));
      CHECK(fk.joints(j, 1) == doctest::Approx(-rest(j, 1)).epsilon(1e-9));
      CHECK(fk.joints(j, 2) == doctest::Approx(rest(j, 2)).epsilon(1e-9));
    }
    // rigid motion: pairwise distances unchanged
    for (int a = 0; a < 24; a += 5)
      for (int b = a + 1; b < 24; b += 3) {
        const Real before = (rest.row(a) - rest.row(b)).norm();
        const Real after = (fk.joints.row(a) - fk.joints.row(b)).norm();
        CHECK(after == doctest::Approx(before).epsilon(1e-12));
      }
  }

  SUBCASE("elbow rotation moves only its descendants") {
    PoseParams p;
    p.set_joint_rotation(18, Vec3(0.0, 1.0, 0.0));  // L elbow
    const FkResult fk = forward_kinematics(tmpl.parent(), tmpl.bone_offsets(), p);
    const Mat24x3& rest = tmpl.rest_joints();
    // descendants of 18: 20 (wrist), 22 (hand)
    for (int j = 0; j < 24; ++j) {
      const Real moved = (fk.joints.row(j) - rest.row(j)).norm();
      if (j == 20 || j == 22)
        CHECK(moved > 1e-3);
      else
        CHECK(moved < 1e-12);
    }
  }

  SUBCASE("bone lengths depend on beta only, never on gamma") {
    Rng rng(17);
    for (int trial = 0; trial < 4; ++trial) {
      const ShapeParams beta = random_shape(rng);
      Mat24x3 offsets;
      std::array<Real, 24> radii;
      tmpl.shaped_skeleton(beta, &offsets, &radii, nullptr);
      RVec rest_len(24);
      for (int j = 1; j < 24; ++j) rest_len(j) = offsets.row(j).norm();
      for (int pose_trial = 0; pose_trial < 100; ++pose_trial) {
        const PoseParams pose = random_pose(rng);
        const FkResult fk = forward_kinematics(tmpl.parent(), offsets, pose);
        for (int j = 1; j < 24; ++j) {
          const Real len = (fk.joints.row(j) - fk.joints.row(tmpl.parent()[j])).norm();
          CHECK(std::abs(len - rest_len(j)) < 1e-9);
        }
      }
    }
  }
}

TEST_CASE("smpl_map is locally smooth in gamma") {
  const BodyTemplate& tmpl = standard_body();
  Rng rng(29);
  for (int trial = 0; trial < 5; ++trial) {
    const ShapeParams beta = random_shape(rng);
    const PoseParams pose = random_pose(rng);
    const BodyMesh base = smpl_map(tmpl, beta, pose, Vec3::Zero());
    const int dim = static_cast<int>(rng.next_u64() % 72);
    PoseParams bumped = pose;
    bumped.gamma(dim) += 1e-6;
    const BodyMesh moved = smpl_map(tmpl, beta, bumped, Vec3::Zero());
    Real max_move = 0.0;
    for (int i = 0; i < base.vertices.rows(); ++i)
      max_move = std::max(max_move, (moved.vertices.row(i) - base.vertices.row(i)).norm());
    CHECK(max_move < 1e-4);
  }
}

TEST_CASE("metrics: pve and mpjpe") {
  const BodyTemplate& tmpl = standard_body();
  const BodyMesh a = smpl_map(tmpl, ShapeParams{}, PoseParams{}, Vec3::Zero());

  SUBCASE("identical meshes score zero") {
    CHECK(pve(a, a) == 0.0);
    CHECK(mpjpe(a, a) == 0.0);
  }

  SUBCASE("1 cm translation scores exactly 1 cm") {
    const BodyMesh b = smpl_map(tmpl, ShapeParams{}, PoseParams{}, Vec3(0.01, 0.0, 0.0));
    CHECK(pve(b, a) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(mpjpe(b, a) == doctest::Approx(1.0).epsilon(1e-12));
    // pelvis alignment removes a rigid offset entirely
    CHECK(mpjpe(b, a, true) == doctest::Approx(0.0).epsilon(1e-9));
  }

  SUBCASE("uniform-norm perturbation gives pve = r") {
    Rng rng(41);
    const Real r = 0.004;  // 4 mm
    BodyMesh b = a;
    for (int i = 0; i < b.vertices.rows(); ++i) {
      Vec3 dir(rng.normal(), rng.normal(), rng.normal());
      dir.normalize();
      b.vertices.row(i) += (r * dir).transpose();
    }
    CHECK(pve(b, a) == doctest::Approx(100.0 * r).epsilon(1e-9));
  }

  SUBCASE("count mismatch raises") {
    BodyMesh b = a;
    b.vertices.conservativeResize(10, 3);
    CHECK_THROWS_AS(pve(b, a), std::invalid_argument);
  }
}

TEST_CASE("parameter losses") {
  std::vector<BodyParams> truth(3), pred(3);

  SUBCASE("identical sequences give zero") {
    const ParamLoss l = param_loss(pred, truth);
    CHECK(l.pose == 0.0);
    CHECK(l.shape == 0.0);
    CHECK(l.total == 0.0);
  }

  SUBCASE("single-coordinate deltas follow the stated weights") {
    std::vector<BodyParams> t1(1), p1(1);
    p1[0].pose.gamma(10) += 0.1;
    ParamLoss l = param_loss(p1, t1);
    CHECK(l.pose == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(l.shape == 0.0);
    CHECK(l.total == doctest::Approx(0.1).epsilon(1e-12));

    p1[0].pose.gamma(10) = 0.0;
    p1[0].shape.beta(2) = 1.0;
    l = param_loss(p1, t1);
    CHECK(l.pose == 0.0);
    CHECK(l.shape == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(l.total == doctest::Approx(0.05).epsilon(1e-12));
  }

  SUBCASE("mean over frames") {
    pred[1].pose.gamma(0) = 0.3;
    const ParamLoss l = param_loss(pred, truth);
    CHECK(l.pose == doctest::Approx(0.1).epsilon(1e-12));
  }

  SUBCASE("length mismatch raises") {
    std::vector<BodyParams> p2(2);
    CHECK_THROWS_AS(param_loss(p2, truth), std::invalid_argument);
  }
}

TEST_CASE("skinning with identity transforms reproduces the shaped template") {
  const BodyTemplate& tmpl = standard_body();
  Rng rng(53);
  for (int trial = 0; trial < 3; ++trial) {
    const ShapeParams beta = random_shape(rng);
    const BodyMesh m = smpl_map(tmpl, beta, PoseParams{}, Vec3::Zero());
    Mat24x3 offsets;
    std::array<Real, 24> radii;
    tmpl.shaped_skeleton(beta, &offsets, &radii, nullptr);
    MatX3 shaped;
    tmpl.shaped_surface(offsets, radii, &shaped);
    CHECK((m.vertices - shaped).cwiseAbs().maxCoeff() == 0.0);
  }
}
