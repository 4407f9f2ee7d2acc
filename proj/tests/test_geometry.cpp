#include "cellcal/geometry.hpp"

#include <Eigen/Geometry>
#include <cmath>
#include <doctest.h>

#include "cellcal/error.hpp"
#include "internal/rng.hpp"

using namespace cellcal;

namespace {

// Oracle: compose via explicit 4x4 homogeneous matrix products.
Eigen::Matrix4d matProduct(const std::vector<RigidTransform>& ts) {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  for (const RigidTransform& t : ts) m = m * t.matrix();
  return m;
}

RigidTransform rotZ(double angle, const Eigen::Vector3d& t = {0, 0, 0}) {
  RigidTransform out;
  out.rotation = Eigen::AngleAxisd(angle, Eigen::Vector3d::UnitZ())
                     .toRotationMatrix();
  out.translation = t;
  return out;
}

RigidTransform randomTransform(cellcal::internal::Rng& rng,
                               double max_angle = M_PI - 0.01) {
  RigidTransform t;
  t.rotation = Eigen::AngleAxisd(rng.uniform(0.0, max_angle), rng.unitVector())
                   .toRotationMatrix();
  t.translation = Eigen::Vector3d(rng.uniform(-2, 2), rng.uniform(-2, 2),
                                  rng.uniform(-2, 2));
  return t;
}

double maxAbsDiff(const Eigen::Matrix4d& a, const Eigen::Matrix4d& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

}  // namespace

TEST_CASE("compose identity and inverse") {
  internal::Rng rng(7);
  for (int i = 0; i < 20; ++i) {
    RigidTransform t = randomTransform(rng);
    CHECK(maxAbsDiff(compose(t, RigidTransform::identity()).matrix(),
                     t.matrix()) < 1e-12);
    CHECK(maxAbsDiff(compose(t, t.inverse()).matrix(),
                     Eigen::Matrix4d::Identity()) < 1e-9);
    CHECK(t.isRigid());
  }
}

TEST_CASE("compose matches homogeneous-matrix oracle") {
  // Hand case: Rz(90) + t=(1,0,0) after Rz(90) gives Rz(180) + t=(1,0,0).
  RigidTransform a = rotZ(M_PI / 2, {1, 0, 0});
  RigidTransform b = rotZ(M_PI / 2);
  RigidTransform ab = compose(a, b);
  RigidTransform expect = rotZ(M_PI, {1, 0, 0});
  CHECK(maxAbsDiff(ab.matrix(), expect.matrix()) < 1e-12);
  CHECK(maxAbsDiff(ab.matrix(), matProduct({a, b})) < 1e-12);

  internal::Rng rng(13);
  for (int i = 0; i < 50; ++i) {
    RigidTransform x = randomTransform(rng);
    RigidTransform y = randomTransform(rng);
    CHECK(maxAbsDiff(compose(x, y).matrix(), matProduct({x, y})) < 1e-12);
  }
}

TEST_CASE("pose param round trip") {
  internal::Rng rng(21);
  for (int i = 0; i < 200; ++i) {
    RigidTransform t = randomTransform(rng, M_PI - 0.01);
    RigidTransform back = PoseParam::fromTransform(t).toTransform();
    CHECK(maxAbsDiff(t.matrix(), back.matrix()) < 1e-9);
  }
}

TEST_CASE("pose param canonicalization") {
  PoseParam p;
  p.rotation_vector = Eigen::Vector3d(0, 0, 3 * M_PI / 2);  // 270 deg
  p.canonicalize();
  // Wraps to -90 deg about z.
  CHECK(p.rotation_vector.z() == doctest::Approx(-M_PI / 2).epsilon(1e-12));
  CHECK(p.rotation_vector.norm() < M_PI);

  // At the pi boundary the first nonzero axis component is non-negative.
  PoseParam q;
  q.rotation_vector = Eigen::Vector3d(-M_PI, 0, 0);
  q.canonicalize();
  CHECK(q.rotation_vector.x() == doctest::Approx(M_PI));
}

TEST_CASE("chain_to composes along the path") {
  TransformTree tree;
  CHECK(maxAbsDiff(tree.chainTo("world").matrix(),
                   Eigen::Matrix4d::Identity()) < 1e-15);

  internal::Rng rng(3);
  RigidTransform e1 = randomTransform(rng);
  RigidTransform e2 = randomTransform(rng);
  RigidTransform e3 = randomTransform(rng);
  tree.addEdge({"world", "beam", e1, EdgeKind::Static});
  tree.addEdge({"beam", "mount", e2, EdgeKind::Optimized});
  tree.addEdge({"mount", "sensor", e3, EdgeKind::Static});
  tree.validate();

  CHECK(maxAbsDiff(tree.chainTo("beam").matrix(), e1.matrix()) < 1e-15);
  CHECK(maxAbsDiff(tree.chainTo("sensor").matrix(),
                   matProduct({e1, e2, e3})) < 1e-12);
  CHECK_THROWS_AS((void)tree.chainTo("nope"), Error);
  try {
    (void)tree.chainTo("nope");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("nope") != std::string::npos);
  }
}

TEST_CASE("tree rejects structural violations") {
  TransformTree tree;
  tree.addEdge({"world", "a", {}, EdgeKind::Static});
  CHECK_THROWS_AS(tree.addEdge({"world", "a", {}, EdgeKind::Static}), Error);
  CHECK_THROWS_AS(tree.addEdge({"x", "world", {}, EdgeKind::Static}), Error);

  // a -> b -> c with c -> a is impossible by construction (single parent),
  // but a disconnected loop b <-> c must fail validation.
  TransformTree loop;
  loop.addEdge({"c", "b", {}, EdgeKind::Static});
  loop.addEdge({"b", "c", {}, EdgeKind::Static});
  CHECK_THROWS_AS(loop.validate(), Error);
}

TEST_CASE("sensor_to_pattern") {
  TransformTree tree;
  RigidTransform sensor_pose;
  sensor_pose.translation = Eigen::Vector3d(1, 0, 0);
  tree.addEdge({"world", "cam", sensor_pose, EdgeKind::Optimized});
  RigidTransform pattern_pose;
  pattern_pose.translation = Eigen::Vector3d(2, 0, 0);
  tree.setPatternPose(0, pattern_pose);

  RigidTransform t = sensorToPattern(tree, "cam", 0);
  CHECK(t.translation.isApprox(Eigen::Vector3d(1, 0, 0), 1e-12));
  CHECK((t.rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() <
        1e-12);

  // Identity when the sensor frame is the root and the pattern is at origin.
  tree.setPatternPose(1, RigidTransform::identity());
  CHECK(maxAbsDiff(sensorToPattern(tree, "world", 1).matrix(),
                   Eigen::Matrix4d::Identity()) < 1e-15);

  CHECK_THROWS_AS((void)sensorToPattern(tree, "cam", 99), Error);

  // Oracle: inv(chain_s) * chain_p via explicit matrices.
  internal::Rng rng(31);
  for (int i = 0; i < 30; ++i) {
    TransformTree t2;
    RigidTransform a = randomTransform(rng), b = randomTransform(rng);
    RigidTransform p = randomTransform(rng);
    t2.addEdge({"world", "base", a, EdgeKind::Static});
    t2.addEdge({"base", "lidar", b, EdgeKind::Optimized});
    t2.setPatternPose(4, p);
    Eigen::Matrix4d expect =
        matProduct({a, b}).inverse() * p.matrix();
    CHECK(maxAbsDiff(sensorToPattern(t2, "lidar", 4).matrix(), expect) <
          1e-9);
  }
}

TEST_CASE("gauge invariance of sensor_to_pattern") {
  internal::Rng rng(47);
  for (int trial = 0; trial < 50; ++trial) {
    TransformTree tree;
    tree.addEdge({"world", "rig", randomTransform(rng), EdgeKind::Static});
    tree.addEdge({"rig", "s1", randomTransform(rng), EdgeKind::Optimized});
    tree.addEdge({"world", "s2_mount", randomTransform(rng),
                  EdgeKind::Optimized});
    tree.addEdge({"s2_mount", "s2", randomTransform(rng), EdgeKind::Static});
    tree.setPatternPose(0, randomTransform(rng));

    RigidTransform before_s1 = sensorToPattern(tree, "s1", 0);
    RigidTransform before_s2 = sensorToPattern(tree, "s2", 0);

    RigidTransform g = randomTransform(rng);
    tree.premultiplyRootEdges(g);

    CHECK(maxAbsDiff(sensorToPattern(tree, "s1", 0).matrix(),
                     before_s1.matrix()) < 1e-9);
    CHECK(maxAbsDiff(sensorToPattern(tree, "s2", 0).matrix(),
                     before_s2.matrix()) < 1e-9);
  }
}

TEST_CASE("chain_to invariant under static sub-chain refactoring") {
  internal::Rng rng(99);
  for (int trial = 0; trial < 30; ++trial) {
    RigidTransform whole = randomTransform(rng);
    RigidTransform part_a = randomTransform(rng);
    RigidTransform part_b = compose(part_a.inverse(), whole);

    TransformTree flat;
    flat.addEdge({"world", "sensor", whole, EdgeKind::Static});

    TransformTree split;
    split.addEdge({"world", "bracket", part_a, EdgeKind::Static});
    split.addEdge({"bracket", "sensor", part_b, EdgeKind::Static});

    CHECK(maxAbsDiff(flat.chainTo("sensor").matrix(),
                     split.chainTo("sensor").matrix()) < 1e-9);
  }
}
