#include "cellcal/synth.hpp"

#include <Eigen/Geometry>
#include <cmath>
#include <doctest.h>
#include <filesystem>
#include <map>
#include <set>

#include "cellcal/residuals.hpp"
#include "internal/json_util.hpp"
#include "internal/rng.hpp"
#include "support/scenes.hpp"

using namespace cellcal;
namespace fs = std::filesystem;

namespace {

fs::path tempDir(const std::string& tag) {
  fs::path dir = fs::temp_directory_path() /
                 ("cellcal_synth_" + tag + "_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  return dir;
}

// Independent oracle: world-frame ray/rectangle intersection, written
// against board axes rather than the generator's pattern-frame test.
int oracleHitCount(const RigidTransform& world_t_pattern,
                   const RigidTransform& world_t_sensor,
                   const PatternSpec& pattern, const LidarModel& lidar) {
  Eigen::Vector3d origin = world_t_sensor.translation;
  Eigen::Vector3d bx = world_t_pattern.rotation.col(0);
  Eigen::Vector3d by = world_t_pattern.rotation.col(1);
  Eigen::Vector3d bn = world_t_pattern.rotation.col(2);
  Eigen::Vector3d b0 = world_t_pattern.translation;

  int hits = 0;
  int steps = static_cast<int>(std::llround(2 * M_PI / lidar.azimuth_step));
  for (int r = 0; r < lidar.rings; ++r) {
    double e = -lidar.elevation_span / 2 +
               lidar.elevation_span * r / (lidar.rings - 1);
    for (int k = 0; k < steps; ++k) {
      double a = -M_PI + k * lidar.azimuth_step;
      Eigen::Vector3d d_local(std::cos(e) * std::cos(a),
                              std::cos(e) * std::sin(a), std::sin(e));
      Eigen::Vector3d d = world_t_sensor.rotation * d_local;
      double den = bn.dot(d);
      if (std::abs(den) < 1e-12) continue;
      double t = bn.dot(b0 - origin) / den;
      if (t < 0.05) continue;
      Eigen::Vector3d p = origin + t * d;
      double u = bx.dot(p - b0);
      double v = by.dot(p - b0);
      if (u >= pattern.minX() && u <= pattern.maxX() && v >= pattern.minY() &&
          v <= pattern.maxY()) {
        ++hits;
      }
    }
  }
  return hits;
}

}  // namespace

TEST_CASE("raycast matches the brute-force intersection oracle") {
  // 1 m^2 board at ~2 m, 0.2 deg azimuth, 2 deg ring spacing.
  PatternSpec pattern;
  pattern.nx = pattern.ny = 6;
  pattern.square = 0.18;
  pattern.border_width = pattern.border_height = 0.05;
  pattern.boundary_sample_step = 0.02;
  LidarModel lidar;
  lidar.rings = 16;
  lidar.elevation_span = 30.0 * M_PI / 180.0;
  lidar.azimuth_step = 0.2 * M_PI / 180.0;

  internal::Rng rng(123);
  for (int trial = 0; trial < 5; ++trial) {
    RigidTransform sensor;
    sensor.rotation = Eigen::AngleAxisd(rng.uniform(-0.4, 0.4),
                                        Eigen::Vector3d::UnitZ())
                          .toRotationMatrix();
    sensor.translation = Eigen::Vector3d(0, 0, 1.0 + 0.1 * trial);
    RigidTransform board = boardPoseAt(
        pattern,
        {2.0 + 0.2 * trial, rng.uniform(-0.3, 0.3), 1.0 + rng.uniform(-0.2, 0.2)},
        {-1.0, rng.uniform(-0.2, 0.2), rng.uniform(0.1, 0.4)},
        rng.uniform(-0.3, 0.3));

    PointCloud cloud = raycastBoard(board, sensor, pattern, lidar);
    CHECK(static_cast<int>(cloud.size()) ==
          oracleHitCount(board, sensor, pattern, lidar));
    CHECK(cloud.size() > 50);

    // Every hit satisfies the board plane equation.
    Eigen::Vector3d n = board.rotation.col(2);
    double off = n.dot(board.translation);
    for (const Eigen::Vector3d& p : cloud.points) {
      Eigen::Vector3d world = sensor.apply(p);
      CHECK(std::abs(n.dot(world) - off) < 1e-9);
    }
  }
}

TEST_CASE("raycast skips rays parallel to the board") {
  PatternSpec pattern = testsupport::smallPattern();
  LidarModel lidar;
  lidar.rings = 4;
  lidar.elevation_span = 1e-9;  // all rays in the z = const plane
  lidar.azimuth_step = 0.05;
  // Board face normal perpendicular to every ray direction.
  RigidTransform board = boardPoseAt(pattern, {2.0, 0, 0}, {0, 0, 1}, 0.0);
  PointCloud cloud = raycastBoard(board, RigidTransform::identity(), pattern,
                                  lidar);
  CHECK(cloud.size() == 0);
}

TEST_CASE("noiseless generation master consistency check") {
  SceneConfig cfg = testsupport::miniScene(6);
  Generated gen = generate(cfg);
  REQUIRE(gen.dataset.collections.size() > 3);

  TransformTree tree = gen.truth.tree;
  for (const auto& [cid, pose] : gen.truth.pattern_poses) {
    tree.setPatternPose(cid, pose);
  }
  AssembledResiduals res = assemble(gen.dataset, tree);
  REQUIRE(res.values.size() > 1000);
  CHECK(res.values.cwiseAbs().maxCoeff() < 1e-7);
  CHECK(res.excluded == 0);
}

TEST_CASE("noiseless rgb detections equal exact projections") {
  SceneConfig cfg = testsupport::miniScene(4);
  Generated gen = generate(cfg);
  const SensorSpec& rgb = *gen.dataset.findSensor("rgb_a");
  RigidTransform world_t_cam = gen.truth.tree.chainTo(rgb.data_frame);
  auto corners = cfg.pattern.cornerPoints();

  int checked = 0;
  for (const Collection& col : gen.dataset.collections) {
    const RgbDetection* det = col.rgb("rgb_a");
    if (!det) continue;
    RigidTransform t_sp = compose(world_t_cam.inverse(),
                                  gen.truth.pattern_poses.at(col.id));
    for (const RgbCorner& c : det->corners) {
      Eigen::Vector2d expect = project(*rgb.intrinsics, t_sp.apply(corners[c.id]));
      CHECK(std::abs(expect.x() - c.u) < 1e-9);
      CHECK(std::abs(expect.y() - c.v) < 1e-9);
      ++checked;
    }
  }
  CHECK(checked > 50);
}

TEST_CASE("clipped boards give partial detections with in-bounds corners") {
  SceneConfig cfg = testsupport::miniScene(1);
  // Slide the board sideways until roughly half leaves the rgb frame.
  const SensorSpec* rgb = nullptr;
  for (const SensorSpec& s : cfg.sensors) {
    if (s.modality == Modality::Rgb) rgb = &s;
  }
  RigidTransform world_t_cam = cfg.tree.chainTo(rgb->data_frame);
  RigidTransform pose = cfg.trajectory[0];
  bool found_partial = false;
  for (double shift = 0.1; shift < 1.2 && !found_partial; shift += 0.05) {
    RigidTransform moved = pose;
    moved.translation += world_t_cam.rotation.col(0) * shift;
    cfg.trajectory[0] = moved;
    Generated gen = generate(cfg);
    if (gen.dataset.collections.empty()) break;
    const RgbDetection* det = gen.dataset.collections[0].rgb("rgb_a");
    if (!det || !det->partial) continue;
    found_partial = true;
    CHECK(static_cast<int>(det->corners.size()) <
          cfg.pattern.cornerCount());
    CHECK(static_cast<int>(det->corners.size()) >=
          cfg.pattern.minCorners());
    for (const RgbCorner& c : det->corners) {
      CHECK(rgb->intrinsics->inBounds({c.u, c.v}));
    }
  }
  CHECK(found_partial);
}

TEST_CASE("lidar boundary labels are the per-ring azimuth extremes") {
  SceneConfig cfg = testsupport::miniScene(5);
  Generated gen = generate(cfg);
  int rings_checked = 0;
  for (const Collection& col : gen.dataset.collections) {
    const RangeDetection* det = col.range("lidar_a");
    if (!det) continue;
    const PointCloud& cloud = gen.clouds.at(col.id).at("lidar_a");
    REQUIRE(cloud.size() == det->inside.size());

    std::map<int, std::vector<int>> by_ring;
    for (int i = 0; i < static_cast<int>(cloud.size()); ++i) {
      by_ring[cloud.rings[i]].push_back(i);
    }
    std::set<std::array<double, 3>> boundary_set;
    for (const auto& b : det->boundary) {
      boundary_set.insert({b.x(), b.y(), b.z()});
    }
    std::set<std::array<double, 3>> extremes;
    for (const auto& [ring, idx] : by_ring) {
      int lo = idx[0], hi = idx[0];
      for (int i : idx) {
        double az = std::atan2(cloud.points[i].y(), cloud.points[i].x());
        if (az < std::atan2(cloud.points[lo].y(), cloud.points[lo].x()))
          lo = i;
        if (az > std::atan2(cloud.points[hi].y(), cloud.points[hi].x()))
          hi = i;
      }
      extremes.insert(
          {cloud.points[lo].x(), cloud.points[lo].y(), cloud.points[lo].z()});
      extremes.insert(
          {cloud.points[hi].x(), cloud.points[hi].y(), cloud.points[hi].z()});
      ++rings_checked;
    }
    CHECK(boundary_set == extremes);
  }
  CHECK(rings_checked > 10);
}

TEST_CASE("same seed gives byte-identical datasets") {
  SceneConfig cfg = testsupport::miniScene(4);
  cfg.noise.rgb_pixel_sigma = 0.5;
  cfg.noise.range_sigma = 0.008;
  cfg.noise.depth_sigma = 0.004;

  fs::path dir = tempDir("determinism");
  Generated a = generate(cfg);
  Generated b = generate(cfg);
  writeGenerated(a, dir / "a");
  writeGenerated(b, dir / "b");
  CHECK(internal::readFile(dir / "a" / "dataset.json") ==
        internal::readFile(dir / "b" / "dataset.json"));
  CHECK(internal::readFile(dir / "a" / "ground_truth.json") ==
        internal::readFile(dir / "b" / "ground_truth.json"));

  SceneConfig other = cfg;
  other.seed = cfg.seed + 1;
  Generated c = generate(other);
  writeGenerated(c, dir / "c");
  CHECK(internal::readFile(dir / "a" / "dataset.json") !=
        internal::readFile(dir / "c" / "dataset.json"));
  fs::remove_all(dir);
}

TEST_CASE("generated documents round trip through the dataset loader") {
  SceneConfig cfg = testsupport::miniScene(4);
  cfg.noise.rgb_pixel_sigma = 0.3;
  Generated gen = generate(cfg);
  fs::path dir = tempDir("roundtrip");
  writeGenerated(gen, dir);

  LoadReport report;
  Dataset loaded = loadDataset(dir / "dataset.json", &report);
  CHECK(loaded.collections.size() == gen.dataset.collections.size());
  DatasetStats stats = datasetStats(loaded);
  CHECK(stats.collections == gen.truth.manifest.collections);
  CHECK(stats.rgb_partials == gen.truth.manifest.rgb_partials);
  CHECK(stats.complete == gen.truth.manifest.complete);

  // Sidecars resolve and parse.
  for (const Collection& c : loaded.collections) {
    for (const auto& [sid, rel] : c.raw) {
      fs::path p = loaded.base_dir / rel;
      CHECK(fs::exists(p));
      if (rel.find("clouds/") == 0) {
        PointCloud cloud = readPointCloud(p);
        const RangeDetection* det = c.range(sid);
        REQUIRE(det != nullptr);
        CHECK(cloud.size() == det->inside.size());
      } else {
        DepthImage img = readDepthImage(p);
        CHECK(img.width == 320);
        CHECK(img.height == 240);
      }
    }
  }

  GroundTruth gt = loadGroundTruth(dir / "ground_truth.json");
  CHECK(gt.manifest.collections == gen.truth.manifest.collections);
  CHECK(gt.pattern_poses.size() == gen.truth.pattern_poses.size());
  fs::remove_all(dir);
}

TEST_CASE("perturb_initial magnitudes are exact") {
  SceneConfig cfg = testsupport::miniScene(3, /*anchor_lidar=*/true);
  TransformTree zero =
      perturbInitial(cfg.tree, cfg.sensors, 0.0, 0.0, 42);
  for (const TreeEdge& e : cfg.tree.edges()) {
    const TreeEdge* pe = zero.findEdge(e.parent, e.child);
    REQUIRE(pe != nullptr);
    CHECK((pe->transform.matrix() - e.transform.matrix()).cwiseAbs().maxCoeff()
          == 0.0);
  }

  TransformTree perturbed =
      perturbInitial(cfg.tree, cfg.sensors, 0.1, 0.1, 42);
  int moved = 0;
  for (const SensorSpec& s : cfg.sensors) {
    const TreeEdge* before =
        cfg.tree.findEdge(s.calibrated_edge.first, s.calibrated_edge.second);
    const TreeEdge* after = perturbed.findEdge(s.calibrated_edge.first,
                                               s.calibrated_edge.second);
    PoseDelta d = poseDelta(before->transform, after->transform);
    if (s.anchored) {
      CHECK(d.translation_m == 0.0);
      CHECK(d.rotation_rad == 0.0);
    } else {
      CHECK(std::abs(d.translation_m - 0.1) < 1e-12);
      CHECK(std::abs(d.rotation_rad - 0.1) < 1e-12);
      ++moved;
    }
  }
  CHECK(moved == 2);

  TransformTree other = perturbInitial(cfg.tree, cfg.sensors, 0.1, 0.1, 43);
  bool differs = false;
  for (const TreeEdge& e : perturbed.edges()) {
    const TreeEdge* oe = other.findEdge(e.parent, e.child);
    if ((oe->transform.matrix() - e.transform.matrix()).cwiseAbs().maxCoeff() >
        1e-12) {
      differs = true;
    }
  }
  CHECK(differs);
}

TEST_CASE("pattern pose behind every sensor drops the collection") {
  SceneConfig cfg = testsupport::miniScene(2);
  // Push the second pose far outside the cell, behind all sensors.
  cfg.trajectory[1] =
      boardPoseAt(cfg.pattern, {40.0, 40.0, -30.0}, {0, 0, 1}, 0.0);
  Generated gen = generate(cfg);
  CHECK(gen.truth.manifest.dropped_empty == 1);
  CHECK(gen.truth.manifest.collections == 1);
  REQUIRE(gen.dataset.collections.size() == 1);
  CHECK(gen.dataset.collections[0].id == 0);
}

TEST_CASE("scene config json round trip") {
  SceneConfig cfg = testsupport::miniScene(3);
  cfg.initial_perturbation = PerturbationConfig{0.1, 0.1, 7};
  std::string text = sceneConfigToJsonText(cfg);
  SceneConfig back = sceneConfigFromJsonText(text);
  CHECK(back.sensors.size() == cfg.sensors.size());
  CHECK(back.trajectory.size() == cfg.trajectory.size());
  CHECK(back.seed == cfg.seed);
  CHECK(back.lidar.rings == cfg.lidar.rings);
  REQUIRE(back.initial_perturbation.has_value());
  CHECK(back.initial_perturbation->seed == 7);
  CHECK(sceneConfigToJsonText(back) == text);

  // Perturbed generation starts the dataset tree away from ground truth.
  Generated gen = generate(back);
  const SensorSpec* rgb = gen.dataset.findSensor("rgb_a");
  const TreeEdge* init = gen.dataset.tree.findEdge(rgb->calibrated_edge.first,
                                                   rgb->calibrated_edge.second);
  const TreeEdge* truth = gen.truth.tree.findEdge(rgb->calibrated_edge.first,
                                                  rgb->calibrated_edge.second);
  PoseDelta d = poseDelta(init->transform, truth->transform);
  CHECK(d.translation_m == doctest::Approx(0.1).epsilon(1e-9));
  CHECK(d.rotation_rad == doctest::Approx(0.1).epsilon(1e-9));
}
