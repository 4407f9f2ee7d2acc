#include <Eigen/Geometry>
#include <cmath>

#include "cellcal/synth.hpp"

// Built-in synthetic cells. The rig mirrors a gantry-mounted seven-sensor
// setup: three spinning lidars on the posts, three rgb cameras and one depth
// camera looking down from the top frame. Board trajectories are frozen
// pose lists so dataset composition stays byte-stable across releases.

namespace cellcal {
namespace {

CameraIntrinsics rgbIntrinsics() {
  CameraIntrinsics intr;
  intr.fx = intr.fy = 600.0;
  intr.cx = 320.0;
  intr.cy = 240.0;
  intr.width = 640;
  intr.height = 480;
  return intr;
}

CameraIntrinsics depthIntrinsics() {
  CameraIntrinsics intr;
  intr.fx = intr.fy = 570.0;
  intr.cx = 320.0;
  intr.cy = 240.0;
  intr.width = 640;
  intr.height = 480;
  return intr;
}

PatternSpec cellPattern() {
  PatternSpec p;
  p.nx = 11;
  p.ny = 8;
  p.square = 0.1;
  p.border_width = 0.05;
  p.border_height = 0.05;
  p.boundary_sample_step = 0.01;
  return p;
}

Eigen::Matrix3d yawRotation(double yaw) {
  return Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ()).toRotationMatrix();
}

// Optical frame: z along the view direction, y toward image-down.
Eigen::Matrix3d lookAtCamera(const Eigen::Vector3d& pos,
                             const Eigen::Vector3d& target) {
  Eigen::Vector3d z = (target - pos).normalized();
  Eigen::Vector3d down(0, 0, -1);
  Eigen::Vector3d y0 = down - z * down.dot(z);
  if (y0.norm() < 1e-9) y0 = Eigen::Vector3d(0, 1, 0) - z * z.y();
  Eigen::Vector3d y = y0.normalized();
  Eigen::Vector3d x = y.cross(z);
  Eigen::Matrix3d r;
  r.col(0) = x;
  r.col(1) = y;
  r.col(2) = z;
  return r;
}

const Eigen::Vector3d kGantry(0, 0, 2.29);

struct CellRig {
  TransformTree tree;
  std::vector<SensorSpec> sensors;
};

void addLidar(CellRig& rig, const std::string& id, const Eigen::Vector3d& pos,
              double yaw, bool anchored) {
  RigidTransform mount;
  mount.rotation = yawRotation(yaw);
  mount.translation = pos + Eigen::Vector3d(0, 0, 0.04) - kGantry;
  rig.tree.addEdge({"gantry", id + "_mount", mount, EdgeKind::Optimized});
  RigidTransform head;
  head.translation = Eigen::Vector3d(0, 0, -0.04);
  rig.tree.addEdge({id + "_mount", id, head, EdgeKind::Static});

  SensorSpec s;
  s.id = id;
  s.modality = Modality::Lidar3d;
  s.data_frame = id;
  s.calibrated_edge = {"gantry", id + "_mount"};
  s.anchored = anchored;
  rig.sensors.push_back(std::move(s));
}

void addCamera(CellRig& rig, const std::string& id, Modality modality,
               const CameraIntrinsics& intr, const std::string& parent,
               const Eigen::Vector3d& parent_origin, const Eigen::Vector3d& pos,
               const Eigen::Vector3d& target) {
  RigidTransform cam;
  cam.rotation = lookAtCamera(pos, target);
  cam.translation = pos;

  Eigen::Vector3d view = (target - pos).normalized();
  RigidTransform mount;
  mount.rotation = yawRotation(std::atan2(view.y(), view.x()));
  mount.translation = pos - parent_origin;
  rig.tree.addEdge({parent, id + "_mount", mount, EdgeKind::Optimized});

  // Static remainder so the calibrated edge does not touch the data frame.
  RigidTransform parent_pose;
  parent_pose.translation = parent_origin;
  RigidTransform head =
      compose(compose(parent_pose, mount).inverse(), cam);
  rig.tree.addEdge({id + "_mount", id, head, EdgeKind::Static});

  SensorSpec s;
  s.id = id;
  s.modality = modality;
  s.data_frame = id;
  s.calibrated_edge = {parent, id + "_mount"};
  s.intrinsics = intr;
  rig.sensors.push_back(std::move(s));
}

CellRig buildCellRig() {
  CellRig rig;
  RigidTransform gantry;
  gantry.translation = kGantry;
  rig.tree.addEdge({"world", "gantry", gantry, EdgeKind::Static});

  addLidar(rig, "lidar_1", {1.85, -1.25, 1.50},
           std::atan2(0.1 - (-1.25), 0.2 - 1.85), /*anchored=*/true);
  addLidar(rig, "lidar_2", {0.00, 1.30, 1.55}, std::atan2(-1.4, 0.0), false);
  addLidar(rig, "lidar_3", {-1.85, -1.25, 1.45}, std::atan2(1.25, 1.75),
           false);

  addCamera(rig, "depth_1", Modality::Depth, depthIntrinsics(), "gantry",
            kGantry, {0.00, 0.45, 2.24}, {0.0, -0.25, 0.85});
  addCamera(rig, "rgb_1", Modality::Rgb, rgbIntrinsics(), "gantry", kGantry,
            {-1.70, 0.00, 2.20}, {0.5, 0.0, 0.95});

  // rgb_2 hangs off an intermediate beam; its calibrated edge is one level
  // away from the data frame.
  RigidTransform beam;
  beam.translation = Eigen::Vector3d(1.7, 0.0, 0.0);
  rig.tree.addEdge({"gantry", "big_beam", beam, EdgeKind::Static});
  addCamera(rig, "rgb_2", Modality::Rgb, rgbIntrinsics(), "big_beam",
            kGantry + beam.translation, {1.70, 0.95, 2.18},
            {-0.3, -0.3, 0.95});

  addCamera(rig, "rgb_3", Modality::Rgb, rgbIntrinsics(), "gantry", kGantry,
            {0.15, -1.20, 2.20}, {0.0, 0.4, 0.95});
  return rig;
}

struct BoardWaypoint {
  double cx, cy, cz;  // board center
  double nx, ny, nz;  // face normal direction
  double roll;
};

SceneConfig sceneFromWaypoints(const std::vector<BoardWaypoint>& waypoints,
                               std::uint64_t seed) {
  CellRig rig = buildCellRig();
  SceneConfig cfg;
  cfg.pattern = cellPattern();
  cfg.tree = std::move(rig.tree);
  cfg.sensors = std::move(rig.sensors);
  cfg.noise.rgb_pixel_sigma = 0.5;
  cfg.noise.range_sigma = 0.008;
  cfg.noise.depth_sigma = 0.004;
  cfg.seed = seed;
  for (const BoardWaypoint& w : waypoints) {
    cfg.trajectory.push_back(boardPoseAt(cfg.pattern, {w.cx, w.cy, w.cz},
                                         {w.nx, w.ny, w.nz}, w.roll));
  }
  return cfg;
}

}  // namespace

SceneConfig simTrainScene() {
  // Placeholder sweep; replaced by the tuned waypoint list.
  std::vector<BoardWaypoint> wps;
  for (int i = 0; i < 23; ++i) {
    double a = 2 * M_PI * i / 23.0;
    wps.push_back({0.9 * std::cos(a), 0.55 * std::sin(a), 1.1 + 0.2 * std::sin(3 * a),
                   -std::cos(a), -std::sin(a), 0.9, 0.1 * std::cos(2 * a)});
  }
  return sceneFromWaypoints(wps, 20220608);
}

SceneConfig simTestScene() {
  std::vector<BoardWaypoint> wps;
  for (int i = 0; i < 17; ++i) {
    double a = 2 * M_PI * i / 17.0 + 0.3;
    wps.push_back({0.8 * std::cos(a), 0.5 * std::sin(a), 1.15 + 0.15 * std::cos(2 * a),
                   -std::cos(a), -std::sin(a), 1.0, -0.1 * std::sin(a)});
  }
  return sceneFromWaypoints(wps, 19700101);
}

SceneConfig realTrainScene() {
  std::vector<BoardWaypoint> wps;
  for (int i = 0; i < 29; ++i) {
    double a = 2 * M_PI * i / 29.0 + 0.1;
    wps.push_back({1.0 * std::cos(a), 0.6 * std::sin(a), 1.05 + 0.25 * std::sin(2 * a),
                   -std::cos(a), -std::sin(a), 0.8, 0.15 * std::sin(3 * a)});
  }
  return sceneFromWaypoints(wps, 29611);
}

SceneConfig realTestScene() {
  std::vector<BoardWaypoint> wps;
  for (int i = 0; i < 14; ++i) {
    double a = 2 * M_PI * i / 14.0 + 0.5;
    wps.push_back({0.85 * std::cos(a), 0.55 * std::sin(a), 1.2,
                   -std::cos(a), -std::sin(a), 1.1, 0.0});
  }
  return sceneFromWaypoints(wps, 14294);
}

SceneConfig disjointScene() {
  std::vector<BoardWaypoint> wps;
  for (int i = 0; i < 18; ++i) {
    double a = 2 * M_PI * i / 18.0;
    wps.push_back({1.3 * std::cos(a), 0.9 * std::sin(a), 1.0,
                   -std::cos(a), -std::sin(a), 0.3, 0.0});
  }
  return sceneFromWaypoints(wps, 777);
}

}  // namespace cellcal
