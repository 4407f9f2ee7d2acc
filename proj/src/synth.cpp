#include "cellcal/synth.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <cstdio>

#include "cellcal/error.hpp"
#include "cellcal/version.hpp"
#include "internal/json_util.hpp"
#include "internal/rng.hpp"
#include "internal/serialize.hpp"

namespace cellcal {

using internal::json;
using internal::Rng;

namespace {

constexpr double kMinRange = 0.05;       // hits closer than this are ignored
constexpr int kMinLidarPoints = 20;      // detection thresholds for realism
constexpr int kMinLidarRings = 3;
constexpr int kMinDepthPixels = 100;
constexpr int kMinDepthBoundary = 3;
constexpr int kMaxDepthInside = 500;     // stride-subsampled label cap
constexpr double kFacingMargin = -0.1;   // rgb back-face / grazing cutoff

struct BoardFrame {
  RigidTransform sensor_t_pattern;
  RigidTransform pattern_t_sensor;
  Eigen::Vector3d normal;  // pattern z axis in the sensor frame
  double plane_offset;     // normal . (point on plane)

  explicit BoardFrame(const RigidTransform& t_sp)
      : sensor_t_pattern(t_sp),
        pattern_t_sensor(t_sp.inverse()),
        normal(t_sp.rotation.col(2)),
        plane_offset(normal.dot(t_sp.translation)) {}

  // Intersects the ray t*dir (t > kMinRange) with the board rectangle.
  bool hit(const Eigen::Vector3d& dir, const PatternSpec& pattern,
           Eigen::Vector3d* point) const {
    double den = normal.dot(dir);
    if (std::abs(den) < 1e-12) return false;
    double t = plane_offset / den;
    if (t < kMinRange) return false;
    Eigen::Vector3d p = t * dir;
    Eigen::Vector3d q = pattern_t_sensor.apply(p);
    if (q.x() < pattern.minX() || q.x() > pattern.maxX() ||
        q.y() < pattern.minY() || q.y() > pattern.maxY()) {
      return false;
    }
    if (point) *point = p;
    return true;
  }
};

Eigen::Vector3d lidarRay(double elevation, double azimuth) {
  double ce = std::cos(elevation);
  return {ce * std::cos(azimuth), ce * std::sin(azimuth),
          std::sin(elevation)};
}

double ringElevation(const LidarModel& lidar, int ring) {
  if (lidar.rings == 1) return 0.0;
  return -lidar.elevation_span / 2.0 +
         lidar.elevation_span * ring / (lidar.rings - 1);
}

std::optional<RgbDetection> genRgb(const BoardFrame& board,
                                   const CameraIntrinsics& intr,
                                   const PatternSpec& pattern, Rng& rng,
                                   double sigma) {
  Eigen::Vector3d center = board.sensor_t_pattern.apply(
      {(pattern.minX() + pattern.maxX()) / 2,
       (pattern.minY() + pattern.maxY()) / 2, 0.0});
  if (center.z() <= kMinRange) return std::nullopt;
  if (board.normal.dot(center.normalized()) > kFacingMargin) {
    return std::nullopt;  // back side or grazing view of the board face
  }
  RgbDetection det;
  auto corners = pattern.cornerPoints();
  for (int id = 0; id < static_cast<int>(corners.size()); ++id) {
    Eigen::Vector3d p = board.sensor_t_pattern.apply(corners[id]);
    if (p.z() <= 0.01) continue;
    Eigen::Vector2d px = project(intr, p);
    if (sigma > 0.0) {
      px.x() += rng.normal(sigma);
      px.y() += rng.normal(sigma);
    }
    if (!intr.inBounds(px)) continue;
    det.corners.push_back({id, px.x(), px.y()});
  }
  if (static_cast<int>(det.corners.size()) < pattern.minCorners()) {
    return std::nullopt;
  }
  det.partial = static_cast<int>(det.corners.size()) < pattern.cornerCount();
  return det;
}

struct LidarScan {
  PointCloud cloud;
  std::vector<int> boundary_indices;  // into cloud.points
};

// Scans the board with the ring/azimuth grid. The two extreme returns of
// each ring are placed at the perimeter samples nearest the true scan-edge
// crossings, so per-ring min/max azimuth points coincide with the
// longitudinal ground-truth set.
std::optional<LidarScan> genLidarScan(
    const BoardFrame& board, const PatternSpec& pattern,
    const std::vector<Eigen::Vector3d>& samples, const LidarModel& lidar) {
  LidarScan scan;
  int rings_hit = 0;
  const int steps = static_cast<int>(
      std::llround(2.0 * M_PI / lidar.azimuth_step));
  if (steps < 8) return std::nullopt;

  auto azimuthAt = [&](int k) { return -M_PI + k * lidar.azimuth_step; };

  for (int ring = 0; ring < lidar.rings; ++ring) {
    double elevation = ringElevation(lidar, ring);
    auto hitAt = [&](double az, Eigen::Vector3d* p = nullptr) {
      return board.hit(lidarRay(elevation, az), pattern, p);
    };

    std::vector<int> hit_ks;
    for (int k = 0; k < steps; ++k) {
      if (hitAt(azimuthAt(k))) hit_ks.push_back(k);
    }
    if (hit_ks.empty()) continue;
    bool wraps = hit_ks.front() == 0 &&
                 hit_ks.back() == steps - 1 &&
                 static_cast<int>(hit_ks.size()) < steps;
    if (wraps) {
      // Board straddles the atan2 seam; boundary extraction by min/max
      // azimuth is ill-defined there, so the detection is rejected.
      return std::nullopt;
    }

    // Exact arc endpoints by bisection between the last miss and the first
    // hit, then snapped to the nearest perimeter sample.
    auto crossing = [&](double az_miss, double az_hit) {
      for (int iter = 0; iter < 64; ++iter) {
        double mid = 0.5 * (az_miss + az_hit);
        if (hitAt(mid)) {
          az_hit = mid;
        } else {
          az_miss = mid;
        }
      }
      Eigen::Vector3d p;
      hitAt(az_hit, &p);
      return p;
    };
    auto snapToSample = [&](const Eigen::Vector3d& sensor_point) {
      Eigen::Vector3d q = board.pattern_t_sensor.apply(sensor_point);
      double best = std::numeric_limits<double>::infinity();
      const Eigen::Vector3d* best_q = nullptr;
      for (const Eigen::Vector3d& s : samples) {
        double d2 = (s.head<2>() - q.head<2>()).squaredNorm();
        if (d2 < best) {
          best = d2;
          best_q = &s;
        }
      }
      return board.sensor_t_pattern.apply(*best_q);
    };

    Eigen::Vector3d lo = snapToSample(
        crossing(azimuthAt(hit_ks.front() - 1), azimuthAt(hit_ks.front())));
    Eigen::Vector3d hi = snapToSample(
        crossing(azimuthAt(hit_ks.back() + 1), azimuthAt(hit_ks.back())));
    double az_lo = std::atan2(lo.y(), lo.x());
    double az_hi = std::atan2(hi.y(), hi.x());
    if (az_lo > az_hi) {
      std::swap(lo, hi);
      std::swap(az_lo, az_hi);
    }

    std::size_t ring_start = scan.cloud.size();
    scan.boundary_indices.push_back(static_cast<int>(scan.cloud.size()));
    scan.cloud.points.push_back(lo);
    scan.cloud.rings.push_back(ring);
    for (int k : hit_ks) {
      double az = azimuthAt(k);
      if (az <= az_lo || az >= az_hi) continue;
      Eigen::Vector3d p;
      hitAt(az, &p);
      scan.cloud.points.push_back(p);
      scan.cloud.rings.push_back(ring);
    }
    bool distinct = (hi - lo).norm() > 1e-12;
    if (distinct) {
      scan.boundary_indices.push_back(static_cast<int>(scan.cloud.size()));
      scan.cloud.points.push_back(hi);
      scan.cloud.rings.push_back(ring);
    }
    if (scan.cloud.size() > ring_start) ++rings_hit;
  }

  if (static_cast<int>(scan.cloud.size()) < kMinLidarPoints ||
      rings_hit < kMinLidarRings) {
    return std::nullopt;
  }
  return scan;
}

struct DepthCapture {
  DepthImage raster;
  RangeDetection labels;
};

std::optional<DepthCapture> genDepth(const BoardFrame& board,
                                     const CameraIntrinsics& intr,
                                     const PatternSpec& pattern,
                                     const std::vector<Eigen::Vector3d>& samples,
                                     Rng& rng, double sigma) {
  // Depth cameras return no usable range at grazing incidence.
  Eigen::Vector3d center = board.sensor_t_pattern.apply(
      {(pattern.minX() + pattern.maxX()) / 2,
       (pattern.minY() + pattern.maxY()) / 2, 0.0});
  if (center.z() <= kMinRange) return std::nullopt;
  if (std::abs(board.normal.dot(center.normalized())) < 0.25) {
    return std::nullopt;
  }
  DepthCapture cap;
  cap.raster.width = intr.width;
  cap.raster.height = intr.height;
  cap.raster.data.assign(
      static_cast<std::size_t>(intr.width) * intr.height,
      std::numeric_limits<float>::quiet_NaN());

  // Labels keep full double precision; the raster stores the same values as
  // float32 raw data.
  std::vector<Eigen::Vector3d> board_pixels;
  for (int j = 0; j < intr.height; ++j) {
    for (int i = 0; i < intr.width; ++i) {
      Eigen::Vector3d dir((i - intr.cx) / intr.fx, (j - intr.cy) / intr.fy,
                          1.0);
      Eigen::Vector3d p;
      if (!board.hit(dir, pattern, &p)) continue;
      double z = p.z();
      if (sigma > 0.0) z += rng.normal(sigma);
      if (z <= 0.0) continue;
      cap.raster.at(i, j) = static_cast<float>(z);
      board_pixels.emplace_back(i, j, z);
    }
  }
  if (static_cast<int>(board_pixels.size()) < kMinDepthPixels) {
    return std::nullopt;
  }

  std::size_t stride =
      (board_pixels.size() + kMaxDepthInside - 1) / kMaxDepthInside;
  for (std::size_t idx = 0; idx < board_pixels.size(); idx += stride) {
    cap.labels.inside.push_back(board_pixels[idx]);
  }

  // Boundary labels back-project exactly onto the perimeter sample set.
  for (const Eigen::Vector3d& q : samples) {
    Eigen::Vector3d p = board.sensor_t_pattern.apply(q);
    if (p.z() <= kMinRange) continue;
    Eigen::Vector2d px = project(intr, p);
    if (!intr.inBounds(px)) continue;
    double z = p.z();
    if (sigma > 0.0) z += rng.normal(sigma);
    if (z <= 0.0) continue;
    cap.labels.boundary.emplace_back(px.x(), px.y(), z);
  }
  if (static_cast<int>(cap.labels.boundary.size()) < kMinDepthBoundary) {
    return std::nullopt;
  }
  return cap;
}

// Projected physical-limit polyline for image sensors. A closed loop repeats
// its first vertex; a partially visible perimeter is rotated so the gap sits
// between the list ends and no bridging segment is implied.
std::vector<Eigen::Vector2d> limitAnnotation(
    const BoardFrame& board, const CameraIntrinsics& intr,
    const std::vector<Eigen::Vector3d>& samples) {
  std::vector<int> visible;
  std::vector<Eigen::Vector2d> projected(samples.size());
  for (int i = 0; i < static_cast<int>(samples.size()); ++i) {
    Eigen::Vector3d p = board.sensor_t_pattern.apply(samples[i]);
    if (p.z() <= kMinRange) continue;
    projected[i] = project(intr, p);
    visible.push_back(i);
  }
  std::vector<Eigen::Vector2d> out;
  if (visible.size() < 2) return out;
  if (visible.size() == samples.size()) {
    for (int i : visible) out.push_back(projected[i]);
    out.push_back(projected[visible.front()]);  // close the loop
    return out;
  }
  // Start after the largest cyclic index gap.
  int n = static_cast<int>(visible.size());
  int start = 0, largest = -1;
  for (int i = 0; i < n; ++i) {
    int a = visible[i];
    int b = visible[(i + 1) % n];
    int gap = (b - a + static_cast<int>(samples.size())) %
              static_cast<int>(samples.size());
    if (gap > largest) {
      largest = gap;
      start = (i + 1) % n;
    }
  }
  for (int i = 0; i < n; ++i) out.push_back(projected[visible[(start + i) % n]]);
  return out;
}

void validateScene(const SceneConfig& cfg) {
  cfg.pattern.validate("scene.pattern");
  cfg.tree.validate();
  if (cfg.sensors.empty()) throwValidation("scene.sensors: empty");
  if (cfg.trajectory.empty()) throwValidation("scene.trajectory: empty");
  if (cfg.lidar.rings < 4) throwValidation("scene.lidar.rings: must be >= 4");
  if (!(cfg.lidar.azimuth_step > 0)) {
    throwValidation("scene.lidar.azimuth_step: must be positive");
  }
  if (!(cfg.lidar.elevation_span > 0)) {
    throwValidation("scene.lidar.elevation_span: must be positive");
  }
  if (cfg.noise.rgb_pixel_sigma < 0 || cfg.noise.range_sigma < 0 ||
      cfg.noise.depth_sigma < 0) {
    throwValidation("scene.noise: sigmas must be non-negative");
  }
  for (std::size_t i = 0; i < cfg.trajectory.size(); ++i) {
    if (!cfg.trajectory[i].isRigid(1e-6)) {
      throwValidation("scene.trajectory[" + std::to_string(i) +
                      "]: not a rigid transform");
    }
  }
}

}  // namespace

Generated generate(const SceneConfig& cfg) {
  validateScene(cfg);
  Generated gen;
  gen.truth.tree = cfg.tree;
  const std::vector<Eigen::Vector3d> samples = cfg.pattern.boundarySamples();

  Dataset& d = gen.dataset;
  d.version = kDatasetSchemaVersion;
  d.meta.tool_version = kVersion;
  d.meta.seed = cfg.seed;
  d.pattern = cfg.pattern;
  d.sensors = cfg.sensors;

  GenerateManifest& manifest = gen.truth.manifest;
  for (const SensorSpec& s : cfg.sensors) {
    manifest.detections_per_sensor[s.id] = 0;
  }

  for (int cid = 0; cid < static_cast<int>(cfg.trajectory.size()); ++cid) {
    const RigidTransform& world_t_pattern = cfg.trajectory[cid];
    Rng rng(internal::mixSeed(cfg.seed, static_cast<std::uint64_t>(cid)));
    Collection col;
    col.id = cid;

    for (const SensorSpec& s : cfg.sensors) {
      RigidTransform world_t_sensor = cfg.tree.chainTo(s.data_frame);
      BoardFrame board(compose(world_t_sensor.inverse(), world_t_pattern));

      switch (s.modality) {
        case Modality::Rgb: {
          auto det = genRgb(board, *s.intrinsics, cfg.pattern, rng,
                            cfg.noise.rgb_pixel_sigma);
          if (det) {
            if (det->partial) ++manifest.rgb_partials;
            col.detections.emplace(s.id, std::move(*det));
            col.annotations[s.id] =
                limitAnnotation(board, *s.intrinsics, samples);
          }
          break;
        }
        case Modality::Lidar3d: {
          auto scan = genLidarScan(board, cfg.pattern, samples, cfg.lidar);
          if (scan) {
            if (cfg.noise.range_sigma > 0.0) {
              for (Eigen::Vector3d& p : scan->cloud.points) {
                double r = p.norm();
                if (r > 1e-9) p += rng.normal(cfg.noise.range_sigma) * p / r;
              }
            }
            RangeDetection det;
            det.inside = scan->cloud.points;
            for (int idx : scan->boundary_indices) {
              det.boundary.push_back(scan->cloud.points[idx]);
            }
            gen.clouds[cid][s.id] = std::move(scan->cloud);
            col.detections.emplace(s.id, std::move(det));
          }
          break;
        }
        case Modality::Depth: {
          auto cap = genDepth(board, *s.intrinsics, cfg.pattern, samples, rng,
                              cfg.noise.depth_sigma);
          if (cap) {
            col.detections.emplace(s.id, std::move(cap->labels));
            col.annotations[s.id] =
                limitAnnotation(board, *s.intrinsics, samples);
            gen.rasters[cid][s.id] = std::move(cap->raster);
          }
          break;
        }
      }
    }

    if (col.detections.empty()) {
      ++manifest.dropped_empty;
      gen.clouds.erase(cid);
      gen.rasters.erase(cid);
      continue;
    }
    for (const auto& [sid, det] : col.detections) {
      ++manifest.detections_per_sensor[sid];
    }
    gen.truth.pattern_poses[cid] = world_t_pattern;
    d.collections.push_back(std::move(col));
  }

  if (cfg.initial_perturbation) {
    const PerturbationConfig& p = *cfg.initial_perturbation;
    d.tree = perturbInitial(cfg.tree, cfg.sensors, p.translation, p.rotation,
                            p.seed);
  } else {
    d.tree = cfg.tree;
  }

  d.refreshDerived();
  manifest.collections = static_cast<int>(d.collections.size());
  for (const Collection& c : d.collections) {
    if (c.complete) ++manifest.complete;
  }
  d.validate();
  return gen;
}

TransformTree perturbInitial(const TransformTree& tree,
                             const std::vector<SensorSpec>& sensors,
                             double translation, double rotation,
                             std::uint64_t seed) {
  if (translation < 0 || rotation < 0) {
    throw Error(ErrorCode::InvalidArgument,
                "perturbInitial: magnitudes must be non-negative");
  }
  TransformTree out = tree;
  Rng rng(seed);
  std::vector<std::string> done;
  for (const SensorSpec& s : sensors) {
    if (s.anchored) continue;
    const std::string& child = s.calibrated_edge.second;
    if (std::find(done.begin(), done.end(), child) != done.end()) continue;
    done.push_back(child);
    TreeEdge* edge = out.findEdge(s.calibrated_edge.first, child);
    if (!edge) {
      throwNotFound("perturbInitial: calibrated edge '" +
                    s.calibrated_edge.first + "'->'" + child + "' not in tree");
    }
    Eigen::Vector3d dir = rng.unitVector();
    Eigen::Vector3d axis = rng.unitVector();
    edge->transform.translation += translation * dir;
    if (rotation > 0.0) {
      edge->transform.rotation =
          Eigen::AngleAxisd(rotation, axis).toRotationMatrix() *
          edge->transform.rotation;
    }
  }
  return out;
}

PointCloud raycastBoard(const RigidTransform& world_t_pattern,
                        const RigidTransform& world_t_sensor,
                        const PatternSpec& pattern, const LidarModel& lidar) {
  BoardFrame board(compose(world_t_sensor.inverse(), world_t_pattern));
  PointCloud cloud;
  const int steps = static_cast<int>(
      std::llround(2.0 * M_PI / lidar.azimuth_step));
  for (int ring = 0; ring < lidar.rings; ++ring) {
    double elevation = ringElevation(lidar, ring);
    for (int k = 0; k < steps; ++k) {
      Eigen::Vector3d p;
      if (board.hit(lidarRay(elevation, -M_PI + k * lidar.azimuth_step),
                    pattern, &p)) {
        cloud.points.push_back(p);
        cloud.rings.push_back(ring);
      }
    }
  }
  return cloud;
}

RigidTransform boardPoseAt(const PatternSpec& pattern,
                           const Eigen::Vector3d& center,
                           const Eigen::Vector3d& normal, double roll) {
  Eigen::Vector3d n = normal.normalized();
  Eigen::Vector3d ref =
      std::abs(n.z()) < 0.9 ? Eigen::Vector3d(0, 0, 1) : Eigen::Vector3d(1, 0, 0);
  Eigen::Vector3d x0 = (ref - n * ref.dot(n)).normalized();
  Eigen::Vector3d x = std::cos(roll) * x0 + std::sin(roll) * n.cross(x0);
  Eigen::Vector3d y = n.cross(x);
  RigidTransform pose;
  pose.rotation.col(0) = x;
  pose.rotation.col(1) = y;
  pose.rotation.col(2) = n;
  Eigen::Vector3d offset((pattern.minX() + pattern.maxX()) / 2,
                         (pattern.minY() + pattern.maxY()) / 2, 0.0);
  pose.translation = center - pose.rotation * offset;
  return pose;
}

void writeGenerated(Generated& gen, const std::filesystem::path& out_dir,
                    const std::string& config_fingerprint) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);

  char name[64];
  for (Collection& col : gen.dataset.collections) {
    auto cit = gen.clouds.find(col.id);
    if (cit != gen.clouds.end()) {
      for (const auto& [sid, cloud] : cit->second) {
        std::snprintf(name, sizeof(name), "clouds/c%04d_%s.bin", col.id,
                      sid.c_str());
        writePointCloud(cloud, out_dir / name);
        col.raw[sid] = name;
      }
    }
    auto rit = gen.rasters.find(col.id);
    if (rit != gen.rasters.end()) {
      for (const auto& [sid, raster] : rit->second) {
        std::snprintf(name, sizeof(name), "depth/c%04d_%s.bin", col.id,
                      sid.c_str());
        writeDepthImage(raster, out_dir / name);
        col.raw[sid] = name;
      }
    }
  }

  if (!config_fingerprint.empty()) {
    gen.dataset.meta.inputs["scene_config"] = config_fingerprint;
  }
  gen.dataset.base_dir = out_dir;
  saveDataset(gen.dataset, out_dir / "dataset.json");

  json doc;
  doc["version"] = kDatasetSchemaVersion;
  json meta{{"tool_version", kVersion}, {"seed", gen.dataset.meta.seed
                                                      ? json(*gen.dataset.meta.seed)
                                                      : json(nullptr)}};
  if (!config_fingerprint.empty()) {
    meta["inputs"] = json{{"scene_config", config_fingerprint}};
  }
  doc["meta"] = meta;
  doc["tree"] = internal::toJson(gen.truth.tree);
  json poses = json::object();
  for (const auto& [cid, pose] : gen.truth.pattern_poses) {
    poses[std::to_string(cid)] = internal::toJson(pose);
  }
  doc["pattern_poses"] = poses;
  const GenerateManifest& m = gen.truth.manifest;
  doc["manifest"] = json{{"collections", m.collections},
                         {"dropped_empty", m.dropped_empty},
                         {"rgb_partials", m.rgb_partials},
                         {"complete", m.complete},
                         {"detections_per_sensor", m.detections_per_sensor}};
  internal::atomicWrite(out_dir / "ground_truth.json", doc.dump(1) + "\n");
}

GroundTruth loadGroundTruth(const std::filesystem::path& path) {
  json doc = json::parse(internal::readFile(path));
  GroundTruth gt;
  gt.tree = internal::treeFromJson(internal::member(doc, "tree", "ground_truth"),
                                   "tree");
  for (const auto& [key, val] :
       internal::member(doc, "pattern_poses", "ground_truth").items()) {
    gt.pattern_poses[std::stoi(key)] =
        internal::transformFromJson(val, "pattern_poses." + key);
  }
  const json& m = internal::member(doc, "manifest", "ground_truth");
  gt.manifest.collections = internal::intField(m, "collections", "manifest");
  gt.manifest.dropped_empty = internal::intField(m, "dropped_empty", "manifest");
  gt.manifest.rgb_partials = internal::intField(m, "rgb_partials", "manifest");
  gt.manifest.complete = internal::intField(m, "complete", "manifest");
  for (const auto& [sid, n] :
       internal::member(m, "detections_per_sensor", "manifest").items()) {
    gt.manifest.detections_per_sensor[sid] =
        internal::asInt(n, "manifest.detections_per_sensor");
  }
  return gt;
}

SceneConfig sceneConfigFromJsonText(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throwValidation("scene config: invalid JSON: " + std::string(e.what()));
  }
  SceneConfig cfg;
  const json& cell = internal::asArray(internal::member(doc, "cell", "scene"),
                                       "scene.cell", 3);
  for (int i = 0; i < 3; ++i) {
    cfg.cell_dims(i) = internal::asNumber(cell[i], "scene.cell");
  }
  cfg.pattern = internal::patternFromJson(
      internal::member(doc, "pattern", "scene"), "scene.pattern");
  cfg.tree = internal::treeFromJson(internal::member(doc, "tree", "scene"),
                                    "scene.tree");
  for (std::size_t i = 0; i < doc.at("sensors").size(); ++i) {
    cfg.sensors.push_back(internal::sensorFromJson(
        doc.at("sensors")[i], "scene.sensors[" + std::to_string(i) + "]"));
  }
  const json& traj = internal::asArray(
      internal::member(doc, "trajectory", "scene"), "scene.trajectory");
  int ti = 0;
  for (const json& pose : traj) {
    cfg.trajectory.push_back(internal::transformFromJson(
        pose, "scene.trajectory[" + std::to_string(ti++) + "]"));
  }
  if (doc.contains("lidar")) {
    const json& l = doc.at("lidar");
    cfg.lidar.rings = internal::intField(l, "rings", "scene.lidar");
    cfg.lidar.elevation_span =
        internal::numberField(l, "elevation_span", "scene.lidar");
    cfg.lidar.azimuth_step =
        internal::numberField(l, "azimuth_step", "scene.lidar");
  }
  if (doc.contains("noise")) {
    const json& n = doc.at("noise");
    cfg.noise.rgb_pixel_sigma =
        internal::numberField(n, "rgb_pixel_sigma", "scene.noise");
    cfg.noise.range_sigma =
        internal::numberField(n, "range_sigma", "scene.noise");
    cfg.noise.depth_sigma =
        internal::numberField(n, "depth_sigma", "scene.noise");
  }
  if (doc.contains("seed")) cfg.seed = doc.at("seed").get<std::uint64_t>();
  if (doc.contains("initial_perturbation") &&
      !doc.at("initial_perturbation").is_null()) {
    const json& p = doc.at("initial_perturbation");
    PerturbationConfig pc;
    pc.translation =
        internal::numberField(p, "translation", "scene.initial_perturbation");
    pc.rotation =
        internal::numberField(p, "rotation", "scene.initial_perturbation");
    pc.seed = internal::member(p, "seed", "scene.initial_perturbation")
                  .get<std::uint64_t>();
    cfg.initial_perturbation = pc;
  }
  return cfg;
}

std::string sceneConfigToJsonText(const SceneConfig& cfg) {
  json doc;
  doc["cell"] = json::array(
      {cfg.cell_dims.x(), cfg.cell_dims.y(), cfg.cell_dims.z()});
  doc["pattern"] = internal::toJson(cfg.pattern);
  doc["tree"] = internal::toJson(cfg.tree);
  json sensors = json::array();
  for (const SensorSpec& s : cfg.sensors) sensors.push_back(internal::toJson(s));
  doc["sensors"] = sensors;
  json traj = json::array();
  for (const RigidTransform& pose : cfg.trajectory) {
    traj.push_back(internal::toJson(pose));
  }
  doc["trajectory"] = traj;
  doc["lidar"] = json{{"rings", cfg.lidar.rings},
                      {"elevation_span", cfg.lidar.elevation_span},
                      {"azimuth_step", cfg.lidar.azimuth_step}};
  doc["noise"] = json{{"rgb_pixel_sigma", cfg.noise.rgb_pixel_sigma},
                      {"range_sigma", cfg.noise.range_sigma},
                      {"depth_sigma", cfg.noise.depth_sigma}};
  doc["seed"] = cfg.seed;
  if (cfg.initial_perturbation) {
    doc["initial_perturbation"] =
        json{{"translation", cfg.initial_perturbation->translation},
             {"rotation", cfg.initial_perturbation->rotation},
             {"seed", cfg.initial_perturbation->seed}};
  } else {
    doc["initial_perturbation"] = nullptr;
  }
  return doc.dump(1) + "\n";
}

}  // namespace cellcal
