#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cellcal/dataset.hpp"
#include "cellcal/geometry.hpp"
#include "cellcal/sensor_models.hpp"

namespace cellcal {

/// Spinning-lidar ray grid: `rings` elevation steps spread symmetrically
/// over `elevation_span`, full-circle azimuth sweep at `azimuth_step`.
struct LidarModel {
  int rings = 16;
  double elevation_span = 30.0 * M_PI / 180.0;
  double azimuth_step = 0.2 * M_PI / 180.0;
};

struct NoiseConfig {
  double rgb_pixel_sigma = 0.0;
  double range_sigma = 0.0;
  double depth_sigma = 0.0;

  bool any() const {
    return rgb_pixel_sigma > 0 || range_sigma > 0 || depth_sigma > 0;
  }
};

struct PerturbationConfig {
  double translation = 0.1;  // meters; applied at exactly this magnitude
  double rotation = 0.1;     // radians
  std::uint64_t seed = 0;
};

/// Ground-truth description of a synthetic cell: the true frame tree
/// (optimized edges at their true values), the sensor set, and one pattern
/// pose per prospective collection.
struct SceneConfig {
  Eigen::Vector3d cell_dims{4.0, 2.8, 2.29};
  PatternSpec pattern;
  TransformTree tree;
  std::vector<SensorSpec> sensors;
  std::vector<RigidTransform> trajectory;  // world -> pattern per collection
  LidarModel lidar;
  NoiseConfig noise;
  std::uint64_t seed = 0;
  /// When set, the emitted dataset tree carries perturbed calibrated edges
  /// (the ground-truth document keeps the true ones).
  std::optional<PerturbationConfig> initial_perturbation;
};

struct GenerateManifest {
  int collections = 0;      // emitted (at least one detection)
  int dropped_empty = 0;    // pattern invisible to every sensor
  int rgb_partials = 0;
  int complete = 0;
  std::map<std::string, int> detections_per_sensor;
};

struct GroundTruth {
  TransformTree tree;
  std::map<int, RigidTransform> pattern_poses;
  GenerateManifest manifest;
};

struct Generated {
  Dataset dataset;
  GroundTruth truth;
  // Sidecar payloads keyed by collection id, then sensor id.
  std::map<int, std::map<std::string, PointCloud>> clouds;
  std::map<int, std::map<std::string, DepthImage>> rasters;
};

/// Synthesizes detections for every (collection, sensor) pair: exact corner
/// projections with clipping and the 25% rule for rgb, ring/azimuth ray
/// casting for lidar, frustum rasterization for depth. Deterministic for a
/// fixed seed; per-collection noise streams are split from the master seed.
Generated generate(const SceneConfig& cfg);

/// Writes dataset.json, ground_truth.json and binary sidecars under out_dir.
void writeGenerated(Generated& gen, const std::filesystem::path& out_dir,
                    const std::string& config_fingerprint = "");

GroundTruth loadGroundTruth(const std::filesystem::path& path);

/// Displaces every distinct non-anchored calibrated edge by exactly
/// `translation` meters along a random direction and exactly `rotation`
/// radians about a random axis. Anchored edges are untouched.
TransformTree perturbInitial(const TransformTree& tree,
                             const std::vector<SensorSpec>& sensors,
                             double translation, double rotation,
                             std::uint64_t seed);

/// Pure grid ray cast: rays on the (ring elevation x azimuth) lattice
/// intersected with the physical board rectangle; misses omitted, hits
/// returned in the sensor frame with ring ids. No noise, no edge snapping.
PointCloud raycastBoard(const RigidTransform& world_t_pattern,
                        const RigidTransform& world_t_sensor,
                        const PatternSpec& pattern, const LidarModel& lidar);

/// Pattern pose with the board center at `center` and the face normal along
/// `normal`; `roll` spins the board about its normal.
RigidTransform boardPoseAt(const PatternSpec& pattern,
                           const Eigen::Vector3d& center,
                           const Eigen::Vector3d& normal, double roll);

// JSON round trip for scene configs (the CLI `generate` input document).
SceneConfig sceneConfigFromJsonText(const std::string& text);
std::string sceneConfigToJsonText(const SceneConfig& cfg);

// Built-in cells: a 4 x 2.8 x 2.29 m gantry rig with three lidars, one
// depth camera and three rgb cameras. Trajectories are frozen so the
// dataset composition (collections / rgb partials / complete) is stable.
SceneConfig simTrainScene();   // 23 collections, 35 rgb partials, 5 complete
SceneConfig simTestScene();    // 17 / 26 / 4
SceneConfig realTrainScene();  // 29 / 61 / 6
SceneConfig realTestScene();   // 14 / 29 / 4
/// Every collection misses at least one sensor (non-overlapping FOV case).
SceneConfig disjointScene();

}  // namespace cellcal
