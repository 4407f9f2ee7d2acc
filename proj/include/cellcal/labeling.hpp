#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cellcal/dataset.hpp"

namespace cellcal {

struct LidarLabelConfig {
  Eigen::Vector3d seed = Eigen::Vector3d::Zero();  // sensor frame, meters
  double crop_radius = 0.8;
  double ransac_threshold = 0.015;
  int ransac_iters = 200;
  int min_inliers = 30;
  std::uint64_t rng_seed = 0;  // hypothesis sampling stream
};

struct DepthLabelConfig {
  Eigen::Vector2i seed_pixel = Eigen::Vector2i::Zero();
  double depth_jump = 0.02;    // join threshold between 4-neighbors, meters
  int max_inside_points = 500;
  std::optional<std::vector<Eigen::Vector2d>> polygon;  // propagation fence
};

/// Crop around the seed, RANSAC plane fit, inliers as inside points and the
/// per-ring azimuth extremes as boundary points. Returns nullopt when the
/// crop is empty or the plane support is below min_inliers.
std::optional<RangeDetection> labelLidar(const PointCloud& cloud,
                                         const LidarLabelConfig& cfg);

/// Tetra-directional flood fill from the seed: a pixel joins when its depth
/// is finite, within depth_jump of the neighbor it grows from, and inside
/// the polygon when one is given. Boundary pixels have at least one unfilled
/// 4-neighbor (image borders count as unfilled). Inside labels are stride
/// subsampled to max_inside_points; entries are (u, v, z).
/// Throws on an invalid seed; returns nullopt when only the seed fills.
std::optional<RangeDetection> floodFillDepth(const DepthImage& img,
                                             const DepthLabelConfig& cfg);

/// Seed for the next frame: centroid of the previous inside points
/// (3D for lidar, pixel for depth).
Eigen::Vector3d trackSeedLidar(const RangeDetection& prev);
Eigen::Vector2i trackSeedDepth(const RangeDetection& prev);

/// Batch labeling job: per-sensor base configs, optional per-collection seed
/// overrides, seeds tracked along the collection sequence otherwise.
struct LabelJob {
  std::map<std::string, LidarLabelConfig> lidar;
  std::map<std::string, DepthLabelConfig> depth;
  // collection id -> sensor id -> seed override (xyz for lidar, xy0 for depth)
  std::map<int, std::map<std::string, Eigen::Vector3d>> seed_overrides;
};

LabelJob labelJobFromJsonText(const std::string& text);

struct LabelOutcome {
  int relabeled = 0;
  int no_detection = 0;  // labeling rejected a frame that had raw data
  std::vector<std::string> warnings;
};

/// Re-derives range detections from the raw sidecars. RGB labels are left
/// untouched. Frames whose labeling fails lose their detection.
LabelOutcome runLabeling(Dataset& dataset, const LabelJob& job);

}  // namespace cellcal
