#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "cellcal/geometry.hpp"
#include "cellcal/sensor_models.hpp"

namespace cellcal {

enum class Modality { Rgb, Depth, Lidar3d };

const char* modalityName(Modality m);
Modality modalityFromName(const std::string& name, const std::string& path);

/// One sensor of the rig. `calibrated_edge` selects the tree edge that the
/// optimizer is allowed to move; it must lie on the root -> data_frame chain.
struct SensorSpec {
  std::string id;
  Modality modality = Modality::Rgb;
  std::string data_frame;
  std::pair<std::string, std::string> calibrated_edge;  // (parent, child)
  std::optional<CameraIntrinsics> intrinsics;           // rgb / depth only
  bool anchored = false;

  bool isRange() const { return modality != Modality::Rgb; }
};

struct RgbCorner {
  int id = 0;  // pattern corner id, row-major
  double u = 0.0;
  double v = 0.0;
};

struct RgbDetection {
  std::vector<RgbCorner> corners;
  bool partial = false;
};

/// Range-sensor label. For lidar3d the entries are (x, y, z) in the sensor
/// frame; for depth they are (u, v, z) pixel samples converted to 3D by the
/// residuals via the depth back-projection.
struct RangeDetection {
  std::vector<Eigen::Vector3d> inside;
  std::vector<Eigen::Vector3d> boundary;
};

using Detection = std::variant<RgbDetection, RangeDetection>;

/// One synchronized capture. `complete` is derived at load: true iff every
/// sensor in the dataset has a detection here.
struct Collection {
  int id = 0;
  std::map<std::string, Detection> detections;
  std::map<std::string, std::string> raw;  // sensor id -> sidecar path
  /// Projected physical-limit polylines for image sensors (ordered pixel
  /// points); stands in for hand-annotated board outlines during evaluation.
  std::map<std::string, std::vector<Eigen::Vector2d>> annotations;
  bool complete = false;

  const RgbDetection* rgb(const std::string& sensor_id) const;
  const RangeDetection* range(const std::string& sensor_id) const;
  bool hasDetection(const std::string& sensor_id) const;
};

struct DatasetMeta {
  std::string tool_version;
  std::optional<std::uint64_t> seed;
  std::map<std::string, std::string> inputs;  // name -> fingerprint
  std::string options_json;                   // opaque echo of the options
};

struct Dataset {
  int version = 0;
  DatasetMeta meta;
  PatternSpec pattern;
  TransformTree tree;
  std::vector<SensorSpec> sensors;
  std::vector<Collection> collections;
  std::filesystem::path base_dir;  // sidecar paths resolve against this

  const SensorSpec* findSensor(const std::string& id) const;
  const SensorSpec& sensor(const std::string& id) const;
  const Collection* findCollection(int id) const;
  /// Re-derives per-collection completeness.
  void refreshDerived();
  /// Full invariant check (tree shape, calibrated edges, detections).
  void validate() const;
};

struct DatasetStats {
  int collections = 0;
  int complete = 0;
  int rgb_partials = 0;
  std::map<std::string, int> detections_per_sensor;
};

DatasetStats datasetStats(const Dataset& d);

struct LoadReport {
  int dropped_empty_collections = 0;
  std::vector<std::string> warnings;
};

/// Loads and validates a dataset document. Collections with zero detections
/// are dropped and counted in the report.
Dataset loadDataset(const std::filesystem::path& path,
                    LoadReport* report = nullptr);

/// Serializes the dataset document (sidecars are not rewritten).
void saveDataset(const Dataset& d, const std::filesystem::path& path);

// --- binary sidecars ---

/// Flat little-endian float32 records (x, y, z, ring).
struct PointCloud {
  std::vector<Eigen::Vector3d> points;
  std::vector<int> rings;

  std::size_t size() const { return points.size(); }
};

PointCloud readPointCloud(const std::filesystem::path& path);
void writePointCloud(const PointCloud& cloud,
                     const std::filesystem::path& path);

/// Row-major float32 raster, NaN marking invalid pixels, preceded by a
/// 16-byte header (u32 width, u32 height, 8 reserved bytes), little-endian.
struct DepthImage {
  int width = 0;
  int height = 0;
  std::vector<float> data;  // row-major, size width*height

  float at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
  float& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
  bool valid(int x, int y) const;
};

DepthImage readDepthImage(const std::filesystem::path& path);
void writeDepthImage(const DepthImage& img, const std::filesystem::path& path);

}  // namespace cellcal
