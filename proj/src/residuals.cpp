#include "cellcal/residuals.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cellcal/error.hpp"

namespace cellcal {

const char* residualKindName(ResidualKind k) {
  switch (k) {
    case ResidualKind::RgbReprojection:
      return "rgb_reprojection";
    case ResidualKind::RangeOrthogonal:
      return "range_orthogonal";
    case ResidualKind::RangeLongitudinal:
      return "range_longitudinal";
  }
  return "rgb_reprojection";
}

ResidualBlock rgbResidual(const RgbDetection& det,
                          const RigidTransform& sensor_t_pattern,
                          const CameraIntrinsics& intr,
                          const PatternSpec& pattern) {
  ResidualBlock block;
  block.kind = ResidualKind::RgbReprojection;
  block.values.resize(static_cast<Eigen::Index>(det.corners.size()));
  const double sx = pattern.square;
  Eigen::Index row = 0;
  for (const RgbCorner& corner : det.corners) {
    if (corner.id < 0 || corner.id >= pattern.cornerCount()) {
      throwValidation("rgb residual: corner id " + std::to_string(corner.id) +
                      " outside the pattern grid");
    }
    Eigen::Vector3d board_point((corner.id % pattern.nx) * sx,
                                (corner.id / pattern.nx) * sx, 0.0);
    Eigen::Vector3d in_sensor = sensor_t_pattern.apply(board_point);
    if (!(in_sensor.z() > 0.0)) {
      block.values(row++) = 0.0;  // excluded, kept for stable block sizes
      ++block.excluded;
      continue;
    }
    Eigen::Vector2d projected = project(intr, in_sensor);
    block.values(row++) =
        (Eigen::Vector2d(corner.u, corner.v) - projected).norm();
  }
  return block;
}

namespace {

Eigen::Vector3d toSensorPoint(const Eigen::Vector3d& entry,
                              const std::optional<CameraIntrinsics>& intr) {
  if (!intr) return entry;
  // Depth label: (u, v, z) pixel sample.
  return backprojectDepth(*intr, {entry.x(), entry.y()}, entry.z());
}

}  // namespace

ResidualBlock rangeOrthogonal(const std::vector<Eigen::Vector3d>& inside,
                              const RigidTransform& sensor_t_pattern,
                              const std::optional<CameraIntrinsics>& intr) {
  ResidualBlock block;
  block.kind = ResidualKind::RangeOrthogonal;
  block.values.resize(static_cast<Eigen::Index>(inside.size()));
  RigidTransform pattern_t_sensor = sensor_t_pattern.inverse();
  Eigen::Index row = 0;
  for (const Eigen::Vector3d& entry : inside) {
    block.values(row++) = pattern_t_sensor.apply(toSensorPoint(entry, intr)).z();
  }
  return block;
}

ResidualBlock rangeLongitudinal(const std::vector<Eigen::Vector3d>& boundary,
                                const RigidTransform& sensor_t_pattern,
                                const std::vector<Eigen::Vector3d>& samples,
                                const std::optional<CameraIntrinsics>& intr) {
  if (samples.empty()) {
    throw Error(ErrorCode::InvalidArgument,
                "longitudinal residual: empty perimeter sample set");
  }
  ResidualBlock block;
  block.kind = ResidualKind::RangeLongitudinal;
  block.values.resize(static_cast<Eigen::Index>(boundary.size()));
  RigidTransform pattern_t_sensor = sensor_t_pattern.inverse();
  Eigen::Index row = 0;
  for (const Eigen::Vector3d& entry : boundary) {
    Eigen::Vector3d p = pattern_t_sensor.apply(toSensorPoint(entry, intr));
    double best = std::numeric_limits<double>::infinity();
    for (const Eigen::Vector3d& q : samples) {
      double dx = q.x() - p.x();
      double dy = q.y() - p.y();
      best = std::min(best, dx * dx + dy * dy);
    }
    block.values(row++) = std::sqrt(best);
  }
  return block;
}

double AssembledResiduals::weightedCost(const ResidualWeights& w) const {
  double cost = 0.0;
  for (const BlockSlice& b : blocks) {
    double wk = w.of(b.kind);
    cost += (wk * values.segment(b.offset, b.length)).squaredNorm();
  }
  return cost;
}

std::vector<ResidualBlock> evaluatePair(
    const Dataset& dataset, const TransformTree& tree,
    const Collection& collection, const SensorSpec& sensor,
    const std::vector<Eigen::Vector3d>& boundary_samples) {
  std::vector<ResidualBlock> out;
  auto it = collection.detections.find(sensor.id);
  if (it == collection.detections.end()) return out;

  RigidTransform t_sp = sensorToPattern(tree, sensor.data_frame, collection.id);
  if (const auto* rgb = std::get_if<RgbDetection>(&it->second)) {
    ResidualBlock block =
        rgbResidual(*rgb, t_sp, *sensor.intrinsics, dataset.pattern);
    block.collection = collection.id;
    block.sensor = sensor.id;
    out.push_back(std::move(block));
    return out;
  }

  const auto& range = std::get<RangeDetection>(it->second);
  std::optional<CameraIntrinsics> intr;
  if (sensor.modality == Modality::Depth) intr = *sensor.intrinsics;

  ResidualBlock ortho = rangeOrthogonal(range.inside, t_sp, intr);
  ortho.collection = collection.id;
  ortho.sensor = sensor.id;
  out.push_back(std::move(ortho));

  ResidualBlock longi =
      rangeLongitudinal(range.boundary, t_sp, boundary_samples, intr);
  longi.collection = collection.id;
  longi.sensor = sensor.id;
  out.push_back(std::move(longi));
  return out;
}

AssembledResiduals assemble(const Dataset& dataset, const TransformTree& tree) {
  std::vector<Eigen::Vector3d> samples = dataset.pattern.boundarySamples();

  // Deterministic order: collection id, then sensor id, then kind.
  std::vector<const Collection*> collections;
  for (const Collection& c : dataset.collections) collections.push_back(&c);
  std::sort(collections.begin(), collections.end(),
            [](const Collection* a, const Collection* b) {
              return a->id < b->id;
            });
  std::vector<const SensorSpec*> sensors;
  for (const SensorSpec& s : dataset.sensors) sensors.push_back(&s);
  std::sort(sensors.begin(), sensors.end(),
            [](const SensorSpec* a, const SensorSpec* b) {
              return a->id < b->id;
            });

  AssembledResiduals out;
  std::vector<ResidualBlock> blocks;
  int total = 0;
  for (const Collection* c : collections) {
    for (const SensorSpec* s : sensors) {
      for (ResidualBlock& b : evaluatePair(dataset, tree, *c, *s, samples)) {
        total += static_cast<int>(b.values.size());
        blocks.push_back(std::move(b));
      }
    }
  }

  out.values.resize(total);
  int offset = 0;
  for (ResidualBlock& b : blocks) {
    BlockSlice slice;
    slice.offset = offset;
    slice.length = static_cast<int>(b.values.size());
    slice.collection = b.collection;
    slice.sensor = b.sensor;
    slice.kind = b.kind;
    out.values.segment(offset, slice.length) = b.values;
    offset += slice.length;
    out.excluded += b.excluded;
    out.blocks.push_back(std::move(slice));
  }
  return out;
}

}  // namespace cellcal
