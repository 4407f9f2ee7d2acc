#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>
#include <vector>

#include "cellcal/dataset.hpp"
#include "cellcal/geometry.hpp"
#include "cellcal/sensor_models.hpp"

namespace cellcal {

enum class ResidualKind { RgbReprojection, RangeOrthogonal, RangeLongitudinal };

const char* residualKindName(ResidualKind k);

/// One group of residual scalars for a (collection, sensor, kind) triple.
/// Values are unsquared and in native units (pixels for rgb, meters for
/// range); the least-squares cost squares them.
struct ResidualBlock {
  int collection = 0;
  std::string sensor;
  ResidualKind kind = ResidualKind::RgbReprojection;
  Eigen::VectorXd values;
  /// Points dropped because they fell behind the camera; the entry stays in
  /// `values` as an exact zero so block sizes are stable across iterations.
  int excluded = 0;
};

/// Per-corner reprojection distances: || label - P(T_sp * corner) ||.
/// Corners absent from the detection contribute nothing, which is what makes
/// partial detections first-class.
ResidualBlock rgbResidual(const RgbDetection& det,
                          const RigidTransform& sensor_t_pattern,
                          const CameraIntrinsics& intr,
                          const PatternSpec& pattern);

/// Signed point-to-pattern-plane distance per inside point: the z component
/// of the point mapped into the pattern frame. With intrinsics present the
/// entries are depth pixel samples (u, v, z) and are back-projected first.
ResidualBlock rangeOrthogonal(const std::vector<Eigen::Vector3d>& inside,
                              const RigidTransform& sensor_t_pattern,
                              const std::optional<CameraIntrinsics>& intr);

/// In-plane distance from each boundary point, mapped into the pattern
/// frame, to the nearest perimeter sample (XY components only).
ResidualBlock rangeLongitudinal(const std::vector<Eigen::Vector3d>& boundary,
                                const RigidTransform& sensor_t_pattern,
                                const std::vector<Eigen::Vector3d>& samples,
                                const std::optional<CameraIntrinsics>& intr);

/// Relative weighting between pixel-valued and meter-valued residuals in the
/// joint cost. Defaults put 1 px on par with 1 cm.
struct ResidualWeights {
  double rgb = 1.0;     // px^-1
  double range = 100.0; // m^-1

  double of(ResidualKind k) const {
    return k == ResidualKind::RgbReprojection ? rgb : range;
  }
};

struct BlockSlice {
  int offset = 0;
  int length = 0;
  int collection = 0;
  std::string sensor;
  ResidualKind kind = ResidualKind::RgbReprojection;
};

struct AssembledResiduals {
  Eigen::VectorXd values;          // concatenated raw residuals
  std::vector<BlockSlice> blocks;  // deterministic (collection, sensor, kind)
  int excluded = 0;

  double weightedCost(const ResidualWeights& w) const;
};

/// Concatenates every applicable block over collections x sensors. The tree
/// must already carry a pattern edge for each collection with detections;
/// rgb uses reprojection, range modalities orthogonal plus longitudinal.
AssembledResiduals assemble(const Dataset& dataset, const TransformTree& tree);

/// Blocks for a single (collection, sensor) pair, in kind order. Exposed for
/// the solver's sparse Jacobian evaluation.
std::vector<ResidualBlock> evaluatePair(const Dataset& dataset,
                                        const TransformTree& tree,
                                        const Collection& collection,
                                        const SensorSpec& sensor,
                                        const std::vector<Eigen::Vector3d>&
                                            boundary_samples);

}  // namespace cellcal
