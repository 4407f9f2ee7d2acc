#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cellcal/dataset.hpp"
#include "cellcal/geometry.hpp"
#include "cellcal/residuals.hpp"

namespace cellcal {

enum class AnchorMode { FirstSensor, Named, None };

struct AnchorChoice {
  AnchorMode mode = AnchorMode::FirstSensor;
  std::string name;

  static AnchorChoice none() { return {AnchorMode::None, ""}; }
  static AnchorChoice named(std::string n) {
    return {AnchorMode::Named, std::move(n)};
  }
};

struct CalibrateOptions {
  AnchorChoice anchor;  // defaults to the first declared sensor
  int max_iters = 200;
  double cost_tol = 1e-10;   // relative accepted-cost change
  double step_tol = 1e-10;   // infinity norm of the proposed step
  double init_damping = 1e-3;
  ResidualWeights weights;
  /// Evaluation mode: sensor edges fixed, only pattern poses move.
  bool freeze_sensors = false;
};

enum class SolveStatus { Converged, MaxIterations, Degenerate };

const char* solveStatusName(SolveStatus s);

struct RmsEntry {
  double rms = 0.0;
  int count = 0;
};

struct CalibrationResult {
  TransformTree tree;  // optimized edges and per-collection pattern edges
  std::map<int, RigidTransform> pattern_poses;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iterations = 0;  // accepted steps
  SolveStatus status = SolveStatus::Converged;
  std::vector<double> cost_history;  // accepted costs, initial first
  /// Raw-unit residual RMS per sensor and residual kind.
  std::map<std::string, std::map<std::string, RmsEntry>> rms;
  int behind_camera_warnings = 0;
  DatasetMeta meta;
};

/// Flat parameter vector layout: one 6-DOF slice (rotation vector then
/// translation) per non-anchored optimized edge, then one per collection
/// pattern pose, in collection-id order.
struct ParamSlice {
  enum class Kind { Edge, Pattern };
  Kind kind = Kind::Edge;
  std::string edge_child;  // Edge slices
  int collection = -1;     // Pattern slices
  int offset = 0;
};

struct ParamLayout {
  std::vector<ParamSlice> slices;

  int size() const { return static_cast<int>(slices.size()) * 6; }
  const ParamSlice* edgeSlice(const std::string& child) const;
  const ParamSlice* patternSlice(int collection) const;
};

/// Resolves the effective anchored sensor set (spec flags plus the options
/// anchor) and builds the layout. The tree must already hold a pattern edge
/// for every collection.
ParamLayout buildLayout(const Dataset& dataset, const TransformTree& tree,
                        const CalibrateOptions& options);

Eigen::VectorXd packParams(const TransformTree& tree,
                           const ParamLayout& layout);
void unpackParams(const Eigen::VectorXd& params, const ParamLayout& layout,
                  TransformTree& tree);

/// Per-collection pattern pose estimates. One detecting sensor is chosen by
/// modality priority (rgb, then depth, then lidar): rgb poses come from
/// planar corner correspondences refined against the reprojection error,
/// range poses from a plane fit with the in-plane placement left canonical.
std::map<int, RigidTransform> initializePatternPoses(
    const Dataset& dataset, const TransformTree& tree,
    std::vector<std::string>* warnings = nullptr);

/// Damped least squares over the packed parameters (Levenberg-Marquardt:
/// monotone accepted costs, multiplicative damping schedule). Missing
/// pattern edges are initialized first.
CalibrationResult calibrate(const Dataset& dataset,
                            const TransformTree& initial_tree,
                            const CalibrateOptions& options = {});

/// Dense forward-difference Jacobian of the raw residual vector (test
/// surface; the solver itself works block-wise). Entries outside a block's
/// dependency slices are exactly zero.
Eigen::MatrixXd numericJacobian(const Dataset& dataset,
                                const TransformTree& tree,
                                const ParamLayout& layout,
                                double step = 1e-6);

void saveResult(const CalibrationResult& result,
                const std::filesystem::path& path);
CalibrationResult loadResult(const std::filesystem::path& path);

std::string calibrateOptionsToJsonText(const CalibrateOptions& options);
CalibrateOptions calibrateOptionsFromJsonText(const std::string& text);

}  // namespace cellcal
