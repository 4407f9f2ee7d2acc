#include "cellcal/calibrator.hpp"

#include <Eigen/Dense>
#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <set>

#include "cellcal/error.hpp"
#include "cellcal/version.hpp"
#include "internal/json_util.hpp"
#include "internal/serialize.hpp"

namespace cellcal {

using internal::json;

const char* solveStatusName(SolveStatus s) {
  switch (s) {
    case SolveStatus::Converged:
      return "converged";
    case SolveStatus::MaxIterations:
      return "max_iterations";
    case SolveStatus::Degenerate:
      return "degenerate";
  }
  return "converged";
}

const ParamSlice* ParamLayout::edgeSlice(const std::string& child) const {
  for (const ParamSlice& s : slices) {
    if (s.kind == ParamSlice::Kind::Edge && s.edge_child == child) return &s;
  }
  return nullptr;
}

const ParamSlice* ParamLayout::patternSlice(int collection) const {
  for (const ParamSlice& s : slices) {
    if (s.kind == ParamSlice::Kind::Pattern && s.collection == collection)
      return &s;
  }
  return nullptr;
}

namespace {

std::set<std::string> effectiveAnchoredEdges(const Dataset& dataset,
                                             const CalibrateOptions& options) {
  std::set<std::string> anchored;
  for (const SensorSpec& s : dataset.sensors) {
    if (s.anchored) anchored.insert(s.calibrated_edge.second);
  }
  switch (options.anchor.mode) {
    case AnchorMode::None:
      break;
    case AnchorMode::FirstSensor:
      anchored.insert(dataset.sensors.front().calibrated_edge.second);
      break;
    case AnchorMode::Named: {
      const SensorSpec* s = dataset.findSensor(options.anchor.name);
      if (!s) {
        throwNotFound("calibrate: anchor sensor '" + options.anchor.name +
                      "' not in dataset");
      }
      anchored.insert(s->calibrated_edge.second);
      break;
    }
  }
  return anchored;
}

}  // namespace

ParamLayout buildLayout(const Dataset& dataset, const TransformTree& tree,
                        const CalibrateOptions& options) {
  ParamLayout layout;
  std::set<std::string> anchored = effectiveAnchoredEdges(dataset, options);
  if (!options.freeze_sensors) {
    std::set<std::string> seen;
    for (const SensorSpec& s : dataset.sensors) {
      const std::string& child = s.calibrated_edge.second;
      if (anchored.count(child) || !seen.insert(child).second) continue;
      ParamSlice slice;
      slice.kind = ParamSlice::Kind::Edge;
      slice.edge_child = child;
      slice.offset = layout.size();
      layout.slices.push_back(std::move(slice));
    }
  }
  std::vector<int> cids;
  for (const Collection& c : dataset.collections) cids.push_back(c.id);
  std::sort(cids.begin(), cids.end());
  for (int cid : cids) {
    if (!tree.hasPatternEdge(cid)) {
      throwValidation("layout: collection " + std::to_string(cid) +
                      " has no pattern edge");
    }
    ParamSlice slice;
    slice.kind = ParamSlice::Kind::Pattern;
    slice.collection = cid;
    slice.offset = layout.size();
    layout.slices.push_back(std::move(slice));
  }
  return layout;
}

Eigen::VectorXd packParams(const TransformTree& tree,
                           const ParamLayout& layout) {
  Eigen::VectorXd p(layout.size());
  for (const ParamSlice& slice : layout.slices) {
    const std::string frame = slice.kind == ParamSlice::Kind::Edge
                                  ? slice.edge_child
                                  : TransformTree::patternFrame(slice.collection);
    PoseParam pose = PoseParam::fromTransform(tree.parentEdge(frame).transform);
    p.segment<3>(slice.offset) = pose.rotation_vector;
    p.segment<3>(slice.offset + 3) = pose.translation;
  }
  return p;
}

void unpackParams(const Eigen::VectorXd& params, const ParamLayout& layout,
                  TransformTree& tree) {
  for (const ParamSlice& slice : layout.slices) {
    PoseParam pose;
    pose.rotation_vector = params.segment<3>(slice.offset);
    pose.translation = params.segment<3>(slice.offset + 3);
    pose.canonicalize();
    const std::string frame = slice.kind == ParamSlice::Kind::Edge
                                  ? slice.edge_child
                                  : TransformTree::patternFrame(slice.collection);
    tree.setEdgeTransform(frame, pose.toTransform());
  }
}

// --- pattern pose initialization ---

namespace {

// Homography from pattern-plane (X, Y) to undistorted normalized image
// coordinates, DLT with isotropic normalization.
Eigen::Matrix3d homographyDlt(const std::vector<Eigen::Vector2d>& plane,
                              const std::vector<Eigen::Vector2d>& image) {
  auto normalizer = [](const std::vector<Eigen::Vector2d>& pts) {
    Eigen::Vector2d mean = Eigen::Vector2d::Zero();
    for (const auto& p : pts) mean += p;
    mean /= static_cast<double>(pts.size());
    double scale = 0.0;
    for (const auto& p : pts) scale += (p - mean).norm();
    scale = std::sqrt(2.0) * pts.size() / std::max(scale, 1e-12);
    Eigen::Matrix3d t = Eigen::Matrix3d::Identity();
    t(0, 0) = t(1, 1) = scale;
    t(0, 2) = -scale * mean.x();
    t(1, 2) = -scale * mean.y();
    return t;
  };
  Eigen::Matrix3d tp = normalizer(plane);
  Eigen::Matrix3d ti = normalizer(image);

  const int n = static_cast<int>(plane.size());
  Eigen::MatrixXd a(2 * n, 9);
  for (int i = 0; i < n; ++i) {
    Eigen::Vector3d q = tp * Eigen::Vector3d(plane[i].x(), plane[i].y(), 1.0);
    Eigen::Vector3d x = ti * Eigen::Vector3d(image[i].x(), image[i].y(), 1.0);
    a.row(2 * i) << q.x(), q.y(), 1, 0, 0, 0, -x.x() * q.x(), -x.x() * q.y(),
        -x.x();
    a.row(2 * i + 1) << 0, 0, 0, q.x(), q.y(), 1, -x.y() * q.x(),
        -x.y() * q.y(), -x.y();
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  Eigen::Matrix<double, 9, 1> h = svd.matrixV().col(8);
  Eigen::Matrix3d hn;
  hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  return ti.inverse() * hn * tp;
}

RigidTransform poseFromHomography(const Eigen::Matrix3d& h) {
  double lambda = 2.0 / (h.col(0).norm() + h.col(1).norm());
  if (h(2, 2) * lambda < 0) lambda = -lambda;  // board in front: t_z > 0
  Eigen::Vector3d r1 = lambda * h.col(0);
  Eigen::Vector3d r2 = lambda * h.col(1);
  Eigen::Matrix3d r;
  r.col(0) = r1;
  r.col(1) = r2;
  r.col(2) = r1.cross(r2);
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(
      r, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d u = svd.matrixU(), v = svd.matrixV();
  Eigen::Matrix3d rot = u * v.transpose();
  if (rot.determinant() < 0) {
    u.col(2) *= -1;
    rot = u * v.transpose();
  }
  RigidTransform pose;
  pose.rotation = rot;
  pose.translation = lambda * h.col(2);
  return pose;
}

// Gauss-Newton refinement of a camera->pattern pose against per-corner
// reprojection, numeric derivatives, small fixed iteration budget.
RigidTransform refineCameraPose(const RgbDetection& det,
                                const CameraIntrinsics& intr,
                                const PatternSpec& pattern,
                                RigidTransform pose) {
  auto residuals = [&](const RigidTransform& t) {
    Eigen::VectorXd r(2 * det.corners.size());
    for (std::size_t i = 0; i < det.corners.size(); ++i) {
      const RgbCorner& c = det.corners[i];
      Eigen::Vector3d board((c.id % pattern.nx) * pattern.square,
                            (c.id / pattern.nx) * pattern.square, 0.0);
      Eigen::Vector3d p = t.apply(board);
      if (p.z() <= 1e-6) {
        r.segment<2>(2 * i).setZero();
        continue;
      }
      Eigen::Vector2d px = project(intr, p);
      r(2 * i) = px.x() - c.u;
      r(2 * i + 1) = px.y() - c.v;
    }
    return r;
  };
  auto fromVec = [](const Eigen::Matrix<double, 6, 1>& v) {
    PoseParam p;
    p.rotation_vector = v.head<3>();
    p.translation = v.tail<3>();
    p.canonicalize();
    return p.toTransform();
  };

  PoseParam pp = PoseParam::fromTransform(pose);
  Eigen::Matrix<double, 6, 1> x;
  x << pp.rotation_vector, pp.translation;
  double lambda = 1e-6;
  Eigen::VectorXd r = residuals(fromVec(x));
  double cost = r.squaredNorm();
  for (int iter = 0; iter < 30; ++iter) {
    Eigen::MatrixXd j(r.size(), 6);
    const double h = 1e-7;
    for (int k = 0; k < 6; ++k) {
      Eigen::Matrix<double, 6, 1> xh = x;
      xh(k) += h;
      j.col(k) = (residuals(fromVec(xh)) - r) / h;
    }
    Eigen::Matrix<double, 6, 6> hmat = j.transpose() * j;
    hmat.diagonal() += lambda * hmat.diagonal().cwiseMax(1e-12);
    Eigen::Matrix<double, 6, 1> step =
        hmat.ldlt().solve(-j.transpose() * r);
    Eigen::Matrix<double, 6, 1> xn = x + step;
    Eigen::VectorXd rn = residuals(fromVec(xn));
    double cn = rn.squaredNorm();
    if (cn < cost) {
      x = xn;
      r = rn;
      lambda = std::max(lambda / 10, 1e-12);
      if (cost - cn < 1e-16 * std::max(cost, 1.0)) {
        cost = cn;
        break;
      }
      cost = cn;
    } else {
      lambda *= 10;
      if (lambda > 1e8) break;
    }
  }
  return fromVec(x);
}

// Centroid + smallest-covariance-axis plane fit; canonical in-plane axes.
RigidTransform poseFromPlaneFit(const std::vector<Eigen::Vector3d>& points,
                                const PatternSpec& pattern) {
  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  for (const auto& p : points) centroid += p;
  centroid /= static_cast<double>(points.size());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const auto& p : points) {
    Eigen::Vector3d d = p - centroid;
    cov += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
  Eigen::Vector3d n = eig.eigenvectors().col(0);
  // Face the sensor origin when possible; the in-plane flip family is
  // resolved by the joint solve.
  if (n.dot(centroid) > 0) n = -n;

  // In-plane x from the label spread's major axis: boards are wider than
  // tall, so this lines the pattern up to the 180-degree family instead of
  // leaving a quarter-turn for the solver to escape.
  Eigen::Vector3d x = eig.eigenvectors().col(2);
  x = (x - n * x.dot(n)).normalized();
  Eigen::Vector3d y = n.cross(x);
  RigidTransform pose;
  pose.rotation.col(0) = x;
  pose.rotation.col(1) = y;
  pose.rotation.col(2) = n;
  Eigen::Vector3d offset((pattern.minX() + pattern.maxX()) / 2,
                         (pattern.minY() + pattern.maxY()) / 2, 0.0);
  pose.translation = centroid - pose.rotation * offset;
  return pose;
}

}  // namespace

std::map<int, RigidTransform> initializePatternPoses(
    const Dataset& dataset, const TransformTree& tree,
    std::vector<std::string>* warnings) {
  std::map<int, RigidTransform> poses;
  for (const Collection& col : dataset.collections) {
    // Pick the initializing sensor: rgb, then depth, then lidar.
    const SensorSpec* best = nullptr;
    auto rank = [](Modality m) {
      return m == Modality::Rgb ? 0 : (m == Modality::Depth ? 1 : 2);
    };
    for (const SensorSpec& s : dataset.sensors) {
      if (!col.hasDetection(s.id)) continue;
      if (!best || rank(s.modality) < rank(best->modality)) best = &s;
    }
    if (!best) {
      if (warnings) {
        warnings->push_back("collection " + std::to_string(col.id) +
                            ": no detection, excluded");
      }
      continue;
    }

    RigidTransform sensor_t_pattern;
    if (best->modality == Modality::Rgb) {
      const RgbDetection* det = col.rgb(best->id);
      std::vector<Eigen::Vector2d> plane, image;
      for (const RgbCorner& c : det->corners) {
        plane.emplace_back((c.id % dataset.pattern.nx) * dataset.pattern.square,
                           (c.id / dataset.pattern.nx) * dataset.pattern.square);
        image.push_back(
            normalizedFromPixel(*best->intrinsics, {c.u, c.v}));
      }
      Eigen::Matrix3d h = homographyDlt(plane, image);
      sensor_t_pattern = refineCameraPose(*det, *best->intrinsics,
                                          dataset.pattern,
                                          poseFromHomography(h));
    } else {
      const RangeDetection* det = col.range(best->id);
      std::vector<Eigen::Vector3d> points;
      points.reserve(det->inside.size());
      if (best->modality == Modality::Depth) {
        for (const Eigen::Vector3d& e : det->inside) {
          points.push_back(
              backprojectDepth(*best->intrinsics, {e.x(), e.y()}, e.z()));
        }
      } else {
        points = det->inside;
      }
      sensor_t_pattern = poseFromPlaneFit(points, dataset.pattern);
    }
    poses[col.id] =
        compose(tree.chainTo(best->data_frame), sensor_t_pattern);
  }
  return poses;
}

// --- solver ---

namespace {

struct PairTask {
  const Collection* collection = nullptr;
  const SensorSpec* sensor = nullptr;
  int row_offset = 0;
  int rows = 0;
  const ParamSlice* edge = nullptr;     // may be null (anchored / frozen)
  const ParamSlice* pattern = nullptr;  // always present
  Eigen::VectorXd row_weights;
};

Eigen::VectorXd evalTask(const Dataset& dataset, const TransformTree& tree,
                         const PairTask& task,
                         const std::vector<Eigen::Vector3d>& samples,
                         int* excluded = nullptr) {
  Eigen::VectorXd out(task.rows);
  int at = 0;
  for (ResidualBlock& b : evaluatePair(dataset, tree, *task.collection,
                                       *task.sensor, samples)) {
    out.segment(at, b.values.size()) = b.values;
    at += static_cast<int>(b.values.size());
    if (excluded) *excluded += b.excluded;
  }
  return out;
}

}  // namespace

CalibrationResult calibrate(const Dataset& dataset,
                            const TransformTree& initial_tree,
                            const CalibrateOptions& options) {
  if (dataset.collections.empty()) {
    throwValidation("calibrate: dataset has no collections");
  }

  TransformTree work = initial_tree;
  bool needs_init = false;
  for (const Collection& c : dataset.collections) {
    if (!work.hasPatternEdge(c.id)) needs_init = true;
  }
  if (needs_init) {
    for (const auto& [cid, pose] : initializePatternPoses(dataset, work)) {
      work.setPatternPose(cid, pose);
    }
  }

  ParamLayout layout = buildLayout(dataset, work, options);
  if (layout.slices.empty()) {
    throwValidation("calibrate: nothing to optimize");
  }
  const std::vector<Eigen::Vector3d> samples =
      dataset.pattern.boundarySamples();

  // Pair tasks in assemble() order so residual rows line up.
  std::vector<const Collection*> collections;
  for (const Collection& c : dataset.collections) collections.push_back(&c);
  std::sort(collections.begin(), collections.end(),
            [](auto* a, auto* b) { return a->id < b->id; });
  std::vector<const SensorSpec*> sensors;
  for (const SensorSpec& s : dataset.sensors) sensors.push_back(&s);
  std::sort(sensors.begin(), sensors.end(),
            [](auto* a, auto* b) { return a->id < b->id; });

  std::vector<PairTask> tasks;
  int total_rows = 0;
  for (const Collection* c : collections) {
    for (const SensorSpec* s : sensors) {
      auto blocks = evaluatePair(dataset, work, *c, *s, samples);
      if (blocks.empty()) continue;
      PairTask task;
      task.collection = c;
      task.sensor = s;
      task.row_offset = total_rows;
      for (const ResidualBlock& b : blocks) {
        task.rows += static_cast<int>(b.values.size());
      }
      task.row_weights.resize(task.rows);
      int at = 0;
      for (const ResidualBlock& b : blocks) {
        task.row_weights.segment(at, b.values.size())
            .setConstant(options.weights.of(b.kind));
        at += static_cast<int>(b.values.size());
      }
      task.edge = layout.edgeSlice(s->calibrated_edge.second);
      task.pattern = layout.patternSlice(c->id);
      total_rows += task.rows;
      tasks.push_back(std::move(task));
    }
  }

  const int n = layout.size();
  Eigen::VectorXd p = packParams(work, layout);
  unpackParams(p, layout, work);  // exact packed representation

  CalibrationResult result;
  int excluded = 0;
  auto evalAll = [&](const TransformTree& tree, int* excl) {
    Eigen::VectorXd r(total_rows);
    for (const PairTask& t : tasks) {
      r.segment(t.row_offset, t.rows) = evalTask(dataset, tree, t, samples,
                                                 excl);
    }
    return r;
  };
  auto weightedCost = [&](const Eigen::VectorXd& r) {
    double cost = 0.0;
    for (const PairTask& t : tasks) {
      cost += (t.row_weights.cwiseProduct(r.segment(t.row_offset, t.rows)))
                  .squaredNorm();
    }
    return cost;
  };

  Eigen::VectorXd r = evalAll(work, &excluded);
  double cost = weightedCost(r);
  result.initial_cost = cost;
  result.cost_history.push_back(cost);

  const double h = 1e-6;
  double lambda = options.init_damping;
  SolveStatus status = SolveStatus::MaxIterations;
  int accepted = 0;

  TransformTree scratch = work;
  for (int iter = 0; iter < options.max_iters; ++iter) {
    // Block-sparse normal equations from forward differences.
    Eigen::MatrixXd hmat = Eigen::MatrixXd::Zero(n, n);
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(n);
    std::vector<Eigen::MatrixXd> jac_edge(tasks.size());
    std::vector<Eigen::MatrixXd> jac_pattern(tasks.size());

    for (const ParamSlice& slice : layout.slices) {
      for (int k = 0; k < 6; ++k) {
        Eigen::VectorXd pk = p;
        pk(slice.offset + k) += h;
        PoseParam pose;
        pose.rotation_vector = pk.segment<3>(slice.offset);
        pose.translation = pk.segment<3>(slice.offset + 3);
        const std::string frame =
            slice.kind == ParamSlice::Kind::Edge
                ? slice.edge_child
                : TransformTree::patternFrame(slice.collection);
        scratch.setEdgeTransform(frame, pose.toTransform());
        for (std::size_t ti = 0; ti < tasks.size(); ++ti) {
          const PairTask& t = tasks[ti];
          bool depends = (t.edge == &slice) || (t.pattern == &slice);
          if (!depends) continue;
          Eigen::MatrixXd& jac = t.edge == &slice ? jac_edge[ti]
                                                  : jac_pattern[ti];
          if (jac.size() == 0) jac.resize(t.rows, 6);
          jac.col(k) =
              (evalTask(dataset, scratch, t, samples) -
               r.segment(t.row_offset, t.rows)) /
              h;
        }
        scratch.setEdgeTransform(frame,
                                 work.parentEdge(frame).transform);
      }
    }

    for (std::size_t ti = 0; ti < tasks.size(); ++ti) {
      const PairTask& t = tasks[ti];
      Eigen::VectorXd wr = t.row_weights.cwiseProduct(
          r.segment(t.row_offset, t.rows));
      auto accumulate = [&](const Eigen::MatrixXd& jac,
                            const ParamSlice* slice) {
        if (!slice || jac.size() == 0) return;
        Eigen::MatrixXd wj = t.row_weights.asDiagonal() * jac;
        hmat.block<6, 6>(slice->offset, slice->offset) +=
            wj.transpose() * wj;
        grad.segment<6>(slice->offset) += wj.transpose() * wr;
      };
      accumulate(jac_edge[ti], t.edge);
      accumulate(jac_pattern[ti], t.pattern);
      if (t.edge && jac_edge[ti].size() != 0 && jac_pattern[ti].size() != 0) {
        Eigen::MatrixXd we = t.row_weights.asDiagonal() * jac_edge[ti];
        Eigen::MatrixXd wp = t.row_weights.asDiagonal() * jac_pattern[ti];
        Eigen::Matrix<double, 6, 6> cross = we.transpose() * wp;
        hmat.block<6, 6>(t.edge->offset, t.pattern->offset) += cross;
        hmat.block<6, 6>(t.pattern->offset, t.edge->offset) +=
            cross.transpose();
      }
    }

    if (grad.cwiseAbs().maxCoeff() < 1e-16) {
      status = SolveStatus::Converged;
      break;
    }

    // Damping loop: retry with stiffer steps until one is accepted.
    bool stepped = false;
    bool converged = false;
    while (lambda <= 1e12) {
      Eigen::MatrixXd damped = hmat;
      damped.diagonal() += lambda * hmat.diagonal().cwiseMax(1e-12);
      Eigen::VectorXd delta = damped.ldlt().solve(-grad);
      if (!delta.allFinite()) {
        lambda *= 10;
        continue;
      }
      if (delta.cwiseAbs().maxCoeff() < options.step_tol) {
        status = SolveStatus::Converged;
        converged = true;
        break;
      }
      Eigen::VectorXd pn = p + delta;
      unpackParams(pn, layout, scratch);
      Eigen::VectorXd rn = evalAll(scratch, nullptr);
      double cn = weightedCost(rn);
      if (std::isfinite(cn) && cn < cost) {
        // Re-wrap rotation vectors in parameter space. unpackParams
        // canonicalizes too, so the transforms (and rn) are unchanged.
        for (const ParamSlice& slice : layout.slices) {
          PoseParam pose;
          pose.rotation_vector = pn.segment<3>(slice.offset);
          pose.translation = pn.segment<3>(slice.offset + 3);
          pose.canonicalize();
          pn.segment<3>(slice.offset) = pose.rotation_vector;
        }
        p = pn;
        unpackParams(p, layout, work);
        scratch = work;
        double drop = cost - cn;
        cost = cn;
        r = rn;
        result.cost_history.push_back(cost);
        ++accepted;
        lambda = std::max(lambda / 10, 1e-12);
        stepped = true;
        if (drop < options.cost_tol * std::max(cost, 1e-300)) {
          status = SolveStatus::Converged;
          converged = true;
        }
        break;
      }
      lambda *= 10;
    }
    if (converged) break;
    if (!stepped) {
      // Max damping without an acceptable step: rank-deficient beyond
      // rescue or cost already at the numerical floor.
      status = SolveStatus::Degenerate;
      break;
    }
  }

  result.iterations = accepted;
  result.status = status;
  result.final_cost = cost;
  result.tree = work;
  for (const Collection& c : dataset.collections) {
    result.pattern_poses[c.id] = work.patternPose(c.id);
  }

  // Final raw-unit RMS per sensor and kind, plus frustum warnings.
  std::map<std::string, std::map<std::string, std::pair<double, int>>> acc;
  int behind = 0;
  for (const Collection* c : collections) {
    for (const SensorSpec* s : sensors) {
      for (ResidualBlock& b : evaluatePair(dataset, work, *c, *s, samples)) {
        auto& entry = acc[s->id][residualKindName(b.kind)];
        entry.first += b.values.squaredNorm();
        entry.second += static_cast<int>(b.values.size());
        behind += b.excluded;
      }
    }
  }
  for (const auto& [sid, kinds] : acc) {
    for (const auto& [kind, sum] : kinds) {
      RmsEntry e;
      e.count = sum.second;
      e.rms = sum.second ? std::sqrt(sum.first / sum.second) : 0.0;
      result.rms[sid][kind] = e;
    }
  }
  result.behind_camera_warnings = behind;
  result.meta.tool_version = kVersion;
  result.meta.options_json = calibrateOptionsToJsonText(options);
  return result;
}

Eigen::MatrixXd numericJacobian(const Dataset& dataset,
                                const TransformTree& tree,
                                const ParamLayout& layout, double step) {
  TransformTree work = tree;
  Eigen::VectorXd p = packParams(work, layout);
  unpackParams(p, layout, work);
  AssembledResiduals base = assemble(dataset, work);
  Eigen::MatrixXd jac =
      Eigen::MatrixXd::Zero(base.values.size(), layout.size());
  TransformTree scratch = work;
  for (int j = 0; j < layout.size(); ++j) {
    Eigen::VectorXd pj = p;
    pj(j) += step;
    unpackParams(pj, layout, scratch);
    AssembledResiduals shifted = assemble(dataset, scratch);
    jac.col(j) = (shifted.values - base.values) / step;
    unpackParams(p, layout, scratch);
  }
  return jac;
}

// --- result document ---

void saveResult(const CalibrationResult& result,
                const std::filesystem::path& path) {
  json doc;
  doc["version"] = kDatasetSchemaVersion;
  doc["meta"] = internal::metaToJson(result.meta);
  doc["status"] = solveStatusName(result.status);
  doc["initial_cost"] = result.initial_cost;
  doc["final_cost"] = result.final_cost;
  doc["iterations"] = result.iterations;
  doc["cost_history"] = result.cost_history;
  doc["behind_camera_warnings"] = result.behind_camera_warnings;
  doc["tree"] = internal::toJson(result.tree);
  json poses = json::object();
  for (const auto& [cid, pose] : result.pattern_poses) {
    poses[std::to_string(cid)] = internal::toJson(pose);
  }
  doc["pattern_poses"] = poses;
  json rms = json::object();
  for (const auto& [sid, kinds] : result.rms) {
    json jk = json::object();
    for (const auto& [kind, e] : kinds) {
      jk[kind] = json{{"rms", e.rms}, {"count", e.count}};
    }
    rms[sid] = jk;
  }
  doc["residual_rms"] = rms;
  internal::atomicWrite(path, doc.dump(1) + "\n");
}

CalibrationResult loadResult(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw Error(ErrorCode::Io, "result file not found: " + path.string());
  }
  json doc;
  try {
    doc = json::parse(internal::readFile(path));
  } catch (const json::exception& e) {
    throwValidation("result: invalid JSON: " + std::string(e.what()));
  }
  CalibrationResult result;
  if (doc.contains("meta")) {
    result.meta = internal::metaFromJson(doc.at("meta"), "meta");
  }
  std::string status = internal::stringField(doc, "status", "result");
  if (status == "converged") {
    result.status = SolveStatus::Converged;
  } else if (status == "max_iterations") {
    result.status = SolveStatus::MaxIterations;
  } else if (status == "degenerate") {
    result.status = SolveStatus::Degenerate;
  } else {
    throwValidation("result.status: unknown value '" + status + "'");
  }
  result.initial_cost = internal::numberField(doc, "initial_cost", "result");
  result.final_cost = internal::numberField(doc, "final_cost", "result");
  result.iterations = internal::intField(doc, "iterations", "result");
  if (doc.contains("cost_history")) {
    for (const auto& v : doc.at("cost_history")) {
      result.cost_history.push_back(v.get<double>());
    }
  }
  if (doc.contains("behind_camera_warnings")) {
    result.behind_camera_warnings =
        internal::intField(doc, "behind_camera_warnings", "result");
  }
  result.tree = internal::treeFromJson(internal::member(doc, "tree", "result"),
                                       "tree");
  for (const auto& [cid, pose] :
       internal::member(doc, "pattern_poses", "result").items()) {
    result.pattern_poses[std::stoi(cid)] =
        internal::transformFromJson(pose, "pattern_poses." + cid);
  }
  if (doc.contains("residual_rms")) {
    for (const auto& [sid, kinds] : doc.at("residual_rms").items()) {
      for (const auto& [kind, e] : kinds.items()) {
        RmsEntry entry;
        entry.rms = internal::numberField(e, "rms", "residual_rms");
        entry.count = internal::intField(e, "count", "residual_rms");
        result.rms[sid][kind] = entry;
      }
    }
  }
  return result;
}

std::string calibrateOptionsToJsonText(const CalibrateOptions& options) {
  json doc;
  switch (options.anchor.mode) {
    case AnchorMode::FirstSensor:
      doc["anchor"] = "first";
      break;
    case AnchorMode::None:
      doc["anchor"] = "none";
      break;
    case AnchorMode::Named:
      doc["anchor"] = options.anchor.name;
      break;
  }
  doc["max_iters"] = options.max_iters;
  doc["cost_tol"] = options.cost_tol;
  doc["step_tol"] = options.step_tol;
  doc["init_damping"] = options.init_damping;
  doc["weights"] = json{{"rgb", options.weights.rgb},
                        {"range", options.weights.range}};
  doc["freeze_sensors"] = options.freeze_sensors;
  return doc.dump();
}

CalibrateOptions calibrateOptionsFromJsonText(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throwValidation("calibrate options: invalid JSON: " +
                    std::string(e.what()));
  }
  CalibrateOptions options;
  if (doc.contains("anchor") && !doc.at("anchor").is_null()) {
    std::string a = internal::asString(doc.at("anchor"), "options.anchor");
    if (a == "first") {
      options.anchor.mode = AnchorMode::FirstSensor;
    } else if (a == "none") {
      options.anchor = AnchorChoice::none();
    } else {
      options.anchor = AnchorChoice::named(a);
    }
  }
  if (doc.contains("max_iters")) {
    options.max_iters = internal::intField(doc, "max_iters", "options");
  }
  if (doc.contains("cost_tol")) {
    options.cost_tol = internal::numberField(doc, "cost_tol", "options");
  }
  if (doc.contains("step_tol")) {
    options.step_tol = internal::numberField(doc, "step_tol", "options");
  }
  if (doc.contains("init_damping")) {
    options.init_damping =
        internal::numberField(doc, "init_damping", "options");
  }
  if (doc.contains("weights")) {
    const json& w = doc.at("weights");
    if (w.contains("rgb")) {
      options.weights.rgb = internal::numberField(w, "rgb", "options.weights");
    }
    if (w.contains("range")) {
      options.weights.range =
          internal::numberField(w, "range", "options.weights");
    }
  }
  if (doc.contains("freeze_sensors")) {
    options.freeze_sensors =
        internal::boolField(doc, "freeze_sensors", "options", false);
  }
  return options;
}

}  // namespace cellcal
