#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

namespace cellcal {

/// Element of SE(3). Rotation kept as an orthonormal matrix; axis-angle is
/// used only at the optimizer boundary (see PoseParam).
struct RigidTransform {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static RigidTransform identity() { return {}; }

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const {
    return rotation * p + translation;
  }

  RigidTransform inverse() const {
    RigidTransform out;
    out.rotation = rotation.transpose();
    out.translation = -(out.rotation * translation);
    return out;
  }

  Eigen::Matrix4d matrix() const;

  /// Orthonormal within tol per entry and det = +1 within tol.
  bool isRigid(double tol = 1e-9) const;
};

/// a.compose(b): apply b first, then a.
RigidTransform compose(const RigidTransform& a, const RigidTransform& b);

/// Geodesic rotation magnitude in [0, pi].
double rotationAngle(const Eigen::Matrix3d& r);
double rotationDistance(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b);

/// Relative pose magnitudes between two transforms (rotation geodesic,
/// translation Euclidean).
struct PoseDelta {
  double rotation_rad = 0.0;
  double translation_m = 0.0;
};
PoseDelta poseDelta(const RigidTransform& a, const RigidTransform& b);

/// Minimal 6-DOF parameterization of an SE(3) element: axis-angle rotation
/// vector plus translation. Canonical form keeps |rotation_vector| <= pi,
/// with the sign of the vector fixed at the pi boundary by requiring a
/// non-negative first nonzero component.
struct PoseParam {
  Eigen::Vector3d rotation_vector = Eigen::Vector3d::Zero();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static PoseParam fromTransform(const RigidTransform& t);
  RigidTransform toTransform() const;
  void canonicalize();
};

enum class EdgeKind { Static, Optimized, Pattern };

const char* edgeKindName(EdgeKind k);
EdgeKind edgeKindFromName(const std::string& name);

/// Directed edge of the frame tree. `transform` maps child-frame coordinates
/// into the parent frame (the child's pose expressed in the parent).
struct TreeEdge {
  std::string parent;
  std::string child;
  RigidTransform transform;
  EdgeKind kind = EdgeKind::Static;
};

/// Rooted tree of coordinate frames. Calibration selects one `Optimized`
/// edge per sensor chain; per-collection pattern poses hang off the root as
/// `Pattern` edges named by patternFrame(id).
class TransformTree {
 public:
  explicit TransformTree(std::string root = "world");

  const std::string& root() const { return root_; }
  const std::vector<TreeEdge>& edges() const { return edges_; }

  /// Throws Validation on duplicate child or child == root.
  void addEdge(TreeEdge edge);

  bool hasFrame(const std::string& frame) const;
  /// Edge whose child is `frame`; throws NotFound for unknown non-root frames.
  const TreeEdge& parentEdge(const std::string& frame) const;
  TreeEdge* findEdge(const std::string& parent, const std::string& child);
  const TreeEdge* findEdge(const std::string& parent,
                           const std::string& child) const;
  void setEdgeTransform(const std::string& child, const RigidTransform& t);

  /// root -> frame transform composed along the unique path.
  RigidTransform chainTo(const std::string& frame) const;
  /// Edges on the root -> frame path, root side first.
  std::vector<const TreeEdge*> chainEdges(const std::string& frame) const;

  static std::string patternFrame(int collection_id);
  bool hasPatternEdge(int collection_id) const;
  void setPatternPose(int collection_id, const RigidTransform& world_t_pattern);
  RigidTransform patternPose(int collection_id) const;
  std::vector<int> patternCollections() const;

  /// Premultiplies every edge whose parent is the root (sensor chain roots
  /// and pattern edges alike) by g. Residuals are invariant under this.
  void premultiplyRootEdges(const RigidTransform& g);

  /// Full structural check: single parent per frame, acyclic, connected.
  void validate() const;

 private:
  int indexOfChild(const std::string& child) const;

  std::string root_;
  std::vector<TreeEdge> edges_;
};

/// Pattern -> sensor transform for one collection:
/// inverse(chainTo(sensor_frame)) composed with chainTo(pattern frame).
RigidTransform sensorToPattern(const TransformTree& tree,
                               const std::string& sensor_frame,
                               int collection_id);

}  // namespace cellcal
