#include "cellcal/geometry.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>

#include "cellcal/error.hpp"

namespace cellcal {

Eigen::Matrix4d RigidTransform::matrix() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = rotation;
  m.topRightCorner<3, 1>() = translation;
  return m;
}

bool RigidTransform::isRigid(double tol) const {
  Eigen::Matrix3d delta = rotation.transpose() * rotation -
                          Eigen::Matrix3d::Identity();
  if (delta.cwiseAbs().maxCoeff() > tol) return false;
  return std::abs(rotation.determinant() - 1.0) <= tol;
}

RigidTransform compose(const RigidTransform& a, const RigidTransform& b) {
  RigidTransform out;
  out.rotation = a.rotation * b.rotation;
  out.translation = a.rotation * b.translation + a.translation;
  return out;
}

double rotationAngle(const Eigen::Matrix3d& r) {
  double c = (r.trace() - 1.0) * 0.5;
  return std::acos(std::clamp(c, -1.0, 1.0));
}

double rotationDistance(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b) {
  return rotationAngle(Eigen::Matrix3d(a.transpose() * b));
}

PoseDelta poseDelta(const RigidTransform& a, const RigidTransform& b) {
  PoseDelta d;
  d.rotation_rad = rotationDistance(a.rotation, b.rotation);
  d.translation_m = (a.translation - b.translation).norm();
  return d;
}

PoseParam PoseParam::fromTransform(const RigidTransform& t) {
  PoseParam p;
  Eigen::AngleAxisd aa(t.rotation);
  p.rotation_vector = aa.angle() * aa.axis();
  p.translation = t.translation;
  p.canonicalize();
  return p;
}

RigidTransform PoseParam::toTransform() const {
  RigidTransform t;
  double angle = rotation_vector.norm();
  if (angle > 0.0) {
    t.rotation =
        Eigen::AngleAxisd(angle, rotation_vector / angle).toRotationMatrix();
  }
  t.translation = translation;
  return t;
}

void PoseParam::canonicalize() {
  double angle = rotation_vector.norm();
  if (angle == 0.0) return;
  Eigen::Vector3d axis = rotation_vector / angle;
  // Wrap into (-pi, pi]; remainder() returns a value in [-pi, pi].
  double wrapped = std::remainder(angle, 2.0 * M_PI);
  if (wrapped == -M_PI) wrapped = M_PI;
  rotation_vector = axis * wrapped;
  // At the pi boundary both signs encode the same rotation; pick the
  // representative whose first nonzero component is non-negative.
  if (std::abs(std::abs(wrapped) - M_PI) < 1e-12) {
    for (int i = 0; i < 3; ++i) {
      double v = rotation_vector(i);
      if (std::abs(v) < 1e-12) continue;
      if (v < 0.0) rotation_vector = -rotation_vector;
      break;
    }
  }
}

const char* edgeKindName(EdgeKind k) {
  switch (k) {
    case EdgeKind::Static:
      return "static";
    case EdgeKind::Optimized:
      return "optimized";
    case EdgeKind::Pattern:
      return "pattern";
  }
  return "static";
}

EdgeKind edgeKindFromName(const std::string& name) {
  if (name == "static") return EdgeKind::Static;
  if (name == "optimized") return EdgeKind::Optimized;
  if (name == "pattern") return EdgeKind::Pattern;
  throwValidation("unknown edge kind '" + name + "'");
}

TransformTree::TransformTree(std::string root) : root_(std::move(root)) {}

int TransformTree::indexOfChild(const std::string& child) const {
  for (int i = 0; i < static_cast<int>(edges_.size()); ++i) {
    if (edges_[i].child == child) return i;
  }
  return -1;
}

void TransformTree::addEdge(TreeEdge edge) {
  if (edge.child == root_) {
    throwValidation("tree: edge child '" + edge.child + "' is the root");
  }
  if (edge.child == edge.parent) {
    throwValidation("tree: self-edge on frame '" + edge.child + "'");
  }
  if (indexOfChild(edge.child) >= 0) {
    throwValidation("tree: frame '" + edge.child + "' has two parent edges");
  }
  edges_.push_back(std::move(edge));
}

bool TransformTree::hasFrame(const std::string& frame) const {
  return frame == root_ || indexOfChild(frame) >= 0;
}

const TreeEdge& TransformTree::parentEdge(const std::string& frame) const {
  int i = indexOfChild(frame);
  if (i < 0) throwNotFound("tree: unknown frame '" + frame + "'");
  return edges_[i];
}

TreeEdge* TransformTree::findEdge(const std::string& parent,
                                  const std::string& child) {
  int i = indexOfChild(child);
  if (i >= 0 && edges_[i].parent == parent) return &edges_[i];
  return nullptr;
}

const TreeEdge* TransformTree::findEdge(const std::string& parent,
                                        const std::string& child) const {
  int i = indexOfChild(child);
  if (i >= 0 && edges_[i].parent == parent) return &edges_[i];
  return nullptr;
}

void TransformTree::setEdgeTransform(const std::string& child,
                                     const RigidTransform& t) {
  int i = indexOfChild(child);
  if (i < 0) throwNotFound("tree: unknown frame '" + child + "'");
  edges_[i].transform = t;
}

std::vector<const TreeEdge*> TransformTree::chainEdges(
    const std::string& frame) const {
  std::vector<const TreeEdge*> chain;
  std::string cursor = frame;
  std::size_t guard = edges_.size() + 1;
  while (cursor != root_) {
    int i = indexOfChild(cursor);
    if (i < 0) throwNotFound("tree: unknown frame '" + frame + "'");
    chain.push_back(&edges_[i]);
    cursor = edges_[i].parent;
    if (chain.size() > guard) {
      throwValidation("tree: cycle reaching frame '" + frame + "'");
    }
  }
  std::reverse(chain.begin(), chain.end());
  return chain;
}

RigidTransform TransformTree::chainTo(const std::string& frame) const {
  RigidTransform t;
  for (const TreeEdge* e : chainEdges(frame)) t = compose(t, e->transform);
  return t;
}

std::string TransformTree::patternFrame(int collection_id) {
  return "pattern_" + std::to_string(collection_id);
}

bool TransformTree::hasPatternEdge(int collection_id) const {
  return indexOfChild(patternFrame(collection_id)) >= 0;
}

void TransformTree::setPatternPose(int collection_id,
                                   const RigidTransform& world_t_pattern) {
  std::string frame = patternFrame(collection_id);
  int i = indexOfChild(frame);
  if (i >= 0) {
    edges_[i].transform = world_t_pattern;
    return;
  }
  addEdge({root_, frame, world_t_pattern, EdgeKind::Pattern});
}

RigidTransform TransformTree::patternPose(int collection_id) const {
  int i = indexOfChild(patternFrame(collection_id));
  if (i < 0) {
    throwNotFound("tree: no pattern edge for collection " +
                  std::to_string(collection_id));
  }
  return edges_[i].transform;
}

std::vector<int> TransformTree::patternCollections() const {
  std::vector<int> out;
  for (const TreeEdge& e : edges_) {
    if (e.kind != EdgeKind::Pattern) continue;
    out.push_back(std::stoi(e.child.substr(e.child.rfind('_') + 1)));
  }
  std::sort(out.begin(), out.end());
  return out;
}

void TransformTree::premultiplyRootEdges(const RigidTransform& g) {
  for (TreeEdge& e : edges_) {
    if (e.parent == root_) e.transform = compose(g, e.transform);
  }
}

void TransformTree::validate() const {
  for (const TreeEdge& e : edges_) {
    if (!e.transform.isRigid()) {
      throwValidation("tree: edge '" + e.parent + "'->'" + e.child +
                      "' transform is not rigid");
    }
    // Walking up must terminate at the root (connected, acyclic).
    chainEdges(e.child);
    if (e.kind == EdgeKind::Pattern && e.parent != root_) {
      throwValidation("tree: pattern edge '" + e.child +
                      "' must hang off the root");
    }
  }
}

RigidTransform sensorToPattern(const TransformTree& tree,
                               const std::string& sensor_frame,
                               int collection_id) {
  std::string pattern = TransformTree::patternFrame(collection_id);
  if (!tree.hasFrame(pattern)) {
    throwNotFound("tree: no pattern edge for collection " +
                  std::to_string(collection_id));
  }
  return compose(tree.chainTo(sensor_frame).inverse(), tree.chainTo(pattern));
}

}  // namespace cellcal
