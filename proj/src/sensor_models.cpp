#include "cellcal/sensor_models.hpp"

#include <cmath>

#include "cellcal/error.hpp"

namespace cellcal {
namespace {

Eigen::Vector2d distort(const std::array<double, 5>& d,
                        const Eigen::Vector2d& n) {
  double x = n.x(), y = n.y();
  double r2 = x * x + y * y;
  double radial = 1.0 + r2 * (d[0] + r2 * (d[1] + r2 * d[4]));
  double xd = x * radial + 2.0 * d[2] * x * y + d[3] * (r2 + 2.0 * x * x);
  double yd = y * radial + d[2] * (r2 + 2.0 * y * y) + 2.0 * d[3] * x * y;
  return {xd, yd};
}

}  // namespace

void CameraIntrinsics::validate(const std::string& path) const {
  if (!(fx > 0.0) || !(fy > 0.0)) {
    throwValidation(path + ": focal lengths must be positive");
  }
  if (width <= 0 || height <= 0) {
    throwValidation(path + ": image size must be positive");
  }
  if (cx < 0.0 || cx >= width || cy < 0.0 || cy >= height) {
    throwValidation(path + ": principal point outside the image");
  }
}

bool CameraIntrinsics::hasDistortion() const {
  for (double d : distortion) {
    if (d != 0.0) return true;
  }
  return false;
}

Eigen::Vector2d project(const CameraIntrinsics& intr, const Eigen::Vector3d& p) {
  if (!(p.z() > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "project: point behind camera");
  }
  Eigen::Vector2d n(p.x() / p.z(), p.y() / p.z());
  Eigen::Vector2d d = distort(intr.distortion, n);
  return {intr.fx * d.x() + intr.cx, intr.fy * d.y() + intr.cy};
}

Eigen::Vector3d backprojectDepth(const CameraIntrinsics& intr,
                                 const Eigen::Vector2d& pixel, double depth) {
  if (!std::isfinite(depth) || !(depth > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "backprojectDepth: invalid depth");
  }
  double x = (pixel.x() - intr.cx) / intr.fx * depth;
  double y = (pixel.y() - intr.cy) / intr.fy * depth;
  return {x, y, depth};
}

Eigen::Vector2d normalizedFromPixel(const CameraIntrinsics& intr,
                                    const Eigen::Vector2d& px) {
  Eigen::Vector2d observed((px.x() - intr.cx) / intr.fx,
                           (px.y() - intr.cy) / intr.fy);
  if (!intr.hasDistortion()) return observed;
  Eigen::Vector2d n = observed;
  for (int iter = 0; iter < 20; ++iter) {
    Eigen::Vector2d err = distort(intr.distortion, n) - observed;
    n -= err;
    if (err.cwiseAbs().maxCoeff() < 1e-14) break;
  }
  return n;
}

void PatternSpec::validate(const std::string& path) const {
  if (nx < 2 || ny < 2) throwValidation(path + ": nx, ny must be >= 2");
  if (!(square > 0.0)) throwValidation(path + ": square must be positive");
  if (border_width < 0.0 || border_height < 0.0) {
    throwValidation(path + ": borders must be non-negative");
  }
  if (!(boundary_sample_step > 0.0) || boundary_sample_step > square) {
    throwValidation(path + ": boundary_sample_step must be in (0, square]");
  }
}

int PatternSpec::minCorners() const {
  return static_cast<int>(std::ceil(0.25 * cornerCount()));
}

std::vector<Eigen::Vector3d> PatternSpec::cornerPoints() const {
  std::vector<Eigen::Vector3d> pts;
  pts.reserve(static_cast<std::size_t>(cornerCount()));
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      pts.emplace_back(i * square, j * square, 0.0);
    }
  }
  return pts;
}

std::vector<Eigen::Vector3d> PatternSpec::boundarySamples() const {
  const double x0 = minX(), x1 = maxX(), y0 = minY(), y1 = maxY();
  const Eigen::Vector3d corners[4] = {
      {x0, y0, 0.0}, {x1, y0, 0.0}, {x1, y1, 0.0}, {x0, y1, 0.0}};
  std::vector<Eigen::Vector3d> pts;
  for (int e = 0; e < 4; ++e) {
    Eigen::Vector3d a = corners[e];
    Eigen::Vector3d b = corners[(e + 1) % 4];
    double len = (b - a).norm();
    Eigen::Vector3d dir = (b - a) / len;
    // Start corner included; the end corner opens the next edge.
    for (double s = 0.0; s < len - 1e-12; s += boundary_sample_step) {
      pts.emplace_back(a + s * dir);
    }
  }
  return pts;
}

}  // namespace cellcal
