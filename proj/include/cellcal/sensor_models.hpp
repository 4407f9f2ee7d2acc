#pragma once

#include <Eigen/Core>
#include <array>
#include <string>
#include <vector>

namespace cellcal {

/// Pinhole intrinsics with a 5-term Brown-Conrady distortion vector
/// (k1, k2, p1, p2, k3). Pixel coordinates use integer pixel centers: the
/// sample at row j, column i sits exactly at (u, v) = (i, j).
struct CameraIntrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  std::array<double, 5> distortion{0, 0, 0, 0, 0};
  int width = 0;
  int height = 0;

  void validate(const std::string& path) const;
  bool hasDistortion() const;
  bool inBounds(const Eigen::Vector2d& px) const {
    return px.x() >= 0.0 && px.x() <= width - 1 && px.y() >= 0.0 &&
           px.y() <= height - 1;
  }
};

/// Projects a camera-frame point (z > 0) to pixel coordinates, applying the
/// distortion model to the normalized coordinates. The result may fall
/// outside the image; bounds are the caller's concern.
/// Throws InvalidArgument for points at or behind the camera plane.
Eigen::Vector2d project(const CameraIntrinsics& intr, const Eigen::Vector3d& p);

/// Depth image pixel -> camera-frame point. Deliberately ignores distortion:
/// depth rasters are assumed pre-rectified, and the conversion mirrors the
/// classic (X, Y, Z) form with Z equal to the stored depth.
/// Throws InvalidArgument for non-finite or non-positive depth.
Eigen::Vector3d backprojectDepth(const CameraIntrinsics& intr,
                                 const Eigen::Vector2d& pixel, double depth);

/// Undistorts a pixel to ideal normalized coordinates (fixed-point
/// iteration; exact pass-through when distortion is zero).
Eigen::Vector2d normalizedFromPixel(const CameraIntrinsics& intr,
                                    const Eigen::Vector2d& px);

/// Planar calibration pattern: an nx-by-ny grid of inner corners with
/// physical margins beyond the grid. The pattern frame has its origin at
/// corner id 0, x along rows, y along columns, z out of the board face.
struct PatternSpec {
  int nx = 0;
  int ny = 0;
  double square = 0.0;
  double border_width = 0.0;
  double border_height = 0.0;
  double boundary_sample_step = 0.01;

  void validate(const std::string& path) const;

  int cornerCount() const { return nx * ny; }
  /// Detections with fewer corners than this are not valid detections.
  int minCorners() const;

  // Physical board rectangle in the pattern frame (z = 0).
  double minX() const { return -border_width; }
  double maxX() const { return (nx - 1) * square + border_width; }
  double minY() const { return -border_height; }
  double maxY() const { return (ny - 1) * square + border_height; }
  double physicalWidth() const { return maxX() - minX(); }
  double physicalHeight() const { return maxY() - minY(); }

  /// Inner corners at (i*square, j*square, 0), row-major, id = j*nx + i.
  std::vector<Eigen::Vector3d> cornerPoints() const;

  /// Points sampled every boundary_sample_step along the physical perimeter,
  /// counter-clockwise from (minX, minY); the four rectangle corners are
  /// always included. Ordered, so the result doubles as a closed polyline.
  std::vector<Eigen::Vector3d> boundarySamples() const;
};

}  // namespace cellcal
