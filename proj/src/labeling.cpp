#include "cellcal/labeling.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

#include "cellcal/error.hpp"
#include "internal/json_util.hpp"
#include "internal/rng.hpp"

namespace cellcal {

namespace {

struct Plane {
  Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();
  double offset = 0.0;  // normal . x = offset

  double distance(const Eigen::Vector3d& p) const {
    return normal.dot(p) - offset;
  }
};

std::optional<Plane> planeFrom3(const Eigen::Vector3d& a,
                                const Eigen::Vector3d& b,
                                const Eigen::Vector3d& c) {
  Eigen::Vector3d n = (b - a).cross(c - a);
  double len = n.norm();
  if (len < 1e-9) return std::nullopt;  // collinear sample
  Plane plane;
  plane.normal = n / len;
  plane.offset = plane.normal.dot(a);
  return plane;
}

}  // namespace

std::optional<RangeDetection> labelLidar(const PointCloud& cloud,
                                         const LidarLabelConfig& cfg) {
  if (cloud.points.empty()) return std::nullopt;
  if (cloud.points.size() != cloud.rings.size()) {
    throw Error(ErrorCode::InvalidArgument, "labelLidar: cloud missing rings");
  }
  if (!(cfg.crop_radius > 0) || !(cfg.ransac_threshold > 0) ||
      cfg.ransac_iters < 1) {
    throw Error(ErrorCode::InvalidArgument, "labelLidar: bad config");
  }

  // (1) sphere crop around the seed
  std::vector<int> crop;
  for (int i = 0; i < static_cast<int>(cloud.points.size()); ++i) {
    if ((cloud.points[i] - cfg.seed).norm() <= cfg.crop_radius) {
      crop.push_back(i);
    }
  }
  if (static_cast<int>(crop.size()) < 3) return std::nullopt;

  // (2) RANSAC plane: 3-point hypotheses, best by inlier count, ties keep
  // the earlier iteration. A degenerate draw is re-drawn once before the
  // iteration is forfeited.
  internal::Rng rng(cfg.rng_seed);
  int best_count = -1;
  Plane best_plane;
  const int n = static_cast<int>(crop.size());
  for (int iter = 0; iter < cfg.ransac_iters; ++iter) {
    std::optional<Plane> plane;
    for (int attempt = 0; attempt < 2 && !plane; ++attempt) {
      int ia = rng.uniformInt(n);
      int ib = rng.uniformInt(n);
      int ic = rng.uniformInt(n);
      if (ia == ib || ib == ic || ia == ic) continue;
      plane = planeFrom3(cloud.points[crop[ia]], cloud.points[crop[ib]],
                         cloud.points[crop[ic]]);
    }
    if (!plane) continue;
    int count = 0;
    for (int i : crop) {
      if (std::abs(plane->distance(cloud.points[i])) <= cfg.ransac_threshold) {
        ++count;
      }
    }
    if (count > best_count) {
      best_count = count;
      best_plane = *plane;
    }
  }
  if (best_count < std::max(cfg.min_inliers, 3)) return std::nullopt;

  // (3) inside = inliers, (4) boundary = per-ring azimuth extremes.
  RangeDetection det;
  std::map<int, std::pair<int, int>> ring_extremes;  // ring -> (lo, hi) index
  std::vector<int> inliers;
  for (int i : crop) {
    if (std::abs(best_plane.distance(cloud.points[i])) > cfg.ransac_threshold) {
      continue;
    }
    inliers.push_back(i);
    double az = std::atan2(cloud.points[i].y(), cloud.points[i].x());
    auto it = ring_extremes.find(cloud.rings[i]);
    if (it == ring_extremes.end()) {
      ring_extremes.emplace(cloud.rings[i], std::make_pair(i, i));
      continue;
    }
    auto azOf = [&](int idx) {
      return std::atan2(cloud.points[idx].y(), cloud.points[idx].x());
    };
    if (az < azOf(it->second.first)) it->second.first = i;
    if (az > azOf(it->second.second)) it->second.second = i;
  }
  for (int i : inliers) det.inside.push_back(cloud.points[i]);
  for (const auto& [ring, extremes] : ring_extremes) {
    det.boundary.push_back(cloud.points[extremes.first]);
    if (extremes.second != extremes.first) {
      det.boundary.push_back(cloud.points[extremes.second]);
    }
  }
  return det;
}

std::optional<RangeDetection> floodFillDepth(const DepthImage& img,
                                             const DepthLabelConfig& cfg) {
  const int w = img.width, h = img.height;
  const int sx = cfg.seed_pixel.x(), sy = cfg.seed_pixel.y();
  if (!(cfg.depth_jump > 0) || cfg.max_inside_points < 4) {
    throw Error(ErrorCode::InvalidArgument, "floodFillDepth: bad config");
  }

  auto insidePolygon = [&](double x, double y) {
    if (!cfg.polygon) return true;
    const auto& poly = *cfg.polygon;
    bool in = false;
    for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
      if ((poly[i].y() > y) != (poly[j].y() > y) &&
          x < (poly[j].x() - poly[i].x()) * (y - poly[i].y()) /
                      (poly[j].y() - poly[i].y()) +
                  poly[i].x()) {
        in = !in;
      }
    }
    return in;
  };

  if (!img.valid(sx, sy) || !insidePolygon(sx, sy)) {
    throw Error(ErrorCode::InvalidArgument,
                "floodFillDepth: seed pixel invalid or outside the polygon");
  }

  std::vector<char> filled(static_cast<std::size_t>(w) * h, 0);
  auto idx = [&](int x, int y) { return static_cast<std::size_t>(y) * w + x; };
  std::deque<std::pair<int, int>> queue;
  filled[idx(sx, sy)] = 1;
  queue.emplace_back(sx, sy);
  const int dx[4] = {1, -1, 0, 0};
  const int dy[4] = {0, 0, 1, -1};
  while (!queue.empty()) {
    auto [x, y] = queue.front();
    queue.pop_front();
    double depth = img.at(x, y);
    for (int k = 0; k < 4; ++k) {
      int nx2 = x + dx[k], ny2 = y + dy[k];
      if (nx2 < 0 || ny2 < 0 || nx2 >= w || ny2 >= h) continue;
      if (filled[idx(nx2, ny2)]) continue;
      if (!img.valid(nx2, ny2)) continue;
      if (std::abs(img.at(nx2, ny2) - depth) > cfg.depth_jump) continue;
      if (!insidePolygon(nx2, ny2)) continue;
      filled[idx(nx2, ny2)] = 1;
      queue.emplace_back(nx2, ny2);
    }
  }

  // Row-major pixel lists; boundary = filled with an unfilled 4-neighbor
  // (outside the image counts as unfilled).
  std::vector<std::pair<int, int>> region;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (filled[idx(x, y)]) region.emplace_back(x, y);
    }
  }
  if (region.size() <= 1) return std::nullopt;

  RangeDetection det;
  for (const auto& [x, y] : region) {
    bool edge = false;
    for (int k = 0; k < 4 && !edge; ++k) {
      int nx2 = x + dx[k], ny2 = y + dy[k];
      if (nx2 < 0 || ny2 < 0 || nx2 >= w || ny2 >= h || !filled[idx(nx2, ny2)]) {
        edge = true;
      }
    }
    if (edge) det.boundary.emplace_back(x, y, img.at(x, y));
  }
  std::size_t stride = (region.size() +
                        static_cast<std::size_t>(cfg.max_inside_points) - 1) /
                       static_cast<std::size_t>(cfg.max_inside_points);
  for (std::size_t i = 0; i < region.size(); i += stride) {
    auto [x, y] = region[i];
    det.inside.emplace_back(x, y, img.at(x, y));
  }
  return det;
}

Eigen::Vector3d trackSeedLidar(const RangeDetection& prev) {
  if (prev.inside.empty()) {
    throw Error(ErrorCode::InvalidArgument, "trackSeed: empty detection");
  }
  Eigen::Vector3d sum = Eigen::Vector3d::Zero();
  for (const Eigen::Vector3d& p : prev.inside) sum += p;
  return sum / static_cast<double>(prev.inside.size());
}

Eigen::Vector2i trackSeedDepth(const RangeDetection& prev) {
  Eigen::Vector3d c = trackSeedLidar(prev);
  return {static_cast<int>(std::lround(c.x())),
          static_cast<int>(std::lround(c.y()))};
}

LabelJob labelJobFromJsonText(const std::string& text) {
  using internal::json;
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throwValidation("label config: invalid JSON: " + std::string(e.what()));
  }
  LabelJob job;
  if (doc.contains("lidar")) {
    for (const auto& [sid, jc] : doc.at("lidar").items()) {
      std::string path = "label.lidar." + sid;
      LidarLabelConfig cfg;
      const auto& seed = internal::asArray(internal::member(jc, "seed", path),
                                           path + ".seed", 3);
      for (int i = 0; i < 3; ++i) {
        cfg.seed(i) = internal::asNumber(seed[i], path + ".seed");
      }
      if (jc.contains("crop_radius"))
        cfg.crop_radius = internal::numberField(jc, "crop_radius", path);
      if (jc.contains("ransac_threshold"))
        cfg.ransac_threshold =
            internal::numberField(jc, "ransac_threshold", path);
      if (jc.contains("ransac_iters"))
        cfg.ransac_iters = internal::intField(jc, "ransac_iters", path);
      if (jc.contains("min_inliers"))
        cfg.min_inliers = internal::intField(jc, "min_inliers", path);
      if (jc.contains("rng_seed"))
        cfg.rng_seed = jc.at("rng_seed").get<std::uint64_t>();
      job.lidar[sid] = cfg;
    }
  }
  if (doc.contains("depth")) {
    for (const auto& [sid, jc] : doc.at("depth").items()) {
      std::string path = "label.depth." + sid;
      DepthLabelConfig cfg;
      const auto& seed = internal::asArray(
          internal::member(jc, "seed_pixel", path), path + ".seed_pixel", 2);
      cfg.seed_pixel.x() = internal::asInt(seed[0], path + ".seed_pixel");
      cfg.seed_pixel.y() = internal::asInt(seed[1], path + ".seed_pixel");
      if (jc.contains("depth_jump"))
        cfg.depth_jump = internal::numberField(jc, "depth_jump", path);
      if (jc.contains("max_inside_points"))
        cfg.max_inside_points =
            internal::intField(jc, "max_inside_points", path);
      if (jc.contains("polygon") && !jc.at("polygon").is_null()) {
        std::vector<Eigen::Vector2d> poly;
        for (const auto& p :
             internal::asArray(jc.at("polygon"), path + ".polygon")) {
          const auto& e = internal::asArray(p, path + ".polygon[]", 2);
          poly.emplace_back(internal::asNumber(e[0], path),
                            internal::asNumber(e[1], path));
        }
        cfg.polygon = std::move(poly);
      }
      job.depth[sid] = cfg;
    }
  }
  if (doc.contains("collections")) {
    for (const auto& [cid, js] : doc.at("collections").items()) {
      for (const auto& [sid, jseed] : js.items()) {
        std::string path = "label.collections." + cid + "." + sid;
        const auto& arr = internal::asArray(jseed, path);
        Eigen::Vector3d seed = Eigen::Vector3d::Zero();
        for (int i = 0; i < static_cast<int>(arr.size()) && i < 3; ++i) {
          seed(i) = internal::asNumber(arr[i], path);
        }
        job.seed_overrides[std::stoi(cid)][sid] = seed;
      }
    }
  }
  return job;
}

LabelOutcome runLabeling(Dataset& dataset, const LabelJob& job) {
  LabelOutcome outcome;

  std::vector<Collection*> ordered;
  for (Collection& c : dataset.collections) ordered.push_back(&c);
  std::sort(ordered.begin(), ordered.end(),
            [](const Collection* a, const Collection* b) {
              return a->id < b->id;
            });

  auto overrideSeed = [&](int cid, const std::string& sid)
      -> const Eigen::Vector3d* {
    auto cit = job.seed_overrides.find(cid);
    if (cit == job.seed_overrides.end()) return nullptr;
    auto sit = cit->second.find(sid);
    return sit == cit->second.end() ? nullptr : &sit->second;
  };

  for (const auto& [sid, base_cfg] : job.lidar) {
    if (!dataset.findSensor(sid)) {
      throwNotFound("label config: unknown sensor '" + sid + "'");
    }
    std::optional<RangeDetection> prev;
    for (Collection* col : ordered) {
      auto raw = col->raw.find(sid);
      if (raw == col->raw.end()) continue;
      PointCloud cloud = readPointCloud(dataset.base_dir / raw->second);

      LidarLabelConfig cfg = base_cfg;
      if (const Eigen::Vector3d* seed = overrideSeed(col->id, sid)) {
        cfg.seed = *seed;
      } else if (prev) {
        cfg.seed = trackSeedLidar(*prev);
      }
      auto det = labelLidar(cloud, cfg);
      col->detections.erase(sid);
      if (det) {
        col->detections.emplace(sid, *det);
        prev = std::move(det);
        ++outcome.relabeled;
      } else {
        ++outcome.no_detection;
        outcome.warnings.push_back("collection " + std::to_string(col->id) +
                                   ", " + sid + ": no plane found");
      }
    }
  }

  for (const auto& [sid, base_cfg] : job.depth) {
    if (!dataset.findSensor(sid)) {
      throwNotFound("label config: unknown sensor '" + sid + "'");
    }
    std::optional<RangeDetection> prev;
    for (Collection* col : ordered) {
      auto raw = col->raw.find(sid);
      if (raw == col->raw.end()) continue;
      DepthImage img = readDepthImage(dataset.base_dir / raw->second);

      DepthLabelConfig cfg = base_cfg;
      if (const Eigen::Vector3d* seed = overrideSeed(col->id, sid)) {
        cfg.seed_pixel = {static_cast<int>(std::lround(seed->x())),
                          static_cast<int>(std::lround(seed->y()))};
      } else if (prev) {
        cfg.seed_pixel = trackSeedDepth(*prev);
      }
      col->detections.erase(sid);
      try {
        auto det = floodFillDepth(img, cfg);
        if (det) {
          col->detections.emplace(sid, *det);
          prev = std::move(det);
          ++outcome.relabeled;
          continue;
        }
        outcome.warnings.push_back("collection " + std::to_string(col->id) +
                                   ", " + sid + ": fill collapsed to seed");
      } catch (const Error& e) {
        outcome.warnings.push_back("collection " + std::to_string(col->id) +
                                   ", " + sid + ": " + e.what());
      }
      ++outcome.no_detection;
    }
  }

  // Labeling can empty a collection; those are dropped like at load time.
  auto& cols = dataset.collections;
  cols.erase(std::remove_if(cols.begin(), cols.end(),
                            [](const Collection& c) {
                              return c.detections.empty();
                            }),
             cols.end());
  dataset.refreshDerived();
  return outcome;
}

}  // namespace cellcal
