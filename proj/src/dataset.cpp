#include "cellcal/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

#include "cellcal/version.hpp"
#include "internal/json_util.hpp"
#include "internal/serialize.hpp"

namespace cellcal {

using internal::asArray;
using internal::asNumber;
using internal::json;
using internal::member;

const char* modalityName(Modality m) {
  switch (m) {
    case Modality::Rgb:
      return "rgb";
    case Modality::Depth:
      return "depth";
    case Modality::Lidar3d:
      return "lidar3d";
  }
  return "rgb";
}

Modality modalityFromName(const std::string& name, const std::string& path) {
  if (name == "rgb") return Modality::Rgb;
  if (name == "depth") return Modality::Depth;
  if (name == "lidar3d") return Modality::Lidar3d;
  throwValidation(path + ": unknown modality '" + name + "'");
}

const RgbDetection* Collection::rgb(const std::string& sensor_id) const {
  auto it = detections.find(sensor_id);
  if (it == detections.end()) return nullptr;
  return std::get_if<RgbDetection>(&it->second);
}

const RangeDetection* Collection::range(const std::string& sensor_id) const {
  auto it = detections.find(sensor_id);
  if (it == detections.end()) return nullptr;
  return std::get_if<RangeDetection>(&it->second);
}

bool Collection::hasDetection(const std::string& sensor_id) const {
  return detections.count(sensor_id) > 0;
}

const SensorSpec* Dataset::findSensor(const std::string& id) const {
  for (const SensorSpec& s : sensors) {
    if (s.id == id) return &s;
  }
  return nullptr;
}

const SensorSpec& Dataset::sensor(const std::string& id) const {
  const SensorSpec* s = findSensor(id);
  if (!s) throwNotFound("dataset: unknown sensor '" + id + "'");
  return *s;
}

const Collection* Dataset::findCollection(int id) const {
  for (const Collection& c : collections) {
    if (c.id == id) return &c;
  }
  return nullptr;
}

void Dataset::refreshDerived() {
  for (Collection& c : collections) {
    c.complete = true;
    for (const SensorSpec& s : sensors) {
      if (!c.hasDetection(s.id)) {
        c.complete = false;
        break;
      }
    }
  }
}

void Dataset::validate() const {
  pattern.validate("pattern");
  tree.validate();
  if (sensors.empty()) throwValidation("sensors: empty");

  std::set<std::string> ids;
  for (std::size_t si = 0; si < sensors.size(); ++si) {
    const SensorSpec& s = sensors[si];
    std::string path = "sensors[" + std::to_string(si) + "]";
    if (!ids.insert(s.id).second) {
      throwValidation(path + ": duplicate sensor id '" + s.id + "'");
    }
    if (!tree.hasFrame(s.data_frame)) {
      throwValidation(path + ".data_frame: unknown frame '" + s.data_frame +
                      "'");
    }
    // The calibrated edge must be the unique optimized edge on the
    // root -> data_frame chain.
    const TreeEdge* selected = nullptr;
    int optimized_on_chain = 0;
    for (const TreeEdge* e : tree.chainEdges(s.data_frame)) {
      if (e->kind == EdgeKind::Optimized) ++optimized_on_chain;
      if (e->parent == s.calibrated_edge.first &&
          e->child == s.calibrated_edge.second) {
        selected = e;
      }
    }
    if (!selected) {
      throwValidation(path + ".calibrated_edge: edge '" +
                      s.calibrated_edge.first + "'->'" +
                      s.calibrated_edge.second +
                      "' is not on the root->" + s.data_frame + " chain");
    }
    if (selected->kind != EdgeKind::Optimized) {
      throwValidation(path + ".calibrated_edge: edge is not optimized");
    }
    if (optimized_on_chain != 1) {
      throwValidation(path + ": chain to '" + s.data_frame + "' has " +
                      std::to_string(optimized_on_chain) +
                      " optimized edges, expected exactly 1");
    }
  }
  for (const TreeEdge& e : tree.edges()) {
    if (e.child.rfind("pattern_", 0) == 0 && e.kind != EdgeKind::Pattern) {
      throwValidation("tree: frame name '" + e.child +
                      "' is reserved for pattern edges");
    }
  }

  std::set<int> cids;
  for (std::size_t ci = 0; ci < collections.size(); ++ci) {
    const Collection& c = collections[ci];
    std::string path = "collections[" + std::to_string(ci) + "]";
    if (!cids.insert(c.id).second) {
      throwValidation(path + ".id: duplicate collection id " +
                      std::to_string(c.id));
    }
    if (c.detections.empty()) {
      throwValidation(path + ": no detections");
    }
    for (const auto& [sid, det] : c.detections) {
      const SensorSpec* s = findSensor(sid);
      std::string dpath = path + ".detections." + sid;
      if (!s) throwValidation(dpath + ": unknown sensor");
      if (const auto* rgb = std::get_if<RgbDetection>(&det)) {
        if (s->modality != Modality::Rgb) {
          throwValidation(dpath + ": rgb detection on non-rgb sensor");
        }
        if (static_cast<int>(rgb->corners.size()) < pattern.minCorners()) {
          throwValidation(dpath + ": " + std::to_string(rgb->corners.size()) +
                          " corners is below the 25% detection threshold (" +
                          std::to_string(pattern.minCorners()) + ")");
        }
        std::set<int> corner_ids;
        bool all_present = true;
        for (const RgbCorner& corner : rgb->corners) {
          if (corner.id < 0 || corner.id >= pattern.cornerCount()) {
            throwValidation(dpath + ": corner id " +
                            std::to_string(corner.id) + " out of range");
          }
          if (!corner_ids.insert(corner.id).second) {
            throwValidation(dpath + ": duplicate corner id " +
                            std::to_string(corner.id));
          }
        }
        all_present =
            static_cast<int>(rgb->corners.size()) == pattern.cornerCount();
        if (all_present && rgb->partial) {
          throwValidation(dpath + ": partial flag set on a full detection");
        }
        if (!all_present && !rgb->partial) {
          throwValidation(dpath + ": missing corners but partial flag unset");
        }
      } else {
        const auto& range = std::get<RangeDetection>(det);
        if (s->modality == Modality::Rgb) {
          throwValidation(dpath + ": range detection on rgb sensor");
        }
        if (range.inside.empty() || range.boundary.empty()) {
          throwValidation(dpath + ": inside and boundary must be non-empty");
        }
      }
    }
  }
}

DatasetStats datasetStats(const Dataset& d) {
  DatasetStats stats;
  stats.collections = static_cast<int>(d.collections.size());
  for (const SensorSpec& s : d.sensors) stats.detections_per_sensor[s.id] = 0;
  for (const Collection& c : d.collections) {
    if (c.complete) ++stats.complete;
    for (const auto& [sid, det] : c.detections) {
      ++stats.detections_per_sensor[sid];
      if (const auto* rgb = std::get_if<RgbDetection>(&det)) {
        if (rgb->partial) ++stats.rgb_partials;
      }
    }
  }
  return stats;
}

namespace {

json detectionToJson(const Detection& det) {
  if (const auto* rgb = std::get_if<RgbDetection>(&det)) {
    json corners = json::array();
    for (const RgbCorner& c : rgb->corners) {
      corners.push_back(json::array({c.id, c.u, c.v}));
    }
    return json{{"type", "rgb"}, {"partial", rgb->partial},
                {"corners", corners}};
  }
  const auto& range = std::get<RangeDetection>(det);
  auto pts = [](const std::vector<Eigen::Vector3d>& v) {
    json arr = json::array();
    for (const auto& p : v) arr.push_back(json::array({p.x(), p.y(), p.z()}));
    return arr;
  };
  return json{{"type", "range"},
              {"inside", pts(range.inside)},
              {"boundary", pts(range.boundary)}};
}

Detection detectionFromJson(const json& j, const std::string& path) {
  std::string type = internal::stringField(j, "type", path);
  if (type == "rgb") {
    RgbDetection det;
    det.partial = internal::boolField(j, "partial", path, false);
    const json& corners = asArray(member(j, "corners", path), path + ".corners");
    for (const json& c : corners) {
      const json& entry = asArray(c, path + ".corners[]", 3);
      RgbCorner corner;
      corner.id = internal::asInt(entry[0], path + ".corners[].id");
      corner.u = asNumber(entry[1], path + ".corners[].u");
      corner.v = asNumber(entry[2], path + ".corners[].v");
      det.corners.push_back(corner);
    }
    return det;
  }
  if (type == "range") {
    RangeDetection det;
    auto pts = [&](const char* key, std::vector<Eigen::Vector3d>& out) {
      const json& arr = asArray(member(j, key, path), path + "." + key);
      for (const json& p : arr) {
        const json& entry = asArray(p, path + "." + key + "[]", 3);
        out.emplace_back(asNumber(entry[0], path), asNumber(entry[1], path),
                         asNumber(entry[2], path));
      }
    };
    pts("inside", det.inside);
    pts("boundary", det.boundary);
    return det;
  }
  throwValidation(path + ".type: unknown detection type '" + type + "'");
}

}  // namespace

Dataset loadDataset(const std::filesystem::path& path, LoadReport* report) {
  if (!std::filesystem::exists(path)) {
    throw Error(ErrorCode::Io, "dataset file not found: " + path.string());
  }
  json doc;
  try {
    doc = json::parse(internal::readFile(path));
  } catch (const json::exception& e) {
    throwValidation("dataset: invalid JSON: " + std::string(e.what()));
  }

  Dataset d;
  d.base_dir = path.parent_path();
  d.version = internal::intField(doc, "version", "dataset");
  if (d.version != kDatasetSchemaVersion) {
    throwValidation("version: unsupported schema version " +
                    std::to_string(d.version));
  }
  if (doc.contains("meta")) {
    d.meta = internal::metaFromJson(doc.at("meta"), "meta");
  }
  d.pattern = internal::patternFromJson(member(doc, "pattern", "dataset"),
                                        "pattern");
  d.tree = internal::treeFromJson(member(doc, "tree", "dataset"), "tree");

  const json& sensors = asArray(member(doc, "sensors", "dataset"), "sensors");
  int si = 0;
  for (const json& js : sensors) {
    d.sensors.push_back(
        internal::sensorFromJson(js, "sensors[" + std::to_string(si++) + "]"));
  }

  LoadReport local;
  const json& collections =
      asArray(member(doc, "collections", "dataset"), "collections");
  int ci = 0;
  for (const json& jc : collections) {
    std::string cpath = "collections[" + std::to_string(ci++) + "]";
    Collection c;
    c.id = internal::intField(jc, "id", cpath);
    const json& dets = member(jc, "detections", cpath);
    for (const auto& [sid, jd] : dets.items()) {
      c.detections.emplace(
          sid, detectionFromJson(jd, cpath + ".detections." + sid));
    }
    if (jc.contains("raw")) {
      for (const auto& [sid, jpath] : jc.at("raw").items()) {
        c.raw[sid] = internal::asString(jpath, cpath + ".raw." + sid);
      }
    }
    if (jc.contains("annotations")) {
      for (const auto& [sid, jpts] : jc.at("annotations").items()) {
        std::vector<Eigen::Vector2d> pts;
        for (const json& p : asArray(jpts, cpath + ".annotations." + sid)) {
          const json& e = asArray(p, cpath + ".annotations." + sid, 2);
          pts.emplace_back(asNumber(e[0], cpath), asNumber(e[1], cpath));
        }
        c.annotations[sid] = std::move(pts);
      }
    }
    if (c.detections.empty()) {
      ++local.dropped_empty_collections;
      local.warnings.push_back(cpath + ": dropped (no detections)");
      continue;
    }
    d.collections.push_back(std::move(c));
  }

  d.refreshDerived();
  d.validate();
  if (report) *report = std::move(local);
  return d;
}

void saveDataset(const Dataset& d, const std::filesystem::path& path) {
  json doc;
  doc["version"] = d.version;
  doc["meta"] = internal::metaToJson(d.meta);
  doc["pattern"] = internal::toJson(d.pattern);
  doc["tree"] = internal::toJson(d.tree);
  json sensors = json::array();
  for (const SensorSpec& s : d.sensors) sensors.push_back(internal::toJson(s));
  doc["sensors"] = sensors;
  json collections = json::array();
  for (const Collection& c : d.collections) {
    json jc;
    jc["id"] = c.id;
    json dets = json::object();
    for (const auto& [sid, det] : c.detections) {
      dets[sid] = detectionToJson(det);
    }
    jc["detections"] = dets;
    if (!c.raw.empty()) {
      json raw = json::object();
      for (const auto& [sid, p] : c.raw) raw[sid] = p;
      jc["raw"] = raw;
    }
    if (!c.annotations.empty()) {
      json ann = json::object();
      for (const auto& [sid, pts] : c.annotations) {
        json arr = json::array();
        for (const auto& p : pts) arr.push_back(json::array({p.x(), p.y()}));
        ann[sid] = arr;
      }
      jc["annotations"] = ann;
    }
    collections.push_back(std::move(jc));
  }
  doc["collections"] = collections;
  internal::atomicWrite(path, doc.dump(1) + "\n");
}

// --- binary sidecars ---

namespace {

// Sidecars are written little-endian; this code targets little-endian hosts.
void writeBytes(std::ofstream& out, const void* p, std::size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

}  // namespace

PointCloud readPointCloud(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open cloud " + path.string());
  in.seekg(0, std::ios::end);
  auto bytes = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  if (bytes % (4 * sizeof(float)) != 0) {
    throwValidation("cloud " + path.string() + ": size not a multiple of 16");
  }
  std::size_t n = bytes / (4 * sizeof(float));
  std::vector<float> raw(n * 4);
  in.read(reinterpret_cast<char*>(raw.data()),
          static_cast<std::streamsize>(bytes));
  PointCloud cloud;
  cloud.points.reserve(n);
  cloud.rings.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    cloud.points.emplace_back(raw[i * 4], raw[i * 4 + 1], raw[i * 4 + 2]);
    cloud.rings.push_back(static_cast<int>(raw[i * 4 + 3]));
  }
  return cloud;
}

void writePointCloud(const PointCloud& cloud,
                     const std::filesystem::path& path) {
  if (cloud.points.size() != cloud.rings.size()) {
    throw Error(ErrorCode::InvalidArgument, "cloud: points/rings mismatch");
  }
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    float rec[4] = {static_cast<float>(cloud.points[i].x()),
                    static_cast<float>(cloud.points[i].y()),
                    static_cast<float>(cloud.points[i].z()),
                    static_cast<float>(cloud.rings[i])};
    writeBytes(out, rec, sizeof(rec));
  }
}

bool DepthImage::valid(int x, int y) const {
  if (x < 0 || y < 0 || x >= width || y >= height) return false;
  return std::isfinite(at(x, y));
}

DepthImage readDepthImage(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open raster " + path.string());
  std::uint32_t header[4] = {0, 0, 0, 0};
  in.read(reinterpret_cast<char*>(header), sizeof(header));
  if (!in) throwValidation("raster " + path.string() + ": truncated header");
  DepthImage img;
  img.width = static_cast<int>(header[0]);
  img.height = static_cast<int>(header[1]);
  if (img.width <= 0 || img.height <= 0) {
    throwValidation("raster " + path.string() + ": bad dimensions");
  }
  std::size_t n = static_cast<std::size_t>(img.width) * img.height;
  img.data.resize(n);
  in.read(reinterpret_cast<char*>(img.data.data()),
          static_cast<std::streamsize>(n * sizeof(float)));
  if (!in) throwValidation("raster " + path.string() + ": truncated data");
  return img;
}

void writeDepthImage(const DepthImage& img,
                     const std::filesystem::path& path) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  std::uint32_t header[4] = {static_cast<std::uint32_t>(img.width),
                             static_cast<std::uint32_t>(img.height), 0, 0};
  writeBytes(out, header, sizeof(header));
  writeBytes(out, img.data.data(), img.data.size() * sizeof(float));
}

}  // namespace cellcal
