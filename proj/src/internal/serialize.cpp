#include "internal/serialize.hpp"

namespace cellcal::internal {

json toJson(const RigidTransform& t) {
  json rot = json::array();
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) rot.push_back(t.rotation(r, c));
  }
  json trans = json::array({t.translation.x(), t.translation.y(),
                            t.translation.z()});
  return json{{"rotation", rot}, {"translation", trans}};
}

RigidTransform transformFromJson(const json& j, const std::string& path) {
  RigidTransform t;
  const json& rot = asArray(member(j, "rotation", path), path + ".rotation", 9);
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      t.rotation(r, c) = asNumber(rot[r * 3 + c], path + ".rotation");
    }
  }
  const json& tr =
      asArray(member(j, "translation", path), path + ".translation", 3);
  for (int i = 0; i < 3; ++i) {
    t.translation(i) = asNumber(tr[i], path + ".translation");
  }
  if (!t.isRigid(1e-6)) {
    throwValidation(path + ".rotation: not orthonormal with det +1");
  }
  return t;
}

json toJson(const TransformTree& tree) {
  json edges = json::array();
  for (const TreeEdge& e : tree.edges()) {
    json je = toJson(e.transform);
    je["parent"] = e.parent;
    je["child"] = e.child;
    je["kind"] = edgeKindName(e.kind);
    edges.push_back(std::move(je));
  }
  return json{{"root", tree.root()}, {"edges", edges}};
}

TransformTree treeFromJson(const json& j, const std::string& path) {
  TransformTree tree(stringField(j, "root", path));
  const json& edges = asArray(member(j, "edges", path), path + ".edges");
  int i = 0;
  for (const json& je : edges) {
    std::string epath = path + ".edges[" + std::to_string(i++) + "]";
    TreeEdge e;
    e.parent = stringField(je, "parent", epath);
    e.child = stringField(je, "child", epath);
    try {
      e.kind = edgeKindFromName(stringField(je, "kind", epath));
    } catch (const Error& err) {
      throwValidation(epath + ".kind: " + err.what());
    }
    e.transform = transformFromJson(je, epath);
    tree.addEdge(std::move(e));
  }
  tree.validate();
  return tree;
}

json toJson(const CameraIntrinsics& intr) {
  return json{{"fx", intr.fx},
              {"fy", intr.fy},
              {"cx", intr.cx},
              {"cy", intr.cy},
              {"distortion", intr.distortion},
              {"width", intr.width},
              {"height", intr.height}};
}

CameraIntrinsics intrinsicsFromJson(const json& j, const std::string& path) {
  CameraIntrinsics intr;
  intr.fx = numberField(j, "fx", path);
  intr.fy = numberField(j, "fy", path);
  intr.cx = numberField(j, "cx", path);
  intr.cy = numberField(j, "cy", path);
  intr.width = intField(j, "width", path);
  intr.height = intField(j, "height", path);
  const json& d =
      asArray(member(j, "distortion", path), path + ".distortion", 5);
  for (int i = 0; i < 5; ++i) {
    intr.distortion[static_cast<std::size_t>(i)] =
        asNumber(d[i], path + ".distortion");
  }
  intr.validate(path);
  return intr;
}

json toJson(const PatternSpec& spec) {
  return json{{"nx", spec.nx},
              {"ny", spec.ny},
              {"square", spec.square},
              {"border_width", spec.border_width},
              {"border_height", spec.border_height},
              {"boundary_sample_step", spec.boundary_sample_step}};
}

PatternSpec patternFromJson(const json& j, const std::string& path) {
  PatternSpec spec;
  spec.nx = intField(j, "nx", path);
  spec.ny = intField(j, "ny", path);
  spec.square = numberField(j, "square", path);
  spec.border_width = numberField(j, "border_width", path);
  spec.border_height = numberField(j, "border_height", path);
  spec.boundary_sample_step = numberField(j, "boundary_sample_step", path);
  spec.validate(path);
  return spec;
}

json toJson(const SensorSpec& s) {
  json out{{"id", s.id},
           {"modality", modalityName(s.modality)},
           {"data_frame", s.data_frame},
           {"calibrated_edge",
            {{"parent", s.calibrated_edge.first},
             {"child", s.calibrated_edge.second}}},
           {"anchored", s.anchored}};
  if (s.intrinsics) out["intrinsics"] = toJson(*s.intrinsics);
  return out;
}

SensorSpec sensorFromJson(const json& j, const std::string& path) {
  SensorSpec s;
  s.id = stringField(j, "id", path);
  s.modality = modalityFromName(stringField(j, "modality", path),
                                path + ".modality");
  s.data_frame = stringField(j, "data_frame", path);
  const json& edge = member(j, "calibrated_edge", path);
  s.calibrated_edge = {stringField(edge, "parent", path + ".calibrated_edge"),
                       stringField(edge, "child", path + ".calibrated_edge")};
  s.anchored = boolField(j, "anchored", path, false);
  if (j.contains("intrinsics")) {
    s.intrinsics = intrinsicsFromJson(j.at("intrinsics"), path + ".intrinsics");
  }
  if (s.modality != Modality::Lidar3d && !s.intrinsics) {
    throwValidation(path + ": camera sensor '" + s.id + "' needs intrinsics");
  }
  return s;
}

json metaToJson(const DatasetMeta& m) {
  json out{{"tool_version", m.tool_version}};
  if (m.seed) {
    out["seed"] = *m.seed;
  } else {
    out["seed"] = nullptr;
  }
  json inputs = json::object();
  for (const auto& [k, v] : m.inputs) inputs[k] = v;
  out["inputs"] = inputs;
  if (!m.options_json.empty()) {
    out["options"] = json::parse(m.options_json);
  } else {
    out["options"] = json::object();
  }
  return out;
}

DatasetMeta metaFromJson(const json& j, const std::string& path) {
  DatasetMeta m;
  m.tool_version = stringField(j, "tool_version", path);
  if (j.contains("seed") && !j.at("seed").is_null()) {
    m.seed = j.at("seed").get<std::uint64_t>();
  }
  if (j.contains("inputs")) {
    for (const auto& [k, v] : j.at("inputs").items()) {
      m.inputs[k] = asString(v, path + ".inputs." + k);
    }
  }
  if (j.contains("options")) m.options_json = j.at("options").dump();
  return m;
}

}  // namespace cellcal::internal
