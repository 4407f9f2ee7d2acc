#pragma once

#include <string>

#include "cellcal/dataset.hpp"
#include "cellcal/geometry.hpp"
#include "cellcal/sensor_models.hpp"
#include "internal/json_util.hpp"

namespace cellcal::internal {

json toJson(const RigidTransform& t);
RigidTransform transformFromJson(const json& j, const std::string& path);

json toJson(const TransformTree& tree);
TransformTree treeFromJson(const json& j, const std::string& path);

json toJson(const CameraIntrinsics& intr);
CameraIntrinsics intrinsicsFromJson(const json& j, const std::string& path);

json toJson(const PatternSpec& spec);
PatternSpec patternFromJson(const json& j, const std::string& path);

json toJson(const SensorSpec& s);
SensorSpec sensorFromJson(const json& j, const std::string& path);

json metaToJson(const DatasetMeta& m);
DatasetMeta metaFromJson(const json& j, const std::string& path);

}  // namespace cellcal::internal
