#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "cellcal/error.hpp"

namespace cellcal::internal {

using nlohmann::json;

// Member access with a field path carried into the error message, so a bad
// dataset reports e.g. "sensors[2].modality: unknown value 'sonar'".
inline const json& member(const json& j, const char* key,
                          const std::string& path) {
  if (!j.is_object() || !j.contains(key)) {
    throwValidation(path + "." + key + ": missing");
  }
  return j.at(key);
}

inline double asNumber(const json& j, const std::string& path) {
  if (!j.is_number()) throwValidation(path + ": expected number");
  return j.get<double>();
}

inline int asInt(const json& j, const std::string& path) {
  if (!j.is_number_integer()) throwValidation(path + ": expected integer");
  return j.get<int>();
}

inline std::string asString(const json& j, const std::string& path) {
  if (!j.is_string()) throwValidation(path + ": expected string");
  return j.get<std::string>();
}

inline bool asBool(const json& j, const std::string& path) {
  if (!j.is_boolean()) throwValidation(path + ": expected boolean");
  return j.get<bool>();
}

inline const json& asArray(const json& j, const std::string& path,
                           int size = -1) {
  if (!j.is_array()) throwValidation(path + ": expected array");
  if (size >= 0 && static_cast<int>(j.size()) != size) {
    throwValidation(path + ": expected array of length " +
                    std::to_string(size));
  }
  return j;
}

inline double numberField(const json& j, const char* key,
                          const std::string& path) {
  return asNumber(member(j, key, path), path + "." + key);
}

inline int intField(const json& j, const char* key, const std::string& path) {
  return asInt(member(j, key, path), path + "." + key);
}

inline std::string stringField(const json& j, const char* key,
                               const std::string& path) {
  return asString(member(j, key, path), path + "." + key);
}

inline bool boolField(const json& j, const char* key, const std::string& path,
                      bool fallback) {
  if (!j.contains(key)) return fallback;
  return asBool(j.at(key), path + "." + key);
}

std::string readFile(const std::filesystem::path& p);

// Write via temp file + rename in the target directory.
void atomicWrite(const std::filesystem::path& p, const std::string& content);

// FNV-1a 64-bit; provenance fingerprint for output documents (not crypto).
std::uint64_t fnv1a64(const void* data, std::size_t len);
std::string contentFingerprint(const std::string& content);
std::string fileFingerprint(const std::filesystem::path& p);

}  // namespace cellcal::internal
