#pragma once

namespace cellcal {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr int kDatasetSchemaVersion = 1;

}  // namespace cellcal
