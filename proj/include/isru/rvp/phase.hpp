#pragma once

#include <cstdint>
#include <optional>
#include <string_view>

namespace isru {

enum class MissionPhase : std::uint8_t {
  PreCollection = 0,
  Collection = 1,
  PostCollection = 2,
  PreUtilization = 3,
  Utilization = 4,
  PostUtilization = 5,
};

inline constexpr std::string_view to_string(MissionPhase p) {
  switch (p) {
    case MissionPhase::PreCollection: return "pre_collection";
    case MissionPhase::Collection: return "collection";
    case MissionPhase::PostCollection: return "post_collection";
    case MissionPhase::PreUtilization: return "pre_utilization";
    case MissionPhase::Utilization: return "utilization";
    case MissionPhase::PostUtilization: return "post_utilization";
  }
  return "?";
}

inline std::optional<MissionPhase> phase_from_string(std::string_view s) {
  for (int i = 0; i <= 5; ++i) {
    const auto p = static_cast<MissionPhase>(i);
    if (to_string(p) == s) return p;
  }
  return std::nullopt;
}

}  // namespace isru
