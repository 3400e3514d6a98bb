#pragma once

#include "isru/collision.hpp"
#include "isru/config.hpp"

#include <bit>
#include <cstdint>
#include <string>
#include <vector>

namespace isru {

/// Obstacles the planner and the validator reason about, with a content hash.
class WorldModel {
 public:
  WorldModel() = default;
  explicit WorldModel(std::vector<CollisionPrimitive> obstacles) : obstacles_(std::move(obstacles)) {
    for (const auto& o : obstacles_) {
      if (o.attachment != kWorldAttachment) throw BadConfig("world: obstacle '" + o.name + "' must be world-attached");
      validate(o.shape);
    }
  }

  const std::vector<CollisionPrimitive>& obstacles() const { return obstacles_; }
  std::size_t size() const { return obstacles_.size(); }

  WorldModel with(CollisionPrimitive extra) const {
    auto v = obstacles_;
    v.push_back(std::move(extra));
    return WorldModel(std::move(v));
  }

  /// FNV-1a over names, shape tags, dimensions and pose bits, in order.
  std::uint64_t hash() const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    auto byte = [&](std::uint8_t b) {
      h ^= b;
      h *= 0x100000001b3ull;
    };
    auto word = [&](std::uint64_t w) {
      for (int i = 0; i < 8; ++i) byte(static_cast<std::uint8_t>(w >> (8 * i)));
    };
    auto num = [&](double d) { word(std::bit_cast<std::uint64_t>(d == 0.0 ? 0.0 : d)); };
    word(obstacles_.size());
    for (const auto& o : obstacles_) {
      word(o.name.size());
      for (char c : o.name) byte(static_cast<std::uint8_t>(c));
      byte(static_cast<std::uint8_t>(o.shape.index()));
      std::visit(
          [&](const auto& s) {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, Sphere>) {
              num(s.radius);
            } else if constexpr (std::is_same_v<T, Capsule>) {
              num(s.radius);
              num(s.half_length);
            } else {
              for (int i = 0; i < 3; ++i) num(s.half_extents[i]);
            }
          },
          o.shape);
      for (int i = 0; i < 3; ++i) num(o.local_pose.position[i]);
      for (int i = 0; i < 4; ++i) num(o.local_pose.orientation.coeffs()[i]);
    }
    return h;
  }

 private:
  std::vector<CollisionPrimitive> obstacles_;
};

namespace config {

inline WorldModel load_world_model(const std::filesystem::path& path) { return WorldModel(load_world(path)); }
inline WorldModel default_world() { return load_world_model(bundled_dir() / "world_rover.json"); }

}  // namespace config

}  // namespace isru
