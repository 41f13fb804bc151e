#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>

#include "mmog/common/clock.hpp"
#include "mmog/common/guid.hpp"
#include "mmog/transport/types.hpp"

namespace mmog::game {

struct WorldConfig {
  double width = 1024.0;
  double height = 1024.0;
  double cell_size = 64.0;

  std::uint32_t regions_x() const;
  std::uint32_t regions_y() const;
  std::uint32_t region_count() const { return regions_x() * regions_y(); }
  /// Throws Errc::ConfigError.
  void validate() const;
};

/// floor(y / cell) * regions_x + floor(x / cell) over the half-open world
/// rectangle. Throws Errc::OutOfBounds.
std::uint32_t region_of(double x, double y, const WorldConfig& cfg);

enum class EntityKind : std::uint32_t { Player = 0, Npc = 1, Item = 2 };

struct EntityState {
  std::uint64_t entity_id = 0;
  std::uint32_t kind = 0;
  std::uint32_t region = 0;
  double x = 0, y = 0;
  double vx = 0, vy = 0;
  std::uint64_t version = 0;

  bool operator==(const EntityState&) const = default;
};

inline constexpr const char* kEntityTopic = "EntityState";

/// Replicated topic type, keyed by entity_id.
const transport::TypeDescriptor& entity_state_type();
transport::FieldValues to_values(const EntityState& s);
EntityState from_values(const transport::FieldValues& v);

struct ViewEntry {
  EntityState state;
  TimeUs timestamp = 0;
  Guid writer;
  TimeUs received_at = 0;
};

struct Divergence {
  std::size_t count = 0;
  double max_pos_error = 0.0;
};

/// Last-writer-wins replica of entity states. The held state per entity is
/// the maximum under (timestamp, writer guid, version), so any delivery order
/// of the same samples yields the same view.
class WorldView {
 public:
  /// True when the sample replaced (or created) the held state.
  bool apply_update(const EntityState& s, TimeUs timestamp, const Guid& writer, TimeUs received_at = 0);
  /// Drops entities not updated for longer than `timeout`; returns how many.
  std::size_t expire(TimeUs now, TimeUs timeout);
  void erase(std::uint64_t entity_id) { entries_.erase(entity_id); }

  const ViewEntry* find(std::uint64_t entity_id) const;
  const std::map<std::uint64_t, ViewEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

 private:
  std::map<std::uint64_t, ViewEntry> entries_;
};

/// Entities present in only one view plus entities whose versions differ;
/// max position error over entities present in both. When `regions` is
/// given, both views are first restricted to entities in those regions.
Divergence divergence(const WorldView& a, const WorldView& b,
                      const std::optional<std::set<std::uint32_t>>& regions = std::nullopt);

}  // namespace mmog::game
