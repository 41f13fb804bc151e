#include "mmog/game/world.hpp"

#include <cmath>
#include <tuple>

#include "mmog/common/error.hpp"

namespace mmog::game {

using transport::FieldKind;

std::uint32_t WorldConfig::regions_x() const { return static_cast<std::uint32_t>(std::ceil(width / cell_size)); }
std::uint32_t WorldConfig::regions_y() const { return static_cast<std::uint32_t>(std::ceil(height / cell_size)); }

void WorldConfig::validate() const {
  if (!(width > 0) || !(height > 0) || !(cell_size > 0))
    throw Error(Errc::ConfigError, "world width, height and cell size must be positive");
  if (std::ceil(width / cell_size) * std::ceil(height / cell_size) > 4294967295.0)
    throw Error(Errc::ConfigError, "too many regions");
}

std::uint32_t region_of(double x, double y, const WorldConfig& cfg) {
  if (!(x >= 0 && x < cfg.width && y >= 0 && y < cfg.height))
    throw Error(Errc::OutOfBounds, "position (" + std::to_string(x) + ", " + std::to_string(y) + ") outside world");
  const auto cx = static_cast<std::uint32_t>(std::floor(x / cfg.cell_size));
  const auto cy = static_cast<std::uint32_t>(std::floor(y / cfg.cell_size));
  return cy * cfg.regions_x() + cx;
}

const transport::TypeDescriptor& entity_state_type() {
  static const transport::TypeDescriptor type({{"entity_id", FieldKind::U64},
                                               {"kind", FieldKind::U32},
                                               {"region", FieldKind::U32},
                                               {"x", FieldKind::F64},
                                               {"y", FieldKind::F64},
                                               {"vx", FieldKind::F64},
                                               {"vy", FieldKind::F64},
                                               {"version", FieldKind::U64}},
                                              {"entity_id"});
  return type;
}

transport::FieldValues to_values(const EntityState& s) {
  return {s.entity_id, s.kind, s.region, s.x, s.y, s.vx, s.vy, s.version};
}

EntityState from_values(const transport::FieldValues& v) {
  EntityState s;
  s.entity_id = std::get<std::uint64_t>(v.at(0));
  s.kind = std::get<std::uint32_t>(v.at(1));
  s.region = std::get<std::uint32_t>(v.at(2));
  s.x = std::get<double>(v.at(3));
  s.y = std::get<double>(v.at(4));
  s.vx = std::get<double>(v.at(5));
  s.vy = std::get<double>(v.at(6));
  s.version = std::get<std::uint64_t>(v.at(7));
  return s;
}

bool WorldView::apply_update(const EntityState& s, TimeUs timestamp, const Guid& writer, TimeUs received_at) {
  auto [it, fresh] = entries_.try_emplace(s.entity_id);
  auto& e = it->second;
  if (!fresh && std::tie(timestamp, writer, s.version) <= std::tie(e.timestamp, e.writer, e.state.version))
    return false;
  e.state = s;
  e.timestamp = timestamp;
  e.writer = writer;
  e.received_at = received_at;
  return true;
}

std::size_t WorldView::expire(TimeUs now, TimeUs timeout) {
  return std::erase_if(entries_, [&](const auto& kv) { return now - kv.second.received_at > timeout; });
}

const ViewEntry* WorldView::find(std::uint64_t entity_id) const {
  auto it = entries_.find(entity_id);
  return it == entries_.end() ? nullptr : &it->second;
}

Divergence divergence(const WorldView& a, const WorldView& b, const std::optional<std::set<std::uint32_t>>& regions) {
  auto in_scope = [&](const ViewEntry* e) { return e && (!regions || regions->count(e->state.region)); };
  Divergence d;
  auto visit = [&](const WorldView& x, const WorldView& y, bool count_shared) {
    for (const auto& [id, ex] : x.entries()) {
      if (!in_scope(&ex)) continue;
      const ViewEntry* ey = y.find(id);
      if (!in_scope(ey)) {
        ++d.count;
        continue;
      }
      if (!count_shared) continue;
      const bool moved = ex.state.x != ey->state.x || ex.state.y != ey->state.y;
      if (ex.state.version != ey->state.version || moved) ++d.count;
      d.max_pos_error = std::max(d.max_pos_error, std::hypot(ex.state.x - ey->state.x, ex.state.y - ey->state.y));
    }
  };
  visit(a, b, true);
  visit(b, a, false);
  return d;
}

}  // namespace mmog::game
