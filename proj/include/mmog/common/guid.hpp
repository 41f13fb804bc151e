#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <functional>
#include <string>

namespace mmog {

/// 12-byte participant prefix shared by every entity a participant owns.
struct GuidPrefix {
  std::array<std::uint8_t, 12> bytes{};

  auto operator<=>(const GuidPrefix&) const = default;
  bool operator==(const GuidPrefix&) const = default;

  std::string to_hex() const;
};

/// Entity ids carry the owning publisher/subscriber index in the upper 16 bits
/// and a per-group counter plus kind in the lower 16.
namespace entity_kind {
constexpr std::uint32_t kParticipant = 0x000001C1;
constexpr std::uint8_t kWriter = 0x02;
constexpr std::uint8_t kReader = 0x07;
}  // namespace entity_kind

constexpr std::uint32_t make_entity_id(std::uint16_t group, std::uint8_t index, std::uint8_t kind) {
  return (static_cast<std::uint32_t>(group) << 16) | (static_cast<std::uint32_t>(index) << 8) | kind;
}
constexpr std::uint16_t entity_group(std::uint32_t entity_id) {
  return static_cast<std::uint16_t>(entity_id >> 16);
}

struct Guid {
  GuidPrefix prefix;
  std::uint32_t entity_id = 0;

  auto operator<=>(const Guid&) const = default;
  bool operator==(const Guid&) const = default;

  /// 16 bytes: prefix followed by the entity id, big-endian so byte order
  /// and the comparison operator agree.
  std::array<std::uint8_t, 16> bytes() const;
  std::string to_hex() const;
};

/// Prefix derived deterministically from a seed and an index (simulation).
GuidPrefix make_prefix(std::uint64_t seed, std::uint32_t index);
/// Prefix unique within this process run (host id, pid, counter).
GuidPrefix next_process_prefix();

}  // namespace mmog

template <>
struct std::hash<mmog::GuidPrefix> {
  std::size_t operator()(const mmog::GuidPrefix& p) const noexcept {
    std::uint64_t h = 1469598103934665603ull;
    for (auto b : p.bytes) h = (h ^ b) * 1099511628211ull;
    return static_cast<std::size_t>(h);
  }
};

template <>
struct std::hash<mmog::Guid> {
  std::size_t operator()(const mmog::Guid& g) const noexcept {
    return std::hash<mmog::GuidPrefix>{}(g.prefix) ^ (static_cast<std::size_t>(g.entity_id) * 0x9E3779B97F4A7C15ull);
  }
};
