#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "mmog/transport/types.hpp"
#include "mmog/transport/wire.hpp"

namespace mmog::dcps {

enum class Reliability : std::uint8_t { BestEffort = 0, Reliable = 1 };

struct History {
  enum class Kind : std::uint8_t { KeepLast = 0, KeepAll = 1 };
  Kind kind = Kind::KeepLast;
  std::uint32_t depth = 1;

  static History keep_last(std::uint32_t depth) { return {Kind::KeepLast, depth}; }
  static History keep_all() { return {Kind::KeepAll, 0}; }
  bool operator==(const History&) const = default;
};

/// Ordered: an offered scope satisfies every scope at or below it.
enum class AccessScope : std::uint8_t { Instance = 0, Topic = 1, Group = 2 };

struct Presentation {
  bool coherent_access = false;
  AccessScope access_scope = AccessScope::Instance;
  bool operator==(const Presentation&) const = default;
};

inline constexpr std::size_t kMaxGroupData = 1024;
inline constexpr std::uint32_t kDefaultHeartbeatPeriodMs = 50;

/// Defaults are the cheapest behaviour: best effort, keep last 1.
struct QosProfile {
  Reliability reliability = Reliability::BestEffort;
  History history;
  Presentation presentation;
  transport::Bytes group_data;
  std::uint32_t liveliness_lease_ms = 1000;
  std::uint32_t max_samples_per_instance = 256;

  /// Throws Errc::Precondition.
  void validate(std::uint32_t heartbeat_period_ms = kDefaultHeartbeatPeriodMs) const;
  bool operator==(const QosProfile&) const = default;

  static QosProfile reliable_keep_all() {
    QosProfile q;
    q.reliability = Reliability::Reliable;
    q.history = History::keep_all();
    return q;
  }
};

transport::QosSummary summarize(const QosProfile& qos);

struct Compatibility {
  bool compatible = true;
  /// Name of the first policy that failed, empty when compatible.
  std::string failed_policy;
};

/// Offered (writer side) vs requested (reader side). Reliability: RELIABLE
/// satisfies either request, BEST_EFFORT only BEST_EFFORT. Presentation:
/// offered scope must be at least the requested one and coherent access must
/// be offered when requested.
Compatibility check_compatibility(const transport::QosSummary& offered, const transport::QosSummary& requested);

}  // namespace mmog::dcps
