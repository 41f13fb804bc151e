#pragma once

#include <cstdint>
#include <map>
#include <set>

#include "mmog/dcps/dcps.hpp"
#include "mmog/game/world.hpp"

namespace mmog::game {

struct SessionConfig {
  WorldConfig world;
  dcps::QosProfile writer_qos;
  dcps::QosProfile reader_qos;
  TimeUs staleness_timeout_us = 2'000'000;
  /// How long a replaced AOI reader keeps running next to its successor.
  TimeUs aoi_overlap_us = 500'000;
  transport::Bytes group_data;

  SessionConfig();
};

struct SessionStats {
  std::uint64_t samples_taken = 0;
  std::uint64_t applied = 0;
  std::uint64_t stale_discarded = 0;
  std::uint64_t expired = 0;
  /// Observed samples whose region field disagrees with their position.
  std::uint64_t region_violations = 0;
  std::uint64_t latency_sum_us = 0;
  std::uint64_t latency_max_us = 0;
  std::map<Guid, std::uint64_t> taken_by_writer;
};

/// One player's (or bot's) view of the world: owns the entities it created,
/// publishes their updates and keeps a WorldView of its area of interest.
/// Single-context; call poll() to drain the middleware into the view.
class GameSession {
 public:
  GameSession(dcps::DomainParticipant participant, SessionConfig config);

  /// Registers ownership; nothing is published until publish_update().
  EntityState create_entity(std::uint64_t entity_id, EntityKind kind, double x, double y);

  /// Increments the version and writes the sample. Throws Errc::NotOwner,
  /// Errc::OutOfBounds, or Errc::InvalidRegion when region disagrees with (x, y).
  EntityState publish_update(EntityState state);
  /// Moves an owned entity. Crossing a region boundary is published as one
  /// coherent set; moves within a region are plain updates.
  EntityState handoff(std::uint64_t entity_id, double new_x, double new_y, double vx = 0, double vy = 0);

  /// Replaces the area of interest. The previous reader keeps feeding the view
  /// until the new one has matched the writers it had and the overlap period
  /// has passed. Throws Errc::InvalidRegion.
  void subscribe_aoi(const std::set<std::uint32_t>& regions);

  /// Takes everything available, merges it into the view and, unless told
  /// otherwise, expires stale entities. Returns the number of samples taken.
  std::size_t poll(bool expire_stale = true);

  const WorldView& view() const { return view_; }
  const std::set<std::uint32_t>& aoi() const { return aoi_; }
  const EntityState* owned(std::uint64_t entity_id) const;
  const std::map<std::uint64_t, EntityState>& owned_entities() const { return owned_; }
  const SessionStats& stats() const { return stats_; }

  dcps::DomainParticipant& participant() { return participant_; }
  dcps::DataWriter& writer() { return writer_; }
  dcps::DataReader& reader() { return reader_; }
  const dcps::Publisher& publisher() const { return publisher_; }

  static std::string aoi_expression(const std::set<std::uint32_t>& regions);

 private:
  EntityState& require_owned(std::uint64_t entity_id);
  std::size_t drain(dcps::DataReader& r, TimeUs now);

  dcps::DomainParticipant participant_;
  SessionConfig config_;
  dcps::Topic topic_;
  dcps::Publisher publisher_;
  dcps::Subscriber subscriber_;
  dcps::DataWriter writer_;
  dcps::DataReader reader_;
  dcps::DataReader retiring_;
  TimeUs retire_after_ = 0;
  std::set<std::uint32_t> aoi_;
  std::map<std::uint64_t, EntityState> owned_;
  WorldView view_;
  SessionStats stats_;
};

}  // namespace mmog::game
