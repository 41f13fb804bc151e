#pragma once

#include <deque>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "mmog/dcps/dcps.hpp"
#include "mmog/transport/wire.hpp"

namespace mmog::dcps::detail {

struct TopicState {
  std::string name;
  TypeDescriptor type;
  bool deleted = false;
};

struct FilteredTopicState {
  Topic topic;
  FilterExpression filter;
};

struct CachedSample {
  std::uint64_t seq = 0;
  std::string key;  // raw key bytes, empty for markers
  std::uint64_t key_hash = 0;
  Bytes payload;  // empty for markers
  FieldValues values;
  TimeUs timestamp = 0;
  bool coherent_member = false;
  bool coherent_end = false;
  std::uint32_t set_id = 0;

  bool marker() const { return payload.empty(); }
};

/// Writer-side view of one matched remote reader.
struct ReaderProxy {
  Guid reader;
  bool reliable = false;
  std::optional<FilterExpression> filter;
  std::uint64_t start = 0;     // sequence numbers <= start predate the match
  std::uint64_t informed = 0;  // every seq <= informed was sent or queued as gap
  std::uint64_t gap_from = 0;  // first seq of an unsent gap run ending at informed (0 = none)
  std::uint64_t acked = 0;
  std::uint64_t highest_data_sent = 0;
  std::set<std::uint64_t> requested;
  TimeUs last_heartbeat = std::numeric_limits<TimeUs>::min() / 2;
};

struct PublisherState;
struct SubscriberState;

struct WriterState {
  Guid guid;
  std::shared_ptr<TopicState> topic;
  QosProfile qos;
  Listener listener;
  PublisherState* publisher = nullptr;  // valid while !deleted
  bool deleted = false;

  std::uint64_t next_seq = 1;
  std::uint64_t released = 0;
  std::uint64_t hold_from = 0;         // first seq of the open coherent set (0 = none)
  std::uint64_t last_set_member = 0;   // last seq written in the open coherent set
  std::map<std::uint64_t, CachedSample> history;
  std::unordered_map<std::string, std::deque<std::uint64_t>> per_instance;
  std::map<Guid, ReaderProxy> proxies;
  std::set<Guid> incompatible;
  StatusSet status;
  std::uint64_t retransmissions = 0;
  // service_writer() skips the writer until something changed or a
  // heartbeat falls due.
  bool dirty = true;
  TimeUs next_due = 0;
};

struct PublisherState {
  std::uint16_t group = 0;
  Bytes group_data;
  Presentation presentation;
  bool suspended = false;
  std::optional<std::uint32_t> open_set;
  std::uint32_t next_set_id = 1;
  std::uint8_t next_index = 1;
  std::vector<std::shared_ptr<WriterState>> writers;
  bool deleted = false;
};

struct Received {
  bool gap = false;
  std::uint64_t gap_end = 0;  // exclusive
  transport::DataSub data;
  FieldValues values;
  std::string key;
};

/// Reader-side view of one matched remote writer.
struct WriterProxy {
  Guid writer;
  bool reliable = false;
  Bytes group_data;
  std::uint64_t next_expected = 1;
  std::uint64_t last_seen = 0;
  std::map<std::uint64_t, Received> pending;
  std::uint32_t frontier_set = 0;
};

struct SetKey {
  GuidPrefix prefix;
  std::uint16_t group = 0;
  std::uint32_t set = 0;
  Guid writer;  // only for instance-scoped access

  auto operator<=>(const SetKey&) const = default;
};

struct PendingSet {
  std::vector<std::pair<Guid, Received>> members;
  std::set<Guid> contributors;
  std::set<Guid> ended;
};

struct InstanceSlot {
  std::string key;
  std::deque<Sample> samples;
};

struct ReaderState {
  Guid guid;
  std::shared_ptr<TopicState> topic;
  std::optional<FilterExpression> filter;
  QosProfile qos;
  Listener listener;
  SubscriberState* subscriber = nullptr;
  bool deleted = false;

  std::map<Guid, WriterProxy> proxies;
  std::set<Guid> not_alive;
  std::set<Guid> incompatible;
  std::map<SetKey, PendingSet> pending_sets;
  std::vector<InstanceSlot> instances;
  std::unordered_map<std::string, std::size_t> instance_index;
  std::size_t cached = 0;
  std::map<Guid, std::uint64_t> delivered;
  std::uint64_t delivered_total = 0;
  bool data_available = false;
  StatusSet status;
};

struct SubscriberState {
  std::uint16_t group = 0;
  Bytes group_data;
  Presentation presentation;
  std::uint8_t next_index = 1;
  std::vector<std::shared_ptr<ReaderState>> readers;
  bool deleted = false;
};

struct RemoteParticipant {
  std::uint32_t lease_ms = 0;
  TimeUs last_heard = 0;
  bool alive = true;
  std::map<std::uint32_t, transport::EntityRecord> endpoints;
};

class Core : public std::enable_shared_from_this<Core> {
 public:
  Core(const ParticipantConfig& config, std::shared_ptr<transport::Link> link, const GuidPrefix& prefix);
  ~Core();

  // All members below are guarded by mu unless noted.
  mutable std::mutex mu;
  std::mutex dispatch_mu;  // serializes listener dispatch

  ParticipantConfig config;
  Guid guid;
  std::shared_ptr<transport::Link> link;
  bool deleted = false;

  std::vector<std::shared_ptr<TopicState>> topics;
  std::vector<std::shared_ptr<PublisherState>> publishers;
  std::vector<std::shared_ptr<SubscriberState>> subscribers;
  std::uint16_t next_group = 1;

  std::map<GuidPrefix, RemoteParticipant> remotes;
  // Lower bound on the earliest lease expiry among alive remotes.
  TimeUs liveliness_due = 0;
  std::vector<std::pair<TimeUs, transport::EntityRecord>> tombstones;
  TimeUs next_announce = 0;
  bool announce_dirty = true;
  StatusSet status;
  std::uint64_t malformed = 0;
  std::vector<std::function<void()>> events;

  std::jthread spinner;

  TimeUs now() const { return link->clock().now_us(); }
  void check_live() const;

  // Entity lifecycle.
  transport::EntityRecord record_of(const WriterState& w) const;
  transport::EntityRecord record_of(const ReaderState& r) const;
  void on_local_writer(const std::shared_ptr<WriterState>& w);
  void on_local_reader(const std::shared_ptr<ReaderState>& r);
  void remove_writer(WriterState& w);
  void remove_reader(ReaderState& r);

  // Writer path.
  std::uint64_t write(WriterState& w, const FieldValues& values, std::optional<TimeUs> ts);
  void release(WriterState& w, std::uint64_t up_to);
  void purge(WriterState& w);

  // Reader path.
  void advance(ReaderState& r, WriterProxy& p, TimeUs now);
  std::vector<Sample> collect(ReaderState& r, std::size_t max, bool remove);

  // Engine.
  void announce(TimeUs now);
  void tick_locked(TimeUs now);
  void flush();

 private:
  using Outbox = std::map<GuidPrefix, transport::MessageBuilder>;

  transport::MessageBuilder& out(const GuidPrefix& to);

  void handle(const transport::SharedBytes& bytes, TimeUs now);
  void on_discovery(const GuidPrefix& from, const transport::DiscoverySub& d, TimeUs now);
  void on_data(const GuidPrefix& from, const transport::DataSub& d, TimeUs now);
  void on_heartbeat(const GuidPrefix& from, const transport::HeartbeatSub& h, TimeUs now);
  void on_acknack(const GuidPrefix& from, const transport::AckNackSub& a);
  void on_gap(const GuidPrefix& from, const transport::GapSub& g, TimeUs now);

  void revive(const GuidPrefix& prefix, RemoteParticipant& rp);
  void match_remote(const GuidPrefix& prefix, const transport::EntityRecord& rec);
  void unmatch_remote(const GuidPrefix& prefix, const transport::EntityRecord& rec, bool liveliness_lost);
  void match_pair(WriterState& w, const Guid& reader, const transport::EntityRecord& rec);
  void match_pair(ReaderState& r, const Guid& writer, const transport::EntityRecord& rec);
  void check_liveliness(TimeUs now);

  void receive(ReaderState& r, WriterProxy& p, const transport::DataSub& d, TimeUs now);
  bool can_accept(const ReaderState& r, const Received& rec) const;
  void deliver(ReaderState& r, WriterProxy& p, Received rec, TimeUs now);
  void commit(ReaderState& r, const Guid& writer, Received rec, TimeUs now);
  void drop_broken_sets(ReaderState& r, const Guid& writer, const transport::DataSub& d);
  void recheck_sets(ReaderState& r, TimeUs now);
  bool set_complete(const ReaderState& r, const SetKey& key, const PendingSet& ps) const;

  void service_writer(WriterState& w, TimeUs now);
  void emit_data(WriterState& w, ReaderProxy& p, const CachedSample& s);
  void emit_gap(WriterState& w, ReaderProxy& p, std::uint64_t first, std::uint64_t last);

  void raise(const Listener::Hook& hook, const StatusSet& snapshot);

  Outbox outbox_;
  std::vector<transport::SharedBytes> loopback_;  // datagrams addressed to local endpoints
  std::set<std::pair<GuidPrefix, std::uint32_t>> heartbeats_this_tick_;
};

}  // namespace mmog::dcps::detail
