#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mmog/common/clock.hpp"
#include "mmog/common/guid.hpp"
#include "mmog/dcps/filter.hpp"
#include "mmog/dcps/qos.hpp"
#include "mmog/dcps/status.hpp"
#include "mmog/transport/link.hpp"
#include "mmog/transport/types.hpp"

namespace mmog::transport {
class SimNetwork;
struct UdpLinkConfig;
}  // namespace mmog::transport

namespace mmog::dcps {

namespace detail {
class Core;
struct TopicState;
struct FilteredTopicState;
struct PublisherState;
struct SubscriberState;
struct WriterState;
struct ReaderState;
}  // namespace detail

using transport::Bytes;
using transport::FieldValues;
using transport::TypeDescriptor;

struct SampleInfo {
  Guid writer_guid;
  std::uint64_t sequence_number = 0;
  std::optional<std::uint32_t> coherent_set_id;
  bool coherent_end = false;
  bool valid = true;
  TimeUs source_timestamp_us = 0;
  TimeUs reception_timestamp_us = 0;
  std::uint64_t instance_hash = 0;
};

struct Sample {
  FieldValues values;
  SampleInfo info;
};

using LinkFactory = std::function<std::shared_ptr<transport::Link>(int domain_id, const GuidPrefix& prefix)>;

LinkFactory sim_link_factory(std::shared_ptr<transport::SimNetwork> network);
LinkFactory udp_link_factory(const transport::UdpLinkConfig& config);

struct ParticipantConfig {
  int domain_id = 0;
  std::uint32_t lease_ms = 1000;
  std::optional<GuidPrefix> prefix;  // generated when absent
  std::uint32_t heartbeat_period_ms = kDefaultHeartbeatPeriodMs;
  /// Heartbeats towards readers whose outstanding sequence numbers were all
  /// filtered out go out at this multiple of the heartbeat period.
  std::uint32_t filtered_heartbeat_multiplier = 10;
};

class Topic {
 public:
  Topic() = default;
  const std::string& name() const;
  const TypeDescriptor& type() const;
  explicit operator bool() const { return state_ != nullptr; }

 private:
  friend class DomainParticipant;
  friend class Publisher;
  friend class Subscriber;
  explicit Topic(std::shared_ptr<detail::TopicState> s) : state_(std::move(s)) {}
  std::shared_ptr<detail::TopicState> state_;
};

/// Topic whose readers receive only samples satisfying the expression.
class ContentFilteredTopic {
 public:
  ContentFilteredTopic() = default;
  const Topic& related_topic() const;
  const FilterExpression& filter() const;

 private:
  friend class DomainParticipant;
  friend class Subscriber;
  explicit ContentFilteredTopic(std::shared_ptr<detail::FilteredTopicState> s) : state_(std::move(s)) {}
  std::shared_ptr<detail::FilteredTopicState> state_;
};

class DataWriter {
 public:
  DataWriter() = default;

  /// Returns the sequence number assigned to the sample. Throws
  /// Errc::EntityDeleted, Errc::TypeError or Errc::ResourceLimit.
  std::uint64_t write(const FieldValues& values, std::optional<TimeUs> source_timestamp = std::nullopt);

  StatusSet get_status() const;
  Guid guid() const;
  const QosProfile& qos() const;

  /// Sequence numbers currently held in the writer history.
  std::vector<std::uint64_t> history_sequence_numbers() const;
  std::size_t matched_reader_count() const;
  bool is_matched_with(const Guid& reader) const;
  /// True once every matched reliable reader acknowledged every released sample.
  bool all_acknowledged() const;
  std::uint64_t retransmissions() const;

  explicit operator bool() const { return state_ != nullptr; }
  bool operator==(const DataWriter& o) const { return state_ == o.state_; }

 private:
  friend class Publisher;
  DataWriter(std::shared_ptr<detail::Core> core, std::shared_ptr<detail::WriterState> s)
      : core_(std::move(core)), state_(std::move(s)) {}
  std::shared_ptr<detail::Core> core_;
  std::shared_ptr<detail::WriterState> state_;
};

class DataReader {
 public:
  DataReader() = default;

  /// Removes and returns up to max_samples samples, grouped by instance and
  /// in writer order within an instance. Incomplete coherent sets are never
  /// returned. Throws Errc::Precondition when max_samples < 1.
  std::vector<Sample> take(std::size_t max_samples = SIZE_MAX);
  /// As take(), leaving the samples in the cache.
  std::vector<Sample> read(std::size_t max_samples = SIZE_MAX) const;

  StatusSet get_status() const;
  Guid guid() const;
  const QosProfile& qos() const;

  std::size_t cache_size() const;
  /// Largest number of samples held for any one instance.
  std::size_t max_instance_depth() const;
  std::size_t matched_writer_count() const;
  bool is_matched_with(const Guid& writer) const;
  /// Samples committed to the cache from each writer (before history eviction).
  std::map<Guid, std::uint64_t> delivered_per_writer() const;
  std::uint64_t delivered_total() const;

  explicit operator bool() const { return state_ != nullptr; }
  bool operator==(const DataReader& o) const { return state_ == o.state_; }

 private:
  friend class Subscriber;
  DataReader(std::shared_ptr<detail::Core> core, std::shared_ptr<detail::ReaderState> s)
      : core_(std::move(core)), state_(std::move(s)) {}
  std::shared_ptr<detail::Core> core_;
  std::shared_ptr<detail::ReaderState> state_;
};

class Publisher {
 public:
  Publisher() = default;

  /// Matching is reported through statuses; incompatible QoS is not an error.
  DataWriter create_writer(const Topic& topic, const QosProfile& qos = {}, Listener listener = {});
  void delete_writer(const DataWriter& writer);

  /// Idempotent. Writes are accepted and held until resume_publication().
  void suspend_publication();
  /// Releases held samples in per-writer order; no-op when not suspended.
  void resume_publication();

  /// Throws Errc::Precondition when coherent access was not enabled or a
  /// set is already open.
  std::uint32_t begin_coherent_changes();
  void end_coherent_changes();

  const Bytes& group_data() const;
  const Presentation& presentation() const;
  std::vector<DataWriter> writers() const;

  explicit operator bool() const { return state_ != nullptr; }

 private:
  friend class DomainParticipant;
  Publisher(std::shared_ptr<detail::Core> core, std::shared_ptr<detail::PublisherState> s)
      : core_(std::move(core)), state_(std::move(s)) {}
  std::shared_ptr<detail::Core> core_;
  std::shared_ptr<detail::PublisherState> state_;
};

class Subscriber {
 public:
  Subscriber() = default;

  DataReader create_reader(const Topic& topic, const QosProfile& qos = {}, Listener listener = {});
  DataReader create_reader(const ContentFilteredTopic& topic, const QosProfile& qos = {}, Listener listener = {});
  void delete_reader(const DataReader& reader);

  const Bytes& group_data() const;
  std::vector<DataReader> readers() const;

  explicit operator bool() const { return state_ != nullptr; }

 private:
  friend class DomainParticipant;
  Subscriber(std::shared_ptr<detail::Core> core, std::shared_ptr<detail::SubscriberState> s)
      : core_(std::move(core)), state_(std::move(s)) {}
  DataReader make_reader(const std::shared_ptr<detail::TopicState>& topic,
                         std::optional<FilterExpression> filter, const QosProfile& qos, Listener listener);
  std::shared_ptr<detail::Core> core_;
  std::shared_ptr<detail::SubscriberState> state_;
};

/// Entry point to a domain. All operations are safe to call concurrently.
/// The protocol engine runs in tick(), which is also where listeners are
/// dispatched; in simulation the harness calls it, in real time spin() does.
class DomainParticipant {
 public:
  /// Throws Errc::Precondition (domain outside [0, 256), lease < 100 ms) or
  /// Errc::DomainUnavailable.
  static DomainParticipant create(const LinkFactory& links, const ParticipantConfig& config);

  DomainParticipant() = default;

  Topic create_topic(const std::string& name, const TypeDescriptor& type);
  ContentFilteredTopic create_content_filtered_topic(const Topic& topic, const std::string& expression);
  ContentFilteredTopic create_content_filtered_topic(const Topic& topic, FilterExpression expression);

  Publisher create_publisher(Bytes group_data = {}, Presentation presentation = {});
  void delete_publisher(const Publisher& publisher);
  Subscriber create_subscriber(Bytes group_data = {}, Presentation presentation = {});
  void delete_subscriber(const Subscriber& subscriber);

  /// Deletes every child entity, announces their removal and detaches.
  void delete_participant();

  /// Runs the protocol engine at the link clock's current time and then
  /// dispatches queued listener callbacks. Throws Errc::Reentrancy when
  /// called from inside a listener.
  void tick();
  /// Starts a background dispatch context that ticks every `period`.
  void spin(std::chrono::milliseconds period = std::chrono::milliseconds(5));
  void stop();

  Guid guid() const;
  /// Current time on the participant's link clock.
  TimeUs now() const;
  int domain_id() const;
  std::uint32_t lease_ms() const;
  StatusSet get_status() const;
  std::size_t child_count() const;
  /// Remote participants currently considered alive.
  std::vector<GuidPrefix> alive_peers() const;
  std::uint64_t malformed_messages() const;

  explicit operator bool() const { return core_ != nullptr; }

 private:
  explicit DomainParticipant(std::shared_ptr<detail::Core> core) : core_(std::move(core)) {}
  std::shared_ptr<detail::Core> core_;
};

}  // namespace mmog::dcps
