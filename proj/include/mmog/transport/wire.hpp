#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "mmog/common/guid.hpp"
#include "mmog/transport/types.hpp"

namespace mmog::transport {

inline constexpr std::uint8_t kMagic[4] = {0x4D, 0x44, 0x44, 0x53};  // "MDDS"
inline constexpr std::uint8_t kVersion = 1;
inline constexpr std::size_t kHeaderSize = 18;
inline constexpr std::size_t kMaxMessageSize = 64 * 1024;

inline constexpr std::uint8_t kHeaderFlagSimInjected = 0x01;

enum class SubmessageId : std::uint8_t { Data = 1, Heartbeat = 2, AckNack = 3, Gap = 4, Discovery = 6 };

struct Header {
  std::uint8_t flags = 0;
  GuidPrefix prefix;

  bool operator==(const Header&) const = default;
};

struct DataSub {
  std::uint32_t writer_id = 0;
  std::uint32_t reader_id = 0;  // 0 = every matched reader in the destination
  std::uint64_t sequence = 0;
  std::uint64_t key_hash = 0;
  bool coherent_member = false;
  bool coherent_end = false;
  std::uint32_t coherent_set_id = 0;  // meaningful iff coherent_member
  std::uint64_t source_timestamp_us = 0;
  Bytes payload;  // empty = no-data marker (coherent end on a non-contributing writer)

  bool operator==(const DataSub&) const = default;
};

struct HeartbeatSub {
  std::uint32_t writer_id = 0;
  std::uint64_t first_seq = 1;
  std::uint64_t last_seq = 0;

  bool operator==(const HeartbeatSub&) const = default;
};

struct AckNackSub {
  std::uint32_t reader_id = 0;
  std::uint32_t writer_id = 0;
  std::uint64_t ack_up_to = 0;
  std::uint64_t nack_base = 0;
  std::uint8_t nack_count = 0;  // bits in bitmap
  Bytes nack_bitmap;            // ceil(nack_count / 8) bytes, MSB first

  bool operator==(const AckNackSub&) const = default;

  /// Builds the bitmap from missing sequence numbers; entries outside
  /// [base, base + 255) are dropped.
  static AckNackSub make(std::uint32_t reader_id, std::uint32_t writer_id, std::uint64_t ack_up_to,
                         std::uint64_t base, const std::vector<std::uint64_t>& missing);
  std::vector<std::uint64_t> missing() const;
};

/// Sequence numbers [start, start + count) are irrelevant to the reader.
struct GapSub {
  std::uint32_t reader_id = 0;
  std::uint32_t writer_id = 0;
  std::uint64_t start = 0;
  std::uint32_t count = 0;

  bool operator==(const GapSub&) const = default;
};

/// Requested/offered QoS as carried in discovery.
struct QosSummary {
  std::uint8_t reliability = 0;   // 0 best effort, 1 reliable
  std::uint8_t history_kind = 0;  // 0 keep last, 1 keep all
  std::uint32_t history_depth = 1;
  std::uint8_t coherent_access = 0;
  std::uint8_t access_scope = 0;  // 0 instance, 1 topic, 2 group
  std::uint32_t max_samples_per_instance = 256;

  bool operator==(const QosSummary&) const = default;
};

enum class EndpointKind : std::uint8_t { Writer = 1, Reader = 2 };
inline constexpr std::uint8_t kRecordDeleted = 0x80;

struct EntityRecord {
  std::uint32_t entity_id = 0;
  EndpointKind kind = EndpointKind::Writer;
  bool deleted = false;
  std::string topic;
  std::uint64_t type_hash = 0;
  QosSummary qos;
  Bytes group_data;
  std::optional<std::string> filter;

  bool operator==(const EntityRecord&) const = default;
};

struct DiscoverySub {
  Guid participant;
  std::uint32_t lease_ms = 0;
  std::vector<EntityRecord> entities;

  bool operator==(const DiscoverySub&) const = default;
};

using Submessage = std::variant<DataSub, HeartbeatSub, AckNackSub, GapSub, DiscoverySub>;

struct WireMessage {
  Header header;
  std::vector<Submessage> submessages;

  bool operator==(const WireMessage&) const = default;
};

Bytes encode_submessage(const Submessage& sub);
Bytes encode_message(const WireMessage& message);
/// Throws Errc::Malformed on bad magic/version, truncation or bad UTF-8.
/// Unknown submessage ids are skipped.
WireMessage decode_message(ByteView bytes);

/// Accumulates submessages for one destination and cuts a new datagram
/// whenever the next submessage would exceed kMaxMessageSize.
class MessageBuilder {
 public:
  MessageBuilder(const GuidPrefix& prefix, std::uint8_t flags = 0);

  void add(const Submessage& sub);
  bool empty() const { return done_.empty() && current_.size() == kHeaderSize; }
  std::vector<Bytes> finish();

 private:
  void start();
  Header header_;
  Bytes current_;
  std::vector<Bytes> done_;
};

}  // namespace mmog::transport
