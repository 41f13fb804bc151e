#include "mmog/transport/wire.hpp"

#include <algorithm>

#include "mmog/common/error.hpp"
#include "mmog/transport/byte_io.hpp"

namespace mmog::transport {

namespace {

constexpr std::uint8_t kDataCoherentMember = 0x01;
constexpr std::uint8_t kDataCoherentEnd = 0x02;

void write_header(ByteWriter& w, const Header& h) {
  for (auto b : kMagic) w.u8(b);
  w.u8(kVersion);
  w.u8(h.flags);
  w.raw(ByteView(h.prefix.bytes));
}

void write_payload(ByteWriter& w, const DataSub& d) {
  w.u32(d.writer_id);
  w.u32(d.reader_id);
  w.u64(d.sequence);
  w.u64(d.key_hash);
  std::uint8_t flags = 0;
  if (d.coherent_member) flags |= kDataCoherentMember;
  if (d.coherent_end) flags |= kDataCoherentEnd;
  w.u8(flags);
  if (d.coherent_member) w.u32(d.coherent_set_id);
  w.u64(d.source_timestamp_us);
  w.bytes16(d.payload);
}

void write_payload(ByteWriter& w, const HeartbeatSub& h) {
  w.u32(h.writer_id);
  w.u64(h.first_seq);
  w.u64(h.last_seq);
}

void write_payload(ByteWriter& w, const AckNackSub& a) {
  w.u32(a.reader_id);
  w.u32(a.writer_id);
  w.u64(a.ack_up_to);
  w.u64(a.nack_base);
  w.u8(a.nack_count);
  w.raw(ByteView(a.nack_bitmap));
}

void write_payload(ByteWriter& w, const GapSub& g) {
  w.u32(g.reader_id);
  w.u32(g.writer_id);
  w.u64(g.start);
  w.u32(g.count);
}

void write_payload(ByteWriter& w, const DiscoverySub& d) {
  auto gb = d.participant.bytes();
  w.raw(ByteView(gb));
  w.u32(d.lease_ms);
  if (d.entities.size() > 0xFFFF) throw Error(Errc::ResourceLimit, "too many entity records");
  w.u16le(static_cast<std::uint16_t>(d.entities.size()));
  for (const auto& e : d.entities) {
    w.u32(e.entity_id);
    w.u8(static_cast<std::uint8_t>(static_cast<std::uint8_t>(e.kind) | (e.deleted ? kRecordDeleted : 0)));
    w.str16(e.topic);
    w.u64(e.type_hash);
    w.u8(e.qos.reliability);
    w.u8(e.qos.history_kind);
    w.u32(e.qos.history_depth);
    w.u8(e.qos.coherent_access);
    w.u8(e.qos.access_scope);
    w.u32(e.qos.max_samples_per_instance);
    w.bytes16(e.group_data);
    w.u8(e.filter ? 1 : 0);
    if (e.filter) w.str16(*e.filter);
  }
}

SubmessageId id_of(const Submessage& s) {
  static constexpr SubmessageId kIds[] = {SubmessageId::Data, SubmessageId::Heartbeat, SubmessageId::AckNack,
                                          SubmessageId::Gap, SubmessageId::Discovery};
  return kIds[s.index()];
}

DataSub read_data(ByteReader& r) {
  DataSub d;
  d.writer_id = r.u32();
  d.reader_id = r.u32();
  d.sequence = r.u64();
  d.key_hash = r.u64();
  auto off = r.offset();
  auto flags = r.u8();
  if (flags & ~(kDataCoherentMember | kDataCoherentEnd)) throw Error(Errc::Malformed, "unknown DATA flags", off);
  d.coherent_member = flags & kDataCoherentMember;
  d.coherent_end = flags & kDataCoherentEnd;
  if (d.coherent_end && !d.coherent_member)
    throw Error(Errc::Malformed, "coherent end without coherent set id", off);
  if (d.coherent_member) d.coherent_set_id = r.u32();
  d.source_timestamp_us = r.u64();
  d.payload = r.bytes16();
  return d;
}

HeartbeatSub read_heartbeat(ByteReader& r) {
  HeartbeatSub h;
  h.writer_id = r.u32();
  h.first_seq = r.u64();
  h.last_seq = r.u64();
  return h;
}

AckNackSub read_acknack(ByteReader& r) {
  AckNackSub a;
  a.reader_id = r.u32();
  a.writer_id = r.u32();
  a.ack_up_to = r.u64();
  a.nack_base = r.u64();
  a.nack_count = r.u8();
  auto bm = r.raw((a.nack_count + 7u) / 8u);
  a.nack_bitmap.assign(bm.begin(), bm.end());
  return a;
}

GapSub read_gap(ByteReader& r) {
  GapSub g;
  g.reader_id = r.u32();
  g.writer_id = r.u32();
  g.start = r.u64();
  g.count = r.u32();
  return g;
}

DiscoverySub read_discovery(ByteReader& r) {
  DiscoverySub d;
  auto gb = r.raw(16);
  std::copy(gb.begin(), gb.begin() + 12, d.participant.prefix.bytes.begin());
  d.participant.entity_id = (std::uint32_t{gb[12]} << 24) | (std::uint32_t{gb[13]} << 16) |
                            (std::uint32_t{gb[14]} << 8) | std::uint32_t{gb[15]};
  d.lease_ms = r.u32();
  auto n = r.u16le();
  d.entities.reserve(n);
  for (std::uint16_t i = 0; i < n; ++i) {
    EntityRecord e;
    e.entity_id = r.u32();
    auto off = r.offset();
    auto kind = r.u8();
    e.deleted = kind & kRecordDeleted;
    kind &= static_cast<std::uint8_t>(~kRecordDeleted);
    if (kind != 1 && kind != 2) throw Error(Errc::Malformed, "unknown endpoint kind", off);
    e.kind = static_cast<EndpointKind>(kind);
    e.topic = r.str16();
    e.type_hash = r.u64();
    e.qos.reliability = r.u8();
    e.qos.history_kind = r.u8();
    e.qos.history_depth = r.u32();
    e.qos.coherent_access = r.u8();
    e.qos.access_scope = r.u8();
    e.qos.max_samples_per_instance = r.u32();
    e.group_data = r.bytes16();
    auto has_filter = r.u8();
    if (has_filter > 1) throw Error(Errc::Malformed, "bad filter presence flag", r.offset() - 1);
    if (has_filter) e.filter = r.str16();
    d.entities.push_back(std::move(e));
  }
  return d;
}

}  // namespace

AckNackSub AckNackSub::make(std::uint32_t reader_id, std::uint32_t writer_id, std::uint64_t ack_up_to,
                            std::uint64_t base, const std::vector<std::uint64_t>& missing) {
  AckNackSub a;
  a.reader_id = reader_id;
  a.writer_id = writer_id;
  a.ack_up_to = ack_up_to;
  a.nack_base = base;
  std::uint64_t top = 0;
  for (auto s : missing)
    if (s >= base && s - base < 255) top = std::max(top, s - base + 1);
  a.nack_count = static_cast<std::uint8_t>(top);
  a.nack_bitmap.assign((top + 7) / 8, 0);
  for (auto s : missing) {
    if (s < base || s - base >= top) continue;
    auto bit = s - base;
    a.nack_bitmap[bit / 8] |= static_cast<std::uint8_t>(0x80u >> (bit % 8));
  }
  return a;
}

std::vector<std::uint64_t> AckNackSub::missing() const {
  std::vector<std::uint64_t> out;
  for (std::uint32_t bit = 0; bit < nack_count; ++bit)
    if (nack_bitmap[bit / 8] & (0x80u >> (bit % 8))) out.push_back(nack_base + bit);
  return out;
}

Bytes encode_submessage(const Submessage& sub) {
  Bytes payload;
  ByteWriter pw(payload);
  std::visit([&](const auto& s) { write_payload(pw, s); }, sub);
  if (payload.size() > 0xFFFF) throw Error(Errc::ResourceLimit, "submessage payload exceeds 65535 bytes");
  Bytes out;
  out.reserve(payload.size() + 3);
  ByteWriter w(out);
  w.u8(static_cast<std::uint8_t>(id_of(sub)));
  w.u16be(static_cast<std::uint16_t>(payload.size()));
  w.raw(ByteView(payload));
  return out;
}

Bytes encode_message(const WireMessage& message) {
  Bytes out;
  ByteWriter w(out);
  write_header(w, message.header);
  for (const auto& s : message.submessages) w.raw(ByteView(encode_submessage(s)));
  return out;
}

WireMessage decode_message(ByteView bytes) {
  ByteReader r(bytes);
  if (bytes.size() < kHeaderSize) throw Error(Errc::Malformed, "message shorter than header", 0);
  auto magic = r.raw(4);
  if (!std::equal(magic.begin(), magic.end(), std::begin(kMagic))) throw Error(Errc::Malformed, "bad magic", 0);
  if (r.u8() != kVersion) throw Error(Errc::Malformed, "unsupported version", 4);
  WireMessage m;
  m.header.flags = r.u8();
  auto prefix = r.raw(12);
  std::copy(prefix.begin(), prefix.end(), m.header.prefix.bytes.begin());

  while (!r.done()) {
    auto id = r.u8();
    auto len = r.u16be();
    auto start = r.offset();
    auto body = r.raw(len);
    ByteReader br(body, start);
    Submessage sub;
    switch (static_cast<SubmessageId>(id)) {
      case SubmessageId::Data: sub = read_data(br); break;
      case SubmessageId::Heartbeat: sub = read_heartbeat(br); break;
      case SubmessageId::AckNack: sub = read_acknack(br); break;
      case SubmessageId::Gap: sub = read_gap(br); break;
      case SubmessageId::Discovery: sub = read_discovery(br); break;
      default: continue;  // unknown: skipped by length
    }
    if (!br.done()) throw Error(Errc::Malformed, "submessage length does not match its contents", br.offset());
    m.submessages.push_back(std::move(sub));
  }
  return m;
}

MessageBuilder::MessageBuilder(const GuidPrefix& prefix, std::uint8_t flags) {
  header_.prefix = prefix;
  header_.flags = flags;
  start();
}

void MessageBuilder::start() {
  current_.clear();
  ByteWriter w(current_);
  write_header(w, header_);
}

void MessageBuilder::add(const Submessage& sub) {
  auto bytes = encode_submessage(sub);
  if (kHeaderSize + bytes.size() > kMaxMessageSize)
    throw Error(Errc::ResourceLimit, "submessage does not fit in one datagram");
  if (current_.size() + bytes.size() > kMaxMessageSize) {
    done_.push_back(std::move(current_));
    start();
  }
  current_.insert(current_.end(), bytes.begin(), bytes.end());
}

std::vector<Bytes> MessageBuilder::finish() {
  if (current_.size() > kHeaderSize) done_.push_back(std::move(current_));
  start();
  return std::exchange(done_, {});
}

}  // namespace mmog::transport
