#pragma once

#include <random>
#include <string>

#include "mmog/transport/wire.hpp"

namespace testing {

using namespace mmog;
using namespace mmog::transport;

/// Random wire messages covering every submessage kind.
struct Gen {
  std::mt19937_64 rng;
  explicit Gen(std::uint64_t seed) : rng(seed) {}

  std::uint64_t u(std::uint64_t hi) { return std::uniform_int_distribution<std::uint64_t>(0, hi)(rng); }
  bool coin() { return u(1) == 1; }

  Bytes bytes(std::size_t max) {
    Bytes b(u(max));
    for (auto& x : b) x = static_cast<std::uint8_t>(u(255));
    return b;
  }
  std::string text(std::size_t max) {
    static const char* pieces[] = {"a", "Z", "_", "0", " ", "\xC3\xA9", "\xE2\x82\xAC", "\xF0\x9F\x8E\xAE"};
    std::string s;
    for (std::size_t n = u(max); n > 0; --n) s += pieces[u(7)];
    return s;
  }
  GuidPrefix prefix() {
    GuidPrefix p;
    for (auto& x : p.bytes) x = static_cast<std::uint8_t>(u(255));
    return p;
  }

  Submessage sub() {
    switch (u(4)) {
      case 0: {
        DataSub d;
        d.writer_id = static_cast<std::uint32_t>(rng());
        d.reader_id = static_cast<std::uint32_t>(rng());
        d.sequence = rng();
        d.key_hash = rng();
        d.coherent_member = coin();
        d.coherent_end = d.coherent_member && coin();
        if (d.coherent_member) d.coherent_set_id = static_cast<std::uint32_t>(rng());
        d.source_timestamp_us = rng();
        d.payload = bytes(64);
        return d;
      }
      case 1: return HeartbeatSub{static_cast<std::uint32_t>(rng()), rng(), rng()};
      case 2: {
        std::vector<std::uint64_t> missing;
        const std::uint64_t base = u(1u << 30);
        for (std::uint64_t i = 0, n = u(40); i < n; ++i) missing.push_back(base + u(254));
        return AckNackSub::make(static_cast<std::uint32_t>(rng()), static_cast<std::uint32_t>(rng()), rng(), base,
                                missing);
      }
      case 3: return GapSub{static_cast<std::uint32_t>(rng()), static_cast<std::uint32_t>(rng()), rng(),
                            static_cast<std::uint32_t>(rng())};
      default: {
        DiscoverySub d;
        d.participant = Guid{prefix(), static_cast<std::uint32_t>(rng())};
        d.lease_ms = static_cast<std::uint32_t>(rng());
        for (std::uint64_t i = 0, n = u(3); i < n; ++i) {
          EntityRecord r;
          r.entity_id = static_cast<std::uint32_t>(rng());
          r.kind = coin() ? EndpointKind::Writer : EndpointKind::Reader;
          r.deleted = coin();
          r.topic = text(12);
          r.type_hash = rng();
          r.qos.reliability = static_cast<std::uint8_t>(u(1));
          r.qos.history_kind = static_cast<std::uint8_t>(u(1));
          r.qos.history_depth = static_cast<std::uint32_t>(rng());
          r.qos.coherent_access = static_cast<std::uint8_t>(u(1));
          r.qos.access_scope = static_cast<std::uint8_t>(u(2));
          r.qos.max_samples_per_instance = static_cast<std::uint32_t>(rng());
          r.group_data = bytes(40);
          if (coin()) r.filter = text(20);
          d.entities.push_back(std::move(r));
        }
        return d;
      }
    }
  }
};

inline WireMessage random_message(Gen& g) {
  WireMessage m;
  m.header.flags = static_cast<std::uint8_t>(g.u(255));
  m.header.prefix = g.prefix();
  for (std::uint64_t n = g.u(4); n > 0; --n) m.submessages.push_back(g.sub());
  return m;
}

}  // namespace testing
