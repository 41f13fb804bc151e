#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <queue>
#include <random>
#include <unordered_map>

#include "mmog/transport/link.hpp"

namespace mmog::transport {

struct NetSimConfig {
  double drop_probability = 0.0;
  double latency_mean_ms = 0.0;
  double latency_jitter_ms = 0.0;  // uniform +/-
  bool reorder = false;
  std::uint64_t rng_seed = 0;

  /// Throws Errc::ConfigError.
  void validate() const;
};

/// Per-link loss and latency model. Draws happen in send order, so the same
/// seed and send schedule always yield the same delivery schedule.
class NetSim {
 public:
  explicit NetSim(NetSimConfig config);

  /// Delivery time for a datagram sent at `now` on `link`, or nullopt when
  /// dropped. Without reordering, delivery times are monotone per link.
  std::optional<TimeUs> sim_send(TimeUs now, std::uint64_t link);

  const NetSimConfig& config() const { return config_; }

 private:
  double uniform01();

  NetSimConfig config_;
  std::mt19937_64 rng_;
  std::unordered_map<std::uint64_t, TimeUs> last_delivery_;
};

struct SimStats {
  std::uint64_t messages_sent = 0;
  std::uint64_t messages_dropped = 0;
  std::uint64_t messages_delivered = 0;
  std::uint64_t bytes_delivered = 0;
};

/// Virtual-time network connecting participants through a NetSim. Time only
/// moves when advance_to() is called.
class SimNetwork : public std::enable_shared_from_this<SimNetwork> {
 public:
  /// Return true to drop the datagram before the loss model sees it.
  using DropHook = std::function<bool(const Bytes& bytes, const GuidPrefix& from, const GuidPrefix& to)>;

  static std::shared_ptr<SimNetwork> create(NetSimConfig config);

  /// Throws Errc::DomainUnavailable when the domain is closed or the prefix
  /// is already attached.
  std::shared_ptr<Link> attach(int domain_id, const GuidPrefix& prefix);
  void set_domain_open(int domain_id, bool open);

  void advance_to(TimeUs t);
  TimeUs now() const { return clock_.now_us(); }
  const ManualClock& clock() const { return clock_; }
  /// Earliest pending delivery, if any.
  std::optional<TimeUs> next_delivery() const;

  void set_drop_hook(DropHook hook);
  /// Silenced participants' outgoing datagrams are discarded.
  void set_silenced(const GuidPrefix& prefix, bool silenced);
  /// Injects raw bytes as if sent by `from`; sets the simulator-injected flag
  /// when the bytes carry a valid header.
  void inject(const GuidPrefix& from, const GuidPrefix& to, Bytes bytes);

  SimStats stats() const;
  SimStats stats_for(const GuidPrefix& destination) const;

 private:
  explicit SimNetwork(NetSimConfig config);
  class SimLink;
  friend class SimLink;

  struct Pending {
    TimeUs at;
    std::uint64_t order;
    SharedBytes bytes;
    bool operator>(const Pending& o) const { return at != o.at ? at > o.at : order > o.order; }
  };
  struct Node {
    int domain;
    std::uint32_t index;
    bool closed = false;
    bool silenced = false;
    std::priority_queue<Pending, std::vector<Pending>, std::greater<>> inbox;
    SimStats stats;
  };

  void send_from(const GuidPrefix& from, const std::optional<GuidPrefix>& to, SharedBytes bytes);
  void deliver_one(const GuidPrefix& from, Node& src, const GuidPrefix& to, Node& dst, const SharedBytes& bytes);
  std::vector<SharedBytes> poll(const GuidPrefix& self);
  void detach(const GuidPrefix& self);

  mutable std::mutex mu_;
  ManualClock clock_;
  NetSim sim_;
  DropHook drop_hook_;
  std::map<GuidPrefix, Node> nodes_;
  std::map<int, bool> domain_open_;
  std::uint32_t next_index_ = 0;
  std::uint64_t order_ = 0;
  SimStats totals_;
};

}  // namespace mmog::transport
