#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "mmog/transport/link.hpp"

namespace mmog::transport {

struct UdpEndpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;
};

struct UdpLinkConfig {
  int domain_id = 0;
  std::uint16_t base_port = 7400;
  std::string bind_host = "127.0.0.1";
  /// Explicit peer set. The well-known discovery port of the domain is always
  /// included on the bind host.
  std::vector<UdpEndpoint> peers;
  /// 0 picks an ephemeral port. Fixed ports let a group of participants on
  /// one host list each other as peers: only one socket receives unicast
  /// datagrams sent to the shared discovery port.
  std::uint16_t data_port = 0;
};

/// Datagram sockets: one ephemeral data socket per participant, plus the
/// domain's discovery port (base_port + domain_id) when it is free. Peers are
/// learned from the source address of every datagram received.
class UdpLink final : public Link {
 public:
  /// Throws Errc::DomainUnavailable when the data socket cannot be opened.
  UdpLink(const UdpLinkConfig& config, const GuidPrefix& self);
  ~UdpLink() override;

  UdpLink(const UdpLink&) = delete;
  UdpLink& operator=(const UdpLink&) = delete;

  void send(const std::optional<GuidPrefix>& to, SharedBytes bytes) override;
  std::vector<SharedBytes> poll() override;
  const Clock& clock() const override { return clock_; }
  void close() override;

  std::uint16_t data_port() const { return data_port_; }
  bool owns_discovery_port() const { return discovery_fd_ >= 0; }

 private:
  struct Address {
    std::uint32_t ip_be;
    std::uint16_t port_be;
    auto operator<=>(const Address&) const = default;
  };

  void send_to(const Address& addr, const Bytes& bytes);
  void drain(int fd, std::vector<SharedBytes>& out);

  GuidPrefix self_;
  SystemClock clock_;
  int data_fd_ = -1;
  int discovery_fd_ = -1;
  std::uint16_t data_port_ = 0;
  std::mutex mu_;
  std::vector<Address> bootstrap_;
  std::map<GuidPrefix, Address> peers_;
};

}  // namespace mmog::transport
