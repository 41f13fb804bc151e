#include "mmog/transport/udp_link.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>

#include "mmog/common/error.hpp"
#include "mmog/transport/wire.hpp"

namespace mmog::transport {

namespace {

int open_socket(std::uint32_t ip_be, std::uint16_t port, bool reuse) {
  int fd = ::socket(AF_INET, SOCK_DGRAM, 0);
  if (fd < 0) return -1;
  if (reuse) {
    int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  }
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = ip_be;
  addr.sin_port = htons(port);
  if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0) {
    ::close(fd);
    return -1;
  }
  ::fcntl(fd, F_SETFL, ::fcntl(fd, F_GETFL) | O_NONBLOCK);
  return fd;
}

std::uint32_t parse_ip(const std::string& host) {
  in_addr a{};
  if (::inet_pton(AF_INET, host.c_str(), &a) != 1) throw Error(Errc::DomainUnavailable, "bad IPv4 address " + host);
  return a.s_addr;
}

}  // namespace

UdpLink::UdpLink(const UdpLinkConfig& config, const GuidPrefix& self) : self_(self) {
  if (config.domain_id < 0 || config.domain_id > 255)
    throw Error(Errc::DomainUnavailable, "domain id out of range");
  const auto ip = parse_ip(config.bind_host);
  const auto disc_port = static_cast<std::uint16_t>(config.base_port + config.domain_id);

  data_fd_ = open_socket(ip, config.data_port, false);
  if (data_fd_ < 0) throw Error(Errc::DomainUnavailable, std::string("cannot open data socket: ") + std::strerror(errno));
  sockaddr_in bound{};
  socklen_t len = sizeof bound;
  ::getsockname(data_fd_, reinterpret_cast<sockaddr*>(&bound), &len);
  data_port_ = ntohs(bound.sin_port);

  discovery_fd_ = open_socket(ip, disc_port, true);

  bootstrap_.push_back(Address{ip, htons(disc_port)});
  for (const auto& p : config.peers) bootstrap_.push_back(Address{parse_ip(p.host), htons(p.port)});
}

UdpLink::~UdpLink() { close(); }

void UdpLink::close() {
  std::lock_guard lock(mu_);
  if (data_fd_ >= 0) ::close(data_fd_);
  if (discovery_fd_ >= 0) ::close(discovery_fd_);
  data_fd_ = discovery_fd_ = -1;
}

void UdpLink::send_to(const Address& addr, const Bytes& bytes) {
  if (data_fd_ < 0) return;
  sockaddr_in sa{};
  sa.sin_family = AF_INET;
  sa.sin_addr.s_addr = addr.ip_be;
  sa.sin_port = addr.port_be;
  // Loss is tolerated by the protocol; send errors are not surfaced.
  (void)::sendto(data_fd_, bytes.data(), bytes.size(), 0, reinterpret_cast<sockaddr*>(&sa), sizeof sa);
}

void UdpLink::send(const std::optional<GuidPrefix>& to, SharedBytes bytes) {
  std::lock_guard lock(mu_);
  if (to) {
    auto it = peers_.find(*to);
    if (it != peers_.end()) send_to(it->second, *bytes);
    return;
  }
  std::vector<Address> targets;
  for (const auto& [_, addr] : peers_) targets.push_back(addr);
  for (const auto& b : bootstrap_)
    if (std::find(targets.begin(), targets.end(), b) == targets.end()) targets.push_back(b);
  const Address self_data{bootstrap_.front().ip_be, htons(data_port_)};
  for (const auto& t : targets)
    if (!(t == self_data)) send_to(t, *bytes);
}

void UdpLink::drain(int fd, std::vector<SharedBytes>& out) {
  if (fd < 0) return;
  std::vector<std::uint8_t> buf(kMaxMessageSize);
  for (;;) {
    sockaddr_in from{};
    socklen_t len = sizeof from;
    auto n = ::recvfrom(fd, buf.data(), buf.size(), 0, reinterpret_cast<sockaddr*>(&from), &len);
    if (n < 0) break;
    if (static_cast<std::size_t>(n) < kHeaderSize) continue;
    GuidPrefix prefix;
    std::copy(buf.begin() + 6, buf.begin() + 18, prefix.bytes.begin());
    if (prefix == self_) continue;
    peers_[prefix] = Address{from.sin_addr.s_addr, from.sin_port};
    out.push_back(std::make_shared<const Bytes>(buf.begin(), buf.begin() + n));
  }
}

std::vector<SharedBytes> UdpLink::poll() {
  std::lock_guard lock(mu_);
  std::vector<SharedBytes> out;
  drain(discovery_fd_, out);
  drain(data_fd_, out);
  return out;
}

}  // namespace mmog::transport
