#pragma once

#include <memory>
#include <optional>
#include <vector>

#include "mmog/common/clock.hpp"
#include "mmog/common/guid.hpp"
#include "mmog/transport/types.hpp"

namespace mmog::transport {

using SharedBytes = std::shared_ptr<const Bytes>;

/// A participant's attachment to the network. Datagrams are addressed by
/// participant prefix; the sender is identified by the message header.
class Link {
 public:
  virtual ~Link() = default;

  /// nullopt broadcasts to every peer in the domain.
  virtual void send(const std::optional<GuidPrefix>& to, SharedBytes bytes) = 0;
  /// Datagrams whose delivery time has been reached, in delivery order.
  virtual std::vector<SharedBytes> poll() = 0;
  virtual const Clock& clock() const = 0;
  virtual void close() = 0;
};

}  // namespace mmog::transport
