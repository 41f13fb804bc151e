#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "mmog/common/guid.hpp"
#include "mmog/transport/types.hpp"

namespace mmog::dcps {

struct LivelinessChangedStatus {
  std::int32_t alive_count = 0;
  std::int32_t not_alive_count = 0;
  std::uint64_t change_count = 0;
};

struct MatchedStatus {
  std::int32_t current_count = 0;
  std::uint64_t total_count = 0;
  std::uint64_t change_count = 0;
  Guid last_peer;
  /// Group data of the remote publisher/subscriber last matched.
  transport::Bytes last_peer_group_data;
};

struct SampleLostStatus {
  std::uint64_t total_count = 0;
};

struct IncompatibleQosStatus {
  std::uint64_t total_count = 0;
  std::string last_policy;
};

/// Communication status of an entity. Counters never decrease; current
/// counts never go negative.
struct StatusSet {
  LivelinessChangedStatus liveliness_changed;
  MatchedStatus publication_matched;
  MatchedStatus subscription_matched;
  SampleLostStatus sample_lost;
  IncompatibleQosStatus requested_incompatible_qos;
  IncompatibleQosStatus offered_incompatible_qos;
};

/// Optional observers. Invoked from the participant's dispatch context with a
/// snapshot of the status taken when the event was raised.
struct Listener {
  using Hook = std::function<void(const StatusSet&)>;
  Hook on_data_available;
  Hook on_liveliness_changed;
  Hook on_subscription_matched;
  Hook on_publication_matched;
  Hook on_sample_lost;
  Hook on_incompatible_qos;
};

}  // namespace mmog::dcps
