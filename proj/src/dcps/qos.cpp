#include "mmog/dcps/qos.hpp"

#include "mmog/common/error.hpp"

namespace mmog::dcps {

void QosProfile::validate(std::uint32_t heartbeat_period_ms) const {
  if (history.kind == History::Kind::KeepLast && history.depth < 1)
    throw Error(Errc::Precondition, "KEEP_LAST depth must be >= 1");
  if (group_data.size() > kMaxGroupData)
    throw Error(Errc::Precondition, "group_data exceeds " + std::to_string(kMaxGroupData) + " bytes");
  if (liveliness_lease_ms < 3ull * heartbeat_period_ms)
    throw Error(Errc::Precondition, "liveliness lease must be at least 3x the heartbeat period");
  if (max_samples_per_instance < 1) throw Error(Errc::Precondition, "max_samples_per_instance must be >= 1");
  if (presentation.access_scope > AccessScope::Group) throw Error(Errc::Precondition, "unknown access scope");
}

transport::QosSummary summarize(const QosProfile& qos) {
  transport::QosSummary s;
  s.reliability = static_cast<std::uint8_t>(qos.reliability);
  s.history_kind = static_cast<std::uint8_t>(qos.history.kind);
  s.history_depth = qos.history.depth;
  s.coherent_access = qos.presentation.coherent_access ? 1 : 0;
  s.access_scope = static_cast<std::uint8_t>(qos.presentation.access_scope);
  s.max_samples_per_instance = qos.max_samples_per_instance;
  return s;
}

Compatibility check_compatibility(const transport::QosSummary& offered, const transport::QosSummary& requested) {
  if (offered.reliability < requested.reliability) return {false, "RELIABILITY"};
  if (offered.access_scope < requested.access_scope) return {false, "PRESENTATION"};
  if (requested.coherent_access && !offered.coherent_access) return {false, "PRESENTATION"};
  return {};
}

}  // namespace mmog::dcps
