#include "mmog/common/error.hpp"

namespace mmog {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::Precondition: return "PRECONDITION";
    case Errc::DomainUnavailable: return "DOMAIN_UNAVAILABLE";
    case Errc::EntityDeleted: return "ENTITY_DELETED";
    case Errc::ResourceLimit: return "RESOURCE_LIMIT";
    case Errc::Reentrancy: return "REENTRANCY";
    case Errc::ParseError: return "PARSE_ERROR";
    case Errc::TypeError: return "TYPE_ERROR";
    case Errc::Malformed: return "MALFORMED";
    case Errc::OutOfBounds: return "OUT_OF_BOUNDS";
    case Errc::NotOwner: return "NOT_OWNER";
    case Errc::InvalidRegion: return "INVALID_REGION";
    case Errc::TableExists: return "TABLE_EXISTS";
    case Errc::UnknownTable: return "UNKNOWN_TABLE";
    case Errc::UnknownColumn: return "UNKNOWN_COLUMN";
    case Errc::ArityMismatch: return "ARITY_MISMATCH";
    case Errc::ConstraintViolation: return "CONSTRAINT_VIOLATION";
    case Errc::PortUnbound: return "PORT_UNBOUND";
    case Errc::InvokeTimeout: return "INVOKE_TIMEOUT";
    case Errc::ConfigError: return "CONFIG_ERROR";
    case Errc::FixtureError: return "FIXTURE_ERROR";
    case Errc::AssertionFailed: return "ASSERTION_FAILED";
  }
  return "UNKNOWN";
}

namespace {
std::string decorate(Errc code, const std::string& message, std::optional<std::size_t> offset) {
  std::string out(errc_name(code));
  out += ": ";
  out += message;
  if (offset) out += " (at offset " + std::to_string(*offset) + ")";
  return out;
}
}  // namespace

Error::Error(Errc code, const std::string& message, std::optional<std::size_t> offset)
    : std::runtime_error(decorate(code, message, offset)), code_(code), offset_(offset) {}

}  // namespace mmog
