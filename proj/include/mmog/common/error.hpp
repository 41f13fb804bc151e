#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace mmog {

enum class Errc {
  Precondition,
  DomainUnavailable,
  EntityDeleted,
  ResourceLimit,
  Reentrancy,
  ParseError,
  TypeError,
  Malformed,
  OutOfBounds,
  NotOwner,
  InvalidRegion,
  TableExists,
  UnknownTable,
  UnknownColumn,
  ArityMismatch,
  ConstraintViolation,
  PortUnbound,
  InvokeTimeout,
  ConfigError,
  FixtureError,
  AssertionFailed,
};

std::string_view errc_name(Errc code) noexcept;

/// Exception carrying a stable error code. Parse errors also carry the byte
/// offset at which the input was rejected.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message, std::optional<std::size_t> offset = std::nullopt);

  Errc code() const noexcept { return code_; }
  std::optional<std::size_t> offset() const noexcept { return offset_; }

 private:
  Errc code_;
  std::optional<std::size_t> offset_;
};

}  // namespace mmog
