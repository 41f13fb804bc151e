#pragma once

#include <chrono>
#include <compare>
#include <string>
#include <string_view>

#include "mmog/common/clock.hpp"

namespace mmog::services {

/// Calendar date. Text form is MM/DD/YYYY; iso() gives YYYY-MM-DD.
struct Date {
  int year = 1970;
  unsigned month = 1;
  unsigned day = 1;

  /// Throws Errc::ConstraintViolation on bad format or impossible dates.
  static Date parse(std::string_view mdy);
  static Date from_time(TimeUs since_epoch);

  std::string mdy() const;
  std::string iso() const;
  std::chrono::sys_days days() const;
  /// Microseconds since the epoch at the start of the day after this date.
  TimeUs end_us() const;

  auto operator<=>(const Date&) const = default;
};

}  // namespace mmog::services
