#include "mmog/services/date.hpp"

#include <cstdio>

#include "mmog/common/error.hpp"

namespace mmog::services {

namespace {

bool digits(std::string_view s) {
  for (char c : s)
    if (c < '0' || c > '9') return false;
  return !s.empty();
}

}  // namespace

Date Date::parse(std::string_view mdy) {
  if (mdy.size() != 10 || mdy[2] != '/' || mdy[5] != '/' || !digits(mdy.substr(0, 2)) || !digits(mdy.substr(3, 2)) ||
      !digits(mdy.substr(6, 4)))
    throw Error(Errc::ConstraintViolation, "date '" + std::string(mdy) + "' is not MM/DD/YYYY");
  Date d;
  d.month = static_cast<unsigned>(std::stoi(std::string(mdy.substr(0, 2))));
  d.day = static_cast<unsigned>(std::stoi(std::string(mdy.substr(3, 2))));
  d.year = std::stoi(std::string(mdy.substr(6, 4)));
  const std::chrono::year_month_day ymd{std::chrono::year{d.year}, std::chrono::month{d.month},
                                        std::chrono::day{d.day}};
  if (!ymd.ok()) throw Error(Errc::ConstraintViolation, "date '" + std::string(mdy) + "' does not exist");
  return d;
}

Date Date::from_time(TimeUs since_epoch) {
  const auto days = std::chrono::floor<std::chrono::days>(std::chrono::sys_time<std::chrono::microseconds>(
      std::chrono::microseconds(since_epoch)));
  const std::chrono::year_month_day ymd{days};
  return Date{static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day())};
}

std::string Date::mdy() const {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%02u/%02u/%04d", month, day, year);
  return buf;
}

std::string Date::iso() const {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", year, month, day);
  return buf;
}

std::chrono::sys_days Date::days() const {
  return std::chrono::sys_days{
      std::chrono::year_month_day{std::chrono::year{year}, std::chrono::month{month}, std::chrono::day{day}}};
}

TimeUs Date::end_us() const {
  const auto next = days() + std::chrono::days{1};
  return std::chrono::duration_cast<std::chrono::microseconds>(next.time_since_epoch()).count();
}

}  // namespace mmog::services
