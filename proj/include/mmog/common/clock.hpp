#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>

namespace mmog {

/// Microseconds. Virtual in simulation, since-epoch on the wall clock.
using TimeUs = std::int64_t;

constexpr TimeUs ms_to_us(std::int64_t ms) { return ms * 1000; }

class Clock {
 public:
  virtual ~Clock() = default;
  virtual TimeUs now_us() const = 0;
};

/// Clock advanced explicitly by the caller; never moves backwards.
class ManualClock final : public Clock {
 public:
  explicit ManualClock(TimeUs start = 0) : now_(start) {}

  TimeUs now_us() const override { return now_.load(std::memory_order_acquire); }
  void set(TimeUs t) {
    if (t > now_.load(std::memory_order_relaxed)) now_.store(t, std::memory_order_release);
  }
  void advance(TimeUs delta) { set(now_us() + delta); }

 private:
  std::atomic<TimeUs> now_;
};

class SystemClock final : public Clock {
 public:
  TimeUs now_us() const override {
    return std::chrono::duration_cast<std::chrono::microseconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
  }
};

}  // namespace mmog
