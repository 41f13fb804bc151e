#include "mmog/common/guid.hpp"

#include <unistd.h>

#include <atomic>
#include <cstdio>

namespace mmog {

namespace {

std::string hex(const std::uint8_t* data, std::size_t n) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(n * 2);
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(kDigits[data[i] >> 4]);
    out.push_back(kDigits[data[i] & 0xF]);
  }
  return out;
}

void put_be32(std::uint8_t* out, std::uint32_t v) {
  out[0] = static_cast<std::uint8_t>(v >> 24);
  out[1] = static_cast<std::uint8_t>(v >> 16);
  out[2] = static_cast<std::uint8_t>(v >> 8);
  out[3] = static_cast<std::uint8_t>(v);
}

std::uint64_t splitmix(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace

std::string GuidPrefix::to_hex() const { return hex(bytes.data(), bytes.size()); }

std::array<std::uint8_t, 16> Guid::bytes() const {
  std::array<std::uint8_t, 16> out{};
  for (std::size_t i = 0; i < 12; ++i) out[i] = prefix.bytes[i];
  put_be32(out.data() + 12, entity_id);
  return out;
}

std::string Guid::to_hex() const {
  auto b = bytes();
  return hex(b.data(), b.size());
}

GuidPrefix make_prefix(std::uint64_t seed, std::uint32_t index) {
  std::uint64_t state = seed ^ (0xD1B54A32D192ED03ull * (static_cast<std::uint64_t>(index) + 1));
  std::uint64_t a = splitmix(state);
  GuidPrefix p;
  for (int i = 0; i < 8; ++i) p.bytes[i] = static_cast<std::uint8_t>(a >> (56 - 8 * i));
  put_be32(p.bytes.data() + 8, index);
  return p;
}

GuidPrefix next_process_prefix() {
  static std::atomic<std::uint32_t> counter{0};
  static const std::uint32_t host = static_cast<std::uint32_t>(gethostid());
  GuidPrefix p;
  put_be32(p.bytes.data(), host);
  put_be32(p.bytes.data() + 4, static_cast<std::uint32_t>(getpid()));
  put_be32(p.bytes.data() + 8, counter.fetch_add(1, std::memory_order_relaxed) + 1);
  return p;
}

}  // namespace mmog
