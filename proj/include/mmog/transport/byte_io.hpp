#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>

#include "mmog/common/error.hpp"
#include "mmog/transport/types.hpp"

namespace mmog::transport {

class ByteWriter {
 public:
  explicit ByteWriter(Bytes& out) : out_(out) {}

  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16le(std::uint16_t v) { le(v, 2); }
  void u16be(std::uint16_t v) {
    out_.push_back(static_cast<std::uint8_t>(v >> 8));
    out_.push_back(static_cast<std::uint8_t>(v));
  }
  void u32(std::uint32_t v) { le(v, 4); }
  void u64(std::uint64_t v) { le(v, 8); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void raw(ByteView data) { out_.insert(out_.end(), data.begin(), data.end()); }
  void raw(std::string_view s) { out_.insert(out_.end(), s.begin(), s.end()); }
  /// u16 length prefix then bytes.
  void str16(std::string_view s) {
    if (s.size() > 0xFFFF) throw Error(Errc::ResourceLimit, "string longer than 65535 bytes");
    u16le(static_cast<std::uint16_t>(s.size()));
    raw(s);
  }
  void bytes16(ByteView data) {
    if (data.size() > 0xFFFF) throw Error(Errc::ResourceLimit, "byte field longer than 65535 bytes");
    u16le(static_cast<std::uint16_t>(data.size()));
    raw(data);
  }
  std::size_t size() const { return out_.size(); }
  Bytes& buffer() { return out_; }

 private:
  void le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  Bytes& out_;
};

/// Bounds-checked reader; every overrun throws Errc::Malformed.
class ByteReader {
 public:
  explicit ByteReader(ByteView data, std::size_t base_offset = 0) : data_(data), base_(base_offset) {}

  std::uint8_t u8() { return take(1)[0]; }
  std::uint16_t u16le() { return static_cast<std::uint16_t>(le(2)); }
  std::uint16_t u16be() {
    auto p = take(2);
    return static_cast<std::uint16_t>((p[0] << 8) | p[1]);
  }
  std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
  std::uint64_t u64() { return le(8); }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  ByteView raw(std::size_t n) { return take(n); }
  std::string str16() {
    auto n = u16le();
    auto p = take(n);
    std::string s(reinterpret_cast<const char*>(p.data()), p.size());
    if (!valid_utf8(s)) throw Error(Errc::Malformed, "invalid UTF-8 in string", offset() - n);
    return s;
  }
  Bytes bytes16() {
    auto n = u16le();
    auto p = take(n);
    return Bytes(p.begin(), p.end());
  }

  std::size_t remaining() const { return data_.size() - pos_; }
  bool done() const { return pos_ == data_.size(); }
  std::size_t offset() const { return base_ + pos_; }

 private:
  ByteView take(std::size_t n) {
    if (n > remaining()) throw Error(Errc::Malformed, "truncated input", offset());
    auto out = data_.subspan(pos_, n);
    pos_ += n;
    return out;
  }
  std::uint64_t le(int n) {
    auto p = take(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(p[static_cast<std::size_t>(i)]) << (8 * i);
    return v;
  }

  ByteView data_;
  std::size_t pos_ = 0;
  std::size_t base_;
};

}  // namespace mmog::transport
