#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace mmog::transport {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

enum class FieldKind : std::uint8_t { U32 = 1, U64, I64, F32, F64, Bool, String };

std::string_view kind_name(FieldKind kind) noexcept;
bool is_numeric(FieldKind kind) noexcept;

using FieldValue = std::variant<std::uint32_t, std::uint64_t, std::int64_t, float, double, bool, std::string>;
using FieldValues = std::vector<FieldValue>;

FieldKind kind_of(const FieldValue& value) noexcept;

struct FieldDef {
  std::string name;
  FieldKind kind;

  bool operator==(const FieldDef&) const = default;
};

/// Ordered field list plus the subset forming the instance key.
class TypeDescriptor {
 public:
  TypeDescriptor() = default;
  /// Throws Errc::TypeError when names repeat or the key set is empty/unknown.
  TypeDescriptor(std::vector<FieldDef> fields, std::vector<std::string> key_fields);

  const std::vector<FieldDef>& fields() const noexcept { return fields_; }
  const std::vector<std::size_t>& key_indices() const noexcept { return key_indices_; }
  std::optional<std::size_t> index_of(std::string_view name) const noexcept;

  /// FNV-1a over a canonical rendering; equal hashes are how remote endpoints
  /// decide their types are identical.
  std::uint64_t hash() const noexcept { return hash_; }

  /// Throws Errc::TypeError unless values match the declared kinds one-for-one.
  void check(const FieldValues& values) const;

  bool operator==(const TypeDescriptor& o) const { return fields_ == o.fields_ && key_indices_ == o.key_indices_; }

 private:
  std::vector<FieldDef> fields_;
  std::vector<std::size_t> key_indices_;
  std::uint64_t hash_ = 0;
};

std::uint64_t fnv1a64(ByteView data, std::uint64_t seed = 1469598103934665603ull) noexcept;

/// Encodes fields in declaration order: fixed-width little-endian numbers,
/// bool as one byte, string as u16 length + UTF-8. No padding.
Bytes encode_sample(const TypeDescriptor& type, const FieldValues& values);
/// Throws Errc::Malformed on truncation, trailing bytes or invalid UTF-8.
FieldValues decode_sample(const TypeDescriptor& type, ByteView bytes);

/// Raw encoded key fields plus their hash. The hash is only an index hint;
/// equality is decided on the raw bytes.
struct InstanceKey {
  std::uint64_t hash = 0;
  Bytes raw;

  bool operator==(const InstanceKey& o) const { return raw == o.raw; }
};

InstanceKey instance_key(const TypeDescriptor& type, const FieldValues& values);

bool valid_utf8(std::string_view text) noexcept;

}  // namespace mmog::transport
