#include "mmog/transport/types.hpp"

#include <unordered_set>

#include "mmog/common/error.hpp"
#include "mmog/transport/byte_io.hpp"

namespace mmog::transport {

std::string_view kind_name(FieldKind kind) noexcept {
  switch (kind) {
    case FieldKind::U32: return "u32";
    case FieldKind::U64: return "u64";
    case FieldKind::I64: return "i64";
    case FieldKind::F32: return "f32";
    case FieldKind::F64: return "f64";
    case FieldKind::Bool: return "bool";
    case FieldKind::String: return "string";
  }
  return "?";
}

bool is_numeric(FieldKind kind) noexcept {
  return kind != FieldKind::Bool && kind != FieldKind::String;
}

FieldKind kind_of(const FieldValue& value) noexcept {
  return static_cast<FieldKind>(value.index() + 1);
}

std::uint64_t fnv1a64(ByteView data, std::uint64_t seed) noexcept {
  std::uint64_t h = seed;
  for (auto b : data) {
    h ^= b;
    h *= 1099511628211ull;
  }
  return h;
}

TypeDescriptor::TypeDescriptor(std::vector<FieldDef> fields, std::vector<std::string> key_fields)
    : fields_(std::move(fields)) {
  std::unordered_set<std::string> seen;
  for (const auto& f : fields_) {
    if (f.name.empty()) throw Error(Errc::TypeError, "empty field name");
    if (!seen.insert(f.name).second) throw Error(Errc::TypeError, "duplicate field '" + f.name + "'");
  }
  if (key_fields.empty()) throw Error(Errc::TypeError, "key field set is empty");
  for (const auto& k : key_fields) {
    auto idx = index_of(k);
    if (!idx) throw Error(Errc::TypeError, "key field '" + k + "' is not declared");
    for (auto existing : key_indices_)
      if (existing == *idx) throw Error(Errc::TypeError, "key field '" + k + "' listed twice");
    key_indices_.push_back(*idx);
  }

  Bytes canon;
  ByteWriter w(canon);
  for (const auto& f : fields_) {
    w.str16(f.name);
    w.u8(static_cast<std::uint8_t>(f.kind));
  }
  w.u8(0xFF);
  for (auto k : key_indices_) w.u32(static_cast<std::uint32_t>(k));
  hash_ = fnv1a64(canon);
}

std::optional<std::size_t> TypeDescriptor::index_of(std::string_view name) const noexcept {
  for (std::size_t i = 0; i < fields_.size(); ++i)
    if (fields_[i].name == name) return i;
  return std::nullopt;
}

void TypeDescriptor::check(const FieldValues& values) const {
  if (values.size() != fields_.size())
    throw Error(Errc::TypeError, "expected " + std::to_string(fields_.size()) + " fields, got " +
                                     std::to_string(values.size()));
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (kind_of(values[i]) != fields_[i].kind)
      throw Error(Errc::TypeError, "field '" + fields_[i].name + "' expects " +
                                       std::string(kind_name(fields_[i].kind)) + ", got " +
                                       std::string(kind_name(kind_of(values[i]))));
  }
}

namespace {

void encode_value(ByteWriter& w, const FieldValue& v) {
  std::visit(
      [&](const auto& x) {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, std::uint32_t>) w.u32(x);
        else if constexpr (std::is_same_v<T, std::uint64_t>) w.u64(x);
        else if constexpr (std::is_same_v<T, std::int64_t>) w.u64(static_cast<std::uint64_t>(x));
        else if constexpr (std::is_same_v<T, float>) w.f32(x);
        else if constexpr (std::is_same_v<T, double>) w.f64(x);
        else if constexpr (std::is_same_v<T, bool>) w.u8(x ? 1 : 0);
        else {
          if (!valid_utf8(x)) throw Error(Errc::Malformed, "string field is not valid UTF-8");
          w.str16(x);
        }
      },
      v);
}

FieldValue decode_value(ByteReader& r, FieldKind kind) {
  switch (kind) {
    case FieldKind::U32: return r.u32();
    case FieldKind::U64: return r.u64();
    case FieldKind::I64: return static_cast<std::int64_t>(r.u64());
    case FieldKind::F32: return r.f32();
    case FieldKind::F64: return r.f64();
    case FieldKind::Bool: {
      auto off = r.offset();
      auto b = r.u8();
      if (b > 1) throw Error(Errc::Malformed, "bool byte out of range", off);
      return b == 1;
    }
    case FieldKind::String: return r.str16();
  }
  throw Error(Errc::Malformed, "unknown field kind");
}

}  // namespace

Bytes encode_sample(const TypeDescriptor& type, const FieldValues& values) {
  type.check(values);
  Bytes out;
  ByteWriter w(out);
  for (const auto& v : values) encode_value(w, v);
  return out;
}

FieldValues decode_sample(const TypeDescriptor& type, ByteView bytes) {
  ByteReader r(bytes);
  FieldValues out;
  out.reserve(type.fields().size());
  for (const auto& f : type.fields()) out.push_back(decode_value(r, f.kind));
  if (!r.done()) throw Error(Errc::Malformed, "trailing bytes after sample", r.offset());
  return out;
}

InstanceKey instance_key(const TypeDescriptor& type, const FieldValues& values) {
  InstanceKey key;
  ByteWriter w(key.raw);
  for (auto idx : type.key_indices()) encode_value(w, values.at(idx));
  key.hash = fnv1a64(key.raw);
  return key;
}

bool valid_utf8(std::string_view text) noexcept {
  std::size_t i = 0;
  const auto n = text.size();
  while (i < n) {
    auto c = static_cast<unsigned char>(text[i]);
    std::size_t len;
    std::uint32_t cp;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c & 0xE0) == 0xC0) {
      len = 2;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      len = 4;
      cp = c & 0x07;
    } else {
      return false;
    }
    if (i + len > n) return false;
    for (std::size_t k = 1; k < len; ++k) {
      auto cc = static_cast<unsigned char>(text[i + k]);
      if ((cc & 0xC0) != 0x80) return false;
      cp = (cp << 6) | (cc & 0x3F);
    }
    // overlong forms, surrogates, out of range
    if ((len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) || (len == 4 && cp < 0x10000)) return false;
    if (cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return false;
    i += len;
  }
  return true;
}

}  // namespace mmog::transport
