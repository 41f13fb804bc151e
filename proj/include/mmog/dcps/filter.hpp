#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "mmog/transport/types.hpp"

namespace mmog::dcps {

enum class CmpOp : std::uint8_t { Eq, Ne, Lt, Le, Gt, Ge };

std::string_view op_symbol(CmpOp op) noexcept;

/// Right-hand side of a comparison. Integers keep their sign class so u64
/// and i64 literals compare exactly.
struct Literal {
  std::variant<std::int64_t, std::uint64_t, double, bool, std::string> value;
  bool operator==(const Literal&) const = default;
};

/// Typed boolean expression over a topic's fields.
///
///   expr := or
///   or   := and ("OR" and)*
///   and  := not ("AND" not)*
///   not  := "NOT" not | "(" expr ")" | cmp
///   cmp  := ident op literal
class FilterExpression {
 public:
  struct Node {
    enum class Kind : std::uint8_t { Or, And, Not, Cmp };
    Kind kind;
    std::vector<std::size_t> children;  // indices into nodes()
    std::size_t field = 0;
    CmpOp op = CmpOp::Eq;
    Literal literal;
  };

  const std::string& text() const noexcept { return text_; }
  const std::vector<Node>& nodes() const noexcept { return nodes_; }
  std::size_t root() const noexcept { return root_; }
  std::uint64_t type_hash() const noexcept { return type_hash_; }

  /// Values must conform to the type the expression was parsed against.
  bool eval(const transport::FieldValues& values) const;

  /// Fully parenthesized rendering; reparses to the same tree.
  std::string to_string(const transport::TypeDescriptor& type) const;

 private:
  friend FilterExpression parse_filter(std::string_view, const transport::TypeDescriptor&);
  bool eval_node(std::size_t idx, const transport::FieldValues& values) const;

  std::string text_;
  std::vector<Node> nodes_;
  std::size_t root_ = 0;
  std::uint64_t type_hash_ = 0;
};

/// Throws Errc::ParseError (with byte offset) or Errc::TypeError naming the
/// field/operator pair.
FilterExpression parse_filter(std::string_view text, const transport::TypeDescriptor& type);

/// Three-way comparison of a field value against a literal of a compatible
/// class; exact across integer widths. Returns nullopt for unordered (NaN).
std::optional<int> compare_value(const transport::FieldValue& field, const Literal& literal);

}  // namespace mmog::dcps
