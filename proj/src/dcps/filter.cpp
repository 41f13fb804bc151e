#include "mmog/dcps/filter.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <functional>

#include "mmog/common/error.hpp"

namespace mmog::dcps {

using transport::FieldKind;
using transport::FieldValue;
using transport::FieldValues;
using transport::TypeDescriptor;

std::string_view op_symbol(CmpOp op) noexcept {
  switch (op) {
    case CmpOp::Eq: return "==";
    case CmpOp::Ne: return "!=";
    case CmpOp::Lt: return "<";
    case CmpOp::Le: return "<=";
    case CmpOp::Gt: return ">";
    case CmpOp::Ge: return ">=";
  }
  return "?";
}

namespace {

enum class Tok { Ident, And, Or, Not, LParen, RParen, Op, Int, Float, String, True, False, End };

struct Token {
  Tok kind;
  std::size_t offset;
  std::string text;
  CmpOp op = CmpOp::Eq;
};

bool ieq(std::string_view a, std::string_view b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::toupper(static_cast<unsigned char>(a[i])) != std::toupper(static_cast<unsigned char>(b[i]))) return false;
  return true;
}

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  Token next() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    const std::size_t start = pos_;
    if (pos_ >= src_.size()) return {Tok::End, start, {}};
    const char c = src_[pos_];
    if (c == '(') return ++pos_, Token{Tok::LParen, start, "("};
    if (c == ')') return ++pos_, Token{Tok::RParen, start, ")"};
    if (c == '=' || c == '!' || c == '<' || c == '>') return op(start);
    if (c == '\'') return string(start);
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '-' || c == '.') return number(start);
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      while (pos_ < src_.size() && (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_' ||
                                    src_[pos_] == '.'))
        ++pos_;
      std::string word(src_.substr(start, pos_ - start));
      if (ieq(word, "AND")) return {Tok::And, start, word};
      if (ieq(word, "OR")) return {Tok::Or, start, word};
      if (ieq(word, "NOT")) return {Tok::Not, start, word};
      if (ieq(word, "TRUE")) return {Tok::True, start, word};
      if (ieq(word, "FALSE")) return {Tok::False, start, word};
      return {Tok::Ident, start, word};
    }
    throw Error(Errc::ParseError, std::string("unexpected character '") + c + "'", start);
  }

 private:
  Token op(std::size_t start) {
    auto two = src_.substr(pos_, 2);
    Token t{Tok::Op, start, {}};
    if (two == "==") t.op = CmpOp::Eq;
    else if (two == "!=") t.op = CmpOp::Ne;
    else if (two == "<=") t.op = CmpOp::Le;
    else if (two == ">=") t.op = CmpOp::Ge;
    else if (src_[pos_] == '<') t.op = CmpOp::Lt;
    else if (src_[pos_] == '>') t.op = CmpOp::Gt;
    else throw Error(Errc::ParseError, "unknown operator", start);
    pos_ += (t.op == CmpOp::Lt || t.op == CmpOp::Gt) ? 1 : 2;
    t.text = std::string(op_symbol(t.op));
    return t;
  }

  Token string(std::size_t start) {
    ++pos_;
    std::string out;
    for (;;) {
      if (pos_ >= src_.size()) throw Error(Errc::ParseError, "unterminated string literal", start);
      char c = src_[pos_++];
      if (c == '\'') {
        if (pos_ < src_.size() && src_[pos_] == '\'') {
          out.push_back('\'');
          ++pos_;
          continue;
        }
        break;
      }
      out.push_back(c);
    }
    if (!transport::valid_utf8(out)) throw Error(Errc::ParseError, "string literal is not valid UTF-8", start);
    return {Tok::String, start, out};
  }

  Token number(std::size_t start) {
    bool is_float = false;
    if (src_[pos_] == '-') ++pos_;
    auto digits = [&] {
      std::size_t n = 0;
      while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_, ++n;
      return n;
    };
    std::size_t n = digits();
    if (pos_ < src_.size() && src_[pos_] == '.') {
      is_float = true;
      ++pos_;
      n += digits();
    }
    if (n == 0) throw Error(Errc::ParseError, "malformed number", start);
    if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
      is_float = true;
      ++pos_;
      if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) ++pos_;
      if (digits() == 0) throw Error(Errc::ParseError, "malformed exponent", start);
    }
    if (pos_ < src_.size() && (std::isalpha(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
      throw Error(Errc::ParseError, "malformed number", start);
    return {is_float ? Tok::Float : Tok::Int, start, std::string(src_.substr(start, pos_ - start))};
  }

  std::string_view src_;
  std::size_t pos_ = 0;
};

class Parser {
 public:
  Parser(std::string_view src, const TypeDescriptor& type, std::vector<FilterExpression::Node>& nodes)
      : lex_(src), type_(type), nodes_(nodes) {
    advance();
  }

  std::size_t parse() {
    auto root = parse_or();
    if (cur_.kind != Tok::End) fail("unexpected '" + cur_.text + "'");
    return root;
  }

 private:
  using Node = FilterExpression::Node;

  void advance() { cur_ = lex_.next(); }
  [[noreturn]] void fail(const std::string& msg) { throw Error(Errc::ParseError, msg, cur_.offset); }

  std::size_t push(Node n) {
    nodes_.push_back(std::move(n));
    return nodes_.size() - 1;
  }

  std::size_t parse_or() {
    auto first = parse_and();
    if (cur_.kind != Tok::Or) return first;
    Node n{Node::Kind::Or, {first}};
    while (cur_.kind == Tok::Or) {
      advance();
      n.children.push_back(parse_and());
    }
    return push(std::move(n));
  }

  std::size_t parse_and() {
    auto first = parse_not();
    if (cur_.kind != Tok::And) return first;
    Node n{Node::Kind::And, {first}};
    while (cur_.kind == Tok::And) {
      advance();
      n.children.push_back(parse_not());
    }
    return push(std::move(n));
  }

  std::size_t parse_not() {
    if (cur_.kind == Tok::Not) {
      advance();
      auto child = parse_not();
      return push(Node{Node::Kind::Not, {child}});
    }
    if (cur_.kind == Tok::LParen) {
      advance();
      auto inner = parse_or();
      if (cur_.kind != Tok::RParen) fail("expected ')'");
      advance();
      return inner;
    }
    return parse_cmp();
  }

  std::size_t parse_cmp() {
    if (cur_.kind != Tok::Ident) fail(cur_.kind == Tok::End ? "unexpected end of expression" : "expected field name");
    const Token ident = cur_;
    advance();
    if (cur_.kind != Tok::Op) fail("expected comparison operator");
    const CmpOp op = cur_.op;
    advance();
    const Token lit = cur_;
    Literal literal;
    switch (lit.kind) {
      case Tok::Int: literal = int_literal(lit); break;
      case Tok::Float: literal.value = std::strtod(lit.text.c_str(), nullptr); break;
      case Tok::String: literal.value = lit.text; break;
      case Tok::True: literal.value = true; break;
      case Tok::False: literal.value = false; break;
      default: fail("expected literal");
    }
    advance();

    auto field = type_.index_of(ident.text);
    if (!field) throw Error(Errc::TypeError, "unknown field '" + ident.text + "'", ident.offset);
    check_types(ident, *field, op, literal);
    Node n{Node::Kind::Cmp, {}};
    n.field = *field;
    n.op = op;
    n.literal = std::move(literal);
    return push(std::move(n));
  }

  Literal int_literal(const Token& t) {
    Literal l;
    if (t.text[0] == '-') {
      std::int64_t v{};
      auto [p, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), v);
      if (ec != std::errc{}) throw Error(Errc::ParseError, "integer literal out of range", t.offset);
      l.value = v;
    } else {
      std::uint64_t v{};
      auto [p, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), v);
      if (ec != std::errc{}) throw Error(Errc::ParseError, "integer literal out of range", t.offset);
      l.value = v;
    }
    return l;
  }

  void check_types(const Token& ident, std::size_t field, CmpOp op, const Literal& lit) {
    const FieldKind kind = type_.fields()[field].kind;
    const bool lit_num = std::holds_alternative<std::int64_t>(lit.value) ||
                         std::holds_alternative<std::uint64_t>(lit.value) || std::holds_alternative<double>(lit.value);
    const std::string pair = "'" + ident.text + " " + std::string(op_symbol(op)) + "'";
    auto mismatch = [&] {
      throw Error(Errc::TypeError,
                  "field " + pair + " of kind " + std::string(transport::kind_name(kind)) + " cannot take this literal",
                  ident.offset);
    };
    if (kind == FieldKind::String) {
      if (op != CmpOp::Eq && op != CmpOp::Ne)
        throw Error(Errc::TypeError, "string field only supports == and !=: " + pair, ident.offset);
      if (!std::holds_alternative<std::string>(lit.value)) mismatch();
    } else if (kind == FieldKind::Bool) {
      if (!std::holds_alternative<bool>(lit.value)) mismatch();
    } else if (!lit_num) {
      mismatch();
    }
  }

  Lexer lex_;
  const TypeDescriptor& type_;
  std::vector<Node>& nodes_;
  Token cur_{Tok::End, 0, {}};
};

template <class A, class B>
int three_way(A a, B b) {
  return a < b ? -1 : (b < a ? 1 : 0);
}

std::string quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') out += "''";
    else out.push_back(c);
  }
  return out + "'";
}

}  // namespace

std::optional<int> compare_value(const FieldValue& field, const Literal& literal) {
  if (auto s = std::get_if<std::string>(&field)) {
    auto l = std::get_if<std::string>(&literal.value);
    return l ? std::optional<int>(three_way(*s, *l)) : std::nullopt;
  }
  if (auto b = std::get_if<bool>(&field)) {
    auto l = std::get_if<bool>(&literal.value);
    return l ? std::optional<int>(three_way(*b, *l)) : std::nullopt;
  }
  // Numeric: integers compare through __int128; anything involving a float
  // compares as long double, which holds every 64-bit integer exactly.
  const bool field_int = !std::holds_alternative<float>(field) && !std::holds_alternative<double>(field);
  const bool lit_int = !std::holds_alternative<double>(literal.value);
  if (std::holds_alternative<bool>(literal.value) || std::holds_alternative<std::string>(literal.value))
    return std::nullopt;
  auto as_i128 = [](const auto& v) -> __int128 {
    return std::visit(
        [](const auto& x) -> __int128 {
          using T = std::decay_t<decltype(x)>;
          if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) return static_cast<__int128>(x);
          else return 0;
        },
        v);
  };
  auto as_ld = [](const auto& v) -> long double {
    return std::visit(
        [](const auto& x) -> long double {
          using T = std::decay_t<decltype(x)>;
          if constexpr (std::is_arithmetic_v<T> && !std::is_same_v<T, bool>) return static_cast<long double>(x);
          else return 0;
        },
        v);
  };
  if (field_int && lit_int) return three_way(as_i128(field), as_i128(literal.value));
  const long double a = as_ld(field);
  const long double b = as_ld(literal.value);
  if (std::isnan(a) || std::isnan(b)) return std::nullopt;
  return three_way(a, b);
}

bool FilterExpression::eval(const FieldValues& values) const { return eval_node(root_, values); }

bool FilterExpression::eval_node(std::size_t idx, const FieldValues& values) const {
  const Node& n = nodes_[idx];
  switch (n.kind) {
    case Node::Kind::Or: {
      bool out = false;
      for (auto c : n.children) out = eval_node(c, values) || out;
      return out;
    }
    case Node::Kind::And: {
      bool out = true;
      for (auto c : n.children) out = eval_node(c, values) && out;
      return out;
    }
    case Node::Kind::Not: return !eval_node(n.children[0], values);
    case Node::Kind::Cmp: {
      auto c = compare_value(values[n.field], n.literal);
      if (!c) return n.op == CmpOp::Ne;
      switch (n.op) {
        case CmpOp::Eq: return *c == 0;
        case CmpOp::Ne: return *c != 0;
        case CmpOp::Lt: return *c < 0;
        case CmpOp::Le: return *c <= 0;
        case CmpOp::Gt: return *c > 0;
        case CmpOp::Ge: return *c >= 0;
      }
    }
  }
  return false;
}

std::string FilterExpression::to_string(const TypeDescriptor& type) const {
  std::function<std::string(std::size_t)> render = [&](std::size_t idx) -> std::string {
    const Node& n = nodes_[idx];
    switch (n.kind) {
      case Node::Kind::Or:
      case Node::Kind::And: {
        std::string out = "(";
        for (std::size_t i = 0; i < n.children.size(); ++i) {
          if (i) out += n.kind == Node::Kind::Or ? " OR " : " AND ";
          out += render(n.children[i]);
        }
        return out + ")";
      }
      case Node::Kind::Not: return "(NOT " + render(n.children[0]) + ")";
      case Node::Kind::Cmp: {
        std::string lit = std::visit(
            [](const auto& v) -> std::string {
              using T = std::decay_t<decltype(v)>;
              if constexpr (std::is_same_v<T, std::string>) return quote(v);
              else if constexpr (std::is_same_v<T, bool>) return v ? "TRUE" : "FALSE";
              else if constexpr (std::is_same_v<T, double>) {
                char buf[64];
                auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::scientific);
                return std::string(buf, p);
              } else return std::to_string(v);
            },
            n.literal.value);
        return type.fields()[n.field].name + " " + std::string(op_symbol(n.op)) + " " + lit;
      }
    }
    return {};
  };
  return render(root_);
}

FilterExpression parse_filter(std::string_view text, const TypeDescriptor& type) {
  FilterExpression expr;
  expr.text_ = std::string(text);
  expr.type_hash_ = type.hash();
  Parser parser(text, type, expr.nodes_);
  expr.root_ = parser.parse();
  return expr;
}

}  // namespace mmog::dcps
