#include "mmog/services/sql.hpp"

#include <algorithm>
#include <cctype>
#include <mutex>

#include "mmog/common/error.hpp"
#include "mmog/services/date.hpp"

namespace mmog::services::sql {

namespace {

struct Token {
  enum Kind { Ident, String, Number, Punct, End } kind;
  std::string text;
  std::size_t offset;
};

std::string upper(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

std::vector<Token> tokenize(std::string_view in) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < in.size()) {
    const char c = in[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
    } else if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      const std::size_t start = i;
      while (i < in.size() && (std::isalnum(static_cast<unsigned char>(in[i])) || in[i] == '_')) ++i;
      out.push_back({Token::Ident, std::string(in.substr(start, i - start)), start});
    } else if (std::isdigit(static_cast<unsigned char>(c))) {
      const std::size_t start = i;
      while (i < in.size() && std::isdigit(static_cast<unsigned char>(in[i]))) ++i;
      out.push_back({Token::Number, std::string(in.substr(start, i - start)), start});
    } else if (c == '\'') {
      const std::size_t start = i++;
      std::string s;
      for (;;) {
        if (i >= in.size()) throw Error(Errc::ParseError, "unterminated string literal", start);
        if (in[i] == '\'') {
          if (i + 1 < in.size() && in[i + 1] == '\'') {
            s += '\'';
            i += 2;
            continue;
          }
          ++i;
          break;
        }
        s += in[i++];
      }
      out.push_back({Token::String, std::move(s), start});
    } else if (c == '=' && i + 1 < in.size() && in[i + 1] == '=') {
      out.push_back({Token::Punct, "==", i});
      i += 2;
    } else if (std::string_view("(),;=*").find(c) != std::string_view::npos) {
      out.push_back({Token::Punct, std::string(1, c), i++});
    } else {
      throw Error(Errc::ParseError, std::string("unexpected character '") + c + "'", i);
    }
  }
  out.push_back({Token::End, "", in.size()});
  return out;
}

class Parser {
 public:
  explicit Parser(std::vector<Token> toks) : t_(std::move(toks)) {}

  bool at_end() const { return t_[i_].kind == Token::End; }

  Statement statement() {
    const auto& verb = peek();
    if (keyword("CREATE")) {
      if (keyword("DATABASE")) return CreateDatabase{ident("database name")};
      if (keyword("TABLE")) return create_table();
      fail("expected DATABASE or TABLE");
    }
    if (keyword("INSERT")) return insert();
    if (keyword("SELECT")) return select();
    throw Error(Errc::ParseError, "unsupported statement '" + verb.text + "'", verb.offset);
  }

  // Consumes an optional ';'. Returns whether one was present.
  bool terminator() { return punct(";"); }

  void expect_end() {
    if (!at_end()) fail("unexpected trailing input");
  }

 private:
  const Token& peek() const { return t_[i_]; }
  [[noreturn]] void fail(const std::string& msg) const { throw Error(Errc::ParseError, msg, peek().offset); }

  bool keyword(const char* kw) {
    if (peek().kind == Token::Ident && upper(peek().text) == kw) {
      ++i_;
      return true;
    }
    return false;
  }
  void expect_keyword(const char* kw) {
    if (!keyword(kw)) fail(std::string("expected ") + kw);
  }
  bool punct(const char* p) {
    if (peek().kind == Token::Punct && peek().text == p) {
      ++i_;
      return true;
    }
    return false;
  }
  void expect_punct(const char* p) {
    if (!punct(p)) fail(std::string("expected '") + p + "'");
  }
  std::string ident(const char* what) {
    if (peek().kind != Token::Ident) fail(std::string("expected ") + what);
    return t_[i_++].text;
  }

  CreateTable create_table() {
    CreateTable ct;
    ct.name = ident("table name");
    expect_punct("(");
    do {
      ColumnDef c;
      c.name = ident("column name");
      if (keyword("VARCHAR")) {
        c.type = ColumnType::Varchar;
        expect_punct("(");
        if (peek().kind != Token::Number) fail("expected VARCHAR length");
        const auto& num = t_[i_++];
        if (num.text.size() > 9 || std::stoul(num.text) == 0)
          throw Error(Errc::ParseError, "bad VARCHAR length", num.offset);
        c.length = static_cast<std::uint32_t>(std::stoul(num.text));
        expect_punct(")");
      } else if (keyword("DATE")) {
        c.type = ColumnType::Date;
      } else {
        fail("expected column type VARCHAR(n) or DATE");
      }
      if (keyword("NOT")) {
        expect_keyword("NULL");
        c.not_null = true;
      }
      for (const auto& prev : ct.columns)
        if (prev.name == c.name) fail("duplicate column '" + c.name + "'");
      ct.columns.push_back(std::move(c));
    } while (punct(","));
    expect_punct(")");
    return ct;
  }

  std::optional<std::string> literal() {
    if (peek().kind == Token::String) return t_[i_++].text;
    if (keyword("NULL")) return std::nullopt;
    fail("expected a quoted literal or NULL");
  }

  Insert insert() {
    Insert ins;
    expect_keyword("INTO");
    ins.table = ident("table name");
    keyword("VALUES");
    expect_punct("(");
    do {
      ins.values.push_back(literal());
    } while (punct(","));
    expect_punct(")");
    return ins;
  }

  Select select() {
    Select s;
    if (!punct("*")) {
      do {
        s.columns.push_back(ident("column name"));
      } while (punct(","));
    }
    expect_keyword("FROM");
    s.table = ident("table name");
    if (keyword("WHERE")) {
      auto col = ident("column name");
      if (!punct("==") && !punct("=")) fail("expected '=='");
      if (peek().kind != Token::String) fail("expected a quoted literal");
      s.where.emplace(std::move(col), t_[i_++].text);
    }
    return s;
  }

  std::vector<Token> t_;
  std::size_t i_ = 0;
};

std::size_t edit_distance(std::string_view a, std::string_view b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

std::optional<std::string> to_stored(const ColumnDef& c, const std::optional<std::string>& v) {
  if (!v) {
    if (c.not_null) throw Error(Errc::ConstraintViolation, "column '" + c.name + "' is NOT NULL");
    return std::nullopt;
  }
  if (c.type == ColumnType::Date) return Date::parse(*v).iso();
  if (v->size() > c.length)
    throw Error(Errc::ConstraintViolation,
                "value for '" + c.name + "' exceeds VARCHAR(" + std::to_string(c.length) + ")");
  return v;
}

std::optional<std::string> to_shown(const ColumnDef& c, const std::optional<std::string>& v) {
  if (!v || c.type != ColumnType::Date) return v;
  const auto& s = *v;  // YYYY-MM-DD
  return s.substr(5, 2) + "/" + s.substr(8, 2) + "/" + s.substr(0, 4);
}

}  // namespace

Statement parse_sql(std::string_view text) {
  Parser p(tokenize(text));
  auto s = p.statement();
  p.terminator();
  p.expect_end();
  return s;
}

std::vector<Statement> parse_script(std::string_view text) {
  Parser p(tokenize(text));
  std::vector<Statement> out;
  while (!p.at_end()) {
    out.push_back(p.statement());
    if (!p.terminator()) {
      p.expect_end();
      break;
    }
  }
  return out;
}

std::size_t Database::resolve_column(const std::vector<ColumnDef>& columns, const std::string& name,
                                     std::vector<std::string>* notes) {
  for (std::size_t i = 0; i < columns.size(); ++i)
    if (columns[i].name == name) return i;
  std::optional<std::size_t> near;
  bool ambiguous = false;
  if (name.size() >= 6) {
    for (std::size_t i = 0; i < columns.size(); ++i)
      if (edit_distance(columns[i].name, name) <= 2) {
        ambiguous = ambiguous || near.has_value();
        near = i;
      }
  }
  if (!near || ambiguous) throw Error(Errc::UnknownColumn, "unknown column '" + name + "'");
  if (notes) notes->push_back(name + " -> " + columns[*near].name);
  return *near;
}

Result Database::execute(const Statement& stmt) {
  if (auto* s = std::get_if<Select>(&stmt)) {
    std::shared_lock lk(mu_);
    return select(*s);
  }
  std::unique_lock lk(mu_);
  Result r;
  if (auto* db = std::get_if<CreateDatabase>(&stmt)) {
    database_ = db->name;
  } else if (auto* ct = std::get_if<CreateTable>(&stmt)) {
    if (tables_.count(ct->name)) throw Error(Errc::TableExists, "table '" + ct->name + "' exists");
    tables_.emplace(ct->name, Table{ct->columns, {}});
  } else if (auto* ins = std::get_if<Insert>(&stmt)) {
    auto it = tables_.find(ins->table);
    if (it == tables_.end()) throw Error(Errc::UnknownTable, "unknown table '" + ins->table + "'");
    auto& t = it->second;
    if (ins->values.size() != t.columns.size())
      throw Error(Errc::ArityMismatch, "expected " + std::to_string(t.columns.size()) + " values, got " +
                                           std::to_string(ins->values.size()));
    std::vector<std::optional<std::string>> row;
    for (std::size_t i = 0; i < t.columns.size(); ++i) row.push_back(to_stored(t.columns[i], ins->values[i]));
    auto key = std::find_if(t.columns.begin(), t.columns.end(), [](const ColumnDef& c) { return c.not_null; });
    if (key != t.columns.end()) {
      const auto k = static_cast<std::size_t>(key - t.columns.begin());
      for (const auto& existing : t.rows)
        if (existing[k] == row[k])
          throw Error(Errc::ConstraintViolation, "duplicate " + key->name + " '" + row[k].value_or("") + "'");
    }
    t.rows.push_back(std::move(row));
    r.affected = 1;
  }
  return r;
}

Result Database::select(const Select& s) const {
  auto it = tables_.find(s.table);
  if (it == tables_.end()) throw Error(Errc::UnknownTable, "unknown table '" + s.table + "'");
  const auto& t = it->second;
  Result r;
  std::vector<std::size_t> cols;
  if (s.columns.empty()) {
    for (std::size_t i = 0; i < t.columns.size(); ++i) cols.push_back(i);
  } else {
    for (const auto& c : s.columns) cols.push_back(resolve_column(t.columns, c, &r.notes));
  }
  for (auto i : cols) r.columns.push_back(t.columns[i].name);

  std::optional<std::size_t> where_col;
  std::optional<std::string> where_val;
  if (s.where) {
    where_col = resolve_column(t.columns, s.where->first, &r.notes);
    const auto& c = t.columns[*where_col];
    where_val = c.type == ColumnType::Date ? Date::parse(s.where->second).iso() : s.where->second;
  }
  for (const auto& row : t.rows) {
    if (where_col && row[*where_col] != where_val) continue;
    std::vector<std::optional<std::string>> out;
    for (auto i : cols) out.push_back(to_shown(t.columns[i], row[i]));
    r.rows.push_back(std::move(out));
  }
  return r;
}

std::vector<Result> Database::execute_script(std::string_view text) {
  std::vector<Result> out;
  for (const auto& s : parse_script(text)) out.push_back(execute(s));
  return out;
}

std::optional<Database::Table> Database::table(const std::string& name) const {
  std::shared_lock lk(mu_);
  auto it = tables_.find(name);
  if (it == tables_.end()) return std::nullopt;
  return it->second;
}

}  // namespace mmog::services::sql
