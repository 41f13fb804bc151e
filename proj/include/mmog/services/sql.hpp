#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace mmog::services::sql {

enum class ColumnType : std::uint8_t { Varchar, Date };

struct ColumnDef {
  std::string name;
  ColumnType type = ColumnType::Varchar;
  std::uint32_t length = 0;  // VARCHAR(n)
  bool not_null = false;

  bool operator==(const ColumnDef&) const = default;
};

struct CreateDatabase {
  std::string name;
};
struct CreateTable {
  std::string name;
  std::vector<ColumnDef> columns;
};
struct Insert {
  std::string table;
  std::vector<std::optional<std::string>> values;  // nullopt = NULL
};
struct Select {
  std::vector<std::string> columns;  // empty = *
  std::string table;
  std::optional<std::pair<std::string, std::string>> where;  // column == literal
};

using Statement = std::variant<CreateDatabase, CreateTable, Insert, Select>;

/// One statement, optional trailing ';'. Throws Errc::ParseError with offset.
Statement parse_sql(std::string_view text);
/// ';'-separated statements; the last terminator is optional.
std::vector<Statement> parse_script(std::string_view text);

struct Result {
  std::vector<std::string> columns;
  std::vector<std::vector<std::optional<std::string>>> rows;
  std::size_t affected = 0;
  /// Column names that were resolved to a near-identical declared name.
  std::vector<std::string> notes;
};

/// In-memory store for the SQL subset. DATE values are kept as ISO dates and
/// rendered back as MM/DD/YYYY. The first NOT NULL column of each table is
/// its unique key. Reads run concurrently, writes are serialized.
class Database {
 public:
  struct Table {
    std::vector<ColumnDef> columns;
    std::vector<std::vector<std::optional<std::string>>> rows;  // stored form
  };

  /// Throws TABLE_EXISTS, UNKNOWN_TABLE, UNKNOWN_COLUMN, ARITY_MISMATCH or
  /// CONSTRAINT_VIOLATION.
  Result execute(const Statement& stmt);
  Result execute(std::string_view text) { return execute(parse_sql(text)); }
  std::vector<Result> execute_script(std::string_view text);

  const std::string& database() const { return database_; }
  std::optional<Table> table(const std::string& name) const;

  /// Exact match, else the single declared column within edit distance 2
  /// (never for names shorter than 6 characters). Throws UNKNOWN_COLUMN.
  static std::size_t resolve_column(const std::vector<ColumnDef>& columns, const std::string& name,
                                    std::vector<std::string>* notes = nullptr);

 private:
  Result select(const Select& s) const;

  mutable std::shared_mutex mu_;
  std::string database_;
  std::map<std::string, Table> tables_;
};

}  // namespace mmog::services::sql
