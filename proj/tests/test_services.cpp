#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "mmog/common/error.hpp"
#include "mmog/services/accounts.hpp"
#include "mmog/services/sql.hpp"

using namespace mmog;
using namespace mmog::services;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Errc code_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return Errc::Precondition;
}

const Date kBefore2014{2014, 1, 15};

}  // namespace

TEST_CASE("dates") {
  auto d = Date::parse("09/10/2014");
  CHECK(d.year == 2014);
  CHECK(d.month == 9u);
  CHECK(d.day == 10u);
  CHECK(d.iso() == "2014-09-10");
  CHECK(d.mdy() == "09/10/2014");
  CHECK(Date::parse("02/29/2012").day == 29u);
  for (auto bad : {"2/29/2013", "02/29/2013", "13/01/2000", "00/10/2000", "09-10-2014", "09/10/14", ""})
    CHECK(code_of([&] { Date::parse(bad); }) == Errc::ConstraintViolation);
  CHECK(Date::from_time(d.end_us() - 1) == d);
  CHECK(Date::from_time(d.end_us()) == Date{2014, 9, 11});
}

TEST_CASE("sql: statements parse") {
  const auto script = slurp("fixtures/accounts.sql");
  auto stmts = sql::parse_script(script);
  REQUIRE(stmts.size() == 4);
  CHECK(std::get<sql::CreateDatabase>(stmts[0]).name == "game_data");
  const auto& ct = std::get<sql::CreateTable>(stmts[1]);
  CHECK(ct.name == "user_accounts");
  REQUIRE(ct.columns.size() == 5);
  int not_null = 0;
  for (const auto& c : ct.columns) not_null += c.not_null;
  CHECK(not_null == 3);
  CHECK(ct.columns[0] == sql::ColumnDef{"user_login", sql::ColumnType::Varchar, 25, true});
  CHECK(ct.columns[4].type == sql::ColumnType::Date);
  CHECK(std::get<sql::Insert>(stmts[2]).values.size() == 5);

  auto sel = std::get<sql::Select>(sql::parse_sql(slurp("fixtures/select_max.sql")));
  CHECK(sel.columns == std::vector<std::string>{"user_privilege", "account_expiration_date"});
  CHECK(sel.table == "user_accounts");
  REQUIRE(sel.where);
  CHECK(sel.where->first == "user_login");
  CHECK(sel.where->second == "Max");
}

TEST_CASE("sql: parse errors") {
  for (auto text : {"DROP TABLE x", "SELECT FROM t", "INSERT user_accounts ('a')", "CREATE TABLE t (a INT)",
                    "SELECT a FROM t WHERE a == 'unterminated", "SELECT a FROM t WHERE a < 'x'"}) {
    CAPTURE(text);
    try {
      sql::parse_sql(text);
      FAIL("parsed");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::ParseError);
      CHECK(e.offset().has_value());
    }
  }
  try {
    sql::parse_sql("DROP TABLE x");
  } catch (const Error& e) {
    CHECK(*e.offset() == 0);
  }
}

TEST_CASE("sql: execute") {
  sql::Database db;
  db.execute_script(slurp("fixtures/accounts.sql"));
  CHECK(db.database() == "game_data");

  auto r = db.execute(slurp("fixtures/select_max.sql"));
  REQUIRE(r.rows.size() == 1);
  CHECK(r.rows[0][0] == "Full");
  CHECK(r.rows[0][1] == "09/10/2014");
  CHECK(r.notes.size() == 1);

  CHECK(db.execute("SELECT user_login FROM user_accounts WHERE user_login == 'Nobody'").rows.empty());
  auto all = db.execute("SELECT * FROM user_accounts");
  REQUIRE(all.rows.size() == 2);
  CHECK(all.rows[1][0] == "John123");

  CHECK(code_of([&] {
          db.execute("INSERT INTO user_accounts ('Max', 'x', 'Full', '01/01/2010', '01/01/2011')");
        }) == Errc::ConstraintViolation);
  CHECK(code_of([&] { db.execute("INSERT INTO user_accounts ('Ann', 'x')"); }) == Errc::ArityMismatch);
  CHECK(code_of([&] {
          db.execute("INSERT INTO user_accounts ('Ann', 'x', 'Full', '2010-01-01', '01/01/2011')");
        }) == Errc::ConstraintViolation);
  CHECK(code_of([&] {
          db.execute("INSERT INTO user_accounts ('Ann', NULL, 'Full', '01/01/2010', '01/01/2011')");
        }) == Errc::ConstraintViolation);
  CHECK(code_of([&] {
          db.execute("INSERT INTO user_accounts ('abcdefghijklmnopqrstuvwxyz', 'x', 'Full', NULL, NULL)");
        }) == Errc::ConstraintViolation);
  CHECK(code_of([&] { db.execute("SELECT a FROM missing"); }) == Errc::UnknownTable);
  CHECK(code_of([&] { db.execute("SELECT colour FROM user_accounts"); }) == Errc::UnknownColumn);
  CHECK(code_of([&] { db.execute("CREATE TABLE user_accounts (a DATE)"); }) == Errc::TableExists);
  CHECK(db.execute("INSERT INTO user_accounts ('Ann', 'x', 'basic', NULL, NULL)").affected == 1);
}

TEST_CASE("accounts: user_check") {
  AccountStore store;
  store.load_sql_script(slurp("fixtures/accounts.sql"));
  REQUIRE(store.size() == 2);
  CHECK(store.find("Max")->password_hash.rfind("$argon2id$", 0) == 0);
  CHECK(store.find("Max")->user_privilege == "FULL");

  auto ok = store.user_check("Max", "game123", kBefore2014);
  CHECK(ok.match);
  CHECK(ok.privilege == "FULL");
  CHECK(ok.expiration == Date{2014, 9, 10});
  CHECK_FALSE(store.user_check("Max", "wrong", kBefore2014).match);
  CHECK_FALSE(store.user_check("Nobody", "game123", kBefore2014).match);
  CHECK_FALSE(store.user_check("John123", "helloworld", kBefore2014).match);
  CHECK(store.user_check("John123", "helloworld", Date{2013, 5, 11}).match);
  CHECK_FALSE(store.user_check("Max", "game123", Date{2014, 9, 11}).match);
  CHECK(store.reads() == 6);
}

TEST_CASE("accounts: validation and jsonl round trip") {
  AccountStore store;
  CHECK(code_of([&] { store.add("a", "p", "ADMIN", {2010, 1, 1}, {2011, 1, 1}); }) == Errc::ConstraintViolation);
  CHECK(code_of([&] { store.add("a", "p", "full", {2011, 1, 1}, {2010, 1, 1}); }) == Errc::ConstraintViolation);
  CHECK(code_of([&] { store.add(std::string(26, 'a'), "p", "full", {2010, 1, 1}, {2011, 1, 1}); }) ==
        Errc::ConstraintViolation);

  store.load_jsonl("fixtures/accounts.jsonl");
  REQUIRE(store.size() == 2);
  CHECK(code_of([&] { store.load_jsonl("fixtures/accounts.jsonl"); }) == Errc::FixtureError);

  auto path = std::filesystem::temp_directory_path() / "mmog_accounts_roundtrip.jsonl";
  store.save_jsonl(path);
  AccountStore back;
  back.load_jsonl(path);
  std::filesystem::remove(path);
  CHECK(back.size() == 2);
  CHECK(back.find("Max")->password_hash == store.find("Max")->password_hash);
  CHECK(back.user_check("Max", "game123", kBefore2014).match);

  auto bad = std::filesystem::temp_directory_path() / "mmog_bad.jsonl";
  std::ofstream(bad) << "{\"user_login\": \"x\"}\n";
  CHECK(code_of([&] { AccountStore().load_jsonl(bad); }) == Errc::FixtureError);
  std::ofstream(bad) << "not json\n";
  CHECK(code_of([&] { AccountStore().load_jsonl(bad); }) == Errc::FixtureError);
  std::filesystem::remove(bad);
  CHECK(code_of([&] { AccountStore().load_jsonl("fixtures/missing.jsonl"); }) == Errc::FixtureError);
}

TEST_CASE("cards") {
  CHECK(luhn_valid("4111111111111111"));
  CHECK(luhn_valid("378282246310005"));
  CHECK_FALSE(luhn_valid("4111111111111112"));
  CHECK_FALSE(luhn_valid("41111111111"));
  CHECK_FALSE(luhn_valid("4111-1111-1111-1111"));
  // Hand-checked: 79927398713 is the classic valid vector, one digit short of 12.
  CHECK_FALSE(luhn_valid("79927398713"));
  CHECK(luhn_valid("000079927398713"));

  CHECK(parse_card_expiry("06/15") == std::pair{6u, 2015});
  CHECK(parse_card_expiry("12/2016") == std::pair{12u, 2016});
  CHECK_FALSE(parse_card_expiry("13/16"));
  CHECK_FALSE(parse_card_expiry("1/16"));
  CHECK_FALSE(parse_card_expiry("01-16"));

  CardStore cards;
  cards.load_jsonl("fixtures/cards.jsonl");
  REQUIRE(cards.size() == 4);
  CHECK(cards.card_check("4111111111111111", "12/2016", kBefore2014).approved);
  CHECK(cards.card_check("4111111111111111", "12/16", kBefore2014).approved);
  CHECK(cards.card_check("5555555555554444", "12/2016", kBefore2014).reason == "DECLINED");
  CHECK(cards.card_check("4111111111111112", "12/2016", kBefore2014).reason == "LUHN_INVALID");
  CHECK(cards.card_check("4012888888881881", "01/2012", kBefore2014).reason == "EXPIRED");
  CHECK(cards.card_check("6011111111111117", "12/2016", kBefore2014).reason == "UNKNOWN_CARD");
  CHECK(cards.card_check("4111111111111111", "11/2016", kBefore2014).reason == "EXPIRY_MISMATCH");
  CHECK(cards.card_check("378282246310005", "06/15", Date{2015, 6, 30}).approved);
  CHECK_FALSE(cards.card_check("378282246310005", "06/15", Date{2015, 7, 1}).approved);
  CHECK(cards.reads() == 9);
}
