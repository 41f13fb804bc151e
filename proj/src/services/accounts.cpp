#include "mmog/services/accounts.hpp"

#include <sodium.h>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <mutex>

#include "json.hpp"
#include "mmog/common/error.hpp"

namespace mmog::services {

using nlohmann::json;

namespace {

void ensure_sodium() {
  static std::once_flag once;
  std::call_once(once, [] {
    if (sodium_init() < 0) throw Error(Errc::Precondition, "libsodium initialisation failed");
  });
}

std::string upper(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

void check_length(const std::string& field, const std::string& value) {
  if (value.size() > kMaxAccountField)
    throw Error(Errc::ConstraintViolation, field + " exceeds " + std::to_string(kMaxAccountField) + " characters");
}

template <class F>
void for_each_json_line(const std::filesystem::path& path, F&& f) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::FixtureError, "cannot open " + path.string());
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      f(json::parse(line));
    } catch (const json::exception& e) {
      throw Error(Errc::FixtureError, path.string() + ":" + std::to_string(n) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(Errc::FixtureError, path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
}

}  // namespace

std::string hash_password(const std::string& password) {
  ensure_sodium();
  char out[crypto_pwhash_STRBYTES];
  if (crypto_pwhash_str(out, password.data(), password.size(), crypto_pwhash_OPSLIMIT_INTERACTIVE,
                        crypto_pwhash_MEMLIMIT_INTERACTIVE) != 0)
    throw Error(Errc::ResourceLimit, "password hashing ran out of memory");
  return out;
}

bool verify_password(const std::string& hash, const std::string& password) {
  ensure_sodium();
  return crypto_pwhash_str_verify(hash.c_str(), password.data(), password.size()) == 0;
}

// ---------------------------------------------------------------------------
// AccountStore

void AccountStore::add(const std::string& login, const std::string& password, const std::string& privilege,
                       Date created, Date expires) {
  check_length("password", password);
  UserAccount a;
  a.user_login = login;
  a.password_hash = hash_password(password);
  a.user_privilege = privilege;
  a.account_creation_date = created;
  a.account_expiration_date = expires;
  insert(std::move(a));
}

void AccountStore::insert(UserAccount a) {
  if (a.user_login.empty()) throw Error(Errc::ConstraintViolation, "user_login is empty");
  check_length("user_login", a.user_login);
  check_length("user_privilege", a.user_privilege);
  a.user_privilege = upper(a.user_privilege);
  if (a.user_privilege != "FULL" && a.user_privilege != "BASIC")
    throw Error(Errc::ConstraintViolation, "privilege must be FULL or BASIC, got '" + a.user_privilege + "'");
  if (a.account_expiration_date < a.account_creation_date)
    throw Error(Errc::ConstraintViolation, "account expires before it was created");
  std::unique_lock lk(mu_);
  if (accounts_.count(a.user_login))
    throw Error(Errc::ConstraintViolation, "duplicate user_login '" + a.user_login + "'");
  accounts_.emplace(a.user_login, std::move(a));
}

void AccountStore::load_from_table(const sql::Database& db, const std::string& table) {
  auto t = db.table(table);
  if (!t) throw Error(Errc::UnknownTable, "unknown table '" + table + "'");
  const auto& cols = t->columns;
  const auto login = sql::Database::resolve_column(cols, "user_login");
  const auto password = sql::Database::resolve_column(cols, "password");
  const auto privilege = sql::Database::resolve_column(cols, "user_privilege");
  const auto created = sql::Database::resolve_column(cols, "account_creation_date");
  const auto expires = sql::Database::resolve_column(cols, "account_expiration_date");
  auto iso_to_date = [](const std::optional<std::string>& iso, const char* what) {
    if (!iso) throw Error(Errc::ConstraintViolation, std::string(what) + " is NULL");
    return Date{std::stoi(iso->substr(0, 4)), static_cast<unsigned>(std::stoi(iso->substr(5, 2))),
                static_cast<unsigned>(std::stoi(iso->substr(8, 2)))};
  };
  for (const auto& row : t->rows) {
    add(row[login].value_or(""), row[password].value_or(""), row[privilege].value_or(""),
        iso_to_date(row[created], "account_creation_date"), iso_to_date(row[expires], "account_expiration_date"));
  }
}

void AccountStore::load_sql_script(const std::string& script) {
  sql::Database db;
  db.execute_script(script);
  load_from_table(db);
}

void AccountStore::load_jsonl(const std::filesystem::path& path) {
  for_each_json_line(path, [&](const json& j) {
    UserAccount a;
    a.user_login = j.at("user_login").get<std::string>();
    if (j.contains("password_hash")) {
      a.password_hash = j.at("password_hash").get<std::string>();
    } else {
      const auto plain = j.at("password").get<std::string>();
      check_length("password", plain);
      a.password_hash = hash_password(plain);
    }
    a.user_privilege = j.at("user_privilege").get<std::string>();
    a.account_creation_date = Date::parse(j.at("account_creation_date").get<std::string>());
    a.account_expiration_date = Date::parse(j.at("account_expiration_date").get<std::string>());
    insert(std::move(a));
  });
}

void AccountStore::save_jsonl(const std::filesystem::path& path) const {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw Error(Errc::FixtureError, "cannot write " + tmp.string());
    std::shared_lock lk(mu_);
    for (const auto& [_, a] : accounts_) {
      nlohmann::ordered_json j;
      j["user_login"] = a.user_login;
      j["password_hash"] = a.password_hash;
      j["user_privilege"] = a.user_privilege;
      j["account_creation_date"] = a.account_creation_date.mdy();
      j["account_expiration_date"] = a.account_expiration_date.mdy();
      out << j.dump() << '\n';
    }
    out.flush();
    if (!out) throw Error(Errc::FixtureError, "short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

UserCheckResult AccountStore::user_check(const std::string& login, const std::string& password, Date today) const {
  ++reads_;
  std::optional<UserAccount> a;
  {
    std::shared_lock lk(mu_);
    auto it = accounts_.find(login);
    if (it != accounts_.end()) a = it->second;
  }
  UserCheckResult r;
  if (!a || !verify_password(a->password_hash, password) || today > a->account_expiration_date) return r;
  r.match = true;
  r.privilege = a->user_privilege;
  r.expiration = a->account_expiration_date;
  return r;
}

std::optional<UserAccount> AccountStore::find(const std::string& login) const {
  std::shared_lock lk(mu_);
  auto it = accounts_.find(login);
  if (it == accounts_.end()) return std::nullopt;
  return it->second;
}

std::size_t AccountStore::size() const {
  std::shared_lock lk(mu_);
  return accounts_.size();
}

// ---------------------------------------------------------------------------
// Cards

bool luhn_valid(const std::string& number) {
  if (number.size() < 12 || number.size() > 19) return false;
  int sum = 0;
  bool dbl = false;
  for (auto it = number.rbegin(); it != number.rend(); ++it) {
    if (*it < '0' || *it > '9') return false;
    int d = *it - '0';
    if (dbl) {
      d *= 2;
      if (d > 9) d -= 9;
    }
    sum += d;
    dbl = !dbl;
  }
  return sum % 10 == 0;
}

std::optional<std::pair<unsigned, int>> parse_card_expiry(const std::string& text) {
  const auto slash = text.find('/');
  if (slash != 2 || (text.size() != 5 && text.size() != 7)) return std::nullopt;
  for (std::size_t i = 0; i < text.size(); ++i)
    if (i != slash && !std::isdigit(static_cast<unsigned char>(text[i]))) return std::nullopt;
  const auto month = static_cast<unsigned>(std::stoi(text.substr(0, 2)));
  int year = std::stoi(text.substr(3));
  if (text.size() == 5) year += 2000;
  if (month < 1 || month > 12) return std::nullopt;
  return std::pair{month, year};
}

void CardStore::add(CardRecord record) {
  std::unique_lock lk(mu_);
  cards_.insert_or_assign(record.card_number, std::move(record));
}

void CardStore::load_jsonl(const std::filesystem::path& path) {
  for_each_json_line(path, [&](const json& j) {
    CardRecord c;
    c.card_number = j.at("card_number").get<std::string>();
    auto exp = parse_card_expiry(j.at("expiry").get<std::string>());
    if (!exp) throw Error(Errc::FixtureError, "bad expiry for card " + c.card_number);
    c.exp_month = exp->first;
    c.exp_year = exp->second;
    c.approved = j.at("approved").get<bool>();
    add(std::move(c));
  });
}

CardCheckResult CardStore::card_check(const std::string& card_number, const std::string& expiry, Date today) const {
  ++reads_;
  if (!luhn_valid(card_number)) return {false, "LUHN_INVALID"};
  auto exp = parse_card_expiry(expiry);
  if (!exp) return {false, "BAD_EXPIRY"};
  if (std::pair{exp->second, exp->first} < std::pair{today.year, today.month}) return {false, "EXPIRED"};
  std::shared_lock lk(mu_);
  auto it = cards_.find(card_number);
  if (it == cards_.end()) return {false, "UNKNOWN_CARD"};
  const auto& c = it->second;
  if (c.exp_month != exp->first || c.exp_year != exp->second) return {false, "EXPIRY_MISMATCH"};
  if (!c.approved) return {false, "DECLINED"};
  return {true, ""};
}

std::size_t CardStore::size() const {
  std::shared_lock lk(mu_);
  return cards_.size();
}

}  // namespace mmog::services
