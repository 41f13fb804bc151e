#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <optional>
#include <shared_mutex>
#include <string>

#include "mmog/services/date.hpp"
#include "mmog/services/sql.hpp"

namespace mmog::services {

inline constexpr std::size_t kMaxAccountField = 25;

struct UserAccount {
  std::string user_login;
  std::string password_hash;  // libsodium crypto_pwhash_str format
  std::string user_privilege;  // stored upper case
  Date account_creation_date;
  Date account_expiration_date;
};

struct UserCheckResult {
  bool match = false;
  std::string privilege;
  std::optional<Date> expiration;
};

/// Argon2id with libsodium's interactive cost limits.
std::string hash_password(const std::string& password);
bool verify_password(const std::string& hash, const std::string& password);

/// Login accounts. Concurrent reads, serialized writes.
class AccountStore {
 public:
  /// Validates field lengths, privilege and date order; hashes the password.
  /// Throws Errc::ConstraintViolation.
  void add(const std::string& login, const std::string& password, const std::string& privilege, Date created,
           Date expires);

  /// Reads accounts from the `user_accounts` table of a database built with
  /// the SQL subset. Column names may carry small spelling differences.
  void load_from_table(const sql::Database& db, const std::string& table = "user_accounts");
  /// Runs a SQL script and loads the resulting accounts table.
  void load_sql_script(const std::string& script);

  /// One JSON object per line: user_login, password (plain, hashed on load)
  /// or password_hash, user_privilege, account_creation_date,
  /// account_expiration_date (MM/DD/YYYY). Throws Errc::FixtureError.
  void load_jsonl(const std::filesystem::path& path);
  /// Writes a temporary file next to `path` and renames it over the target.
  void save_jsonl(const std::filesystem::path& path) const;

  /// Match requires a known login, a verifying password and today on or
  /// before the expiration date.
  UserCheckResult user_check(const std::string& login, const std::string& password, Date today) const;

  std::optional<UserAccount> find(const std::string& login) const;
  std::size_t size() const;
  std::uint64_t reads() const { return reads_.load(); }

 private:
  void insert(UserAccount account);

  mutable std::shared_mutex mu_;
  std::map<std::string, UserAccount> accounts_;
  mutable std::atomic<std::uint64_t> reads_{0};
};

struct CardRecord {
  std::string card_number;
  unsigned exp_month = 1;
  int exp_year = 1970;
  bool approved = false;
};

struct CardCheckResult {
  bool approved = false;
  std::string reason;  // empty when approved
};

bool luhn_valid(const std::string& number);
/// Accepts MM/YY or MM/YYYY. Returns nullopt when malformed.
std::optional<std::pair<unsigned, int>> parse_card_expiry(const std::string& text);

/// Card fixture store. Approval needs a Luhn-valid number of 12-19 digits,
/// an expiry not before `today`'s month, and an approved fixture record
/// with the same expiry.
class CardStore {
 public:
  /// One JSON object per line: card_number, expiry (MM/YY or MM/YYYY),
  /// approved. Throws Errc::FixtureError.
  void load_jsonl(const std::filesystem::path& path);
  void add(CardRecord record);

  CardCheckResult card_check(const std::string& card_number, const std::string& expiry, Date today) const;
  std::size_t size() const;
  std::uint64_t reads() const { return reads_.load(); }

 private:
  mutable std::shared_mutex mu_;
  std::map<std::string, CardRecord> cards_;
  mutable std::atomic<std::uint64_t> reads_{0};
};

}  // namespace mmog::services
