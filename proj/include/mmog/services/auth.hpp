#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>

#include "mmog/common/clock.hpp"
#include "mmog/game/world.hpp"
#include "mmog/services/accounts.hpp"
#include "mmog/services/process.hpp"

namespace httplib {
class Server;
}

namespace mmog::services {

/// Each adapter holds only its own store: the user check never sees cards
/// and the card check never sees accounts.
PortHandler user_check_port(const AccountStore& accounts, const Clock& clock);
PortHandler card_check_port(const CardStore& cards, const Clock& clock);

struct SessionToken {
  std::string id;  // 32 lower-case hex digits
  std::string user_login;
  std::string privilege;
  TimeUs issued_at = 0;
  TimeUs expires_at = 0;
  Date account_expiration;
};

enum class TokenStatus : std::uint8_t { Valid, Unknown, Expired };
std::string_view token_status_name(TokenStatus s) noexcept;

struct TokenCheck {
  TokenStatus status = TokenStatus::Unknown;
  std::optional<SessionToken> token;
};

/// Issued tokens. A token stops validating at issued_at + ttl or at the end
/// of the account's expiration day, whichever is first.
class TokenStore {
 public:
  TokenStore(const Clock& clock, TimeUs ttl_us);

  SessionToken issue(const std::string& login, const std::string& privilege, Date account_expiration);
  TokenCheck validate(const std::string& id) const;
  std::size_t size() const;

 private:
  const Clock& clock_;
  TimeUs ttl_us_;
  mutable std::mutex mu_;
  std::map<std::string, SessionToken> tokens_;
};

/// Credentials handed to a client admitted to the game.
struct JoinGrant {
  std::uint32_t domain_id = 0;
  std::string user_login;
  std::string privilege;
  std::uint32_t spawn_region = 0;
  std::set<std::uint32_t> aoi;  // spawn region and its neighbours
};

struct AuthConfig {
  TimeUs token_ttl_us = 3'600'000'000;
  std::uint32_t game_domain = 0;
  game::WorldConfig world;
};

struct HttpReply {
  int status = 200;
  Json body;
};

/// The login front end: runs the approval process, issues tokens and admits
/// token holders to the game domain.
class AuthService {
 public:
  AuthService(ProcessDefinition def, PortBindings bindings, const Clock& clock, AuthConfig cfg = {});

  /// Body {user_login, password, card_number, card_expiry}. 200 with a
  /// token on approval, 401 with the reason on denial, 400 when malformed.
  HttpReply login(const Json& body);
  /// 200 {valid: true, user_login, privilege} or 401 {valid: false, reason}.
  HttpReply validate(const std::string& token) const;
  /// Throws nothing; 401 for unknown or expired tokens.
  HttpReply join(const std::string& token) const;
  std::optional<JoinGrant> join_game(const std::string& token) const;

  const ProcessDefinition& definition() const { return def_; }
  TokenStore& tokens() { return tokens_; }
  /// Trace of the most recent login's process run.
  std::vector<TraceEvent> last_trace() const;

 private:
  ProcessDefinition def_;
  PortBindings bindings_;
  const Clock& clock_;
  AuthConfig cfg_;
  TokenStore tokens_;
  mutable std::mutex trace_mu_;
  std::vector<TraceEvent> last_trace_;
};

/// HTTP/1.1 front for the auth service and, optionally, the two check
/// services (POST /services/user_check and /services/card_check), so the
/// process can bind its ports over the network.
class HttpServer {
 public:
  HttpServer(AuthService* auth, PortHandler user_check = {}, PortHandler card_check = {});
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Port 0 picks a free port. Returns the bound port; throws ConfigError.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  void stop();
  int port() const { return port_; }

 private:
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  int port_ = 0;
};

}  // namespace mmog::services
