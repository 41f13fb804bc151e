#include "mmog/services/auth.hpp"

#include <sodium.h>

#include "httplib.h"
#include "mmog/common/error.hpp"

namespace mmog::services {

PortHandler user_check_port(const AccountStore& accounts, const Clock& clock) {
  return [&accounts, &clock](const Json& req) {
    auto r = accounts.user_check(req.at("user_login").get<std::string>(), req.at("password").get<std::string>(),
                                 Date::from_time(clock.now_us()));
    return Json{{"match", r.match}, {"privilege", r.privilege}, {"expiration", r.expiration ? r.expiration->mdy() : ""}};
  };
}

PortHandler card_check_port(const CardStore& cards, const Clock& clock) {
  return [&cards, &clock](const Json& req) {
    auto r = cards.card_check(req.at("card_number").get<std::string>(), req.at("card_expiry").get<std::string>(),
                              Date::from_time(clock.now_us()));
    return Json{{"approved", r.approved}, {"reason", r.reason}};
  };
}

std::string_view token_status_name(TokenStatus s) noexcept {
  switch (s) {
    case TokenStatus::Valid: return "VALID";
    case TokenStatus::Unknown: return "UNKNOWN";
    case TokenStatus::Expired: return "EXPIRED";
  }
  return "?";
}

// ---------------------------------------------------------------------------

TokenStore::TokenStore(const Clock& clock, TimeUs ttl_us) : clock_(clock), ttl_us_(ttl_us) {
  if (ttl_us <= 0) throw Error(Errc::ConfigError, "token TTL must be positive");
  if (sodium_init() < 0) throw Error(Errc::Precondition, "libsodium initialisation failed");
}

SessionToken TokenStore::issue(const std::string& login, const std::string& privilege, Date account_expiration) {
  unsigned char raw[16];
  char hex[sizeof raw * 2 + 1];
  SessionToken t;
  t.user_login = login;
  t.privilege = privilege;
  t.issued_at = clock_.now_us();
  t.expires_at = t.issued_at + ttl_us_;
  t.account_expiration = account_expiration;
  std::lock_guard lk(mu_);
  do {
    randombytes_buf(raw, sizeof raw);
    t.id = sodium_bin2hex(hex, sizeof hex, raw, sizeof raw);
  } while (tokens_.count(t.id));
  tokens_.emplace(t.id, t);
  return t;
}

TokenCheck TokenStore::validate(const std::string& id) const {
  std::lock_guard lk(mu_);
  auto it = tokens_.find(id);
  if (it == tokens_.end()) return {};
  const auto now = clock_.now_us();
  const auto& t = it->second;
  if (now >= t.expires_at || now >= t.account_expiration.end_us()) return {TokenStatus::Expired, t};
  return {TokenStatus::Valid, t};
}

std::size_t TokenStore::size() const {
  std::lock_guard lk(mu_);
  return tokens_.size();
}

// ---------------------------------------------------------------------------

AuthService::AuthService(ProcessDefinition def, PortBindings bindings, const Clock& clock, AuthConfig cfg)
    : def_(std::move(def)),
      bindings_(std::move(bindings)),
      clock_(clock),
      cfg_(std::move(cfg)),
      tokens_(clock, cfg_.token_ttl_us) {
  cfg_.world.validate();
  for (const auto& n : def_.nodes())
    if (n.kind == ProcessNode::Kind::Invoke && !bindings_.count(n.port))
      throw Error(Errc::PortUnbound, "port " + n.port + " is not bound");
}

HttpReply AuthService::login(const Json& body) {
  static const char* kFields[] = {"user_login", "password", "card_number", "card_expiry"};
  if (!body.is_object()) return {400, {{"error", "body must be a JSON object"}}};
  Json input = Json::object();
  for (auto f : kFields) {
    auto it = body.find(f);
    if (it == body.end() || !it->is_string()) return {400, {{"error", std::string("missing string field ") + f}}};
    input[f] = *it;
  }
  ProcessResult run;
  try {
    run = run_process(def_, input, bindings_);
  } catch (const Error& e) {
    return {500, {{"error", std::string(errc_name(e.code()))}, {"detail", e.what()}}};
  }
  {
    std::lock_guard lk(trace_mu_);
    last_trace_ = run.trace;
  }
  const auto& out = run.output;
  if (!out.value("approved", false))
    return {401, {{"approved", false}, {"reason", out.value("reason", "DENIED")}}};
  Date expiration;
  try {
    expiration = Date::parse(out.value("expiration", ""));
  } catch (const Error&) {
    return {500, {{"error", "approval without a valid account expiration"}}};
  }
  auto t = tokens_.issue(out.value("user_login", ""), out.value("privilege", ""), expiration);
  return {200,
          {{"approved", true},
           {"session_token", t.id},
           {"user_login", t.user_login},
           {"privilege", t.privilege},
           {"expires_at_us", t.expires_at}}};
}

HttpReply AuthService::validate(const std::string& token) const {
  auto c = tokens_.validate(token);
  if (c.status != TokenStatus::Valid)
    return {401, {{"valid", false}, {"reason", std::string(token_status_name(c.status))}}};
  return {200, {{"valid", true}, {"user_login", c.token->user_login}, {"privilege", c.token->privilege}}};
}

std::optional<JoinGrant> AuthService::join_game(const std::string& token) const {
  auto c = tokens_.validate(token);
  if (c.status != TokenStatus::Valid) return std::nullopt;
  JoinGrant g;
  g.domain_id = cfg_.game_domain;
  g.user_login = c.token->user_login;
  g.privilege = c.token->privilege;
  const auto nx = cfg_.world.regions_x(), ny = cfg_.world.regions_y();
  const auto& login = g.user_login;
  g.spawn_region = static_cast<std::uint32_t>(
      transport::fnv1a64({reinterpret_cast<const std::uint8_t*>(login.data()), login.size()}) %
      cfg_.world.region_count());
  const auto rx = static_cast<std::int64_t>(g.spawn_region % nx), ry = static_cast<std::int64_t>(g.spawn_region / nx);
  for (auto y = ry - 1; y <= ry + 1; ++y)
    for (auto x = rx - 1; x <= rx + 1; ++x)
      if (x >= 0 && y >= 0 && x < nx && y < ny) g.aoi.insert(static_cast<std::uint32_t>(y * nx + x));
  return g;
}

HttpReply AuthService::join(const std::string& token) const {
  auto g = join_game(token);
  if (!g) return {401, {{"admitted", false}, {"reason", std::string(token_status_name(tokens_.validate(token).status))}}};
  return {200,
          {{"admitted", true},
           {"domain_id", g->domain_id},
           {"user_login", g->user_login},
           {"privilege", g->privilege},
           {"spawn_region", g->spawn_region},
           {"aoi", g->aoi}}};
}

std::vector<TraceEvent> AuthService::last_trace() const {
  std::lock_guard lk(trace_mu_);
  return last_trace_;
}

// ---------------------------------------------------------------------------

namespace {

void send(httplib::Response& res, const HttpReply& r) {
  res.status = r.status;
  res.set_content(r.body.dump(), "application/json");
}

std::optional<Json> parse_body(const httplib::Request& req, httplib::Response& res) {
  auto j = Json::parse(req.body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    send(res, {400, {{"error", "malformed JSON body"}}});
    return std::nullopt;
  }
  return j;
}

void serve_port(httplib::Server& s, const std::string& path, PortHandler h) {
  if (!h) return;
  s.Post(path, [h](const httplib::Request& req, httplib::Response& res) {
    auto body = parse_body(req, res);
    if (!body) return;
    try {
      send(res, {200, h(*body)});
    } catch (const std::exception& e) {
      send(res, {400, {{"error", e.what()}}});
    }
  });
}

}  // namespace

HttpServer::HttpServer(AuthService* auth, PortHandler user_check, PortHandler card_check)
    : server_(std::make_unique<httplib::Server>()) {
  auto& s = *server_;
  if (auth) {
    s.Post("/login", [auth](const httplib::Request& req, httplib::Response& res) {
      if (auto body = parse_body(req, res)) send(res, auth->login(*body));
    });
    s.Get(R"(/session/([^/]*))", [auth](const httplib::Request& req, httplib::Response& res) {
      send(res, auth->validate(req.matches[1]));
    });
    s.Post("/join", [auth](const httplib::Request& req, httplib::Response& res) {
      auto body = parse_body(req, res);
      if (!body) return;
      auto tok = body->find("session_token");
      if (tok == body->end() || !tok->is_string()) return send(res, {400, {{"error", "missing session_token"}}});
      send(res, auth->join(tok->get<std::string>()));
    });
  }
  serve_port(s, "/services/user_check", std::move(user_check));
  serve_port(s, "/services/card_check", std::move(card_check));
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::start(const std::string& host, int port) {
  if (thread_.joinable()) throw Error(Errc::Precondition, "server already started");
  port_ = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
  if (port_ <= 0) throw Error(Errc::ConfigError, "cannot bind " + host + ":" + std::to_string(port));
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port_;
}

void HttpServer::stop() {
  if (!thread_.joinable()) return;
  server_->stop();
  thread_.join();
}

}  // namespace mmog::services
