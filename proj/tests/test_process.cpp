#include <doctest.h>

#include <atomic>
#include <fstream>
#include <thread>

#include "httplib.h"
#include "mmog/common/error.hpp"
#include "mmog/services/auth.hpp"

using namespace mmog;
using namespace mmog::services;
using namespace std::chrono_literals;

namespace {

constexpr TimeUs kDay = 86'400'000'000;
TimeUs start_of(Date d) { return d.end_us() - kDay; }

Json fixture_doc() {
  std::ifstream in("fixtures/user_approve.process.json");
  REQUIRE(in);
  return Json::parse(in);
}

const Json kRequest = {
    {"user_login", "Max"}, {"password", "game123"}, {"card_number", "4111111111111111"}, {"card_expiry", "12/2016"}};

/// Stub checks with fixed answers and latencies.
PortBindings stubs(bool user_ok, bool card_ok, std::chrono::milliseconds user_delay = 0ms,
                   std::chrono::milliseconds card_delay = 0ms) {
  return {{"UserCheck",
           [=](const Json&) {
             std::this_thread::sleep_for(user_delay);
             return Json{{"match", user_ok}, {"privilege", user_ok ? "FULL" : ""}, {"expiration", "09/10/2014"}};
           }},
          {"CardCheck", [=](const Json&) {
             std::this_thread::sleep_for(card_delay);
             return Json{{"approved", card_ok}, {"reason", card_ok ? "" : "DECLINED"}};
           }}};
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

struct Fixtures {
  ManualClock clock{start_of({2014, 1, 15})};
  AccountStore accounts;
  CardStore cards;
  Fixtures() {
    accounts.load_jsonl("fixtures/accounts.jsonl");
    cards.load_jsonl("fixtures/cards.jsonl");
  }
  PortBindings bindings() const {
    return {{"UserCheck", user_check_port(accounts, clock)}, {"CardCheck", card_check_port(cards, clock)}};
  }
};

}  // namespace

TEST_CASE("process: fixture validates") {
  auto def = ProcessDefinition::from_json(fixture_doc());
  CHECK(def.name() == "UserApproveService");
  CHECK(def.invoke_timeout() == 2000ms);
  const auto a = def.index_of("check_user"), b = def.index_of("check_card");
  bool together = false;
  for (const auto& step : def.steps())
    together = together || (std::count(step.begin(), step.end(), a) && std::count(step.begin(), step.end(), b));
  CHECK(together);
  CHECK(def.steps().front() == std::vector<std::size_t>{def.index_of("receive")});
}

TEST_CASE("process: static validation") {
  auto broken = [](auto&& edit) {
    auto doc = fixture_doc();
    edit(doc);
    return code_of([&] { ProcessDefinition::from_json(doc); });
  };
  auto node = [](Json& doc, const std::string& id) -> Json& {
    for (auto& n : doc["nodes"])
      if (n["id"] == id) return n;
    FAIL("no node " << id);
    return doc;
  };
  CHECK(broken([](Json& d) { d["nodes"].push_back({{"id", "r2"}, {"type", "receive"}, {"variable", "request"}, {"next", "decide"}}); }) ==
        Errc::ConfigError);
  CHECK(broken([&](Json& d) {
          Json kept = Json::array();
          for (auto& n : d["nodes"])
            if (n["type"] != "reply") kept.push_back(n);
          d["nodes"] = kept;
        }) == Errc::ConfigError);
  // Cycle back into an invoke.
  CHECK(broken([&](Json& d) { node(d, "which_failed")["else"] = "check_user"; }) == Errc::ConfigError);
  // Control dependency inside a parallel group.
  CHECK(broken([&](Json& d) { node(d, "check_user")["next"] = "check_card"; }) == Errc::ConfigError);
  // Data dependency inside a parallel group.
  CHECK(broken([&](Json& d) {
          d["ports"]["CardCheck"]["input"].push_back({{"name", "holder"}, {"kind", "string"}});
          node(d, "check_card")["input"]["holder"] = "user.privilege";
        }) == Errc::ConfigError);
  CHECK(broken([&](Json& d) { node(d, "check_card")["port"] = "Billing"; }) == Errc::ConfigError);
  CHECK(broken([&](Json& d) { node(d, "decide")["then"] = "nowhere"; }) == Errc::ConfigError);
  CHECK(broken([&](Json& d) { node(d, "decide")["condition"] = "user.match == 'yes'"; }) == Errc::TypeError);
  CHECK(broken([&](Json& d) { node(d, "decide")["condition"] = "user.match ==="; }) == Errc::ParseError);
  CHECK(broken([&](Json& d) { node(d, "approve")["copy"]["x"] = "user.missing"; }) == Errc::ConfigError);
  CHECK(broken([&](Json& d) { node(d, "check_user").erase("next"); }) == Errc::ConfigError);
  CHECK(broken([&](Json& d) { d["variables"]["user"][0]["kind"] = "u8"; }) == Errc::ConfigError);
}

TEST_CASE("process: truth table with trace") {
  auto def = ProcessDefinition::from_json(fixture_doc());
  for (bool u : {false, true})
    for (bool c : {false, true}) {
      CAPTURE(u);
      CAPTURE(c);
      auto r = run_process(def, kRequest, stubs(u, c));
      CHECK(r.output["approved"] == (u && c));
      CHECK(r.ran("check_user"));
      CHECK(r.ran("check_card"));
      CHECK_FALSE(r.faulted);
      if (!u) CHECK(r.output["reason"] == "USER_CHECK_FAILED");
      else if (!c) CHECK(r.output["reason"] == "CARD_CHECK_FAILED");
      else CHECK(r.output["privilege"] == "FULL");
    }
}

TEST_CASE("process: outputs invariant under completion order") {
  auto def = ProcessDefinition::from_json(fixture_doc());
  for (bool u : {false, true})
    for (bool c : {false, true}) {
      auto user_first = run_process(def, kRequest, stubs(u, c, 0ms, 60ms));
      auto card_first = run_process(def, kRequest, stubs(u, c, 60ms, 0ms));
      CHECK(user_first.completion_order() == std::vector<std::string>{"check_user", "check_card"});
      CHECK(card_first.completion_order() == std::vector<std::string>{"check_card", "check_user"});
      CHECK(user_first.output == card_first.output);
    }
}

TEST_CASE("process: invokes in a group run concurrently") {
  auto def = ProcessDefinition::from_json(fixture_doc());
  const auto t0 = std::chrono::steady_clock::now();
  auto r = run_process(def, kRequest, stubs(true, true, 200ms, 200ms));
  const auto took = std::chrono::steady_clock::now() - t0;
  CHECK(r.output["approved"] == true);
  CHECK(took < 380ms);
}

TEST_CASE("process: faults") {
  auto doc = fixture_doc();
  doc["invoke_timeout_ms"] = 100;
  auto def = ProcessDefinition::from_json(doc);

  auto slow = run_process(def, kRequest, stubs(true, true, 0ms, 400ms));
  CHECK(slow.faulted);
  CHECK(slow.output == Json{{"approved", false}, {"reason", "SERVICE_UNAVAILABLE"}});
  CHECK(slow.ran("check_user"));

  auto bad = stubs(true, true);
  bad["CardCheck"] = [](const Json&) { return Json{{"approved", "yes"}}; };
  CHECK(run_process(def, kRequest, bad).output["reason"] == "SERVICE_UNAVAILABLE");
  bad["CardCheck"] = [](const Json&) -> Json { throw std::runtime_error("down"); };
  CHECK(run_process(def, kRequest, bad).output["reason"] == "SERVICE_UNAVAILABLE");

  doc.erase("fault_reply");
  auto strict = ProcessDefinition::from_json(doc);
  CHECK(code_of([&] { run_process(strict, kRequest, stubs(true, true, 400ms, 0ms)); }) == Errc::InvokeTimeout);

  auto unbound = stubs(true, true);
  unbound.erase("CardCheck");
  std::atomic<int> calls{0};
  unbound["UserCheck"] = [&](const Json&) {
    ++calls;
    return Json{};
  };
  CHECK(code_of([&] { run_process(def, kRequest, unbound); }) == Errc::PortUnbound);
  CHECK(calls == 0);

  CHECK(code_of([&] { run_process(def, Json{{"user_login", "Max"}}, stubs(true, true)); }) == Errc::Malformed);
}

TEST_CASE("process: shipped fixtures") {
  Fixtures fx;
  auto def = ProcessDefinition::load("fixtures/user_approve.process.json");
  auto b = fx.bindings();

  auto ok = run_process(def, kRequest, b);
  CHECK(ok.output["approved"] == true);
  CHECK(ok.output["privilege"] == "FULL");
  CHECK(ok.output["expiration"] == "09/10/2014");

  auto req = kRequest;
  req["password"] = "wrong";
  auto r = run_process(def, req, b);
  CHECK(r.output["reason"] == "USER_CHECK_FAILED");
  CHECK(r.ran("check_card"));

  req = kRequest;
  req["card_number"] = "5555555555554444";
  r = run_process(def, req, b);
  CHECK(r.output["reason"] == "CARD_CHECK_FAILED");
  CHECK(r.ran("check_user"));

  // Each check touched only its own store, once per run.
  CHECK(fx.accounts.reads() == 3);
  CHECK(fx.cards.reads() == 3);

  req = kRequest;
  req["user_login"] = "John123";
  req["password"] = "helloworld";
  CHECK(run_process(def, req, b).output["reason"] == "USER_CHECK_FAILED");
}

TEST_CASE("tokens") {
  ManualClock clock{start_of({2014, 9, 10})};
  TokenStore store(clock, 3'600'000'000);
  auto t = store.issue("Max", "FULL", {2014, 9, 10});
  CHECK(t.id.size() == 32);
  CHECK(t.expires_at == t.issued_at + 3'600'000'000);
  CHECK(store.validate(t.id).status == TokenStatus::Valid);
  CHECK(store.validate("deadbeef").status == TokenStatus::Unknown);
  CHECK(store.issue("Max", "FULL", {2014, 9, 10}).id != t.id);
  clock.advance(3'600'000'000);
  CHECK(store.validate(t.id).status == TokenStatus::Expired);

  // The account expiration bounds a token whatever its TTL.
  TokenStore forever(clock, 100 * kDay);
  auto late = forever.issue("Max", "FULL", {2014, 9, 10});
  CHECK(forever.validate(late.id).status == TokenStatus::Valid);
  clock.set(Date{2014, 9, 10}.end_us());
  CHECK(forever.validate(late.id).status == TokenStatus::Expired);
}

TEST_CASE("http: login, validate, join") {
  Fixtures fx;
  AuthConfig cfg;
  cfg.token_ttl_us = 600'000'000;
  cfg.game_domain = 7;
  AuthService auth(ProcessDefinition::load("fixtures/user_approve.process.json"), fx.bindings(), fx.clock, cfg);
  HttpServer server(&auth);
  const int port = server.start();
  httplib::Client cli("127.0.0.1", port);

  auto res = cli.Post("/login", kRequest.dump(), "application/json");
  REQUIRE(res);
  CHECK(res->status == 200);
  auto body = Json::parse(res->body);
  CHECK(body["approved"] == true);
  CHECK(body["privilege"] == "FULL");
  const auto token = body["session_token"].get<std::string>();

  res = cli.Get("/session/" + token);
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(Json::parse(res->body)["user_login"] == "Max");

  res = cli.Post("/join", Json{{"session_token", token}}.dump(), "application/json");
  REQUIRE(res);
  CHECK(res->status == 200);
  body = Json::parse(res->body);
  CHECK(body["admitted"] == true);
  CHECK(body["domain_id"] == 7);
  auto grant = auth.join_game(token);
  REQUIRE(grant);
  CHECK(grant->aoi.count(grant->spawn_region));
  CHECK(grant->aoi.size() >= 4);
  CHECK(grant->aoi.size() <= 9);

  res = cli.Get("/session/not-a-token");
  REQUIRE(res);
  CHECK(res->status == 401);
  CHECK(Json::parse(res->body) == Json{{"valid", false}, {"reason", "UNKNOWN"}});

  auto wrong = kRequest;
  wrong["password"] = "nope";
  res = cli.Post("/login", wrong.dump(), "application/json");
  REQUIRE(res);
  CHECK(res->status == 401);
  CHECK(Json::parse(res->body)["reason"] == "USER_CHECK_FAILED");

  res = cli.Post("/login", "{not json", "application/json");
  REQUIRE(res);
  CHECK(res->status == 400);
  res = cli.Post("/login", Json{{"user_login", "Max"}}.dump(), "application/json");
  REQUIRE(res);
  CHECK(res->status == 400);

  fx.clock.advance(600'000'000);
  res = cli.Get("/session/" + token);
  REQUIRE(res);
  CHECK(res->status == 401);
  CHECK(Json::parse(res->body)["reason"] == "EXPIRED");
  res = cli.Post("/join", Json{{"session_token", token}}.dump(), "application/json");
  REQUIRE(res);
  CHECK(res->status == 401);
  server.stop();
}

TEST_CASE("http: ports bound over the network") {
  Fixtures fx;
  HttpServer checks(nullptr, user_check_port(fx.accounts, fx.clock), card_check_port(fx.cards, fx.clock));
  const int port = checks.start();
  const auto base = "http://127.0.0.1:" + std::to_string(port);
  PortBindings remote{{"UserCheck", http_port(base + "/services/user_check")},
                      {"CardCheck", http_port(base + "/services/card_check")}};
  auto def = ProcessDefinition::load("fixtures/user_approve.process.json");
  CHECK(run_process(def, kRequest, remote).output == run_process(def, kRequest, fx.bindings()).output);
  auto req = kRequest;
  req["card_number"] = "5555555555554444";
  CHECK(run_process(def, req, remote).output["reason"] == "CARD_CHECK_FAILED");

  PortBindings dead{{"UserCheck", http_port("http://127.0.0.1:1/x", 200ms)}, {"CardCheck", remote["CardCheck"]}};
  CHECK(run_process(def, kRequest, dead).output["reason"] == "SERVICE_UNAVAILABLE");
  CHECK_THROWS_AS(http_port("ftp://x"), Error);
}
