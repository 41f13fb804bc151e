// Scenario runner, auth demo and auth HTTP server.
//
// Exit codes: 0 success, 2 configuration or fixture error, 3 assertion failure.

#include <atomic>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "mmog/common/error.hpp"
#include "mmog/services/auth.hpp"
#include "mmog/sim/harness.hpp"

namespace {

constexpr int kOk = 0, kConfigError = 2, kAssertionFailed = 3;

std::atomic<bool> g_stop{false};

int emit(const mmog::sim::ScenarioResult& r, const std::string& out) {
  const auto text = mmog::sim::render_report(r.report);
  if (out.empty()) {
    std::cout << text;
  } else {
    std::ofstream f(out, std::ios::binary | std::ios::trunc);
    if (!f) {
      std::cerr << "cannot write " << out << "\n";
      return kConfigError;
    }
    f << text;
  }
  std::fprintf(stderr, "wall clock: %.2f s\n", r.wall_clock_s);
  for (const auto& a : r.failed_assertions) std::cerr << "assertion failed: " << a << "\n";
  return r.ok() ? kOk : kAssertionFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Replicated game world simulator"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Run a scenario and print its metrics report");
  std::string config, out;
  std::optional<std::uint64_t> seed;
  std::optional<double> loss, latency_mean, latency_jitter, duration;
  std::optional<std::uint32_t> players;
  bool realtime = false;
  std::uint16_t base_port = 7400;
  run->add_option("--config", config, "Scenario JSON")->required()->check(CLI::ExistingFile);
  run->add_option("--seed", seed, "Override the scenario seed");
  run->add_option("--out", out, "Write the report here instead of stdout");
  run->add_flag("--realtime", realtime, "Wall clock and UDP sockets instead of virtual time");
  run->add_option("--base-port", base_port, "First UDP port in realtime mode");
  run->add_option("--loss", loss, "Datagram drop probability");
  run->add_option("--latency-mean", latency_mean, "Mean one-way latency (ms)");
  run->add_option("--latency-jitter", latency_jitter, "Uniform latency jitter (+/- ms)");
  run->add_option("--players", players, "Number of bots");
  run->add_option("--duration", duration, "Run length (s)");

  auto* demo = app.add_subcommand("auth-demo", "Run the login approval truth table against fixtures");
  std::string accounts, cards, process = "fixtures/user_approve.process.json";
  demo->add_option("--accounts", accounts, "Accounts (.jsonl or .sql)")->required();
  demo->add_option("--cards", cards, "Card fixture (.jsonl)")->required();
  demo->add_option("--process", process, "Process definition");
  demo->add_option("--out", out, "Write the report here instead of stdout");

  auto* serve = app.add_subcommand("serve", "Serve /login, /session/{token} and /join over HTTP");
  std::string host = "127.0.0.1", date;
  int port = 8080;
  double ttl_s = 3600;
  int domain = 0;
  serve->add_option("--accounts", accounts, "Accounts (.jsonl or .sql)")->required();
  serve->add_option("--cards", cards, "Card fixture (.jsonl)")->required();
  serve->add_option("--process", process, "Process definition");
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--port", port, "TCP port");
  serve->add_option("--token-ttl", ttl_s, "Session token lifetime (s)");
  serve->add_option("--domain", domain, "Game domain handed out by /join");
  serve->add_option("--date", date, "Fix the service date (MM/DD/YYYY) instead of today");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigError;
  }

  try {
    if (*run) {
      std::ifstream in(config);
      auto j = nlohmann::json::parse(in, nullptr, false);
      if (j.is_discarded() || !j.is_object()) throw mmog::Error(mmog::Errc::ConfigError, config + ": malformed JSON");
      if (seed) j["seed"] = *seed;
      if (players) j["players"] = *players;
      if (duration) j["duration_s"] = *duration;
      if (loss) j["net"]["loss"] = *loss;
      if (latency_mean) j["net"]["latency_mean_ms"] = *latency_mean;
      if (latency_jitter) j["net"]["latency_jitter_ms"] = *latency_jitter;
      auto cfg = mmog::sim::ScenarioConfig::from_json(j);
      return emit(realtime ? mmog::sim::run_scenario_realtime(cfg, base_port) : mmog::sim::run_scenario(cfg), out);
    }
    if (*demo) {
      return emit(mmog::sim::run_auth_demo(accounts, cards, process, mmog::sim::default_auth_trials()), out);
    }
    if (*serve) {
      using namespace mmog::services;
      AccountStore acc;
      CardStore crd;
      if (accounts.size() > 4 && accounts.substr(accounts.size() - 4) == ".sql") {
        std::ifstream in(accounts);
        if (!in) throw mmog::Error(mmog::Errc::FixtureError, "cannot open " + accounts);
        std::stringstream ss;
        ss << in.rdbuf();
        acc.load_sql_script(ss.str());
      } else {
        acc.load_jsonl(accounts);
      }
      crd.load_jsonl(cards);
      mmog::SystemClock system;
      std::unique_ptr<mmog::ManualClock> fixed;
      const mmog::Clock* clock = &system;
      if (!date.empty()) {
        fixed = std::make_unique<mmog::ManualClock>(Date::parse(date).end_us() - 86'400'000'000);
        clock = fixed.get();
      }
      AuthConfig cfg;
      cfg.token_ttl_us = static_cast<mmog::TimeUs>(ttl_s * 1e6);
      cfg.game_domain = static_cast<std::uint32_t>(domain);
      AuthService auth(ProcessDefinition::load(process),
                       {{"UserCheck", user_check_port(acc, *clock)}, {"CardCheck", card_check_port(crd, *clock)}},
                       *clock, cfg);
      HttpServer server(&auth, user_check_port(acc, *clock), card_check_port(crd, *clock));
      const int bound = server.start(host, port);
      std::cerr << "listening on http://" << host << ":" << bound << "\n";
      std::signal(SIGINT, [](int) { g_stop = true; });
      std::signal(SIGTERM, [](int) { g_stop = true; });
      while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
      server.stop();
      return kOk;
    }
  } catch (const mmog::Error& e) {
    std::cerr << mmog::errc_name(e.code()) << ": " << e.what() << "\n";
    if (e.code() == mmog::Errc::AssertionFailed) return kAssertionFailed;
    return kConfigError;
  }
  return kOk;
}
