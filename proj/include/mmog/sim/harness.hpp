#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mmog/game/world.hpp"
#include "mmog/transport/netsim.hpp"

namespace mmog::sim {

using OrderedJson = nlohmann::ordered_json;

/// Silences one player at a given time so the others' liveliness detection
/// can be timed.
struct LivelinessProbe {
  std::uint32_t player = 0;
  double at_s = 0;
};

struct ScenarioConfig {
  std::string name = "scenario";
  std::uint32_t players = 32;
  game::WorldConfig world;
  double update_hz = 10.0;
  double duration_s = 10.0;
  transport::NetSimConfig net;
  /// reliable (KEEP_ALL both ends), reliable_last (KEEP_LAST 1) or best_effort.
  std::string qos = "reliable";
  /// 1, 9, 25... regions nearest the spawn region; 0 subscribes to every region.
  std::uint32_t aoi_regions_per_player = 9;
  /// Resubscribe when the bot's region changes instead of keeping the spawn AOI.
  bool aoi_follow = false;
  double bot_speed = 8.0;  // world units per second
  std::uint64_t seed = 1;

  std::uint32_t step_ms = 5;
  std::uint32_t lease_ms = 3000;
  std::uint32_t heartbeat_ms = 100;
  std::uint32_t staleness_timeout_ms = 2000;
  double warmup_timeout_s = 30;
  double drain_timeout_s = 10;
  std::optional<LivelinessProbe> liveliness_probe;

  /// Throws Errc::ConfigError.
  void validate() const;
  static ScenarioConfig from_json(const nlohmann::json& j);
  /// Throws Errc::ConfigError when the file is missing or malformed.
  static ScenarioConfig load(const std::filesystem::path& path);
  nlohmann::ordered_json to_json() const;
};

struct ScenarioResult {
  /// Stable key order; equal seeds give equal dumps.
  OrderedJson report;
  std::vector<std::string> failed_assertions;
  double wall_clock_s = 0;  // kept out of the report
  bool ok() const { return failed_assertions.empty(); }
};

/// Runs the scenario on virtual time. Throws Errc::ConfigError.
ScenarioResult run_scenario(const ScenarioConfig& config);

/// Same bots over UDP on the loopback interface, paced by the wall clock.
/// Delivery is not deterministic, so only convergence is asserted.
ScenarioResult run_scenario_realtime(const ScenarioConfig& config, std::uint16_t base_port = 7400);

/// Canonical text form of a report: two-space indent and a trailing newline.
std::string render_report(const OrderedJson& report);

struct AuthTrial {
  std::string label;
  std::string user_login;
  std::string password;
  std::string card_number;
  std::string card_expiry;
  std::string service_date;  // MM/DD/YYYY
  bool expect_approved = false;
  std::string expect_reason;
};

/// The built-in trials: all four user/card combinations, unknown login,
/// expired account, expired card.
std::vector<AuthTrial> default_auth_trials();

/// Loads the fixtures (accounts as JSON lines or a .sql script), runs each
/// trial through the approval process and reports the outcomes. Throws
/// Errc::FixtureError.
ScenarioResult run_auth_demo(const std::filesystem::path& accounts, const std::filesystem::path& cards,
                             const std::filesystem::path& process, const std::vector<AuthTrial>& trials);

}  // namespace mmog::sim
