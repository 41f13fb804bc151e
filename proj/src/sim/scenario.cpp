#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <numbers>
#include <random>
#include <thread>

#include "mmog/common/error.hpp"
#include "mmog/dcps/dcps.hpp"
#include "mmog/game/session.hpp"
#include "mmog/sim/harness.hpp"
#include "scenario_common.hpp"

namespace mmog::sim {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Config

void ScenarioConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error(Errc::ConfigError, m); };
  if (players < 1) fail("players must be at least 1");
  if (!(update_hz > 0)) fail("update_hz must be positive");
  if (!(duration_s > 0)) fail("duration_s must be positive");
  if (qos != "reliable" && qos != "reliable_last" && qos != "best_effort")
    fail("qos must be reliable, reliable_last or best_effort");
  if (step_ms < 1 || step_ms > 100) fail("step_ms must be in 1..100");
  if (lease_ms < 100) fail("lease_ms must be at least 100");
  if (heartbeat_ms < 1 || lease_ms < 3 * heartbeat_ms) fail("lease_ms must be at least 3 heartbeat periods");
  if (bot_speed < 0) fail("bot_speed must not be negative");
  if (!(warmup_timeout_s > 0) || !(drain_timeout_s > 0)) fail("timeouts must be positive");
  world.validate();
  net.validate();
  if (aoi_regions_per_player > world.region_count()) fail("aoi_regions_per_player exceeds the region count");
  if (liveliness_probe && (liveliness_probe->player >= players || liveliness_probe->at_s < 0 ||
                           liveliness_probe->at_s >= duration_s))
    fail("liveliness_probe must name a player and a time inside the run");
  if (liveliness_probe && players < 2) fail("liveliness_probe needs at least two players");
}

ScenarioConfig ScenarioConfig::from_json(const json& j) {
  ScenarioConfig c;
  try {
    if (!j.is_object()) throw Error(Errc::ConfigError, "scenario must be a JSON object");
    static const std::set<std::string> known = {
        "name", "players", "world", "update_hz", "duration_s", "net", "qos", "aoi_regions_per_player", "aoi_follow",
        "bot_speed", "seed", "step_ms", "lease_ms", "heartbeat_ms", "staleness_timeout_ms", "warmup_timeout_s",
        "drain_timeout_s", "liveliness_probe"};
    for (const auto& [k, _] : j.items())
      if (!known.count(k)) throw Error(Errc::ConfigError, "unknown scenario key '" + k + "'");
    c.name = j.value("name", c.name);
    c.players = j.value("players", c.players);
    c.update_hz = j.value("update_hz", c.update_hz);
    c.duration_s = j.value("duration_s", c.duration_s);
    c.qos = j.value("qos", c.qos);
    c.aoi_regions_per_player = j.value("aoi_regions_per_player", c.aoi_regions_per_player);
    c.aoi_follow = j.value("aoi_follow", c.aoi_follow);
    c.bot_speed = j.value("bot_speed", c.bot_speed);
    c.seed = j.value("seed", c.seed);
    c.step_ms = j.value("step_ms", c.step_ms);
    c.lease_ms = j.value("lease_ms", c.lease_ms);
    c.heartbeat_ms = j.value("heartbeat_ms", c.heartbeat_ms);
    c.staleness_timeout_ms = j.value("staleness_timeout_ms", c.staleness_timeout_ms);
    c.warmup_timeout_s = j.value("warmup_timeout_s", c.warmup_timeout_s);
    c.drain_timeout_s = j.value("drain_timeout_s", c.drain_timeout_s);
    if (j.contains("world")) {
      const auto& w = j["world"];
      c.world.width = w.value("width", c.world.width);
      c.world.height = w.value("height", c.world.height);
      c.world.cell_size = w.value("cell_size", c.world.cell_size);
    }
    if (j.contains("net")) {
      const auto& n = j["net"];
      c.net.drop_probability = n.value("loss", c.net.drop_probability);
      c.net.latency_mean_ms = n.value("latency_mean_ms", c.net.latency_mean_ms);
      c.net.latency_jitter_ms = n.value("latency_jitter_ms", c.net.latency_jitter_ms);
      c.net.reorder = n.value("reorder", c.net.reorder);
    }
    if (j.contains("liveliness_probe") && !j["liveliness_probe"].is_null())
      c.liveliness_probe = LivelinessProbe{j["liveliness_probe"].at("player").get<std::uint32_t>(),
                                           j["liveliness_probe"].at("at_s").get<double>()};
  } catch (const json::exception& e) {
    throw Error(Errc::ConfigError, std::string("scenario: ") + e.what());
  }
  c.validate();
  return c;
}

ScenarioConfig ScenarioConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::ConfigError, "cannot open " + path.string());
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error(Errc::ConfigError, path.string() + ": malformed JSON");
  return from_json(j);
}

OrderedJson ScenarioConfig::to_json() const {
  OrderedJson j;
  j["name"] = name;
  j["players"] = players;
  j["world"] = {{"width", world.width}, {"height", world.height}, {"cell_size", world.cell_size}};
  j["update_hz"] = update_hz;
  j["duration_s"] = duration_s;
  j["net"] = {{"loss", net.drop_probability},
              {"latency_mean_ms", net.latency_mean_ms},
              {"latency_jitter_ms", net.latency_jitter_ms},
              {"reorder", net.reorder}};
  j["qos"] = qos;
  j["aoi_regions_per_player"] = aoi_regions_per_player;
  j["aoi_follow"] = aoi_follow;
  j["bot_speed"] = bot_speed;
  j["seed"] = seed;
  j["step_ms"] = step_ms;
  j["lease_ms"] = lease_ms;
  j["heartbeat_ms"] = heartbeat_ms;
  j["staleness_timeout_ms"] = staleness_timeout_ms;
  j["warmup_timeout_s"] = warmup_timeout_s;
  j["drain_timeout_s"] = drain_timeout_s;
  if (liveliness_probe)
    j["liveliness_probe"] = {{"player", liveliness_probe->player}, {"at_s", liveliness_probe->at_s}};
  else
    j["liveliness_probe"] = nullptr;
  return j;
}

std::string render_report(const OrderedJson& report) { return report.dump(2) + "\n"; }

using namespace detail;

// ---------------------------------------------------------------------------
// Virtual time

ScenarioResult run_scenario(const ScenarioConfig& cfg) {
  cfg.validate();
  const auto wall_start = std::chrono::steady_clock::now();
  const auto n = cfg.players;
  const TimeUs step = ms_to_us(cfg.step_ms);
  const TimeUs period = static_cast<TimeUs>(std::llround(1e6 / cfg.update_hz));
  const bool exact_oracle = cfg.qos == "reliable" && !cfg.aoi_follow;

  auto net_cfg = cfg.net;
  net_cfg.rng_seed = cfg.seed;
  auto net = transport::SimNetwork::create(net_cfg);
  auto links = dcps::sim_link_factory(net);
  const auto scfg = session_config(cfg);

  std::vector<std::unique_ptr<game::GameSession>> sessions;
  std::vector<GuidPrefix> prefixes;
  for (std::uint32_t i = 0; i < n; ++i) {
    dcps::ParticipantConfig p;
    p.lease_ms = cfg.lease_ms;
    p.heartbeat_period_ms = cfg.heartbeat_ms;
    p.prefix = make_prefix(cfg.seed, i);
    prefixes.push_back(*p.prefix);
    sessions.push_back(std::make_unique<game::GameSession>(dcps::DomainParticipant::create(links, p), scfg));
  }

  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> ux(0, cfg.world.width), uy(0, cfg.world.height),
      uh(0, 2 * std::numbers::pi);
  std::uniform_int_distribution<TimeUs> phase(0, std::max<TimeUs>(0, period / step - 1));
  std::vector<Bot> bots(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    auto& b = bots[i];
    b.entity = i + 1;
    b.x = ux(rng);
    b.y = uy(rng);
    b.heading = uh(rng);
    b.next_update = phase(rng) * step;
    sessions[i]->create_entity(b.entity, game::EntityKind::Player, b.x, b.y);
    sessions[i]->subscribe_aoi(aoi_around(game::region_of(b.x, b.y, cfg.world), cfg.aoi_regions_per_player, cfg.world));
  }

  TimeUs now = 0;
  TimeUs end = std::numeric_limits<TimeUs>::max();
  // Stale expiry runs only while bots publish: once they stop, every entity
  // would eventually look stale.
  auto step_all = [&](bool poll) {
    now += step;
    net->advance_to(now);
    for (auto& s : sessions) s->participant().tick();
    if (poll)
      for (auto& s : sessions) s->poll(now < end);
  };

  // Discovery: every writer matched with every reader, both directions.
  auto fully_matched = [&] {
    for (auto& s : sessions)
      if (s->writer().matched_reader_count() != n || s->reader().matched_writer_count() != n) return false;
    return true;
  };
  const TimeUs warmup_limit = static_cast<TimeUs>(cfg.warmup_timeout_s * 1e6);
  while (!fully_matched() && now < warmup_limit) step_all(false);
  const bool warmed = fully_matched();
  const TimeUs t0 = now;
  for (auto& b : bots) b.next_update += t0;
  end = t0 + static_cast<TimeUs>(cfg.duration_s * 1e6);

  // expected[s][w]: samples of bot w passing subscriber s's filter.
  std::vector<std::vector<std::uint64_t>> expected(n, std::vector<std::uint64_t>(n, 0));
  std::vector<std::vector<std::uint32_t>> subs_of_region(cfg.world.region_count());
  for (std::uint32_t s = 0; s < n; ++s)
    for (auto r : sessions[s]->aoi()) subs_of_region[r].push_back(s);
  std::map<std::uint64_t, game::EntityState> truth;
  std::uint64_t sent = 0;

  const bool probe = cfg.liveliness_probe.has_value();
  const std::uint32_t probe_player = probe ? cfg.liveliness_probe->player : 0;
  const TimeUs probe_at = cfg.liveliness_probe ? t0 + static_cast<TimeUs>(cfg.liveliness_probe->at_s * 1e6) : 0;
  bool silenced = false;
  std::vector<std::optional<TimeUs>> detected(n);
  std::vector<bool> excluded(n, false);
  if (probe) excluded[probe_player] = true;

  const TimeUs poll_every = std::max<TimeUs>(step, ms_to_us(20));
  TimeUs next_poll = t0;
  auto watch_liveliness = [&] {
    if (!silenced) return;
    for (std::uint32_t i = 0; i < n; ++i)
      if (!excluded[i] && !detected[i] && sessions[i]->reader().get_status().liveliness_changed.not_alive_count > 0)
        detected[i] = now;
  };

  if (warmed) {
    while (now < end) {
      if (probe && !silenced && now >= probe_at) {
        net->set_silenced(prefixes[probe_player], true);
        bots[probe_player].active = false;
        silenced = true;
      }
      for (std::uint32_t i = 0; i < n; ++i) {
        auto& b = bots[i];
        if (!b.active || b.next_update > now) continue;
        if (b.published > 0) move(b, static_cast<double>(period) / 1e6, cfg.bot_speed, cfg.world, rng);
        const auto before = sessions[i]->owned(b.entity)->region;
        auto st = sessions[i]->handoff(b.entity, b.x, b.y, std::cos(b.heading) * cfg.bot_speed,
                                       std::sin(b.heading) * cfg.bot_speed);
        if (st.region != before) {
          ++b.crossings;
          if (cfg.aoi_follow)
            sessions[i]->subscribe_aoi(aoi_around(st.region, cfg.aoi_regions_per_player, cfg.world));
        }
        truth[b.entity] = st;
        ++b.published;
        ++sent;
        if (exact_oracle)
          for (auto s : subs_of_region[st.region]) ++expected[s][i];
        b.next_update += period;
      }
      const bool poll = now >= next_poll;
      if (poll) next_poll += poll_every;
      step_all(poll);
      watch_liveliness();
    }
  }

  // Drain: no more updates; wait for acknowledgements and an empty network.
  const TimeUs drain_limit = now + static_cast<TimeUs>(cfg.drain_timeout_s * 1e6);
  auto quiet = [&] {
    if (net->next_delivery()) return false;
    if (cfg.qos != "best_effort")
      for (std::uint32_t i = 0; i < n; ++i)
        if (!excluded[i] && !sessions[i]->writer().all_acknowledged()) return false;
    return true;
  };
  const TimeUs drain_start = now;
  while (warmed && !quiet() && now < drain_limit) {
    step_all(false);
    watch_liveliness();
  }
  const bool drained = warmed && quiet();
  const TimeUs drain_us = now - drain_start;
  for (auto& s : sessions) s->poll(false);

  // Truth for the silenced bot is whatever it managed to send, so leave it out.
  if (probe) truth.erase(bots[probe_player].entity);
  auto conv = check_convergence(sessions, truth, excluded);

  // Report.
  Assertions asserts;
  asserts.add("discovery_complete", warmed, {{"warmup_ms", ms(static_cast<std::uint64_t>(t0))}});
  asserts.add("drained", drained, {{"drain_ms", ms(static_cast<std::uint64_t>(drain_us))}});

  OrderedJson subs = OrderedJson::array();
  std::uint64_t delivered = 0, expected_total = 0, bytes = 0, retrans = 0, lat_sum = 0, lat_max = 0, taken = 0;
  std::size_t mismatched_pairs = 0, crossings = 0;
  for (std::uint32_t s = 0; s < n; ++s) {
    const auto& st = sessions[s]->stats();
    std::uint64_t got = 0, want = 0;
    for (std::uint32_t w = 0; w < n; ++w) {
      if (excluded[w] || excluded[s]) continue;
      auto it = st.taken_by_writer.find(sessions[w]->writer().guid());
      const auto g = it == st.taken_by_writer.end() ? 0 : it->second;
      got += g;
      want += expected[s][w];
      if (exact_oracle && g != expected[s][w]) ++mismatched_pairs;
    }
    const auto b = net->stats_for(prefixes[s]).bytes_delivered;
    delivered += got;
    expected_total += want;
    bytes += b;
    retrans += sessions[s]->writer().retransmissions();
    lat_sum += st.latency_sum_us;
    lat_max = std::max(lat_max, st.latency_max_us);
    taken += st.samples_taken;
    crossings += bots[s].crossings;
    OrderedJson e;
    e["player"] = s;
    e["aoi_regions"] = sessions[s]->aoi().size();
    e["delivered"] = got;
    e["expected"] = exact_oracle && !excluded[s] ? OrderedJson(want) : OrderedJson(nullptr);
    e["bytes_received"] = b;
    e["staleness_mean_ms"] = st.samples_taken ? ms(st.latency_sum_us / st.samples_taken) : 0.0;
    e["staleness_max_ms"] = ms(st.latency_max_us);
    e["view_entities"] = sessions[s]->view().size();
    e["missing_vs_truth"] = conv.missing_vs_truth[s];
    subs.push_back(std::move(e));
  }
  if (exact_oracle)
    asserts.add("reliable_pairs_exact", mismatched_pairs == 0, {{"mismatched_pairs", mismatched_pairs}});
  if (cfg.qos != "best_effort" || cfg.net.drop_probability == 0) {
    asserts.add("same_aoi_convergence", conv.diverged_pairs == 0,
                {{"pairs", conv.pairs}, {"diverged", conv.diverged_pairs}});
    asserts.add("views_match_truth", conv.truth_max_count == 0 && conv.truth_max_error == 0.0);
  }
  if (cfg.net.drop_probability == 0 && !probe) {
    const double bound = cfg.net.latency_mean_ms + cfg.net.latency_jitter_ms + cfg.heartbeat_ms + cfg.step_ms;
    asserts.add("staleness_bound", ms(lat_max) <= bound, {{"max_ms", ms(lat_max)}, {"bound_ms", bound}});
  }

  OrderedJson live = nullptr;
  if (probe) {
    const double bound_ms =
        3.0 * cfg.lease_ms + cfg.heartbeat_ms + cfg.net.latency_mean_ms + cfg.net.latency_jitter_ms + cfg.step_ms;
    double worst = 0;
    std::size_t missed = 0;
    OrderedJson times = OrderedJson::array();
    for (std::uint32_t i = 0; i < n; ++i) {
      if (excluded[i]) continue;
      if (!detected[i]) {
        ++missed;
        times.push_back(nullptr);
        continue;
      }
      const double d = ms(static_cast<std::uint64_t>(*detected[i] - probe_at));
      worst = std::max(worst, d);
      times.push_back(d);
    }
    live = {{"silenced_player", cfg.liveliness_probe->player},
            {"silenced_at_ms", ms(static_cast<std::uint64_t>(probe_at - t0))},
            {"max_detection_ms", worst},
            {"bound_ms", bound_ms},
            {"undetected", missed},
            {"detection_ms", times}};
    asserts.add("liveliness_detected", missed == 0 && worst <= bound_ms, {{"max_ms", worst}, {"bound_ms", bound_ms}});
  }

  const auto sim = net->stats();
  OrderedJson r;
  r["scenario"] = cfg.to_json();
  r["virtual_time_ms"] = {{"warmup", ms(static_cast<std::uint64_t>(t0))},
                          {"run", ms(static_cast<std::uint64_t>(std::max<TimeUs>(0, std::min(now, end) - t0)))},
                          {"drain", ms(static_cast<std::uint64_t>(drain_us))}};
  r["totals"] = {{"sent", sent},
                 {"region_crossings", crossings},
                 {"delivered", delivered},
                 {"expected", exact_oracle ? OrderedJson(expected_total) : OrderedJson(nullptr)},
                 {"samples_taken", taken},
                 {"bytes_delivered", bytes},
                 {"messages_sent", sim.messages_sent},
                 {"messages_dropped", sim.messages_dropped},
                 {"messages_delivered", sim.messages_delivered},
                 {"retransmissions", retrans}};
  r["staleness_ms"] = {{"mean", taken ? ms(lat_sum / taken) : 0.0}, {"max", ms(lat_max)}};
  r["divergence"] = {{"same_aoi_pairs", conv.pairs},
                     {"diverged_pairs", conv.diverged_pairs},
                     {"max_count", conv.max_count},
                     {"max_pos_error", conv.max_error},
                     {"vs_truth_max_count", conv.truth_max_count},
                     {"vs_truth_max_pos_error", conv.truth_max_error}};
  r["liveliness"] = live;
  r["assertions"] = asserts.list;
  r["passed"] = asserts.failed.empty();
  r["subscribers"] = subs;

  ScenarioResult out;
  out.report = std::move(r);
  out.failed_assertions = asserts.failed;
  out.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
  return out;
}

}  // namespace mmog::sim
