#include <chrono>
#include <cmath>
#include <numbers>
#include <random>
#include <thread>

#include "mmog/common/error.hpp"
#include "mmog/dcps/dcps.hpp"
#include "mmog/game/session.hpp"
#include "mmog/transport/udp_link.hpp"
#include "mmog/sim/harness.hpp"
#include "scenario_common.hpp"

namespace mmog::sim {

ScenarioResult run_scenario_realtime(const ScenarioConfig& cfg, std::uint16_t base_port) {
  cfg.validate();
  using clock = std::chrono::steady_clock;
  const auto wall_start = clock::now();
  const auto n = cfg.players;
  if (static_cast<std::uint32_t>(base_port) + 1 + n > 65535) throw Error(Errc::ConfigError, "base port too high");
  const auto period = std::chrono::microseconds(static_cast<std::int64_t>(std::llround(1e6 / cfg.update_hz)));
  const auto scfg = detail::session_config(cfg);

  std::vector<std::unique_ptr<game::GameSession>> sessions;
  for (std::uint32_t i = 0; i < n; ++i) {
    transport::UdpLinkConfig u;
    u.base_port = base_port;
    u.data_port = static_cast<std::uint16_t>(base_port + 1 + i);
    for (std::uint32_t k = 0; k < n; ++k)
      if (k != i) u.peers.push_back({u.bind_host, static_cast<std::uint16_t>(base_port + 1 + k)});
    dcps::ParticipantConfig p;
    p.lease_ms = cfg.lease_ms;
    p.heartbeat_period_ms = cfg.heartbeat_ms;
    p.prefix = make_prefix(cfg.seed, i);
    sessions.push_back(
        std::make_unique<game::GameSession>(dcps::DomainParticipant::create(dcps::udp_link_factory(u), p), scfg));
  }

  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> ux(0, cfg.world.width), uy(0, cfg.world.height),
      uh(0, 2 * std::numbers::pi);
  std::vector<detail::Bot> bots(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    auto& b = bots[i];
    b.entity = i + 1;
    b.x = ux(rng);
    b.y = uy(rng);
    b.heading = uh(rng);
    sessions[i]->create_entity(b.entity, game::EntityKind::Player, b.x, b.y);
    sessions[i]->subscribe_aoi(
        detail::aoi_around(game::region_of(b.x, b.y, cfg.world), cfg.aoi_regions_per_player, cfg.world));
  }
  for (auto& s : sessions) s->participant().spin(std::chrono::milliseconds(cfg.step_ms));

  auto fully_matched = [&] {
    for (auto& s : sessions)
      if (s->writer().matched_reader_count() != n || s->reader().matched_writer_count() != n) return false;
    return true;
  };
  const auto warmup_deadline = clock::now() + std::chrono::duration<double>(cfg.warmup_timeout_s);
  while (!fully_matched() && clock::now() < warmup_deadline) std::this_thread::sleep_for(std::chrono::milliseconds(10));
  const bool warmed = fully_matched();
  const auto t0 = clock::now();

  std::map<std::uint64_t, game::EntityState> truth;
  std::uint64_t sent = 0;
  std::vector<clock::time_point> next(n);
  for (std::uint32_t i = 0; i < n; ++i)
    next[i] = t0 + std::chrono::microseconds(std::uniform_int_distribution<std::int64_t>(0, period.count() - 1)(rng));
  const auto end = t0 + std::chrono::duration_cast<clock::duration>(std::chrono::duration<double>(cfg.duration_s));
  auto next_poll = t0;
  while (warmed && clock::now() < end) {
    const auto now = clock::now();
    for (std::uint32_t i = 0; i < n; ++i) {
      auto& b = bots[i];
      if (next[i] > now) continue;
      if (b.published > 0) detail::move(b, period.count() / 1e6, cfg.bot_speed, cfg.world, rng);
      const auto before = sessions[i]->owned(b.entity)->region;
      auto st = sessions[i]->handoff(b.entity, b.x, b.y, std::cos(b.heading) * cfg.bot_speed,
                                     std::sin(b.heading) * cfg.bot_speed);
      if (st.region != before) {
        ++b.crossings;
        if (cfg.aoi_follow)
          sessions[i]->subscribe_aoi(detail::aoi_around(st.region, cfg.aoi_regions_per_player, cfg.world));
      }
      truth[b.entity] = st;
      ++b.published;
      ++sent;
      next[i] += period;
    }
    if (now >= next_poll) {
      for (auto& s : sessions) s->poll();
      next_poll += std::chrono::milliseconds(20);
    }
    auto wake = std::min(next_poll, end);
    for (const auto& t : next) wake = std::min(wake, t);
    std::this_thread::sleep_until(wake);
  }

  const auto drain_start = clock::now();
  const auto drain_deadline = drain_start + std::chrono::duration<double>(cfg.drain_timeout_s);
  auto acked = [&] {
    if (cfg.qos == "best_effort") return true;
    for (auto& s : sessions)
      if (!s->writer().all_acknowledged()) return false;
    return true;
  };
  while (warmed && !acked() && clock::now() < drain_deadline) {
    for (auto& s : sessions) s->poll(false);
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  const bool drained = warmed && acked();
  // Acknowledged samples may still sit in reader caches for one more tick.
  std::this_thread::sleep_for(std::chrono::milliseconds(4 * cfg.step_ms));
  for (auto& s : sessions) {
    s->participant().stop();
    s->poll(false);
  }
  const auto drain_ms = std::chrono::duration<double, std::milli>(clock::now() - drain_start).count();

  auto conv = detail::check_convergence(sessions, truth, std::vector<bool>(n, false));
  detail::Assertions asserts;
  asserts.add("discovery_complete", warmed);
  asserts.add("drained", drained, {{"drain_ms", drain_ms}});
  if (cfg.qos != "best_effort") {
    asserts.add("same_aoi_convergence", conv.diverged_pairs == 0,
                {{"pairs", conv.pairs}, {"diverged", conv.diverged_pairs}});
    asserts.add("views_match_truth", conv.truth_max_count == 0 && conv.truth_max_error == 0.0);
  }

  std::uint64_t taken = 0, lat_sum = 0, lat_max = 0, retrans = 0;
  for (auto& s : sessions) {
    taken += s->stats().samples_taken;
    lat_sum += s->stats().latency_sum_us;
    lat_max = std::max(lat_max, s->stats().latency_max_us);
    retrans += s->writer().retransmissions();
  }
  OrderedJson r;
  r["scenario"] = cfg.to_json();
  r["mode"] = "realtime";
  r["totals"] = {{"sent", sent}, {"samples_taken", taken}, {"retransmissions", retrans}};
  r["staleness_ms"] = {{"mean", taken ? detail::ms(lat_sum / taken) : 0.0}, {"max", detail::ms(lat_max)}};
  r["divergence"] = {{"same_aoi_pairs", conv.pairs},
                     {"diverged_pairs", conv.diverged_pairs},
                     {"max_count", conv.max_count},
                     {"max_pos_error", conv.max_error},
                     {"vs_truth_max_count", conv.truth_max_count},
                     {"vs_truth_max_pos_error", conv.truth_max_error}};
  r["assertions"] = asserts.list;
  r["passed"] = asserts.failed.empty();

  ScenarioResult out;
  out.report = std::move(r);
  out.failed_assertions = asserts.failed;
  out.wall_clock_s = std::chrono::duration<double>(clock::now() - wall_start).count();
  return out;
}

}  // namespace mmog::sim
