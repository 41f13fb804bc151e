#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <numbers>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "mmog/game/session.hpp"
#include "mmog/sim/harness.hpp"

namespace mmog::sim::detail {

inline game::SessionConfig session_config(const ScenarioConfig& c) {
  game::SessionConfig s;
  s.world = c.world;
  s.staleness_timeout_us = ms_to_us(c.staleness_timeout_ms);
  if (c.qos == "reliable") {
    s.writer_qos.history = dcps::History::keep_all();
    s.reader_qos.history = dcps::History::keep_all();
  } else if (c.qos == "best_effort") {
    s.writer_qos.reliability = dcps::Reliability::BestEffort;
    s.reader_qos.reliability = dcps::Reliability::BestEffort;
  }
  return s;
}

/// The `count` regions whose centres are nearest the centre of `home`,
/// ties broken by region index. Zero means every region.
inline std::set<std::uint32_t> aoi_around(std::uint32_t home, std::uint32_t count, const game::WorldConfig& w) {
  const auto nx = w.regions_x();
  const auto total = w.region_count();
  std::set<std::uint32_t> out;
  if (count == 0 || count >= total) {
    for (std::uint32_t r = 0; r < total; ++r) out.insert(r);
    return out;
  }
  const auto hx = static_cast<std::int64_t>(home % nx), hy = static_cast<std::int64_t>(home / nx);
  std::vector<std::pair<std::int64_t, std::uint32_t>> by_distance;
  for (std::uint32_t r = 0; r < total; ++r) {
    const auto dx = static_cast<std::int64_t>(r % nx) - hx, dy = static_cast<std::int64_t>(r / nx) - hy;
    by_distance.push_back({dx * dx + dy * dy, r});
  }
  std::sort(by_distance.begin(), by_distance.end());
  for (std::uint32_t i = 0; i < count; ++i) out.insert(by_distance[i].second);
  return out;
}

/// Random-walk bot: heading drifts a little each step, walls reflect.
struct Bot {
  std::uint64_t entity = 0;
  double x = 0, y = 0, heading = 0;
  TimeUs next_update = 0;
  bool active = true;
  std::uint64_t published = 0;
  std::uint64_t crossings = 0;
};

inline void move(Bot& b, double dt, double speed, const game::WorldConfig& w, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> turn(-0.5, 0.5);
  b.heading += turn(rng);
  double nx = b.x + std::cos(b.heading) * speed * dt;
  double ny = b.y + std::sin(b.heading) * speed * dt;
  const double eps = 1e-6;
  if (nx < 0 || nx >= w.width) {
    b.heading = std::numbers::pi - b.heading;
    nx = std::clamp(nx, 0.0, w.width - eps);
  }
  if (ny < 0 || ny >= w.height) {
    b.heading = -b.heading;
    ny = std::clamp(ny, 0.0, w.height - eps);
  }
  b.x = nx;
  b.y = ny;
}

inline double ms(std::uint64_t us) { return static_cast<double>(us) / 1000.0; }

/// Session views restricted to the entities whose true region lies inside
/// `aoi`, compared pairwise for identical AOIs and against the truth.
struct ConvergenceCheck {
  std::size_t pairs = 0, diverged_pairs = 0, max_count = 0;
  double max_error = 0;
  std::size_t truth_max_count = 0;
  double truth_max_error = 0;
  std::vector<std::size_t> missing_vs_truth;
};

inline ConvergenceCheck check_convergence(const std::vector<std::unique_ptr<game::GameSession>>& sessions,
                                   const std::map<std::uint64_t, game::EntityState>& truth,
                                   const std::vector<bool>& excluded) {
  auto restrict = [&](const game::WorldView& v, const std::set<std::uint32_t>& aoi) {
    game::WorldView out;
    for (const auto& [id, e] : v.entries()) {
      auto t = truth.find(id);
      if (t != truth.end() && aoi.count(t->second.region)) out.apply_update(e.state, e.timestamp, e.writer, e.received_at);
    }
    return out;
  };
  ConvergenceCheck c;
  std::vector<game::WorldView> restricted;
  for (std::size_t i = 0; i < sessions.size(); ++i) {
    const auto& aoi = sessions[i]->aoi();
    restricted.push_back(restrict(sessions[i]->view(), aoi));
    game::WorldView expected;
    for (const auto& [id, s] : truth)
      if (aoi.count(s.region)) expected.apply_update(s, 0, Guid{});
    auto d = excluded[i] ? game::Divergence{} : game::divergence(restricted.back(), expected);
    c.missing_vs_truth.push_back(d.count);
    c.truth_max_count = std::max(c.truth_max_count, d.count);
    c.truth_max_error = std::max(c.truth_max_error, d.max_pos_error);
  }
  std::map<std::set<std::uint32_t>, std::vector<std::size_t>> by_aoi;
  for (std::size_t i = 0; i < sessions.size(); ++i)
    if (!excluded[i]) by_aoi[sessions[i]->aoi()].push_back(i);
  for (const auto& [_, group] : by_aoi)
    for (std::size_t a = 0; a < group.size(); ++a)
      for (std::size_t b = a + 1; b < group.size(); ++b) {
        auto d = game::divergence(restricted[group[a]], restricted[group[b]]);
        ++c.pairs;
        if (d.count || d.max_pos_error > 0) ++c.diverged_pairs;
        c.max_count = std::max(c.max_count, d.count);
        c.max_error = std::max(c.max_error, d.max_pos_error);
      }
  return c;
}

struct Assertions {
  OrderedJson list = OrderedJson::array();
  std::vector<std::string> failed;
  void add(const std::string& name, bool passed, OrderedJson detail = nullptr) {
    list.push_back({{"name", name}, {"passed", passed}, {"detail", std::move(detail)}});
    if (!passed) failed.push_back(name);
  }
};

}  // namespace mmog::sim::detail
