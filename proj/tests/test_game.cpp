#include <algorithm>
#include <random>

#include "doctest.h"
#include "mmog/common/error.hpp"
#include "mmog/game/session.hpp"
#include "mmog/transport/wire.hpp"
#include "sim_fixture.hpp"

using namespace testing;
using namespace mmog::game;

namespace {

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error raised");
  return Errc::Precondition;
}

WorldConfig world16() { return WorldConfig{1024.0, 1024.0, 64.0}; }

// Centre of a region in world16().
std::pair<double, double> centre(std::uint32_t region) {
  return {(region % 16) * 64.0 + 32.0, (region / 16) * 64.0 + 32.0};
}

Guid guid_n(std::uint32_t n) { return Guid{make_prefix(1, n), 0x102}; }

}  // namespace

TEST_CASE("region arithmetic") {
  auto w = world16();
  CHECK(w.regions_x() == 16);
  CHECK(w.region_count() == 256);
  CHECK(region_of(0, 0, w) == 0);
  CHECK(region_of(100, 200, w) == 49);
  CHECK(region_of(1023.999, 1023.999, w) == 255);
  CHECK(code_of([&] { region_of(1024, 0, w); }) == Errc::OutOfBounds);
  CHECK(code_of([&] { region_of(-0.5, 0, w); }) == Errc::OutOfBounds);
  WorldConfig odd{100, 50, 30};
  CHECK(odd.regions_x() == 4);
  CHECK(odd.regions_y() == 2);
  CHECK(region_of(99, 49, odd) == 7);
  CHECK(code_of([] { WorldConfig{0, 1, 1}.validate(); }) == Errc::ConfigError);
}

TEST_CASE("world view merge") {
  WorldView v;
  EntityState s{1, 0, 0, 1, 1, 0, 0, 1};
  CHECK(v.apply_update(s, 100, guid_n(1)));
  CHECK(v.size() == 1);
  auto older = s;
  older.x = 9;
  CHECK_FALSE(v.apply_update(older, 50, guid_n(1)));
  CHECK(v.find(1)->state.x == 1);

  // Equal timestamps: higher writer guid wins regardless of order.
  EntityState a = s, b = s;
  a.x = 10;
  b.x = 20;
  WorldView v1, v2;
  v1.apply_update(a, 500, guid_n(1));
  v1.apply_update(b, 500, guid_n(2));
  v2.apply_update(b, 500, guid_n(2));
  v2.apply_update(a, 500, guid_n(1));
  const double winner = guid_n(1) < guid_n(2) ? 20 : 10;
  CHECK(v1.find(1)->state.x == winner);
  CHECK(v2.find(1)->state.x == winner);
}

TEST_CASE("merge is order-insensitive") {
  std::mt19937_64 rng(11);
  std::vector<std::tuple<EntityState, TimeUs, Guid>> samples;
  for (int i = 0; i < 40; ++i) {
    EntityState s;
    s.entity_id = rng() % 5;
    s.x = static_cast<double>(rng() % 100);
    s.version = rng() % 4;
    samples.emplace_back(s, static_cast<TimeUs>(rng() % 6), guid_n(static_cast<std::uint32_t>(rng() % 3)));
  }
  WorldView reference;
  for (auto& [s, t, g] : samples) reference.apply_update(s, t, g);
  for (int round = 0; round < 50; ++round) {
    std::shuffle(samples.begin(), samples.end(), rng);
    WorldView v;
    for (auto& [s, t, g] : samples) v.apply_update(s, t, g);
    auto d = divergence(reference, v);
    CHECK(d.count == 0);
    CHECK(d.max_pos_error == 0.0);
  }
}

TEST_CASE("divergence examples") {
  WorldView a, b;
  EntityState e1{1, 0, 0, 0, 0, 0, 0, 1}, e2{2, 0, 0, 10, 10, 0, 0, 1};
  a.apply_update(e1, 1, guid_n(1));
  a.apply_update(e2, 1, guid_n(1));
  b.apply_update(e1, 1, guid_n(1));
  b.apply_update(e2, 1, guid_n(1));
  auto same = divergence(a, b);
  CHECK(same.count == 0);
  CHECK(same.max_pos_error == 0.0);

  WorldView c = b;
  c.erase(2);
  auto missing = divergence(a, c);
  CHECK(missing.count == 1);
  CHECK(missing.max_pos_error == 0.0);

  WorldView d = b;
  auto moved = e2;
  moved.x += 3;
  moved.y += 4;
  moved.version = 2;
  d.apply_update(moved, 2, guid_n(1));
  auto off = divergence(a, d);
  CHECK(off.count == 1);
  CHECK(off.max_pos_error == doctest::Approx(5.0));

  // Restriction to a region set ignores everything else.
  auto elsewhere = e2;
  elsewhere.entity_id = 3;
  elsewhere.region = 9;
  d.apply_update(elsewhere, 1, guid_n(1));
  CHECK(divergence(a, d, std::set<std::uint32_t>{0}).count == 1);
}

TEST_CASE("session publishing rules") {
  SimDomain d;
  auto& a = d.add();
  auto& b = d.add();
  SessionConfig cfg;
  cfg.world = world16();
  GameSession owner(a, cfg);
  GameSession other(b, cfg);
  auto [x5, y5] = centre(5);
  auto e = owner.create_entity(7, EntityKind::Player, x5, y5);
  CHECK(e.region == 5);
  CHECK(owner.publish_update(e).version == 1);
  CHECK(owner.publish_update(e).version == 2);

  auto wrong = e;
  wrong.region = 6;
  CHECK(code_of([&] { owner.publish_update(wrong); }) == Errc::InvalidRegion);
  CHECK(code_of([&] { other.publish_update(e); }) == Errc::NotOwner);
  auto out = e;
  out.x = 5000;
  CHECK(code_of([&] { owner.publish_update(out); }) == Errc::OutOfBounds);
  CHECK(code_of([&] { owner.subscribe_aoi({}); }) == Errc::InvalidRegion);
  CHECK(code_of([&] { owner.subscribe_aoi({256}); }) == Errc::InvalidRegion);
}

TEST_CASE("area of interest filters the view") {
  SimDomain d;
  auto& a = d.add();
  auto& b = d.add();
  SessionConfig cfg;
  cfg.world = world16();
  GameSession pub(a, cfg);
  GameSession sub(b, cfg);
  sub.subscribe_aoi({5});
  auto [x5, y5] = centre(5);
  auto [x6, y6] = centre(6);
  auto e5 = pub.create_entity(1, EntityKind::Player, x5, y5);
  auto e6 = pub.create_entity(2, EntityKind::Npc, x6, y6);
  REQUIRE(d.run_until([&] { return pub.writer().matched_reader_count() == 1; }, 1000));
  pub.publish_update(e5);
  pub.publish_update(e6);
  d.run_until([&] {
    sub.poll();
    return sub.view().size() == 1 && pub.writer().all_acknowledged();
  }, 1000);
  d.run_ms(100);
  sub.poll();
  CHECK(sub.view().size() == 1);
  CHECK(sub.view().find(1) != nullptr);
  CHECK(sub.view().find(1)->state.version == 1);
}

TEST_CASE("all-region interest equals an unfiltered subscription") {
  SimDomain d;
  auto& a = d.add();
  auto& b = d.add();
  SessionConfig cfg;
  cfg.world = WorldConfig{256, 256, 64};
  cfg.reader_qos = QosProfile::reliable_keep_all();
  cfg.writer_qos = QosProfile::reliable_keep_all();
  GameSession pub(a, cfg);
  GameSession sub(b, cfg);
  std::set<std::uint32_t> all;
  for (std::uint32_t r = 0; r < cfg.world.region_count(); ++r) all.insert(r);
  sub.subscribe_aoi(all);
  auto plain = b.create_subscriber().create_reader(b.create_topic(kEntityTopic, entity_state_type()),
                                                  QosProfile::reliable_keep_all());
  REQUIRE(d.run_until([&] { return pub.writer().matched_reader_count() == 2; }, 1000));

  std::mt19937_64 rng(5);
  for (std::uint64_t id = 0; id < 6; ++id) pub.create_entity(id, EntityKind::Player, 10, 10);
  for (int i = 0; i < 120; ++i) {
    const std::uint64_t id = rng() % 6;
    pub.handoff(id, static_cast<double>(rng() % 256), static_cast<double>(rng() % 256));
    d.step();
  }
  REQUIRE(d.run_until([&] { return pub.writer().all_acknowledged(); }, 3000));
  auto filtered = sub.reader().take();
  auto unfiltered = plain.take();
  auto key = [](const Sample& s) { return std::pair{s.info.writer_guid, s.info.sequence_number}; };
  std::vector<std::pair<Guid, std::uint64_t>> fa, fb;
  for (auto& s : filtered) fa.push_back(key(s));
  for (auto& s : unfiltered) fb.push_back(key(s));
  std::sort(fa.begin(), fa.end());
  std::sort(fb.begin(), fb.end());
  CHECK(fa.size() == 120);
  CHECK(fa == fb);
}

TEST_CASE("handoff is observed atomically") {
  SimDomain d;
  auto& a = d.add();
  auto& b = d.add();
  auto& c = d.add();
  SessionConfig cfg;
  cfg.world = world16();
  GameSession mover(a, cfg);
  GameSession both(b, cfg);
  GameSession old_only(c, cfg);
  both.subscribe_aoi({5, 6});
  old_only.subscribe_aoi({5});
  REQUIRE(d.run_until([&] { return mover.writer().matched_reader_count() == 2; }, 1000));

  // Drop the first transmission of every odd sequence number so repairs
  // interleave with new writes.
  std::set<std::pair<GuidPrefix, std::uint64_t>> seen;
  d.net->set_drop_hook([&](const Bytes& bytes, const GuidPrefix&, const GuidPrefix& to) {
    bool drop = false;
    for (auto& s : transport::decode_message(bytes).submessages)
      if (auto* x = std::get_if<transport::DataSub>(&s))
        if (x->sequence % 2 == 1 && seen.insert({to, x->sequence}).second) drop = true;
    return drop;
  });

  auto [x5, y5] = centre(5);
  mover.create_entity(1, EntityKind::Player, x5, y5);
  mover.handoff(1, x5, y5);
  std::vector<std::uint32_t> regions_seen;
  auto observe = [&] {
    both.poll();
    old_only.poll();
    if (auto* e = both.view().find(1))
      if (regions_seen.empty() || regions_seen.back() != e->state.region) regions_seen.push_back(e->state.region);
  };
  for (int i = 0; i < 5; ++i) {
    mover.handoff(1, x5 + i, y5);
    d.step();
    observe();
  }
  mover.handoff(1, x5 + 64, y5);  // into region 6
  for (int i = 0; i < 5; ++i) {
    mover.handoff(1, x5 + 64 + i, y5);
    d.step();
    observe();
  }
  for (int i = 0; i < 1000; ++i) {
    d.step();
    observe();
  }
  CHECK(regions_seen == std::vector<std::uint32_t>{5, 6});
  CHECK(both.stats().region_violations == 0);
  CHECK(old_only.stats().region_violations == 0);
  REQUIRE(both.view().find(1));
  CHECK(both.view().find(1)->state.region == 6);

  // The old-region subscriber keeps its last region-5 sample until it goes stale.
  REQUIRE(old_only.view().find(1));
  CHECK(old_only.view().find(1)->state.region == 5);
  d.run_ms(2100);
  old_only.poll();
  CHECK(old_only.view().find(1) == nullptr);
}

TEST_CASE("resubscribing swaps readers without losing updates") {
  SimDomain d;
  auto& a = d.add();
  auto& b = d.add();
  SessionConfig cfg;
  cfg.world = world16();
  GameSession pub(a, cfg);
  GameSession sub(b, cfg);
  sub.subscribe_aoi({5});
  auto [x6, y6] = centre(6);
  auto e = pub.create_entity(3, EntityKind::Item, x6, y6);
  REQUIRE(d.run_until([&] { return pub.writer().matched_reader_count() == 1; }, 1000));
  sub.subscribe_aoi({6});
  CHECK(sub.aoi() == std::set<std::uint32_t>{6});
  REQUIRE(d.run_until([&] {
    sub.poll();
    return pub.writer().is_matched_with(sub.reader().guid());
  }, 1000));
  pub.publish_update(e);
  REQUIRE(d.run_until([&] {
    sub.poll();
    return sub.view().find(3) != nullptr;
  }, 1000));
  d.run_ms(600);
  sub.poll();
  d.run_ms(20);
  CHECK(pub.writer().matched_reader_count() == 1);
}

TEST_CASE("replicas with the same interest converge under loss") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    transport::NetSimConfig net;
    net.drop_probability = 0.2;
    net.latency_mean_ms = 20;
    net.latency_jitter_ms = 10;
    net.rng_seed = seed;
    SimDomain d(net);
    SessionConfig cfg;
    cfg.world = WorldConfig{256, 256, 64};
    std::vector<std::unique_ptr<GameSession>> players;
    for (int i = 0; i < 4; ++i) players.push_back(std::make_unique<GameSession>(d.add(), cfg));
    const std::set<std::uint32_t> aoi{0, 1, 4, 5};
    players[2]->subscribe_aoi(aoi);
    players[3]->subscribe_aoi(aoi);
    REQUIRE(d.run_until([&] {
      return players[0]->writer().matched_reader_count() == 2 && players[1]->writer().matched_reader_count() == 2;
    }, 5000));

    std::mt19937_64 rng(seed);
    for (std::uint64_t id = 0; id < 6; ++id) players[id % 2]->create_entity(id, EntityKind::Player, 1, 1);
    for (int tick = 0; tick < 300; ++tick) {
      const std::uint64_t id = rng() % 6;
      players[id % 2]->handoff(id, static_cast<double>(rng() % 128), static_cast<double>(rng() % 128));
      d.step();
      if (tick % 10 == 0)
        for (auto& p : players) p->poll();
    }
    REQUIRE(d.run_until([&] {
      return players[0]->writer().all_acknowledged() && players[1]->writer().all_acknowledged();
    }, 10000));
    d.run_ms(200);
    players[2]->poll();
    players[3]->poll();
    auto div = divergence(players[2]->view(), players[3]->view());
    CHECK(div.count == 0);
    CHECK(div.max_pos_error == 0.0);
    CHECK(players[2]->view().size() == 6);
    CHECK(players[2]->stats().region_violations == 0);
  }
}
