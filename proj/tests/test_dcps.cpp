#include <set>

#include "doctest.h"
#include "mmog/common/error.hpp"
#include "mmog/transport/wire.hpp"
#include "sim_fixture.hpp"

using namespace testing;
using transport::decode_message;

namespace {

QosProfile reliable(std::uint32_t depth = 0) {
  QosProfile q;
  q.reliability = Reliability::Reliable;
  q.history = depth ? History::keep_last(depth) : History::keep_all();
  return q;
}

std::vector<std::uint64_t> seqs(const std::vector<Sample>& samples) {
  std::vector<std::uint64_t> out;
  for (auto& s : samples) out.push_back(s.info.sequence_number);
  return out;
}

template <class Sub>
void for_each_sub(const Bytes& bytes, Sub&& f) {
  for (auto& s : decode_message(bytes).submessages) f(s);
}

}  // namespace

TEST_CASE("participant creation") {
  SimDomain d;
  auto& a = d.add();
  auto& b = d.add();
  CHECK(a.guid() != b.guid());
  CHECK(a.child_count() == 0);

  ParticipantConfig bad;
  bad.lease_ms = 50;
  CHECK_THROWS_AS(d.add(bad), Error);
  try {
    d.add(bad);
  } catch (const Error& e) {
    CHECK(e.code() == Errc::Precondition);
  }
  ParticipantConfig dom;
  dom.domain_id = 256;
  CHECK_THROWS(d.add(dom));

  d.net->set_domain_open(7, false);
  ParticipantConfig closed;
  closed.domain_id = 7;
  try {
    d.add(closed);
    FAIL("expected DOMAIN_UNAVAILABLE");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::DomainUnavailable);
  }
}

TEST_CASE("remote match carries publisher group data") {
  SimDomain d;
  auto& a = d.add();
  auto& b = d.add();
  Bytes tag(32);
  for (std::size_t i = 0; i < tag.size(); ++i) tag[i] = static_cast<std::uint8_t>(0xA0 + i);

  auto topic_a = a.create_topic("pos", position_type());
  auto topic_b = b.create_topic("pos", position_type());
  auto w = a.create_publisher(tag).create_writer(topic_a);
  int fired = 0;
  Listener l;
  l.on_subscription_matched = [&](const StatusSet&) { ++fired; };
  auto r = b.create_subscriber().create_reader(topic_b, {}, l);
  CHECK(r.get_status().subscription_matched.current_count == 0);

  REQUIRE(d.run_until([&] { return r.get_status().subscription_matched.current_count == 1; }, 1000));
  d.run_ms(100);
  auto st = r.get_status().subscription_matched;
  CHECK(st.current_count == 1);
  CHECK(st.last_peer == w.guid());
  CHECK(st.last_peer_group_data == tag);
  CHECK(fired == 1);
  CHECK(w.get_status().publication_matched.current_count == 1);
}

TEST_CASE("compatibility is reported on both sides") {
  SimDomain d;
  auto& a = d.add();
  auto& b = d.add();
  auto ta = a.create_topic("t", position_type());
  auto tb = b.create_topic("t", position_type());

  SUBCASE("reliable writer, best-effort reader") {
    auto w = a.create_publisher().create_writer(ta, reliable(1));
    auto r = b.create_subscriber().create_reader(tb, QosProfile{});
    CHECK(d.run_until([&] { return r.matched_writer_count() == 1 && w.matched_reader_count() == 1; }, 1000));
  }
  SUBCASE("best-effort writer, reliable reader") {
    auto w = a.create_publisher().create_writer(ta, QosProfile{});
    auto r = b.create_subscriber().create_reader(tb, reliable(1));
    d.run_ms(1000);
    CHECK(r.matched_writer_count() == 0);
    CHECK(w.matched_reader_count() == 0);
    CHECK(r.get_status().requested_incompatible_qos.total_count == 1);
    CHECK(r.get_status().requested_incompatible_qos.last_policy == "RELIABILITY");
    CHECK(w.get_status().offered_incompatible_qos.total_count == 1);
  }
  SUBCASE("different type never matches") {
    auto other = TypeDescriptor({{"id", transport::FieldKind::U64}}, {"id"});
    auto tb2 = b.create_topic("t2", other);
    auto ta2 = a.create_topic("t2", position_type());
    auto w = a.create_publisher().create_writer(ta2);
    auto r = b.create_subscriber().create_reader(tb2);
    d.run_ms(1000);
    CHECK(r.matched_writer_count() == 0);
    CHECK(w.matched_reader_count() == 0);
  }
}

TEST_CASE("writer history") {
  SimDomain d;
  auto& a = d.add();
  auto t = a.create_topic("t", position_type());
  auto pub = a.create_publisher();
  auto w = pub.create_writer(t);
  CHECK(w.write(position(1, 0)) == 1);
  CHECK(w.write(position(1, 0)) == 2);
  CHECK(w.write(position(1, 0)) == 3);
  CHECK(w.history_sequence_numbers() == std::vector<std::uint64_t>{3});
  CHECK_THROWS_AS(w.write({std::uint32_t{1}}), Error);

  a.delete_publisher(pub);
  try {
    w.write(position(1, 0));
    FAIL("expected ENTITY_DELETED");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::EntityDeleted);
  }
}

TEST_CASE("KEEP_ALL limit with an unacknowledging reader") {
  SimDomain d;
  auto& a = d.add();
  auto& b = d.add();
  auto w = a.create_publisher().create_writer(a.create_topic("t", position_type()), reliable());
  auto r = b.create_subscriber().create_reader(b.create_topic("t", position_type()), reliable());
  REQUIRE(d.run_until([&] { return w.matched_reader_count() == 1; }, 1000));
  d.net->set_silenced(b.guid().prefix, true);
  for (int i = 0; i < 256; ++i) w.write(position(1, 0));
  try {
    w.write(position(1, 0));
    FAIL("expected RESOURCE_LIMIT");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::ResourceLimit);
  }
  // The rejected write did not consume a sequence number.
  d.net->set_silenced(b.guid().prefix, false);
  REQUIRE(d.run_until([&] { return w.all_acknowledged(); }, 2000));
  CHECK(w.write(position(1, 0)) == 257);
}

TEST_CASE("oversized sample is rejected") {
  SimDomain d;
  auto& a = d.add();
  auto w = a.create_publisher().create_writer(a.create_topic("t", position_type()));
  try {
    w.write(position(1, 0, 0.0, std::string(65500, 'a')));
    FAIL("expected RESOURCE_LIMIT");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::ResourceLimit);
  }
}

TEST_CASE("suspend and resume keep per-writer order") {
  SimDomain d;
  auto& a = d.add();
  auto& b = d.add();
  auto pub = a.create_publisher();
  auto w = pub.create_writer(a.create_topic("t", position_type()), reliable());
  auto r = b.create_subscriber().create_reader(b.create_topic("t", position_type()), reliable());
  REQUIRE(d.run_until([&] { return w.matched_reader_count() == 1 && r.matched_writer_count() == 1; }, 1000));

  pub.suspend_publication();
  pub.suspend_publication();
  w.write(position(1, 0));
  w.write(position(2, 0));
  d.run_ms(500);
  CHECK(r.take().empty());
  pub.resume_publication();
  pub.resume_publication();
  REQUIRE(d.run_until([&] { return r.cache_size() == 2; }, 1000));
  CHECK(seqs(r.take()) == std::vector<std::uint64_t>{1, 2});
}

TEST_CASE("reader history depth and read/take contract") {
  SimDomain d;
  auto& a = d.add();
  auto& b = d.add();
  auto w = a.create_publisher().create_writer(a.create_topic("t", position_type()), reliable());
  auto r = b.create_subscriber().create_reader(b.create_topic("t", position_type()), reliable(2));
  CHECK(r.take().empty());
  REQUIRE(d.run_until([&] { return w.matched_reader_count() == 1; }, 1000));
  for (int i = 0; i < 5; ++i) w.write(position(9, 0, i));
  REQUIRE(d.run_until([&] { return r.delivered_total() == 5; }, 1000));
  CHECK(r.max_instance_depth() == 2);
  auto peek = r.read();
  auto got = r.take();
  CHECK(seqs(peek) == seqs(got));
  CHECK(seqs(got) == std::vector<std::uint64_t>{4, 5});
  CHECK(r.take().empty());
  CHECK_THROWS(r.take(0));
}

TEST_CASE("reliable delivery repairs deterministic loss") {
  SimDomain d;
  auto& a = d.add();
  auto& b = d.add();
  auto w = a.create_publisher().create_writer(a.create_topic("t", position_type()), reliable());
  auto r = b.create_subscriber().create_reader(b.create_topic("t", position_type()), reliable());
  REQUIRE(d.run_until([&] { return w.matched_reader_count() == 1 && r.matched_writer_count() == 1; }, 1000));

  std::set<std::uint64_t> dropped;
  d.net->set_drop_hook([&](const Bytes& bytes, const GuidPrefix&, const GuidPrefix&) {
    bool drop = false;
    for_each_sub(bytes, [&](const transport::Submessage& s) {
      if (auto* data = std::get_if<transport::DataSub>(&s))
        if (data->sequence % 10 == 0 && dropped.insert(data->sequence).second) drop = true;
    });
    return drop;
  });
  for (std::uint32_t i = 0; i < 100; ++i) {
    w.write(position(i % 7, 0, i));
    d.step();
  }
  REQUIRE(d.run_until([&] { return w.all_acknowledged(); }, 5000));
  auto got = r.take();
  std::vector<std::uint64_t> expect;
  for (std::uint64_t s = 1; s <= 100; ++s) expect.push_back(s);
  auto by_seq = seqs(got);
  std::sort(by_seq.begin(), by_seq.end());
  CHECK(by_seq == expect);
  CHECK(dropped.size() == 10);
  CHECK(w.retransmissions() >= 10);
}

TEST_CASE("lossless delivery needs no retransmission") {
  SimDomain d;
  auto& a = d.add();
  auto& b = d.add();
  auto w = a.create_publisher().create_writer(a.create_topic("t", position_type()), reliable());
  auto r = b.create_subscriber().create_reader(b.create_topic("t", position_type()), reliable());
  REQUIRE(d.run_until([&] { return w.matched_reader_count() == 1; }, 1000));
  for (std::uint32_t i = 0; i < 100; ++i) w.write(position(1, 0, i));
  REQUIRE(d.run_until([&] { return r.delivered_total() == 100 && w.all_acknowledged(); }, 2000));
  CHECK(seqs(r.take()).size() == 100);
  CHECK(w.retransmissions() == 0);
}

TEST_CASE("writer-side filtering sends GAP instead of data") {
  SimDomain d;
  auto& a = d.add();
  auto& b = d.add();
  auto w = a.create_publisher().create_writer(a.create_topic("t", position_type()), reliable());
  auto tb = b.create_topic("t", position_type());
  auto r = b.create_subscriber().create_reader(b.create_content_filtered_topic(tb, "region != 5"), reliable());
  REQUIRE(d.run_until([&] { return w.matched_reader_count() == 1 && r.matched_writer_count() == 1; }, 1000));

  std::vector<std::pair<std::uint64_t, std::uint32_t>> gaps;
  std::set<std::uint64_t> data_seqs, nacked;
  d.net->set_drop_hook([&](const Bytes& bytes, const GuidPrefix&, const GuidPrefix&) {
    for_each_sub(bytes, [&](const transport::Submessage& s) {
      if (auto* g = std::get_if<transport::GapSub>(&s)) gaps.emplace_back(g->start, g->count);
      if (auto* x = std::get_if<transport::DataSub>(&s)) data_seqs.insert(x->sequence);
      if (auto* n = std::get_if<transport::AckNackSub>(&s))
        for (auto m : n->missing()) nacked.insert(m);
    });
    return false;
  });
  for (std::uint32_t i = 1; i <= 8; ++i) w.write(position(1, i == 5 ? 5 : 1, i));
  REQUIRE(d.run_until([&] { return w.all_acknowledged(); }, 2000));
  CHECK(data_seqs.count(5) == 0);
  CHECK(data_seqs.size() == 7);
  REQUIRE(gaps.size() == 1);
  CHECK(gaps[0] == std::pair<std::uint64_t, std::uint32_t>{5, 1});
  CHECK(nacked.count(5) == 0);
  CHECK(r.delivered_total() == 7);
}

TEST_CASE("coherent sets are delivered atomically") {
  SimDomain d;
  auto& a = d.add();
  auto& b = d.add();
  Presentation group{true, AccessScope::Group};
  auto pub = a.create_publisher({}, group);
  auto ta = a.create_topic("t", position_type());
  auto w1 = pub.create_writer(ta, reliable());
  auto w2 = pub.create_writer(ta, reliable());
  auto r = b.create_subscriber({}, group).create_reader(b.create_topic("t", position_type()), reliable());
  REQUIRE(d.run_until([&] { return r.matched_writer_count() == 2 && w2.matched_reader_count() == 1; }, 1000));

  // Lose the first transmission of w2's member so the set stays incomplete for a while.
  bool dropped = false;
  d.net->set_drop_hook([&](const Bytes& bytes, const GuidPrefix&, const GuidPrefix&) {
    bool drop = false;
    for_each_sub(bytes, [&](const transport::Submessage& s) {
      if (auto* x = std::get_if<transport::DataSub>(&s))
        if (x->writer_id == w2.guid().entity_id && !dropped) drop = dropped = true;
    });
    return drop;
  });

  auto id = pub.begin_coherent_changes();
  CHECK_THROWS(pub.begin_coherent_changes());
  w1.write(position(1, 0));
  w2.write(position(2, 0));
  pub.end_coherent_changes();

  bool seen_partial = false;
  std::vector<Sample> got;
  for (int i = 0; i < 1000 && got.empty(); ++i) {
    d.step();
    got = r.take();
    if (!got.empty() && got.size() != 2) seen_partial = true;
  }
  CHECK(dropped);
  CHECK_FALSE(seen_partial);
  REQUIRE(got.size() == 2);
  for (auto& s : got) {
    CHECK(s.info.coherent_set_id == id);
  }
}

TEST_CASE("coherent edge cases") {
  SimDomain d;
  auto& a = d.add();
  auto plain = a.create_publisher();
  auto w = plain.create_writer(a.create_topic("t", position_type()));
  try {
    plain.begin_coherent_changes();
    FAIL("expected PRECONDITION");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::Precondition);
  }
  auto pub = a.create_publisher({}, {true, AccessScope::Topic});
  auto w2 = pub.create_writer(a.create_topic("t", position_type()));
  pub.begin_coherent_changes();
  pub.end_coherent_changes();
  CHECK(w2.history_sequence_numbers().empty());
  CHECK(w2.write(position(1, 0)) == 1);
}

TEST_CASE("deleting a subscriber is seen remotely within three heartbeats") {
  SimDomain d;
  auto& a = d.add();
  auto& b = d.add();
  auto w = a.create_publisher().create_writer(a.create_topic("t", position_type()), reliable());
  auto sub = b.create_subscriber();
  sub.create_reader(b.create_topic("t", position_type()), reliable());
  REQUIRE(d.run_until([&] { return w.get_status().publication_matched.current_count == 1; }, 1000));
  b.delete_subscriber(sub);
  const TimeUs t0 = d.net->now();
  REQUIRE(d.run_until([&] { return w.get_status().publication_matched.current_count == 0; }, 1000));
  CHECK(d.net->now() - t0 <= 3 * ms_to_us(kDefaultHeartbeatPeriodMs));
  CHECK_THROWS(sub.create_reader(b.create_topic("t", position_type())));
}

TEST_CASE("liveliness loss is detected on the first tick past three leases") {
  SimDomain d;
  auto& a = d.add();
  auto& b = d.add();
  auto r = a.create_subscriber().create_reader(a.create_topic("t", position_type()));
  b.create_publisher().create_writer(b.create_topic("t", position_type()));
  REQUIRE(d.run_until([&] { return r.matched_writer_count() == 1; }, 1000));

  TimeUs last_sent = 0;
  d.net->set_drop_hook([&](const Bytes&, const GuidPrefix& from, const GuidPrefix&) {
    if (from == b.guid().prefix) last_sent = d.net->now();
    return false;
  });
  d.run_ms(500);
  d.net->set_silenced(b.guid().prefix, true);
  // b ticks after a, so its last datagram is polled by a one step later.
  const TimeUs last_heard = last_sent + d.step_us;

  TimeUs detected = -1;
  int not_alive = 0;
  // Re-create the reader listener through status polling at each step.
  while (d.net->now() < last_heard + ms_to_us(4000)) {
    d.step();
    auto st = r.get_status().liveliness_changed;
    if (st.not_alive_count == 1 && detected < 0) {
      detected = d.net->now();
      not_alive = st.not_alive_count;
    }
  }
  CHECK(not_alive == 1);
  CHECK(detected == last_heard + 3 * ms_to_us(b.lease_ms()) + d.step_us);
  CHECK(a.get_status().liveliness_changed.not_alive_count == 1);
  CHECK(r.matched_writer_count() == 0);

  // Coming back rematches.
  d.net->set_silenced(b.guid().prefix, false);
  CHECK(d.run_until([&] { return r.matched_writer_count() == 1; }, 1000));
}

TEST_CASE("listeners cannot re-enter tick") {
  SimDomain d;
  auto& a = d.add();
  auto& b = d.add();
  bool rejected = false;
  Listener l;
  l.on_subscription_matched = [&](const StatusSet&) {
    try {
      d.parts[1].tick();
    } catch (const Error& e) {
      rejected = e.code() == Errc::Reentrancy;
    }
  };
  a.create_publisher().create_writer(a.create_topic("t", position_type()));
  auto r = b.create_subscriber().create_reader(b.create_topic("t", position_type()), {}, l);
  REQUIRE(d.run_until([&] { return r.matched_writer_count() == 1; }, 1000));
  d.step();
  CHECK(rejected);
}

TEST_CASE("best-effort delivery is ordered and duplicate free under loss") {
  transport::NetSimConfig cfg;
  cfg.drop_probability = 0.3;
  cfg.latency_mean_ms = 5;
  cfg.latency_jitter_ms = 4;
  cfg.reorder = true;
  cfg.rng_seed = 9;
  SimDomain d(cfg);
  auto& a = d.add();
  auto& b = d.add();
  auto w = a.create_publisher().create_writer(a.create_topic("t", position_type()));
  QosProfile deep;
  deep.history = History::keep_last(1000);
  auto r = b.create_subscriber().create_reader(b.create_topic("t", position_type()), deep);
  REQUIRE(d.run_until([&] { return w.matched_reader_count() == 1 && r.matched_writer_count() == 1; }, 3000));
  for (int i = 0; i < 300; ++i) {
    w.write(position(1, 0, i));
    d.step();
  }
  d.run_ms(100);
  auto got = seqs(r.take());
  CHECK(!got.empty());
  CHECK(got.size() < 300);
  CHECK(std::is_sorted(got.begin(), got.end()));
  CHECK(std::adjacent_find(got.begin(), got.end()) == got.end());
  CHECK(r.get_status().sample_lost.total_count > 0);
}

TEST_CASE("endpoints of one participant match each other") {
  SimDomain d;
  auto& a = d.add();
  auto t = a.create_topic("t", position_type());
  auto w = a.create_publisher().create_writer(t, reliable());
  auto sub = a.create_subscriber();
  auto r = sub.create_reader(t, reliable());
  CHECK(w.matched_reader_count() == 1);
  CHECK(r.matched_writer_count() == 1);
  w.write(position(1, 2));
  REQUIRE(d.run_until([&] { return r.cache_size() == 1; }, 100));
  CHECK(r.take()[0].info.writer_guid == w.guid());
  sub.delete_reader(r);
  CHECK(w.matched_reader_count() == 0);
}
