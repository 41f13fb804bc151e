#include "core.hpp"

#include <algorithm>
#include <limits>

#include "mmog/common/error.hpp"

namespace mmog::dcps::detail {

using transport::DataSub;
using transport::EndpointKind;
using transport::EntityRecord;

namespace {

std::string key_string(const transport::Bytes& raw) { return std::string(raw.begin(), raw.end()); }

bool sample_before(const Sample& a, TimeUs ts, const Guid& writer) {
  return std::tie(a.info.source_timestamp_us, a.info.writer_guid) <= std::tie(ts, writer);
}

}  // namespace

Core::Core(const ParticipantConfig& cfg, std::shared_ptr<transport::Link> l, const GuidPrefix& prefix)
    : config(cfg), guid{prefix, entity_kind::kParticipant}, link(std::move(l)) {}

Core::~Core() {
  if (spinner.joinable()) {
    spinner.request_stop();
    if (spinner.get_id() == std::this_thread::get_id()) spinner.detach();
    else spinner.join();
  }
  if (link) link->close();
}

void Core::check_live() const {
  if (deleted) throw Error(Errc::EntityDeleted, "participant was deleted");
}

transport::MessageBuilder& Core::out(const GuidPrefix& to) {
  return outbox_.try_emplace(to, guid.prefix).first->second;
}

void Core::raise(const Listener::Hook& hook, const StatusSet& snapshot) {
  if (hook) events.push_back([hook, snapshot] { hook(snapshot); });
}

// ---------------------------------------------------------------------------
// Discovery records and local endpoint registration

EntityRecord Core::record_of(const WriterState& w) const {
  EntityRecord rec;
  rec.entity_id = w.guid.entity_id;
  rec.kind = EndpointKind::Writer;
  rec.deleted = w.deleted;
  rec.topic = w.topic->name;
  rec.type_hash = w.topic->type.hash();
  rec.qos = summarize(w.qos);
  rec.group_data = w.publisher && !w.publisher->group_data.empty() ? w.publisher->group_data : w.qos.group_data;
  return rec;
}

EntityRecord Core::record_of(const ReaderState& r) const {
  EntityRecord rec;
  rec.entity_id = r.guid.entity_id;
  rec.kind = EndpointKind::Reader;
  rec.deleted = r.deleted;
  rec.topic = r.topic->name;
  rec.type_hash = r.topic->type.hash();
  rec.qos = summarize(r.qos);
  rec.group_data = r.subscriber && !r.subscriber->group_data.empty() ? r.subscriber->group_data : r.qos.group_data;
  if (r.filter) rec.filter = r.filter->text();
  return rec;
}

void Core::on_local_writer(const std::shared_ptr<WriterState>& w) {
  announce_dirty = true;
  const auto wrec = record_of(*w);
  for (auto& sub : subscribers)
    for (auto& r : sub->readers)
      if (r->topic->name == w->topic->name) {
        match_pair(*w, r->guid, record_of(*r));
        match_pair(*r, w->guid, wrec);
      }
  for (auto& [prefix, rp] : remotes) {
    if (!rp.alive) continue;
    for (auto& [id, rec] : rp.endpoints)
      if (rec.kind == EndpointKind::Reader && rec.topic == w->topic->name) match_pair(*w, Guid{prefix, id}, rec);
  }
}

void Core::on_local_reader(const std::shared_ptr<ReaderState>& r) {
  announce_dirty = true;
  const auto rrec = record_of(*r);
  for (auto& pub : publishers)
    for (auto& w : pub->writers)
      if (w->topic->name == r->topic->name) {
        match_pair(*r, w->guid, record_of(*w));
        match_pair(*w, r->guid, rrec);
      }
  for (auto& [prefix, rp] : remotes) {
    if (!rp.alive) continue;
    for (auto& [id, rec] : rp.endpoints)
      if (rec.kind == EndpointKind::Writer && rec.topic == r->topic->name) match_pair(*r, Guid{prefix, id}, rec);
  }
}

void Core::remove_writer(WriterState& w) {
  if (w.deleted) return;
  unmatch_remote(guid.prefix, record_of(w), false);
  w.deleted = true;
  w.proxies.clear();
  w.history.clear();
  w.per_instance.clear();
  tombstones.emplace_back(now(), record_of(w));
  w.publisher = nullptr;
  announce_dirty = true;
}

void Core::remove_reader(ReaderState& r) {
  if (r.deleted) return;
  unmatch_remote(guid.prefix, record_of(r), false);
  r.deleted = true;
  r.proxies.clear();
  r.pending_sets.clear();
  r.instances.clear();
  r.instance_index.clear();
  r.cached = 0;
  tombstones.emplace_back(now(), record_of(r));
  r.subscriber = nullptr;
  announce_dirty = true;
}

// ---------------------------------------------------------------------------
// Matching

void Core::match_pair(WriterState& w, const Guid& reader, const EntityRecord& rec) {
  if (w.deleted || rec.type_hash != w.topic->type.hash()) return;
  if (w.proxies.count(reader)) return;
  auto compat = check_compatibility(summarize(w.qos), rec.qos);
  if (!compat.compatible) {
    if (w.incompatible.insert(reader).second) {
      ++w.status.offered_incompatible_qos.total_count;
      w.status.offered_incompatible_qos.last_policy = compat.failed_policy;
      raise(w.listener.on_incompatible_qos, w.status);
    }
    return;
  }
  ReaderProxy p;
  p.reader = reader;
  p.reliable = rec.qos.reliability == static_cast<std::uint8_t>(Reliability::Reliable);
  if (rec.filter) {
    try {
      p.filter = parse_filter(*rec.filter, w.topic->type);
    } catch (const Error&) {
      // Reader filters on its own side.
    }
  }
  p.start = w.released;
  p.informed = w.released;
  p.acked = w.released;
  if (p.reliable && w.released > 0) p.gap_from = 1;
  w.proxies.emplace(reader, std::move(p));
  w.dirty = true;

  auto& m = w.status.publication_matched;
  ++m.current_count;
  ++m.total_count;
  ++m.change_count;
  m.last_peer = reader;
  m.last_peer_group_data = rec.group_data;
  raise(w.listener.on_publication_matched, w.status);
}

void Core::match_pair(ReaderState& r, const Guid& writer, const EntityRecord& rec) {
  if (r.deleted || rec.type_hash != r.topic->type.hash()) return;
  if (r.proxies.count(writer)) return;
  auto compat = check_compatibility(rec.qos, summarize(r.qos));
  if (!compat.compatible) {
    if (r.incompatible.insert(writer).second) {
      ++r.status.requested_incompatible_qos.total_count;
      r.status.requested_incompatible_qos.last_policy = compat.failed_policy;
      raise(r.listener.on_incompatible_qos, r.status);
    }
    return;
  }
  WriterProxy p;
  p.writer = writer;
  p.reliable = r.qos.reliability == Reliability::Reliable;
  p.group_data = rec.group_data;
  r.proxies.emplace(writer, std::move(p));

  auto& m = r.status.subscription_matched;
  ++m.current_count;
  ++m.total_count;
  ++m.change_count;
  m.last_peer = writer;
  m.last_peer_group_data = rec.group_data;
  auto& l = r.status.liveliness_changed;
  if (r.not_alive.erase(writer)) --l.not_alive_count;
  ++l.alive_count;
  ++l.change_count;
  raise(r.listener.on_subscription_matched, r.status);
  raise(r.listener.on_liveliness_changed, r.status);
}

void Core::match_remote(const GuidPrefix& prefix, const EntityRecord& rec) {
  const Guid remote{prefix, rec.entity_id};
  if (rec.kind == EndpointKind::Reader) {
    for (auto& pub : publishers)
      for (auto& w : pub->writers)
        if (w->topic->name == rec.topic) match_pair(*w, remote, rec);
  } else {
    for (auto& sub : subscribers)
      for (auto& r : sub->readers)
        if (r->topic->name == rec.topic) match_pair(*r, remote, rec);
  }
}

void Core::unmatch_remote(const GuidPrefix& prefix, const EntityRecord& rec, bool liveliness_lost) {
  const Guid remote{prefix, rec.entity_id};
  const TimeUs t = now();
  if (rec.kind == EndpointKind::Reader) {
    for (auto& pub : publishers)
      for (auto& w : pub->writers) {
        w->incompatible.erase(remote);
        if (!w->proxies.erase(remote)) continue;
        auto& m = w->status.publication_matched;
        --m.current_count;
        ++m.change_count;
        raise(w->listener.on_publication_matched, w->status);
        w->dirty = true;
        purge(*w);
      }
  } else {
    for (auto& sub : subscribers)
      for (auto& r : sub->readers) {
        r->incompatible.erase(remote);
        if (!r->proxies.erase(remote)) continue;
        auto& m = r->status.subscription_matched;
        --m.current_count;
        ++m.change_count;
        auto& l = r->status.liveliness_changed;
        --l.alive_count;
        if (liveliness_lost) {
          ++l.not_alive_count;
          r->not_alive.insert(remote);
        }
        ++l.change_count;
        raise(r->listener.on_subscription_matched, r->status);
        raise(r->listener.on_liveliness_changed, r->status);
        // Sets the departed writer contributed to can no longer complete.
        for (auto it = r->pending_sets.begin(); it != r->pending_sets.end();) {
          if (it->second.contributors.count(remote) && !it->second.ended.count(remote)) {
            r->status.sample_lost.total_count += it->second.members.size();
            raise(r->listener.on_sample_lost, r->status);
            it = r->pending_sets.erase(it);
          } else {
            ++it;
          }
        }
        recheck_sets(*r, t);
      }
  }
}

void Core::revive(const GuidPrefix& prefix, RemoteParticipant& rp) {
  rp.alive = true;
  liveliness_due = std::min(liveliness_due, rp.last_heard + 3 * ms_to_us(rp.lease_ms));
  auto& l = status.liveliness_changed;
  --l.not_alive_count;
  ++l.alive_count;
  ++l.change_count;
  for (auto& [id, rec] : rp.endpoints) match_remote(prefix, rec);
}

void Core::check_liveliness(TimeUs t) {
  if (t <= liveliness_due) return;
  liveliness_due = std::numeric_limits<TimeUs>::max();
  for (auto& [prefix, rp] : remotes) {
    if (!rp.alive) continue;
    if (t - rp.last_heard <= 3 * ms_to_us(rp.lease_ms)) {
      liveliness_due = std::min(liveliness_due, rp.last_heard + 3 * ms_to_us(rp.lease_ms));
      continue;
    }
    rp.alive = false;
    auto& l = status.liveliness_changed;
    --l.alive_count;
    ++l.not_alive_count;
    ++l.change_count;
    for (auto& [id, rec] : rp.endpoints) unmatch_remote(prefix, rec, true);
  }
}

void Core::on_discovery(const GuidPrefix& from, const transport::DiscoverySub& d, TimeUs t) {
  auto [it, fresh] = remotes.try_emplace(from);
  auto& rp = it->second;
  rp.lease_ms = d.lease_ms;
  rp.last_heard = t;
  liveliness_due = std::min(liveliness_due, t + 3 * ms_to_us(rp.lease_ms));
  if (fresh) {
    ++status.liveliness_changed.alive_count;
    ++status.liveliness_changed.change_count;
  }
  for (const auto& rec : d.entities) {
    auto known = rp.endpoints.find(rec.entity_id);
    if (rec.deleted) {
      if (known != rp.endpoints.end()) {
        auto old = known->second;
        rp.endpoints.erase(known);
        unmatch_remote(from, old, false);
      }
      continue;
    }
    if (known != rp.endpoints.end()) {
      if (known->second == rec) continue;
      auto old = known->second;
      known->second = rec;
      unmatch_remote(from, old, false);
    } else {
      rp.endpoints.emplace(rec.entity_id, rec);
    }
    if (rp.alive) match_remote(from, rec);
  }
}

void Core::announce(TimeUs t) {
  const TimeUs keep = 3 * ms_to_us(config.lease_ms);
  std::erase_if(tombstones, [&](const auto& ts) { return t - ts.first > keep; });

  transport::DiscoverySub d;
  d.participant = guid;
  d.lease_ms = config.lease_ms;
  for (auto& pub : publishers)
    for (auto& w : pub->writers) d.entities.push_back(record_of(*w));
  for (auto& sub : subscribers)
    for (auto& r : sub->readers) d.entities.push_back(record_of(*r));
  for (auto& [_, rec] : tombstones) d.entities.push_back(rec);

  transport::MessageBuilder b(guid.prefix);
  b.add(d);
  for (auto& bytes : b.finish()) link->send(std::nullopt, std::make_shared<const Bytes>(std::move(bytes)));
  announce_dirty = false;
  next_announce = t + ms_to_us(std::max<std::uint32_t>(1, config.lease_ms / 3));
}

// ---------------------------------------------------------------------------
// Writer path

std::uint64_t Core::write(WriterState& w, const FieldValues& values, std::optional<TimeUs> ts) {
  const auto& type = w.topic->type;
  auto payload = transport::encode_sample(type, values);
  // header + submessage header + fixed DATA fields + payload length prefix
  if (transport::kHeaderSize + 3 + 45 + 2 + payload.size() > transport::kMaxMessageSize)
    throw Error(Errc::ResourceLimit, "sample exceeds the maximum message size");
  auto key = transport::instance_key(type, values);
  auto skey = key_string(key.raw);
  auto& inst = w.per_instance[skey];

  if (w.qos.history.kind == History::Kind::KeepAll && inst.size() >= w.qos.max_samples_per_instance) {
    purge(w);
    if (inst.size() >= w.qos.max_samples_per_instance)
      throw Error(Errc::ResourceLimit, "KEEP_ALL history full and oldest sample unacknowledged");
  }

  CachedSample s;
  s.seq = w.next_seq++;
  s.key = std::move(skey);
  s.key_hash = key.hash;
  s.payload = std::move(payload);
  s.values = values;
  s.timestamp = ts.value_or(now());

  auto* pub = w.publisher;
  if (pub->open_set) {
    s.coherent_member = true;
    s.set_id = *pub->open_set;
    if (w.hold_from == 0) w.hold_from = s.seq;
    w.last_set_member = s.seq;
  }
  const std::uint64_t seq = s.seq;
  inst.push_back(seq);
  w.history.emplace(seq, std::move(s));

  if (!pub->suspended && !pub->open_set) release(w, seq);
  return seq;
}

void Core::release(WriterState& w, std::uint64_t up_to) {
  w.released = std::max(w.released, up_to);
  w.dirty = true;
  if (w.qos.history.kind != History::Kind::KeepLast) return;
  // Depth bound applies to released samples only; held ones are flushed intact.
  for (auto& [key, seqs] : w.per_instance) {
    while (seqs.size() > w.qos.history.depth && seqs.front() <= w.released) {
      w.history.erase(seqs.front());
      seqs.pop_front();
    }
  }
}

void Core::purge(WriterState& w) {
  std::uint64_t floor = w.released;
  for (auto& [_, p] : w.proxies) floor = std::min(floor, p.reliable ? p.acked : p.informed);
  const bool keep_all = w.qos.history.kind == History::Kind::KeepAll;
  for (auto it = w.history.begin(); it != w.history.end() && it->first <= floor;) {
    if (it->second.marker()) {
      it = w.history.erase(it);
    } else if (keep_all) {
      auto& seqs = w.per_instance[it->second.key];
      if (!seqs.empty() && seqs.front() == it->first) seqs.pop_front();
      else std::erase(seqs, it->first);
      it = w.history.erase(it);
    } else {
      ++it;
    }
  }
}

void Core::emit_data(WriterState& w, ReaderProxy& p, const CachedSample& s) {
  DataSub d;
  d.writer_id = w.guid.entity_id;
  d.reader_id = p.reader.entity_id;
  d.sequence = s.seq;
  d.key_hash = s.key_hash;
  d.coherent_member = s.coherent_member;
  d.coherent_end = s.coherent_end;
  d.coherent_set_id = s.set_id;
  d.source_timestamp_us = s.timestamp;
  d.payload = s.payload;
  out(p.reader.prefix).add(d);
  p.highest_data_sent = std::max(p.highest_data_sent, s.seq);
}

void Core::emit_gap(WriterState& w, ReaderProxy& p, std::uint64_t first, std::uint64_t last) {
  if (first == 0 || last < first) return;
  transport::GapSub g;
  g.reader_id = p.reader.entity_id;
  g.writer_id = w.guid.entity_id;
  g.start = first;
  g.count = static_cast<std::uint32_t>(std::min<std::uint64_t>(last - first + 1, 0xFFFFFFFFu));
  out(p.reader.prefix).add(g);
}

void Core::service_writer(WriterState& w, TimeUs t) {
  if (!w.dirty && t < w.next_due) return;
  w.dirty = false;
  w.next_due = std::numeric_limits<TimeUs>::max();
  const TimeUs period = ms_to_us(config.heartbeat_period_ms);
  for (auto& [_, p] : w.proxies) {
    auto sends = [&](const CachedSample& s) { return s.marker() || !p.filter || p.filter->eval(s.values); };

    // New samples, in sequence order.
    if (p.informed < w.released) {
      std::uint64_t s = p.informed + 1;
      auto it = w.history.lower_bound(s);
      while (s <= w.released) {
        if (it == w.history.end() || it->first > w.released) {
          if (!p.gap_from) p.gap_from = s;
          p.informed = w.released;
          break;
        }
        if (it->first > s) {
          if (!p.gap_from) p.gap_from = s;
          s = it->first;
          p.informed = s - 1;
          continue;
        }
        if (sends(it->second)) {
          if (p.reliable && p.gap_from) emit_gap(w, p, p.gap_from, s - 1);
          p.gap_from = 0;
          emit_data(w, p, it->second);
        } else if (!p.gap_from) {
          p.gap_from = s;
        }
        p.informed = s;
        ++s;
        ++it;
      }
      if (!p.reliable) p.gap_from = 0;
    }

    if (!p.reliable) continue;

    // Repairs requested by ACKNACK.
    if (!p.requested.empty()) {
      std::uint64_t run_first = 0, run_last = 0;
      auto flush_run = [&] {
        emit_gap(w, p, run_first, run_last);
        run_first = run_last = 0;
      };
      for (auto s : p.requested) {
        if (s <= p.acked || s > w.released) continue;
        auto it = w.history.find(s);
        const bool have = s > p.start && it != w.history.end() && sends(it->second);
        if (have) {
          flush_run();
          emit_data(w, p, it->second);
          ++w.retransmissions;
          continue;
        }
        const std::uint64_t last = s <= p.start ? p.start : s;
        if (run_first && s == run_last + 1) run_last = last;
        else {
          flush_run();
          run_first = s <= p.start ? 1 : s;
          run_last = last;
        }
      }
      flush_run();
      p.requested.clear();
    }

    // Heartbeat while anything released is unacknowledged. Readers with only
    // filtered-out sequence numbers outstanding are told less often.
    if (p.acked < w.released) {
      const bool only_gaps = p.highest_data_sent <= p.acked;
      const TimeUs due = period * (only_gaps ? config.filtered_heartbeat_multiplier : 1);
      if (t - p.last_heartbeat >= due) {
        if (p.gap_from) {
          emit_gap(w, p, p.gap_from, p.informed);
          p.gap_from = 0;
        }
        if (heartbeats_this_tick_.emplace(p.reader.prefix, w.guid.entity_id).second) {
          transport::HeartbeatSub hb;
          hb.writer_id = w.guid.entity_id;
          hb.last_seq = w.released;
          hb.first_seq = w.released + 1;
          for (auto& [seq, s] : w.history)
            if (seq <= w.released) {
              hb.first_seq = seq;
              break;
            }
          out(p.reader.prefix).add(hb);
        }
        p.last_heartbeat = t;
      }
      w.next_due = std::min(w.next_due, p.last_heartbeat + due);
    }
  }
  if (!w.history.empty() && w.history.begin()->first <= w.released) purge(w);
}

void Core::on_acknack(const GuidPrefix& from, const transport::AckNackSub& a) {
  const Guid reader{from, a.reader_id};
  for (auto& pub : publishers)
    for (auto& w : pub->writers) {
      if (w->guid.entity_id != a.writer_id) continue;
      auto it = w->proxies.find(reader);
      if (it == w->proxies.end()) return;
      auto& p = it->second;
      p.acked = std::max(p.acked, std::min(a.ack_up_to, w->released));
      for (auto s : a.missing())
        if (s > p.acked && s <= w->released) p.requested.insert(s);
      w->dirty = true;
      return;
    }
}

// ---------------------------------------------------------------------------
// Reader path

bool Core::can_accept(const ReaderState& r, const Received& rec) const {
  if (rec.gap || rec.data.payload.empty()) return true;
  if (r.qos.history.kind != History::Kind::KeepAll) return true;
  auto it = r.instance_index.find(rec.key);
  return it == r.instance_index.end() || r.instances[it->second].samples.size() < r.qos.max_samples_per_instance;
}

void Core::advance(ReaderState& r, WriterProxy& p, TimeUs t) {
  while (!p.pending.empty()) {
    auto it = p.pending.begin();
    if (it->first < p.next_expected) {
      if (it->second.gap && it->second.gap_end > p.next_expected) p.next_expected = it->second.gap_end;
      p.pending.erase(it);
      continue;
    }
    if (it->first > p.next_expected) break;
    if (it->second.gap) {
      p.next_expected = it->second.gap_end;
      p.pending.erase(it);
      continue;
    }
    if (!can_accept(r, it->second)) break;
    Received rec = std::move(it->second);
    p.pending.erase(it);
    ++p.next_expected;
    deliver(r, p, std::move(rec), t);
  }
}

void Core::receive(ReaderState& r, WriterProxy& p, const DataSub& d, TimeUs t) {
  if (p.reliable) {
    if (d.sequence < p.next_expected || p.pending.count(d.sequence)) return;
  } else {
    if (d.sequence <= p.last_seen) return;
  }
  Received rec;
  rec.data = d;
  if (!d.payload.empty()) {
    try {
      rec.values = transport::decode_sample(r.topic->type, d.payload);
      rec.key = key_string(transport::instance_key(r.topic->type, rec.values).raw);
    } catch (const Error&) {
      ++malformed;
      rec = Received{};
      rec.gap = true;
      rec.gap_end = d.sequence + 1;
    }
  }
  if (p.reliable) {
    p.pending.emplace(d.sequence, std::move(rec));
    advance(r, p, t);
    return;
  }
  if (p.last_seen > 0 && d.sequence > p.last_seen + 1 && !r.filter) {
    r.status.sample_lost.total_count += d.sequence - p.last_seen - 1;
    raise(r.listener.on_sample_lost, r.status);
  }
  p.last_seen = d.sequence;
  if (rec.gap) return;
  if (!can_accept(r, rec)) {
    ++r.status.sample_lost.total_count;
    raise(r.listener.on_sample_lost, r.status);
    return;
  }
  deliver(r, p, std::move(rec), t);
}

void Core::drop_broken_sets(ReaderState& r, const Guid& writer, const DataSub& d) {
  for (auto it = r.pending_sets.begin(); it != r.pending_sets.end();) {
    const auto& key = it->first;
    auto& ps = it->second;
    const bool same_publisher = key.prefix == writer.prefix && key.group == entity_group(writer.entity_id);
    const bool moved_on = !d.coherent_member || d.coherent_set_id != key.set;
    if (same_publisher && moved_on && ps.contributors.count(writer) && !ps.ended.count(writer)) {
      r.status.sample_lost.total_count += ps.members.size();
      raise(r.listener.on_sample_lost, r.status);
      it = r.pending_sets.erase(it);
    } else {
      ++it;
    }
  }
}

bool Core::set_complete(const ReaderState& r, const SetKey& key, const PendingSet& ps) const {
  if (ps.ended.empty()) return false;
  for (const auto& c : ps.contributors)
    if (!ps.ended.count(c)) return false;
  if (r.qos.presentation.access_scope == AccessScope::Instance) return ps.ended.count(key.writer) > 0;
  for (const auto& [g, p] : r.proxies) {
    if (g.prefix != key.prefix || entity_group(g.entity_id) != key.group) continue;
    if (!ps.ended.count(g) && p.frontier_set <= key.set) return false;
  }
  return true;
}

void Core::recheck_sets(ReaderState& r, TimeUs t) {
  for (auto it = r.pending_sets.begin(); it != r.pending_sets.end();) {
    if (!set_complete(r, it->first, it->second)) {
      ++it;
      continue;
    }
    auto members = std::move(it->second.members);
    it = r.pending_sets.erase(it);
    for (auto& [writer, rec] : members) commit(r, writer, std::move(rec), t);
  }
}

void Core::deliver(ReaderState& r, WriterProxy& p, Received rec, TimeUs t) {
  const auto& d = rec.data;
  if (!r.pending_sets.empty()) drop_broken_sets(r, p.writer, d);
  const bool coherent = r.qos.presentation.coherent_access && d.coherent_member;
  bool frontier_moved = false;
  if (d.coherent_member && d.coherent_set_id > p.frontier_set) {
    p.frontier_set = d.coherent_set_id;
    frontier_moved = true;
  }
  if (!coherent) {
    if (!d.payload.empty()) commit(r, p.writer, std::move(rec), t);
    if (frontier_moved && !r.pending_sets.empty()) recheck_sets(r, t);
    return;
  }
  SetKey key;
  key.prefix = p.writer.prefix;
  key.group = entity_group(p.writer.entity_id);
  key.set = d.coherent_set_id;
  if (r.qos.presentation.access_scope == AccessScope::Instance) key.writer = p.writer;
  auto& ps = r.pending_sets[key];
  const bool end = d.coherent_end;
  if (!d.payload.empty()) {
    ps.contributors.insert(p.writer);
    ps.members.emplace_back(p.writer, std::move(rec));
  }
  if (end) ps.ended.insert(p.writer);
  if (end || frontier_moved) recheck_sets(r, t);
}

void Core::commit(ReaderState& r, const Guid& writer, Received rec, TimeUs t) {
  if (r.filter && !r.filter->eval(rec.values)) return;
  auto [idx_it, fresh] = r.instance_index.try_emplace(rec.key, r.instances.size());
  if (fresh) r.instances.push_back(InstanceSlot{rec.key, {}});
  auto& slot = r.instances[idx_it->second];

  Sample s;
  s.values = std::move(rec.values);
  s.info.writer_guid = writer;
  s.info.sequence_number = rec.data.sequence;
  if (rec.data.coherent_member) s.info.coherent_set_id = rec.data.coherent_set_id;
  s.info.coherent_end = rec.data.coherent_end;
  s.info.valid = true;
  s.info.source_timestamp_us = static_cast<TimeUs>(rec.data.source_timestamp_us);
  s.info.reception_timestamp_us = t;
  s.info.instance_hash = rec.data.key_hash;

  // Ordered by (source timestamp, writer guid) so "latest" is deterministic
  // across writers, never placing a sample ahead of its own writer's earlier ones.
  auto pos = slot.samples.end();
  while (pos != slot.samples.begin()) {
    auto prev = std::prev(pos);
    if (prev->info.writer_guid == writer || sample_before(*prev, s.info.source_timestamp_us, writer)) break;
    pos = prev;
  }
  slot.samples.insert(pos, std::move(s));
  ++r.cached;
  if (r.qos.history.kind == History::Kind::KeepLast) {
    while (slot.samples.size() > r.qos.history.depth) {
      slot.samples.pop_front();
      --r.cached;
    }
  }
  ++r.delivered[writer];
  ++r.delivered_total;
  r.data_available = true;
}

std::vector<Sample> Core::collect(ReaderState& r, std::size_t max, bool remove) {
  std::vector<Sample> out;
  for (auto& slot : r.instances) {
    if (out.size() >= max) break;
    if (remove) {
      while (!slot.samples.empty() && out.size() < max) {
        out.push_back(std::move(slot.samples.front()));
        slot.samples.pop_front();
        --r.cached;
      }
    } else {
      for (const auto& s : slot.samples) {
        if (out.size() >= max) break;
        out.push_back(s);
      }
    }
  }
  if (remove) {
    const TimeUs t = now();
    for (auto& [_, p] : r.proxies)
      if (p.reliable && !p.pending.empty()) advance(r, p, t);
  }
  return out;
}

void Core::on_data(const GuidPrefix& from, const DataSub& d, TimeUs t) {
  const Guid writer{from, d.writer_id};
  for (auto& sub : subscribers)
    for (auto& r : sub->readers) {
      if (d.reader_id != 0 && r->guid.entity_id != d.reader_id) continue;
      auto it = r->proxies.find(writer);
      if (it != r->proxies.end()) receive(*r, it->second, d, t);
    }
}

void Core::on_heartbeat(const GuidPrefix& from, const transport::HeartbeatSub& h, TimeUs t) {
  const Guid writer{from, h.writer_id};
  for (auto& sub : subscribers)
    for (auto& r : sub->readers) {
      auto it = r->proxies.find(writer);
      if (it == r->proxies.end() || !it->second.reliable) continue;
      auto& p = it->second;
      if (h.first_seq > p.next_expected) {
        // Everything below first_seq is gone from the writer history.
        Received gap;
        gap.gap = true;
        gap.gap_end = h.first_seq;
        auto [pos, inserted] = p.pending.try_emplace(p.next_expected, std::move(gap));
        if (!inserted && pos->second.gap) pos->second.gap_end = std::max(pos->second.gap_end, h.first_seq);
        advance(*r, p, t);
      }
      std::vector<std::uint64_t> missing;
      const std::uint64_t limit = std::min<std::uint64_t>(h.last_seq, p.next_expected + 254);
      std::uint64_t s = p.next_expected;
      auto it2 = p.pending.lower_bound(s);
      while (s <= limit) {
        if (it2 != p.pending.end() && it2->first == s) {
          s = it2->second.gap ? std::max(s + 1, it2->second.gap_end) : s + 1;
          ++it2;
          continue;
        }
        missing.push_back(s++);
      }
      auto a = transport::AckNackSub::make(r->guid.entity_id, h.writer_id, p.next_expected - 1, p.next_expected,
                                           missing);
      out(from).add(a);
    }
}

void Core::on_gap(const GuidPrefix& from, const transport::GapSub& g, TimeUs t) {
  const Guid writer{from, g.writer_id};
  if (g.count == 0) return;
  const std::uint64_t end = g.start + g.count;
  for (auto& sub : subscribers)
    for (auto& r : sub->readers) {
      if (g.reader_id != 0 && r->guid.entity_id != g.reader_id) continue;
      auto it = r->proxies.find(writer);
      if (it == r->proxies.end() || !it->second.reliable) continue;
      auto& p = it->second;
      if (end <= p.next_expected) continue;
      const std::uint64_t from_seq = std::max(g.start, p.next_expected);
      auto existing = p.pending.find(from_seq);
      if (existing != p.pending.end() && !existing->second.gap) {
        // A received sample sits at the start of the range; gap the rest.
        if (end > from_seq + 1) {
          Received gap;
          gap.gap = true;
          gap.gap_end = end;
          p.pending.try_emplace(from_seq + 1, std::move(gap));
        }
      } else if (existing != p.pending.end()) {
        existing->second.gap_end = std::max(existing->second.gap_end, end);
      } else {
        Received gap;
        gap.gap = true;
        gap.gap_end = end;
        p.pending.emplace(from_seq, std::move(gap));
      }
      advance(*r, p, t);
    }
}

// ---------------------------------------------------------------------------
// Engine

void Core::handle(const transport::SharedBytes& bytes, TimeUs t) {
  transport::WireMessage m;
  try {
    m = transport::decode_message(*bytes);
  } catch (const Error&) {
    ++malformed;
    return;
  }
  const auto& from = m.header.prefix;
  const bool local = from == guid.prefix;
  auto rit = remotes.find(from);
  if (rit != remotes.end()) {
    rit->second.last_heard = t;
    if (!rit->second.alive) revive(from, rit->second);
  }
  for (const auto& sub : m.submessages) {
    std::visit(
        [&](const auto& s) {
          using T = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<T, transport::DiscoverySub>) {
            if (!local) on_discovery(from, s, t);
          }
          else if constexpr (std::is_same_v<T, DataSub>) on_data(from, s, t);
          else if constexpr (std::is_same_v<T, transport::HeartbeatSub>) on_heartbeat(from, s, t);
          else if constexpr (std::is_same_v<T, transport::AckNackSub>) on_acknack(from, s);
          else if constexpr (std::is_same_v<T, transport::GapSub>) on_gap(from, s, t);
        },
        sub);
  }
}

void Core::tick_locked(TimeUs t) {
  if (deleted) return;
  for (const auto& bytes : link->poll()) handle(bytes, t);
  auto looped = std::move(loopback_);
  loopback_.clear();
  for (const auto& bytes : looped) handle(bytes, t);
  check_liveliness(t);
  if (announce_dirty || t >= next_announce) announce(t);
  for (auto& pub : publishers)
    for (auto& w : pub->writers) service_writer(*w, t);
  for (auto& sub : subscribers)
    for (auto& r : sub->readers)
      if (r->data_available) {
        r->data_available = false;
        raise(r->listener.on_data_available, r->status);
      }
  flush();
}

void Core::flush() {
  for (auto& [to, builder] : outbox_)
    for (auto& bytes : builder.finish()) {
      auto shared = std::make_shared<const Bytes>(std::move(bytes));
      if (to == guid.prefix) loopback_.push_back(std::move(shared));
      else link->send(to, std::move(shared));
    }
  outbox_.clear();
  heartbeats_this_tick_.clear();
}

}  // namespace mmog::dcps::detail
