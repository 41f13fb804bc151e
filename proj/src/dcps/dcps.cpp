#include "mmog/dcps/dcps.hpp"

#include <algorithm>
#include <thread>

#include "core.hpp"
#include "mmog/common/error.hpp"
#include "mmog/transport/netsim.hpp"
#include "mmog/transport/udp_link.hpp"

namespace mmog::dcps {

using detail::Core;
using Lock = std::lock_guard<std::mutex>;

namespace {

thread_local bool in_dispatch = false;

void run_tick(Core& core) {
  if (in_dispatch) throw Error(Errc::Reentrancy, "tick called from a listener");
  std::vector<std::function<void()>> events;
  {
    Lock lk(core.mu);
    core.tick_locked(core.now());
    events.swap(core.events);
  }
  if (events.empty()) return;
  Lock dl(core.dispatch_mu);
  in_dispatch = true;
  for (auto& e : events) {
    try {
      e();
    } catch (...) {
      // A failing listener must not stall the engine.
    }
  }
  in_dispatch = false;
}

void require(bool cond, Errc code, const char* msg) {
  if (!cond) throw Error(code, msg);
}

}  // namespace

LinkFactory sim_link_factory(std::shared_ptr<transport::SimNetwork> network) {
  return [network](int domain_id, const GuidPrefix& prefix) { return network->attach(domain_id, prefix); };
}

LinkFactory udp_link_factory(const transport::UdpLinkConfig& config) {
  return [config](int domain_id, const GuidPrefix& prefix) -> std::shared_ptr<transport::Link> {
    auto c = config;
    c.domain_id = domain_id;
    return std::make_shared<transport::UdpLink>(c, prefix);
  };
}

// ---------------------------------------------------------------------------
// Topic

const std::string& Topic::name() const { return state_->name; }
const TypeDescriptor& Topic::type() const { return state_->type; }
const Topic& ContentFilteredTopic::related_topic() const { return state_->topic; }
const FilterExpression& ContentFilteredTopic::filter() const { return state_->filter; }

// ---------------------------------------------------------------------------
// DataWriter

std::uint64_t DataWriter::write(const FieldValues& values, std::optional<TimeUs> source_timestamp) {
  require(state_ != nullptr, Errc::Precondition, "null writer");
  Lock lk(core_->mu);
  require(!core_->deleted && !state_->deleted, Errc::EntityDeleted, "writer was deleted");
  return core_->write(*state_, values, source_timestamp);
}

StatusSet DataWriter::get_status() const {
  Lock lk(core_->mu);
  require(!state_->deleted, Errc::EntityDeleted, "writer was deleted");
  return state_->status;
}

Guid DataWriter::guid() const { return state_->guid; }
const QosProfile& DataWriter::qos() const { return state_->qos; }

std::vector<std::uint64_t> DataWriter::history_sequence_numbers() const {
  Lock lk(core_->mu);
  std::vector<std::uint64_t> out;
  for (const auto& [seq, s] : state_->history)
    if (!s.marker()) out.push_back(seq);
  return out;
}

std::size_t DataWriter::matched_reader_count() const {
  Lock lk(core_->mu);
  return state_->proxies.size();
}

bool DataWriter::is_matched_with(const Guid& reader) const {
  Lock lk(core_->mu);
  return state_->proxies.count(reader) > 0;
}

bool DataWriter::all_acknowledged() const {
  Lock lk(core_->mu);
  for (const auto& [_, p] : state_->proxies)
    if (p.reliable && p.acked < state_->released) return false;
  return true;
}

std::uint64_t DataWriter::retransmissions() const {
  Lock lk(core_->mu);
  return state_->retransmissions;
}

// ---------------------------------------------------------------------------
// DataReader

std::vector<Sample> DataReader::take(std::size_t max_samples) {
  require(max_samples >= 1, Errc::Precondition, "max_samples must be at least 1");
  Lock lk(core_->mu);
  require(!core_->deleted && !state_->deleted, Errc::EntityDeleted, "reader was deleted");
  return core_->collect(*state_, max_samples, true);
}

std::vector<Sample> DataReader::read(std::size_t max_samples) const {
  require(max_samples >= 1, Errc::Precondition, "max_samples must be at least 1");
  Lock lk(core_->mu);
  require(!core_->deleted && !state_->deleted, Errc::EntityDeleted, "reader was deleted");
  return core_->collect(*state_, max_samples, false);
}

StatusSet DataReader::get_status() const {
  Lock lk(core_->mu);
  require(!state_->deleted, Errc::EntityDeleted, "reader was deleted");
  return state_->status;
}

Guid DataReader::guid() const { return state_->guid; }
const QosProfile& DataReader::qos() const { return state_->qos; }

std::size_t DataReader::cache_size() const {
  Lock lk(core_->mu);
  return state_->cached;
}

std::size_t DataReader::max_instance_depth() const {
  Lock lk(core_->mu);
  std::size_t m = 0;
  for (const auto& slot : state_->instances) m = std::max(m, slot.samples.size());
  return m;
}

std::size_t DataReader::matched_writer_count() const {
  Lock lk(core_->mu);
  return state_->proxies.size();
}

bool DataReader::is_matched_with(const Guid& writer) const {
  Lock lk(core_->mu);
  return state_->proxies.count(writer) > 0;
}

std::map<Guid, std::uint64_t> DataReader::delivered_per_writer() const {
  Lock lk(core_->mu);
  return state_->delivered;
}

std::uint64_t DataReader::delivered_total() const {
  Lock lk(core_->mu);
  return state_->delivered_total;
}

// ---------------------------------------------------------------------------
// Publisher

DataWriter Publisher::create_writer(const Topic& topic, const QosProfile& qos, Listener listener) {
  require(static_cast<bool>(topic), Errc::Precondition, "null topic");
  Lock lk(core_->mu);
  core_->check_live();
  require(!state_->deleted, Errc::EntityDeleted, "publisher was deleted");
  require(std::find(core_->topics.begin(), core_->topics.end(), topic.state_) != core_->topics.end(),
          Errc::Precondition, "topic belongs to another participant");
  qos.validate(core_->config.heartbeat_period_ms);
  require(state_->next_index != 0, Errc::ResourceLimit, "too many writers on one publisher");

  auto w = std::make_shared<detail::WriterState>();
  w->guid = Guid{core_->guid.prefix, make_entity_id(state_->group, state_->next_index++, entity_kind::kWriter)};
  w->topic = topic.state_;
  w->qos = qos;
  if (state_->presentation != Presentation{}) w->qos.presentation = state_->presentation;
  w->listener = std::move(listener);
  w->publisher = state_.get();
  state_->writers.push_back(w);
  core_->on_local_writer(w);
  return DataWriter(core_, w);
}

void Publisher::delete_writer(const DataWriter& writer) {
  Lock lk(core_->mu);
  auto& ws = state_->writers;
  auto it = std::find(ws.begin(), ws.end(), writer.state_);
  if (it == ws.end()) return;
  core_->remove_writer(**it);
  ws.erase(it);
}

void Publisher::suspend_publication() {
  Lock lk(core_->mu);
  require(!core_->deleted && !state_->deleted, Errc::EntityDeleted, "publisher was deleted");
  state_->suspended = true;
}

void Publisher::resume_publication() {
  Lock lk(core_->mu);
  require(!core_->deleted && !state_->deleted, Errc::EntityDeleted, "publisher was deleted");
  if (!state_->suspended) return;
  state_->suspended = false;
  for (auto& w : state_->writers) {
    const std::uint64_t up_to = state_->open_set && w->hold_from ? w->hold_from - 1 : w->next_seq - 1;
    core_->release(*w, up_to);
  }
}

std::uint32_t Publisher::begin_coherent_changes() {
  Lock lk(core_->mu);
  require(!core_->deleted && !state_->deleted, Errc::EntityDeleted, "publisher was deleted");
  bool coherent = state_->presentation.coherent_access;
  for (auto& w : state_->writers) coherent = coherent || w->qos.presentation.coherent_access;
  require(coherent, Errc::Precondition, "coherent access not offered by this publisher");
  require(!state_->open_set, Errc::Precondition, "a coherent set is already open");
  state_->open_set = state_->next_set_id++;
  return *state_->open_set;
}

void Publisher::end_coherent_changes() {
  Lock lk(core_->mu);
  require(!core_->deleted && !state_->deleted, Errc::EntityDeleted, "publisher was deleted");
  require(state_->open_set.has_value(), Errc::Precondition, "no coherent set is open");
  const std::uint32_t set = *state_->open_set;
  state_->open_set.reset();

  bool any = false;
  for (auto& w : state_->writers) any = any || w->hold_from != 0;
  const TimeUs t = core_->now();
  for (auto& w : state_->writers) {
    if (!any) break;
    if (w->hold_from) {
      auto it = w->history.find(w->last_set_member);
      if (it != w->history.end()) it->second.coherent_end = true;
    } else {
      // Tells readers of this writer the set skipped it.
      detail::CachedSample m;
      m.seq = w->next_seq++;
      m.timestamp = t;
      m.coherent_member = true;
      m.coherent_end = true;
      m.set_id = set;
      w->history.emplace(m.seq, std::move(m));
    }
    w->hold_from = 0;
    w->last_set_member = 0;
    if (!state_->suspended) core_->release(*w, w->next_seq - 1);
  }
}

const Bytes& Publisher::group_data() const { return state_->group_data; }
const Presentation& Publisher::presentation() const { return state_->presentation; }

std::vector<DataWriter> Publisher::writers() const {
  Lock lk(core_->mu);
  std::vector<DataWriter> out;
  for (auto& w : state_->writers) out.push_back(DataWriter(core_, w));
  return out;
}

// ---------------------------------------------------------------------------
// Subscriber

DataReader Subscriber::make_reader(const std::shared_ptr<detail::TopicState>& topic,
                                   std::optional<FilterExpression> filter, const QosProfile& qos, Listener listener) {
  Lock lk(core_->mu);
  core_->check_live();
  require(!state_->deleted, Errc::EntityDeleted, "subscriber was deleted");
  require(std::find(core_->topics.begin(), core_->topics.end(), topic) != core_->topics.end(), Errc::Precondition,
          "topic belongs to another participant");
  qos.validate(core_->config.heartbeat_period_ms);
  require(state_->next_index != 0, Errc::ResourceLimit, "too many readers on one subscriber");

  auto r = std::make_shared<detail::ReaderState>();
  r->guid = Guid{core_->guid.prefix, make_entity_id(state_->group, state_->next_index++, entity_kind::kReader)};
  r->topic = topic;
  r->filter = std::move(filter);
  r->qos = qos;
  if (state_->presentation != Presentation{}) r->qos.presentation = state_->presentation;
  r->listener = std::move(listener);
  r->subscriber = state_.get();
  state_->readers.push_back(r);
  core_->on_local_reader(r);
  return DataReader(core_, r);
}

DataReader Subscriber::create_reader(const Topic& topic, const QosProfile& qos, Listener listener) {
  require(static_cast<bool>(topic), Errc::Precondition, "null topic");
  return make_reader(topic.state_, std::nullopt, qos, std::move(listener));
}

DataReader Subscriber::create_reader(const ContentFilteredTopic& topic, const QosProfile& qos, Listener listener) {
  require(topic.state_ != nullptr, Errc::Precondition, "null topic");
  return make_reader(topic.state_->topic.state_, topic.state_->filter, qos, std::move(listener));
}

void Subscriber::delete_reader(const DataReader& reader) {
  Lock lk(core_->mu);
  auto& rs = state_->readers;
  auto it = std::find(rs.begin(), rs.end(), reader.state_);
  if (it == rs.end()) return;
  core_->remove_reader(**it);
  rs.erase(it);
}

const Bytes& Subscriber::group_data() const { return state_->group_data; }

std::vector<DataReader> Subscriber::readers() const {
  Lock lk(core_->mu);
  std::vector<DataReader> out;
  for (auto& r : state_->readers) out.push_back(DataReader(core_, r));
  return out;
}

// ---------------------------------------------------------------------------
// DomainParticipant

DomainParticipant DomainParticipant::create(const LinkFactory& links, const ParticipantConfig& config) {
  require(config.domain_id >= 0 && config.domain_id < 256, Errc::Precondition, "domain id outside [0, 256)");
  require(config.lease_ms >= 100, Errc::Precondition, "lease must be at least 100 ms");
  require(config.heartbeat_period_ms >= 1, Errc::Precondition, "heartbeat period must be positive");
  require(config.lease_ms >= 3 * config.heartbeat_period_ms, Errc::Precondition,
          "lease must be at least three heartbeat periods");
  const GuidPrefix prefix = config.prefix.value_or(next_process_prefix());
  auto link = links(config.domain_id, prefix);
  require(link != nullptr, Errc::DomainUnavailable, "no transport for domain");
  auto core = std::make_shared<Core>(config, std::move(link), prefix);
  core->next_announce = core->now();
  return DomainParticipant(std::move(core));
}

Topic DomainParticipant::create_topic(const std::string& name, const TypeDescriptor& type) {
  Lock lk(core_->mu);
  core_->check_live();
  require(!name.empty(), Errc::Precondition, "topic name is empty");
  for (auto& t : core_->topics)
    if (t->name == name) {
      require(t->type.hash() == type.hash(), Errc::TypeError, "topic already registered with another type");
      return Topic(t);
    }
  auto t = std::make_shared<detail::TopicState>(detail::TopicState{name, type});
  core_->topics.push_back(t);
  return Topic(t);
}

ContentFilteredTopic DomainParticipant::create_content_filtered_topic(const Topic& topic,
                                                                      const std::string& expression) {
  require(static_cast<bool>(topic), Errc::Precondition, "null topic");
  return create_content_filtered_topic(topic, parse_filter(expression, topic.type()));
}

ContentFilteredTopic DomainParticipant::create_content_filtered_topic(const Topic& topic,
                                                                      FilterExpression expression) {
  require(static_cast<bool>(topic), Errc::Precondition, "null topic");
  require(expression.type_hash() == topic.type().hash(), Errc::TypeError,
          "filter was parsed against a different type");
  Lock lk(core_->mu);
  core_->check_live();
  return ContentFilteredTopic(
      std::make_shared<detail::FilteredTopicState>(detail::FilteredTopicState{topic, std::move(expression)}));
}

Publisher DomainParticipant::create_publisher(Bytes group_data, Presentation presentation) {
  Lock lk(core_->mu);
  core_->check_live();
  require(group_data.size() <= kMaxGroupData, Errc::Precondition, "group data exceeds 1024 bytes");
  require(core_->next_group != 0, Errc::ResourceLimit, "too many publishers and subscribers");
  auto p = std::make_shared<detail::PublisherState>();
  p->group = core_->next_group++;
  p->group_data = std::move(group_data);
  p->presentation = presentation;
  core_->publishers.push_back(p);
  return Publisher(core_, p);
}

void DomainParticipant::delete_publisher(const Publisher& publisher) {
  Lock lk(core_->mu);
  auto& ps = core_->publishers;
  auto it = std::find(ps.begin(), ps.end(), publisher.state_);
  if (it == ps.end()) return;
  for (auto& w : (*it)->writers) core_->remove_writer(*w);
  (*it)->writers.clear();
  (*it)->deleted = true;
  ps.erase(it);
}

Subscriber DomainParticipant::create_subscriber(Bytes group_data, Presentation presentation) {
  Lock lk(core_->mu);
  core_->check_live();
  require(group_data.size() <= kMaxGroupData, Errc::Precondition, "group data exceeds 1024 bytes");
  require(core_->next_group != 0, Errc::ResourceLimit, "too many publishers and subscribers");
  auto s = std::make_shared<detail::SubscriberState>();
  s->group = core_->next_group++;
  s->group_data = std::move(group_data);
  s->presentation = presentation;
  core_->subscribers.push_back(s);
  return Subscriber(core_, s);
}

void DomainParticipant::delete_subscriber(const Subscriber& subscriber) {
  Lock lk(core_->mu);
  auto& ss = core_->subscribers;
  auto it = std::find(ss.begin(), ss.end(), subscriber.state_);
  if (it == ss.end()) return;
  for (auto& r : (*it)->readers) core_->remove_reader(*r);
  (*it)->readers.clear();
  (*it)->deleted = true;
  ss.erase(it);
}

void DomainParticipant::delete_participant() {
  if (!core_) return;
  if (in_dispatch) throw Error(Errc::Reentrancy, "delete_participant called from a listener");
  stop();
  Lock lk(core_->mu);
  if (core_->deleted) return;
  for (auto& p : core_->publishers) {
    for (auto& w : p->writers) core_->remove_writer(*w);
    p->writers.clear();
    p->deleted = true;
  }
  for (auto& s : core_->subscribers) {
    for (auto& r : s->readers) core_->remove_reader(*r);
    s->readers.clear();
    s->deleted = true;
  }
  core_->publishers.clear();
  core_->subscribers.clear();
  core_->announce(core_->now());
  core_->flush();
  core_->link->close();
  core_->deleted = true;
  core_->events.clear();
}

void DomainParticipant::tick() { run_tick(*core_); }

void DomainParticipant::spin(std::chrono::milliseconds period) {
  if (in_dispatch) throw Error(Errc::Reentrancy, "spin called from a listener");
  stop();
  std::weak_ptr<Core> weak = core_;
  core_->spinner = std::jthread([weak, period](std::stop_token st) {
    while (!st.stop_requested()) {
      auto core = weak.lock();
      if (!core || core->deleted) return;
      run_tick(*core);
      core.reset();
      std::this_thread::sleep_for(period);
    }
  });
}

void DomainParticipant::stop() {
  if (in_dispatch) throw Error(Errc::Reentrancy, "stop called from a listener");
  if (core_->spinner.joinable()) {
    core_->spinner.request_stop();
    core_->spinner.join();
  }
}

Guid DomainParticipant::guid() const { return core_->guid; }
TimeUs DomainParticipant::now() const { return core_->now(); }
int DomainParticipant::domain_id() const { return core_->config.domain_id; }
std::uint32_t DomainParticipant::lease_ms() const { return core_->config.lease_ms; }

StatusSet DomainParticipant::get_status() const {
  Lock lk(core_->mu);
  core_->check_live();
  return core_->status;
}

std::size_t DomainParticipant::child_count() const {
  Lock lk(core_->mu);
  return core_->publishers.size() + core_->subscribers.size();
}

std::vector<GuidPrefix> DomainParticipant::alive_peers() const {
  Lock lk(core_->mu);
  std::vector<GuidPrefix> out;
  for (const auto& [prefix, rp] : core_->remotes)
    if (rp.alive) out.push_back(prefix);
  return out;
}

std::uint64_t DomainParticipant::malformed_messages() const {
  Lock lk(core_->mu);
  return core_->malformed;
}

}  // namespace mmog::dcps
