#include "mmog/game/session.hpp"

#include "mmog/common/error.hpp"

namespace mmog::game {

SessionConfig::SessionConfig() {
  writer_qos.reliability = dcps::Reliability::Reliable;
  writer_qos.history = dcps::History::keep_last(1);
  reader_qos.reliability = dcps::Reliability::Reliable;
  reader_qos.history = dcps::History::keep_last(1);
}

GameSession::GameSession(dcps::DomainParticipant participant, SessionConfig config)
    : participant_(std::move(participant)), config_(std::move(config)) {
  config_.world.validate();
  config_.writer_qos.presentation = {true, dcps::AccessScope::Topic};
  config_.reader_qos.presentation = {true, dcps::AccessScope::Instance};
  topic_ = participant_.create_topic(kEntityTopic, entity_state_type());
  publisher_ = participant_.create_publisher(config_.group_data, config_.writer_qos.presentation);
  subscriber_ = participant_.create_subscriber();
  writer_ = publisher_.create_writer(topic_, config_.writer_qos);
}

EntityState GameSession::create_entity(std::uint64_t entity_id, EntityKind kind, double x, double y) {
  if (owned_.count(entity_id)) throw Error(Errc::Precondition, "entity " + std::to_string(entity_id) + " exists");
  EntityState s;
  s.entity_id = entity_id;
  s.kind = static_cast<std::uint32_t>(kind);
  s.region = region_of(x, y, config_.world);
  s.x = x;
  s.y = y;
  owned_.emplace(entity_id, s);
  return s;
}

EntityState& GameSession::require_owned(std::uint64_t entity_id) {
  auto it = owned_.find(entity_id);
  if (it == owned_.end())
    throw Error(Errc::NotOwner, "entity " + std::to_string(entity_id) + " is not owned by this session");
  return it->second;
}

EntityState GameSession::publish_update(EntityState state) {
  auto& held = require_owned(state.entity_id);
  if (region_of(state.x, state.y, config_.world) != state.region)
    throw Error(Errc::InvalidRegion, "region field disagrees with position");
  state.version = held.version + 1;
  writer_.write(to_values(state));
  held = state;
  return state;
}

EntityState GameSession::handoff(std::uint64_t entity_id, double new_x, double new_y, double vx, double vy) {
  EntityState next = require_owned(entity_id);
  next.x = new_x;
  next.y = new_y;
  next.vx = vx;
  next.vy = vy;
  next.region = region_of(new_x, new_y, config_.world);
  if (next.region == owned_.at(entity_id).region) return publish_update(next);
  publisher_.begin_coherent_changes();
  try {
    next = publish_update(next);
  } catch (...) {
    publisher_.end_coherent_changes();
    throw;
  }
  publisher_.end_coherent_changes();
  return next;
}

std::string GameSession::aoi_expression(const std::set<std::uint32_t>& regions) {
  std::string expr;
  for (auto r : regions) {
    if (!expr.empty()) expr += " OR ";
    expr += "region == " + std::to_string(r);
  }
  return expr;
}

void GameSession::subscribe_aoi(const std::set<std::uint32_t>& regions) {
  if (regions.empty()) throw Error(Errc::InvalidRegion, "area of interest is empty");
  const auto count = config_.world.region_count();
  for (auto r : regions)
    if (r >= count) throw Error(Errc::InvalidRegion, "region " + std::to_string(r) + " outside the world");
  auto cft = participant_.create_content_filtered_topic(topic_, aoi_expression(regions));
  auto fresh = subscriber_.create_reader(cft, config_.reader_qos);
  if (retiring_) subscriber_.delete_reader(retiring_);
  retiring_ = reader_;
  retire_after_ = participant_.now() + config_.aoi_overlap_us;
  reader_ = fresh;
  aoi_ = regions;
}

std::size_t GameSession::drain(dcps::DataReader& r, TimeUs now) {
  auto samples = r.take();
  for (const auto& s : samples) {
    ++stats_.samples_taken;
    ++stats_.taken_by_writer[s.info.writer_guid];
    const auto st = from_values(s.values);
    bool consistent = true;
    try {
      consistent = region_of(st.x, st.y, config_.world) == st.region;
    } catch (const Error&) {
      consistent = false;
    }
    if (!consistent) ++stats_.region_violations;
    const auto lat = static_cast<std::uint64_t>(std::max<TimeUs>(0, s.info.reception_timestamp_us - s.info.source_timestamp_us));
    stats_.latency_sum_us += lat;
    stats_.latency_max_us = std::max(stats_.latency_max_us, lat);
    if (view_.apply_update(st, s.info.source_timestamp_us, s.info.writer_guid, now)) ++stats_.applied;
    else ++stats_.stale_discarded;
  }
  return samples.size();
}

std::size_t GameSession::poll(bool expire_stale) {
  const TimeUs now = participant_.now();
  std::size_t n = 0;
  if (reader_) n += drain(reader_, now);
  if (retiring_) {
    n += drain(retiring_, now);
    if (now >= retire_after_ && reader_.matched_writer_count() >= retiring_.matched_writer_count()) {
      subscriber_.delete_reader(retiring_);
      retiring_ = {};
    }
  }
  if (expire_stale) stats_.expired += view_.expire(now, config_.staleness_timeout_us);
  return n;
}

const EntityState* GameSession::owned(std::uint64_t entity_id) const {
  auto it = owned_.find(entity_id);
  return it == owned_.end() ? nullptr : &it->second;
}

}  // namespace mmog::game
