#include "mmog/transport/netsim.hpp"

#include <algorithm>
#include <cmath>

#include "mmog/common/error.hpp"
#include "mmog/transport/wire.hpp"

namespace mmog::transport {

void NetSimConfig::validate() const {
  if (!(drop_probability >= 0.0 && drop_probability <= 1.0))
    throw Error(Errc::ConfigError, "drop_probability must be within [0, 1]");
  if (!(latency_mean_ms >= 0.0)) throw Error(Errc::ConfigError, "latency_mean must be >= 0");
  if (!(latency_jitter_ms >= 0.0)) throw Error(Errc::ConfigError, "latency_jitter must be >= 0");
}

NetSim::NetSim(NetSimConfig config) : config_(config), rng_(config.rng_seed) { config_.validate(); }

double NetSim::uniform01() {
  return static_cast<double>(rng_() >> 11) * 0x1.0p-53;
}

std::optional<TimeUs> NetSim::sim_send(TimeUs now, std::uint64_t link) {
  // Both draws are always consumed so the stream stays aligned with the send
  // schedule regardless of outcomes.
  const double drop_draw = uniform01();
  const double jitter_draw = uniform01();
  if (config_.drop_probability > 0.0 && drop_draw < config_.drop_probability) return std::nullopt;
  double latency_ms = config_.latency_mean_ms + (2.0 * jitter_draw - 1.0) * config_.latency_jitter_ms;
  latency_ms = std::max(0.0, latency_ms);
  TimeUs at = now + static_cast<TimeUs>(std::llround(latency_ms * 1000.0));
  if (!config_.reorder) {
    auto& last = last_delivery_[link];
    at = std::max(at, last);
    last = at;
  }
  return at;
}

class SimNetwork::SimLink final : public Link {
 public:
  SimLink(std::shared_ptr<SimNetwork> net, GuidPrefix self) : net_(std::move(net)), self_(self) {}
  ~SimLink() override { close(); }

  void send(const std::optional<GuidPrefix>& to, SharedBytes bytes) override {
    if (!closed_) net_->send_from(self_, to, std::move(bytes));
  }
  std::vector<SharedBytes> poll() override {
    if (closed_) return {};
    return net_->poll(self_);
  }
  const Clock& clock() const override { return net_->clock_; }
  void close() override {
    if (!closed_) {
      closed_ = true;
      net_->detach(self_);
    }
  }

 private:
  std::shared_ptr<SimNetwork> net_;
  GuidPrefix self_;
  bool closed_ = false;
};

SimNetwork::SimNetwork(NetSimConfig config) : sim_(config) {}

std::shared_ptr<SimNetwork> SimNetwork::create(NetSimConfig config) {
  return std::shared_ptr<SimNetwork>(new SimNetwork(config));
}

std::shared_ptr<Link> SimNetwork::attach(int domain_id, const GuidPrefix& prefix) {
  std::lock_guard lock(mu_);
  auto open = domain_open_.find(domain_id);
  if (open != domain_open_.end() && !open->second)
    throw Error(Errc::DomainUnavailable, "domain " + std::to_string(domain_id) + " is closed");
  auto it = nodes_.find(prefix);
  if (it != nodes_.end() && !it->second.closed)
    throw Error(Errc::DomainUnavailable, "prefix " + prefix.to_hex() + " already attached");
  Node node;
  node.domain = domain_id;
  node.index = next_index_++;
  nodes_.insert_or_assign(prefix, std::move(node));
  return std::make_shared<SimLink>(shared_from_this(), prefix);
}

void SimNetwork::set_domain_open(int domain_id, bool open) {
  std::lock_guard lock(mu_);
  domain_open_[domain_id] = open;
}

void SimNetwork::advance_to(TimeUs t) { clock_.set(t); }

std::optional<TimeUs> SimNetwork::next_delivery() const {
  std::lock_guard lock(mu_);
  std::optional<TimeUs> best;
  for (const auto& [_, node] : nodes_)
    if (!node.closed && !node.inbox.empty())
      if (!best || node.inbox.top().at < *best) best = node.inbox.top().at;
  return best;
}

void SimNetwork::set_drop_hook(DropHook hook) {
  std::lock_guard lock(mu_);
  drop_hook_ = std::move(hook);
}

void SimNetwork::set_silenced(const GuidPrefix& prefix, bool silenced) {
  std::lock_guard lock(mu_);
  auto it = nodes_.find(prefix);
  if (it != nodes_.end()) it->second.silenced = silenced;
}

void SimNetwork::inject(const GuidPrefix& from, const GuidPrefix& to, Bytes bytes) {
  if (bytes.size() >= kHeaderSize && std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin()))
    bytes[5] |= kHeaderFlagSimInjected;
  std::lock_guard lock(mu_);
  auto dst = nodes_.find(to);
  if (dst == nodes_.end() || dst->second.closed) return;
  dst->second.inbox.push(Pending{clock_.now_us(), order_++, std::make_shared<const Bytes>(std::move(bytes))});
  (void)from;
}

void SimNetwork::deliver_one(const GuidPrefix& from, Node& src, const GuidPrefix& to, Node& dst,
                             const SharedBytes& bytes) {
  ++totals_.messages_sent;
  ++src.stats.messages_sent;
  if (drop_hook_ && drop_hook_(*bytes, from, to)) {
    ++totals_.messages_dropped;
    return;
  }
  const std::uint64_t link = (static_cast<std::uint64_t>(src.index) << 32) | dst.index;
  auto at = sim_.sim_send(clock_.now_us(), link);
  if (!at) {
    ++totals_.messages_dropped;
    return;
  }
  dst.inbox.push(Pending{*at, order_++, bytes});
}

void SimNetwork::send_from(const GuidPrefix& from, const std::optional<GuidPrefix>& to, SharedBytes bytes) {
  std::lock_guard lock(mu_);
  auto src = nodes_.find(from);
  if (src == nodes_.end() || src->second.closed || src->second.silenced) return;
  if (to) {
    auto dst = nodes_.find(*to);
    if (dst == nodes_.end() || dst->second.closed || dst->second.domain != src->second.domain || *to == from)
      return;
    deliver_one(from, src->second, *to, dst->second, bytes);
    return;
  }
  for (auto& [prefix, node] : nodes_) {
    if (prefix == from || node.closed || node.domain != src->second.domain) continue;
    deliver_one(from, src->second, prefix, node, bytes);
  }
}

std::vector<SharedBytes> SimNetwork::poll(const GuidPrefix& self) {
  std::lock_guard lock(mu_);
  std::vector<SharedBytes> out;
  auto it = nodes_.find(self);
  if (it == nodes_.end()) return out;
  auto& inbox = it->second.inbox;
  const TimeUs now = clock_.now_us();
  while (!inbox.empty() && inbox.top().at <= now) {
    const auto& top = inbox.top();
    ++it->second.stats.messages_delivered;
    it->second.stats.bytes_delivered += top.bytes->size();
    ++totals_.messages_delivered;
    totals_.bytes_delivered += top.bytes->size();
    out.push_back(top.bytes);
    inbox.pop();
  }
  return out;
}

void SimNetwork::detach(const GuidPrefix& self) {
  std::lock_guard lock(mu_);
  auto it = nodes_.find(self);
  if (it == nodes_.end()) return;
  it->second.closed = true;
  it->second.inbox = {};
}

SimStats SimNetwork::stats() const {
  std::lock_guard lock(mu_);
  return totals_;
}

SimStats SimNetwork::stats_for(const GuidPrefix& destination) const {
  std::lock_guard lock(mu_);
  auto it = nodes_.find(destination);
  return it == nodes_.end() ? SimStats{} : it->second.stats;
}

}  // namespace mmog::transport
