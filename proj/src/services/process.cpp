#include "mmog/services/process.hpp"

#include <algorithm>
#include <fstream>
#include <future>
#include <mutex>
#include <set>
#include <thread>

#include "httplib.h"
#include "mmog/common/error.hpp"

namespace mmog::services {

namespace {

using transport::FieldKind;

[[noreturn]] void config_error(const std::string& msg) { throw Error(Errc::ConfigError, msg); }

FieldKind parse_kind(const std::string& s) {
  for (auto k : {FieldKind::U32, FieldKind::U64, FieldKind::I64, FieldKind::F32, FieldKind::F64, FieldKind::Bool,
                 FieldKind::String})
    if (transport::kind_name(k) == s) return k;
  config_error("unknown field kind '" + s + "'");
}

MessageSchema parse_schema(const Json& j, const std::string& where) {
  if (!j.is_array()) config_error(where + ": schema must be an array of {name, kind}");
  MessageSchema out;
  std::set<std::string> seen;
  for (const auto& f : j) {
    auto name = f.at("name").get<std::string>();
    if (!seen.insert(name).second) config_error(where + ": duplicate field '" + name + "'");
    out.push_back({name, parse_kind(f.at("kind").get<std::string>())});
  }
  return out;
}

std::vector<std::string> string_list(const Json& j) {
  if (j.is_null()) return {};
  if (j.is_string()) return {j.get<std::string>()};
  return j.get<std::vector<std::string>>();
}

std::map<std::string, std::string> string_map(const Json& j) {
  if (j.is_null()) return {};
  return j.get<std::map<std::string, std::string>>();
}

std::pair<std::string, std::string> split_ref(const std::string& ref) {
  auto dot = ref.find('.');
  if (dot == std::string::npos || dot == 0 || dot + 1 == ref.size())
    config_error("reference '" + ref + "' must be variable.field");
  return {ref.substr(0, dot), ref.substr(dot + 1)};
}

bool json_fits(const Json& v, FieldKind k) {
  switch (k) {
    case FieldKind::U32: return v.is_number_unsigned() && v.get<std::uint64_t>() <= UINT32_MAX;
    case FieldKind::U64: return v.is_number_unsigned();
    case FieldKind::I64: return v.is_number_integer();
    case FieldKind::F32:
    case FieldKind::F64: return v.is_number();
    case FieldKind::Bool: return v.is_boolean();
    case FieldKind::String: return v.is_string();
  }
  return false;
}

/// Keeps exactly the schema's fields. Throws Malformed on missing or
/// mistyped ones.
Json conform(const Json& msg, const MessageSchema& schema, const std::string& what) {
  if (!msg.is_object()) throw Error(Errc::Malformed, what + ": expected a JSON object");
  Json out = Json::object();
  for (const auto& f : schema) {
    auto it = msg.find(f.name);
    if (it == msg.end()) throw Error(Errc::Malformed, what + ": missing field '" + f.name + "'");
    if (!json_fits(*it, f.kind))
      throw Error(Errc::Malformed,
                  what + ": field '" + f.name + "' is not " + std::string(transport::kind_name(f.kind)));
    out[f.name] = *it;
  }
  return out;
}

transport::FieldValue to_value(const Json* v, FieldKind k) {
  switch (k) {
    case FieldKind::U32: return v ? v->get<std::uint32_t>() : std::uint32_t{0};
    case FieldKind::U64: return v ? v->get<std::uint64_t>() : std::uint64_t{0};
    case FieldKind::I64: return v ? v->get<std::int64_t>() : std::int64_t{0};
    case FieldKind::F32: return v ? v->get<float>() : 0.0f;
    case FieldKind::F64: return v ? v->get<double>() : 0.0;
    case FieldKind::Bool: return v ? v->get<bool>() : false;
    case FieldKind::String: return v ? v->get<std::string>() : std::string();
  }
  return false;
}

}  // namespace

// ---------------------------------------------------------------------------
// Definition

ProcessDefinition ProcessDefinition::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::ConfigError, "cannot open " + path);
  try {
    return from_json(Json::parse(in));
  } catch (const Json::exception& e) {
    throw Error(Errc::ConfigError, path + ": " + e.what());
  }
}

ProcessDefinition ProcessDefinition::from_json(const Json& doc) {
  ProcessDefinition d;
  try {
    d.name_ = doc.at("name").get<std::string>();
    for (const auto& [name, p] : doc.at("ports").items()) {
      PortDescriptor port;
      port.name = name;
      port.service = p.value("service", name);
      port.operation = p.value("operation", "invoke");
      port.input = parse_schema(p.at("input"), "port " + name);
      port.output = parse_schema(p.at("output"), "port " + name);
      port.address = p.value("address", "inproc:" + name);
      d.ports_.emplace(name, std::move(port));
    }
    for (const auto& [name, v] : doc.at("variables").items()) d.variables_.emplace(name, parse_schema(v, "variable " + name));
    for (const auto& n : doc.at("nodes")) {
      ProcessNode node;
      node.id = n.at("id").get<std::string>();
      const auto type = n.at("type").get<std::string>();
      if (type == "receive") {
        node.kind = ProcessNode::Kind::Receive;
        node.variable = n.at("variable").get<std::string>();
        node.next = string_list(n.value("next", Json()));
      } else if (type == "invoke") {
        node.kind = ProcessNode::Kind::Invoke;
        node.port = n.at("port").get<std::string>();
        node.input = string_map(n.value("input", Json()));
        node.variable = n.at("output").get<std::string>();
        if (n.contains("parallel_group") && !n["parallel_group"].is_null())
          node.parallel_group = n["parallel_group"].get<std::string>();
        node.next = string_list(n.value("next", Json()));
      } else if (type == "decision") {
        node.kind = ProcessNode::Kind::Decision;
        node.condition = n.at("condition").get<std::string>();
        node.then_node = n.at("then").get<std::string>();
        node.else_node = n.at("else").get<std::string>();
      } else if (type == "reply") {
        node.kind = ProcessNode::Kind::Reply;
        node.set = n.value("set", Json::object());
        if (!node.set.is_object()) config_error("reply " + node.id + ": 'set' must be an object");
        node.copy = string_map(n.value("copy", Json()));
      } else {
        config_error("node " + node.id + ": unknown type '" + type + "'");
      }
      d.nodes_.push_back(std::move(node));
    }
    d.fault_reply_ = doc.value("fault_reply", Json());
    if (doc.contains("invoke_timeout_ms"))
      d.invoke_timeout_ = std::chrono::milliseconds(doc["invoke_timeout_ms"].get<std::int64_t>());
  } catch (const Json::exception& e) {
    throw Error(Errc::ConfigError, std::string("process definition: ") + e.what());
  }
  d.validate();
  return d;
}

std::size_t ProcessDefinition::index_of(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) config_error("unknown node '" + id + "'");
  return it->second;
}

void ProcessDefinition::validate() {
  if (invoke_timeout_.count() <= 0) config_error("invoke_timeout_ms must be positive");
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    if (!index_.emplace(nodes_[i].id, i).second) config_error("duplicate node id '" + nodes_[i].id + "'");

  auto check_ref = [&](const std::string& ref, const std::string& where) {
    auto [var, field] = split_ref(ref);
    auto it = variables_.find(var);
    if (it == variables_.end()) config_error(where + ": unknown variable '" + var + "'");
    auto f = std::find_if(it->second.begin(), it->second.end(), [&](const auto& d) { return d.name == field; });
    if (f == it->second.end()) config_error(where + ": variable '" + var + "' has no field '" + field + "'");
    return *f;
  };

  std::size_t receives = 0, replies = 0;
  std::vector<std::vector<std::size_t>> succ(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const auto& n = nodes_[i];
    const auto where = "node " + n.id;
    std::vector<std::string> out = n.next;
    switch (n.kind) {
      case ProcessNode::Kind::Receive:
        ++receives;
        if (!variables_.count(n.variable)) config_error(where + ": unknown variable '" + n.variable + "'");
        break;
      case ProcessNode::Kind::Invoke: {
        auto p = ports_.find(n.port);
        if (p == ports_.end()) config_error(where + ": unknown port '" + n.port + "'");
        auto v = variables_.find(n.variable);
        if (v == variables_.end()) config_error(where + ": unknown variable '" + n.variable + "'");
        if (v->second != p->second.output)
          config_error(where + ": variable '" + n.variable + "' does not match the output of port " + n.port);
        for (const auto& f : p->second.input) {
          auto m = n.input.find(f.name);
          if (m == n.input.end()) config_error(where + ": no input mapping for '" + f.name + "'");
          if (check_ref(m->second, where).kind != f.kind)
            config_error(where + ": input '" + f.name + "' has the wrong kind");
        }
        for (const auto& [field, _] : n.input)
          if (std::none_of(p->second.input.begin(), p->second.input.end(),
                           [&](const auto& f) { return f.name == field; }))
            config_error(where + ": port " + n.port + " has no input '" + field + "'");
        break;
      }
      case ProcessNode::Kind::Decision:
        out = {n.then_node, n.else_node};
        break;
      case ProcessNode::Kind::Reply:
        ++replies;
        if (!n.next.empty()) config_error(where + ": reply has successors");
        for (const auto& [_, ref] : n.copy) check_ref(ref, where);
        break;
    }
    if (n.kind != ProcessNode::Kind::Reply && out.empty()) config_error(where + ": no successor");
    for (const auto& s : out) {
      auto it = index_.find(s);
      if (it == index_.end()) config_error(where + ": unknown successor '" + s + "'");
      succ[i].push_back(it->second);
    }
  }
  if (receives != 1) config_error("a process needs exactly one receive node");
  if (replies == 0) config_error("a process needs at least one reply node");
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    for (auto s : succ[i])
      if (nodes_[s].kind == ProcessNode::Kind::Receive) config_error("node " + nodes_[i].id + " leads back to receive");

  // Data dependency inside a group: a member reading another member's output.
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    if (nodes_[i].kind == ProcessNode::Kind::Invoke && nodes_[i].parallel_group)
      groups[*nodes_[i].parallel_group].push_back(i);
  for (const auto& [g, members] : groups)
    for (auto a : members)
      for (auto b : members)
        if (a != b) {
          if (nodes_[a].variable == nodes_[b].variable)
            config_error("parallel group " + g + ": " + nodes_[a].id + " and " + nodes_[b].id +
                         " write the same variable");
          for (const auto& [_, ref] : nodes_[b].input)
            if (split_ref(ref).first == nodes_[a].variable)
              config_error("parallel group " + g + ": " + nodes_[b].id + " depends on " + nodes_[a].id);
        }

  // Merge each group into one step and order the steps topologically. A cycle
  // here means either a real cycle or a control dependency inside a group.
  std::vector<std::size_t> step_of(nodes_.size());
  std::vector<std::vector<std::size_t>> members;
  std::map<std::string, std::size_t> group_step;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const auto& g = nodes_[i].parallel_group;
    if (g && nodes_[i].kind == ProcessNode::Kind::Invoke) {
      auto [it, fresh] = group_step.emplace(*g, members.size());
      if (fresh) members.emplace_back();
      members[it->second].push_back(i);
      step_of[i] = it->second;
    } else {
      step_of[i] = members.size();
      members.push_back({i});
    }
  }
  std::vector<std::set<std::size_t>> step_succ(members.size());
  std::vector<std::size_t> indeg(members.size(), 0);
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    for (auto s : succ[i]) {
      if (step_of[i] == step_of[s]) {
        if (i == s) config_error("node " + nodes_[i].id + " leads to itself");
        config_error("parallel group " + *nodes_[i].parallel_group + ": " + nodes_[s].id + " depends on " +
                     nodes_[i].id);
      }
      if (step_succ[step_of[i]].insert(step_of[s]).second) ++indeg[step_of[s]];
    }
  std::set<std::size_t> ready;
  for (std::size_t s = 0; s < members.size(); ++s)
    if (indeg[s] == 0) ready.insert(s);
  while (!ready.empty()) {
    auto s = *ready.begin();
    ready.erase(ready.begin());
    steps_.push_back(members[s]);
    for (auto t : step_succ[s])
      if (--indeg[t] == 0) ready.insert(t);
  }
  if (steps_.size() != members.size()) config_error("process graph has a cycle");

  // Decision conditions see every variable field as "var.field".
  std::vector<transport::FieldDef> scope;
  for (const auto& [var, schema] : variables_)
    for (const auto& f : schema) scope.push_back({var + "." + f.name, f.kind});
  if (scope.empty()) config_error("a process needs at least one variable field");
  scope_type_ = transport::TypeDescriptor(scope, {scope.front().name});
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    if (nodes_[i].kind == ProcessNode::Kind::Decision)
      conditions_.emplace(i, dcps::parse_filter(nodes_[i].condition, scope_type_));
}

// ---------------------------------------------------------------------------
// Execution

bool ProcessResult::ran(const std::string& node) const {
  return std::any_of(trace.begin(), trace.end(),
                     [&](const TraceEvent& e) { return e.node == node && e.event == "complete"; });
}

std::vector<std::string> ProcessResult::completion_order() const {
  std::vector<std::string> out;
  for (const auto& e : trace)
    if (e.event == "complete") out.push_back(e.node);
  return out;
}

namespace {

struct Trace {
  std::mutex mu;
  std::vector<TraceEvent> events;
  void add(std::string node, std::string event, std::string detail = {}) {
    std::lock_guard lk(mu);
    events.push_back({std::move(node), std::move(event), std::move(detail)});
  }
  std::vector<TraceEvent> snapshot() {
    std::lock_guard lk(mu);
    return events;
  }
};

struct Outcome {
  enum class Kind { Ok, Timeout, Failed } kind = Kind::Ok;
  Json value;
  std::string detail;
};

}  // namespace

ProcessResult run_process(const ProcessDefinition& def, const Json& input, const PortBindings& bindings) {
  for (const auto& n : def.nodes())
    if (n.kind == ProcessNode::Kind::Invoke && !bindings.count(n.port))
      throw Error(Errc::PortUnbound, "port " + n.port + " is not bound");

  const auto& nodes = def.nodes();
  auto trace = std::make_shared<Trace>();
  std::map<std::string, Json> vars;
  std::vector<bool> active(nodes.size(), false);
  ProcessResult result;

  auto field = [&](const std::string& ref) -> Json {
    auto dot = ref.find('.');
    auto v = vars.find(ref.substr(0, dot));
    if (v == vars.end()) return Json();
    return v->second.value(ref.substr(dot + 1), Json());
  };
  auto finish = [&](Json output) {
    result.output = std::move(output);
    result.trace = trace->snapshot();
    return result;
  };
  auto activate = [&](const std::vector<std::string>& ids) {
    for (const auto& id : ids) active[def.index_of(id)] = true;
  };

  for (std::size_t i = 0; i < nodes.size(); ++i)
    if (nodes[i].kind == ProcessNode::Kind::Receive) active[i] = true;

  for (const auto& step : def.steps()) {
    std::vector<std::size_t> run;
    for (auto i : step)
      if (active[i]) run.push_back(i);
    if (run.empty()) continue;
    const auto& first = nodes[run.front()];

    if (first.kind == ProcessNode::Kind::Receive) {
      vars[first.variable] = conform(input, def.variables().at(first.variable), "process input");
      trace->add(first.id, "receive");
      activate(first.next);
    } else if (first.kind == ProcessNode::Kind::Decision) {
      transport::FieldValues values;
      for (const auto& f : def.scope_type().fields()) {
        auto v = field(f.name);
        values.push_back(to_value(v.is_null() ? nullptr : &v, f.kind));
      }
      const bool taken = def.condition(run.front()).eval(values);
      trace->add(first.id, "decision", taken ? "then" : "else");
      active[def.index_of(taken ? first.then_node : first.else_node)] = true;
    } else if (first.kind == ProcessNode::Kind::Reply) {
      Json out = first.set;
      for (const auto& [name, ref] : first.copy) out[name] = field(ref);
      trace->add(first.id, "reply");
      return finish(std::move(out));
    } else {
      // Invokes of one step start together and are all joined before any
      // later node runs.
      const auto deadline = std::chrono::steady_clock::now() + def.invoke_timeout();
      std::vector<std::future<Outcome>> pending;
      for (auto i : run) {
        const auto& n = nodes[i];
        const auto& port = def.ports().at(n.port);
        Json request = Json::object();
        for (const auto& f : port.input) request[f.name] = field(n.input.at(f.name));
        auto promise = std::make_shared<std::promise<Outcome>>();
        pending.push_back(promise->get_future());
        trace->add(n.id, "start", port.address);
        std::thread([promise, trace, handler = bindings.at(n.port), request, id = n.id, schema = port.output] {
          Outcome o;
          try {
            o.value = conform(handler(request), schema, "response of " + id);
            trace->add(id, "complete");
          } catch (const std::exception& e) {
            o.kind = Outcome::Kind::Failed;
            o.detail = e.what();
            trace->add(id, "failed", o.detail);
          }
          promise->set_value(std::move(o));
        }).detach();
      }
      bool fault = false;
      std::string why;
      for (std::size_t k = 0; k < run.size(); ++k) {
        const auto& n = nodes[run[k]];
        if (pending[k].wait_until(deadline) != std::future_status::ready) {
          trace->add(n.id, "timeout");
          fault = true;
          why = n.id + " timed out";
          continue;
        }
        auto o = pending[k].get();
        if (o.kind != Outcome::Kind::Ok) {
          fault = true;
          why = n.id + ": " + o.detail;
          continue;
        }
        vars[n.variable] = std::move(o.value);
      }
      if (fault) {
        if (def.fault_reply().is_null()) throw Error(Errc::InvokeTimeout, why);
        result.faulted = true;
        return finish(def.fault_reply());
      }
      for (auto i : run) activate(nodes[i].next);
    }
  }
  // Validation makes every path end in a reply.
  throw Error(Errc::Precondition, "process ended without reply");
}

PortHandler http_port(const std::string& url, std::chrono::milliseconds timeout) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos || url.substr(0, scheme) != "http")
    throw Error(Errc::ConfigError, "unsupported port address '" + url + "'");
  const auto path_at = url.find('/', scheme + 3);
  const auto origin = url.substr(0, path_at);
  const auto path = path_at == std::string::npos ? std::string("/") : url.substr(path_at);
  return [origin, path, timeout](const Json& request) {
    httplib::Client cli(origin);
    const auto secs = timeout.count() / 1000;
    const auto usecs = (timeout.count() % 1000) * 1000;
    cli.set_connection_timeout(secs, usecs);
    cli.set_read_timeout(secs, usecs);
    auto res = cli.Post(path, request.dump(), "application/json");
    if (!res) throw Error(Errc::InvokeTimeout, origin + path + ": " + httplib::to_string(res.error()));
    if (res->status != 200)
      throw Error(Errc::Malformed, origin + path + ": HTTP " + std::to_string(res->status));
    return Json::parse(res->body);
  };
}

}  // namespace mmog::services
