#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mmog/dcps/filter.hpp"
#include "mmog/transport/types.hpp"

namespace mmog::services {

using Json = nlohmann::json;

/// Flat message schema: ordered (name, kind) pairs using the codec kinds.
using MessageSchema = std::vector<transport::FieldDef>;

struct PortDescriptor {
  std::string name;
  std::string service;
  std::string operation;
  MessageSchema input;
  MessageSchema output;
  std::string address;  // "inproc:<name>" or an http:// URL
};

struct ProcessNode {
  enum class Kind : std::uint8_t { Receive, Invoke, Decision, Reply };
  std::string id;
  Kind kind = Kind::Receive;
  std::vector<std::string> next;  // receive and invoke successors

  std::string variable;  // receive: request slot; invoke: output slot
  std::string port;
  std::map<std::string, std::string> input;  // invoke: port field -> "var.field"
  std::optional<std::string> parallel_group;

  std::string condition;  // decision
  std::string then_node, else_node;

  Json set = Json::object();                 // reply constants
  std::map<std::string, std::string> copy;  // reply field -> "var.field"
};

/// Parsed and statically validated process. Validation guarantees one
/// receive, at least one reply, an acyclic graph (also after merging each
/// parallel group into one step), no dependency between invokes of a group,
/// declared variables and ports, and type-checked decision conditions.
class ProcessDefinition {
 public:
  /// Throws Errc::ConfigError naming the offending node, or Errc::ParseError
  /// / Errc::TypeError from a decision condition.
  static ProcessDefinition from_json(const Json& doc);
  static ProcessDefinition load(const std::string& path);

  const std::string& name() const { return name_; }
  const std::map<std::string, PortDescriptor>& ports() const { return ports_; }
  const std::map<std::string, MessageSchema>& variables() const { return variables_; }
  const std::vector<ProcessNode>& nodes() const { return nodes_; }
  const Json& fault_reply() const { return fault_reply_; }
  std::chrono::milliseconds invoke_timeout() const { return invoke_timeout_; }

  /// Execution steps: each step is one node or all members of a parallel group.
  const std::vector<std::vector<std::size_t>>& steps() const { return steps_; }
  const transport::TypeDescriptor& scope_type() const { return scope_type_; }
  const dcps::FilterExpression& condition(std::size_t node) const { return conditions_.at(node); }
  std::size_t index_of(const std::string& id) const;

 private:
  void validate();

  std::string name_;
  std::map<std::string, PortDescriptor> ports_;
  std::map<std::string, MessageSchema> variables_;
  std::vector<ProcessNode> nodes_;
  Json fault_reply_;
  std::chrono::milliseconds invoke_timeout_{2000};

  std::map<std::string, std::size_t> index_;
  std::vector<std::vector<std::size_t>> steps_;
  transport::TypeDescriptor scope_type_;
  std::map<std::size_t, dcps::FilterExpression> conditions_;
};

/// A bound port: request message in, response message out. May block; the
/// engine runs it on its own thread and stops waiting at the deadline.
using PortHandler = std::function<Json(const Json&)>;
using PortBindings = std::map<std::string, PortHandler>;

struct TraceEvent {
  std::string node;
  std::string event;  // receive, start, complete, timeout, malformed, failed, decision, reply
  std::string detail;
};

struct ProcessResult {
  Json output;
  std::vector<TraceEvent> trace;
  bool faulted = false;

  bool ran(const std::string& node) const;
  /// Node ids in the order their invokes completed.
  std::vector<std::string> completion_order() const;
};

/// Throws Errc::PortUnbound before running anything when a port used by the
/// definition has no binding, Errc::Malformed when the input does not match
/// the receive schema, and Errc::InvokeTimeout on a timed-out invoke when
/// the definition has no fault reply.
ProcessResult run_process(const ProcessDefinition& def, const Json& input, const PortBindings& bindings);

/// Forwards the request as a JSON POST to `url` (http://host:port/path).
PortHandler http_port(const std::string& url, std::chrono::milliseconds timeout = std::chrono::milliseconds(2000));

}  // namespace mmog::services
