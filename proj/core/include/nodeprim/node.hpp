// Copyright 2026 The nodeprim Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Node roles, lifecycle events and the per-node runtime context.

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "nodeprim/clock.hpp"
#include "nodeprim/master.hpp"
#include "nodeprim/net.hpp"

namespace nodeprim::node {

enum class NodeKind { Sensory, Perception, Cognitive, Action };

// Abstraction tier of a capability.
enum class PrimitiveLevel { Hardware, Algorithmic, Social, Emergent, Control };

std::string_view to_string(NodeKind k) noexcept;
std::string_view to_string(PrimitiveLevel l) noexcept;
NodeKind parse_kind(std::string_view s);            // Error{BadRequest}
PrimitiveLevel parse_level(std::string_view s);     // Error{BadRequest}
std::optional<NodeKind> try_parse_kind(std::string_view s) noexcept;

PrimitiveLevel default_level(NodeKind k) noexcept;

struct NodeDescriptor {
  std::string name;
  NodeKind kind = NodeKind::Cognitive;
  PrimitiveLevel level = PrimitiveLevel::Control;

  NodeDescriptor() = default;
  NodeDescriptor(std::string n, NodeKind k) : name(std::move(n)), kind(k), level(default_level(k)) {}
  NodeDescriptor(std::string n, NodeKind k, PrimitiveLevel l) : name(std::move(n)), kind(k), level(l) {}
};

enum class NodeEvent {
  Started,
  Executing,
  RobotConnected,
  RobotConnectionFailed,
  ShutdownManual,
  ShutdownUnexpected,
};

std::string_view to_string(NodeEvent e) noexcept;
std::optional<NodeEvent> try_parse_event(std::string_view s) noexcept;
inline bool is_shutdown(NodeEvent e) noexcept {
  return e == NodeEvent::ShutdownManual || e == NodeEvent::ShutdownUnexpected;
}

struct NodeStateEvent {
  std::string node;
  NodeKind kind = NodeKind::Cognitive;
  NodeEvent event = NodeEvent::Started;
  std::string detail;
  double stamp = 0.0;  // seconds

  // {"node":..,"type":..,"event":..,"detail":..,"stamp":..}
  nlohmann::json to_json() const;
  // Throws Error{BadRequest} unless `j` is a well-formed event.
  static NodeStateEvent from_json(const nlohmann::json& j);
  bool operator==(const NodeStateEvent&) const = default;
};

inline constexpr std::string_view kNodeStateTopic = "node_state";

// Where a node finds the rest of the system.
struct NetworkConfig {
  net::Endpoint master{"127.0.0.1", 7000};
  // Line-oriented sink that republishes on node_state.
  net::Endpoint events{"127.0.0.1", 7001};
  // Line-oriented sink that republishes on the shared trigger topic.
  net::Endpoint triggers{"127.0.0.1", 7002};
};

// Writes newline-delimited JSON to a relay port, reconnecting on demand.
// Delivery is best effort.
class LineSender {
 public:
  // `tracked_topic`: the topic the relay republishes on, for Activity
  // accounting; empty for untracked traffic.
  explicit LineSender(net::Endpoint to, std::string tracked_topic = {});

  bool send(const nlohmann::json& line);
  const net::Endpoint& endpoint() const noexcept { return to_; }

 private:
  bool ensure_connected();

  std::mutex mu_;
  net::Endpoint to_;
  std::string tracked_topic_;
  std::optional<net::Socket> socket_;
};

// Handed out by node_start(); owns the node's name claim at the master and its
// event channel. Used by one node at a time.
class NodeContext {
 public:
  ~NodeContext();
  NodeContext(const NodeContext&) = delete;
  NodeContext& operator=(const NodeContext&) = delete;

  const NodeDescriptor& descriptor() const noexcept { return desc_; }
  const std::string& name() const noexcept { return desc_.name; }
  const NetworkConfig& network() const noexcept { return network_; }
  Clock& clock() const noexcept { return clock_; }

  void publish_state(NodeEvent event, std::string detail = {});
  // Publishes shutdown_manual once; later calls do nothing.
  void shutdown(std::string detail = {});
  bool is_shut_down() const noexcept { return shut_down_; }

 private:
  friend std::unique_ptr<NodeContext> node_start(NodeDescriptor, const NetworkConfig&, Clock&);
  NodeContext(NodeDescriptor desc, NetworkConfig network, Clock& clock, master::MasterClient claim);

  NodeDescriptor desc_;
  NetworkConfig network_;
  Clock& clock_;
  master::MasterClient claim_;
  LineSender events_;
  std::mutex stamp_mu_;
  double last_stamp_ = 0.0;
  bool shut_down_ = false;
};

// Claims the node name at the master and announces `started`.
// Throws Error{MasterUnreachable, DuplicateName}.
std::unique_ptr<NodeContext> node_start(NodeDescriptor desc, const NetworkConfig& network,
                                        Clock& clock = real_clock());

// Publishes an event for someone else (the supervisor speaking for a child).
void publish_on_behalf(LineSender& sink, const NodeDescriptor& node, NodeEvent event,
                       std::string detail, Clock& clock = real_clock());

}  // namespace nodeprim::node
