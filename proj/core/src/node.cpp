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

#include "nodeprim/node.hpp"

#include <algorithm>
#include <array>

#include <spdlog/spdlog.h>

#include "nodeprim/error.hpp"

namespace nodeprim::node {

using json = nlohmann::json;
using namespace std::chrono;

namespace {

constexpr std::array<std::string_view, 4> kKindNames{"sensory", "perception", "cognitive", "action"};
constexpr std::array<std::string_view, 5> kLevelNames{"hardware", "algorithmic", "social",
                                                      "emergent", "control"};
constexpr std::array<std::string_view, 6> kEventNames{
    "started",  "executing",       "robot_connected", "robot_connection_failed",
    "shutdown_manual", "shutdown_unexpected"};

}  // namespace

std::string_view to_string(NodeKind k) noexcept { return kKindNames[static_cast<int>(k)]; }
std::string_view to_string(PrimitiveLevel l) noexcept { return kLevelNames[static_cast<int>(l)]; }
std::string_view to_string(NodeEvent e) noexcept { return kEventNames[static_cast<int>(e)]; }

std::optional<NodeKind> try_parse_kind(std::string_view s) noexcept {
  for (std::size_t i = 0; i < kKindNames.size(); ++i) {
    if (kKindNames[i] == s) return static_cast<NodeKind>(i);
  }
  // The launcher historically spells it "sensing".
  if (s == "sensing") return NodeKind::Sensory;
  return std::nullopt;
}

NodeKind parse_kind(std::string_view s) {
  if (auto k = try_parse_kind(s)) return *k;
  throw Error(Errc::BadRequest, "unknown node type '" + std::string(s) + "'");
}

PrimitiveLevel parse_level(std::string_view s) {
  for (std::size_t i = 0; i < kLevelNames.size(); ++i) {
    if (kLevelNames[i] == s) return static_cast<PrimitiveLevel>(i);
  }
  throw Error(Errc::BadRequest, "unknown primitive level '" + std::string(s) + "'");
}

std::optional<NodeEvent> try_parse_event(std::string_view s) noexcept {
  for (std::size_t i = 0; i < kEventNames.size(); ++i) {
    if (kEventNames[i] == s) return static_cast<NodeEvent>(i);
  }
  return std::nullopt;
}

PrimitiveLevel default_level(NodeKind k) noexcept {
  switch (k) {
    case NodeKind::Sensory: return PrimitiveLevel::Hardware;
    case NodeKind::Perception: return PrimitiveLevel::Algorithmic;
    case NodeKind::Action: return PrimitiveLevel::Social;
    case NodeKind::Cognitive: return PrimitiveLevel::Control;
  }
  return PrimitiveLevel::Control;
}

json NodeStateEvent::to_json() const {
  return json{{"node", node},
              {"type", to_string(kind)},
              {"event", to_string(event)},
              {"detail", detail},
              {"stamp", stamp}};
}

NodeStateEvent NodeStateEvent::from_json(const json& j) {
  if (!j.is_object()) throw Error(Errc::BadRequest, "event must be an object");
  auto str = [&](const char* key) -> std::string {
    auto it = j.find(key);
    if (it == j.end() || !it->is_string()) {
      throw Error(Errc::BadRequest, std::string("event field '") + key + "' must be a string");
    }
    return it->get<std::string>();
  };
  NodeStateEvent e;
  e.node = str("node");
  if (e.node.empty()) throw Error(Errc::BadRequest, "event node name is empty");
  auto kind = try_parse_kind(str("type"));
  if (!kind) throw Error(Errc::BadRequest, "unknown node type in event");
  e.kind = *kind;
  auto ev = try_parse_event(str("event"));
  if (!ev) throw Error(Errc::BadRequest, "unknown event kind '" + j.value("event", "") + "'");
  e.event = *ev;
  if (auto it = j.find("detail"); it != j.end()) {
    if (!it->is_string()) throw Error(Errc::BadRequest, "event detail must be a string");
    e.detail = it->get<std::string>();
  }
  auto st = j.find("stamp");
  if (st == j.end() || !st->is_number()) throw Error(Errc::BadRequest, "event stamp must be a number");
  e.stamp = st->get<double>();
  return e;
}

// ---------------------------------------------------------------------------
// LineSender

LineSender::LineSender(net::Endpoint to, std::string tracked_topic)
    : to_(std::move(to)), tracked_topic_(std::move(tracked_topic)) {}

bool LineSender::ensure_connected() {
  if (socket_ && socket_->valid()) return true;
  socket_ = net::connect_tcp(to_, milliseconds(500));
  return socket_.has_value();
}

bool LineSender::send(const json& line) {
  std::string text = line.dump();
  text.push_back('\n');
  std::lock_guard lock(mu_);
  const bool tracked = !tracked_topic_.empty() && Activity::tracks(tracked_topic_);
  for (int attempt = 0; attempt < 2; ++attempt) {
    if (!ensure_connected()) break;
    if (tracked) Activity::sent();
    if (socket_->send_all(text)) return true;
    if (tracked) Activity::dropped();
    socket_.reset();
  }
  spdlog::debug("line sender: {} unreachable, dropped one line", to_.str());
  return false;
}

// ---------------------------------------------------------------------------
// NodeContext

NodeContext::NodeContext(NodeDescriptor desc, NetworkConfig network, Clock& clock,
                         master::MasterClient claim)
    : desc_(std::move(desc)),
      network_(std::move(network)),
      clock_(clock),
      claim_(std::move(claim)),
      events_(network_.events) {}

NodeContext::~NodeContext() = default;

void NodeContext::publish_state(NodeEvent event, std::string detail) {
  NodeStateEvent e{desc_.name, desc_.kind, event, std::move(detail), 0.0};
  {
    std::lock_guard lock(stamp_mu_);
    last_stamp_ = std::max(last_stamp_, to_seconds(clock_.now()));
    e.stamp = last_stamp_;
  }
  events_.send(e.to_json());
}

void NodeContext::shutdown(std::string detail) {
  if (shut_down_) return;
  shut_down_ = true;
  publish_state(NodeEvent::ShutdownManual, std::move(detail));
}

std::unique_ptr<NodeContext> node_start(NodeDescriptor desc, const NetworkConfig& network,
                                        Clock& clock) {
  if (desc.name.empty()) throw Error(Errc::BadRequest, "node name is empty");
  auto claim = master::MasterClient::connect(network.master);
  claim.claim_node(desc.name);
  std::unique_ptr<NodeContext> ctx(new NodeContext(std::move(desc), network, clock, std::move(claim)));
  ctx->publish_state(NodeEvent::Started);
  return ctx;
}

void publish_on_behalf(LineSender& sink, const NodeDescriptor& node, NodeEvent event,
                       std::string detail, Clock& clock) {
  NodeStateEvent e{node.name, node.kind, event, std::move(detail), to_seconds(clock.now())};
  sink.send(e.to_json());
}

}  // namespace nodeprim::node
