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

// Many-writer channels for topics every node needs to publish on. Writers
// send one JSON object per line to the relay's TCP port; the relay is the
// topic's single data-plane publisher and republishes each accepted line.

#include <atomic>
#include <functional>
#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "nodeprim/net.hpp"
#include "nodeprim/node.hpp"
#include "nodeprim/pubsub.hpp"

namespace nodeprim::relay {

struct RelayOptions {
  net::Endpoint bind{"127.0.0.1", 0};
  std::string topic;
  // Node name the relay registers its publisher under.
  std::string node;
  net::Endpoint master;
};

class LineRelay {
 public:
  // Returns the document to republish; throws to reject the line.
  using Filter = std::function<nlohmann::json(const nlohmann::json&)>;
  // Runs on the relay thread after each accepted line, in arrival order.
  using Observer = std::function<void(const nlohmann::json&)>;

  // Throws Error{BindFailure} and anything Publisher throws.
  LineRelay(RelayOptions options, Filter filter = {}, Observer observer = {});
  ~LineRelay();

  LineRelay(const LineRelay&) = delete;
  LineRelay& operator=(const LineRelay&) = delete;

  net::Endpoint endpoint() const;
  const pubsub::Publisher& publisher() const;
  std::size_t accepted() const noexcept;
  std::size_t rejected() const noexcept;
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// The node_state sink: validates each line as a NodeStateEvent.
std::unique_ptr<LineRelay> make_event_sink(
    const net::Endpoint& bind, const net::Endpoint& master,
    std::function<void(const node::NodeStateEvent&)> observer = {},
    std::string node_name = "event_sink");

inline constexpr std::string_view kTriggerTopic = "gesture";

// Shared trigger channel: accepts any JSON object.
std::unique_ptr<LineRelay> make_trigger_relay(const net::Endpoint& bind, const net::Endpoint& master,
                                              std::string topic = std::string(kTriggerTopic),
                                              std::string node_name = "trigger_relay");

}  // namespace nodeprim::relay
