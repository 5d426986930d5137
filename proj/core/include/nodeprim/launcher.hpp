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

// Spawning node processes and watching them die.
//
// Exit protocol: a node that announced its own shutdown exits with status 0.
// The supervisor speaks for the node in every other case: shutdown_manual if
// it was the supervisor that ended the process, shutdown_unexpected if not.

#include <sys/types.h>

#include <chrono>
#include <memory>
#include <optional>
#include <stop_token>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nodeprim/clock.hpp"
#include "nodeprim/node.hpp"

namespace nodeprim::node {

struct LaunchSpec {
  NodeKind kind = NodeKind::Perception;
  std::string name;
  nlohmann::json args = nlohmann::json::object();
  // Empty means default_node_executable().
  std::string executable;

  NodeDescriptor descriptor() const { return NodeDescriptor(name, kind); }
  nlohmann::json to_json() const;
  static LaunchSpec from_json(const nlohmann::json& j);
};

// $NODEPRIM_NODE_EXE if set, otherwise the running executable.
std::string default_node_executable();

// Argument vector for the child, excluding argv[0]:
//   node --type T --name N --args JSON --master H:P --events H:P --triggers H:P --supervised
std::vector<std::string> node_argv(const LaunchSpec& spec, const NetworkConfig& network);

struct ExitStatus {
  bool signaled = false;
  int value = 0;  // exit code, or signal number when signaled

  bool clean() const noexcept { return !signaled && value == 0; }
  std::string describe() const;
};

// Shared handle to a launched child; copies refer to the same process.
class NodeHandle {
 public:
  pid_t pid() const noexcept;
  const LaunchSpec& spec() const noexcept;

  // SIGKILL. The node cannot announce anything; the supervisor will.
  void kill();
  // SIGTERM so the node can announce its own shutdown; SIGKILL after `grace`.
  ExitStatus stop(std::chrono::milliseconds grace = std::chrono::seconds(2));

  std::optional<ExitStatus> try_wait();
  ExitStatus wait();
  bool running();

  bool killed_by_supervisor() const noexcept;
  bool stop_requested() const noexcept;

 private:
  friend NodeHandle launch(const LaunchSpec&, const NetworkConfig&);
  struct State;
  explicit NodeHandle(std::shared_ptr<State> s) : state_(std::move(s)) {}
  std::shared_ptr<State> state_;
};

// Throws Error{SpawnFailure}.
NodeHandle launch(const LaunchSpec& spec, const NetworkConfig& network);

struct TerminationReport {
  std::string node;
  ExitStatus status;
  // What the supervisor published on the node's behalf, if anything.
  std::optional<NodeEvent> published;
};

inline constexpr std::chrono::milliseconds kSupervisePoll{100};

// Polls `handle` until the child exits, then publishes the shutdown event
// the child could not. With `stop` requested the child is stopped first.
TerminationReport supervise(NodeHandle& handle, LineSender& events,
                            std::stop_token stop = {},
                            std::chrono::milliseconds poll = kSupervisePoll,
                            Clock& clock = real_clock());

}  // namespace nodeprim::node
