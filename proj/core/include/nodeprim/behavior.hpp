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

// Social-primitive robot commands, the robot facade that dispatches them to
// action nodes, and the reactive if-then engine.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stop_token>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "nodeprim/error.hpp"
#include "nodeprim/launcher.hpp"
#include "nodeprim/node.hpp"
#include "nodeprim/pubsub.hpp"

namespace nodeprim::behavior {

enum class Primitive { Say, Posture, Animation, Wait };

std::string_view to_string(Primitive p) noexcept;
std::optional<Primitive> try_parse_primitive(std::string_view s) noexcept;
node::PrimitiveLevel primitive_level(Primitive p) noexcept;

// Throws Error{BadRequest} when `args` do not fit the primitive:
// say {text, gesture?}, posture {name}, animation {name}, wait {seconds >= 0}.
void validate_args(Primitive p, const nlohmann::json& args);

std::string command_topic(std::string_view robot);
std::string result_topic(std::string_view robot);

struct BehaviorSpec {
  std::string id;
  std::string robot;
  Primitive primitive = Primitive::Say;
  nlohmann::json args = nlohmann::json::object();

  nlohmann::json to_json() const;
  static BehaviorSpec from_json(const nlohmann::json& j);  // Error{BadRequest}
};

enum class ResultStatus { Done, Error };

struct ActionResult {
  std::string id;
  std::string robot;
  ResultStatus status = ResultStatus::Done;
  std::string detail;
  double elapsed = 0.0;  // seconds on the action node's clock

  bool done() const noexcept { return status == ResultStatus::Done; }
  nlohmann::json to_json() const;
  static ActionResult from_json(const nlohmann::json& j);
};

// A BehaviorSpec with the robot left open, plus the robots it goes to.
struct ActionTemplate {
  Primitive primitive = Primitive::Say;
  nlohmann::json args = nlohmann::json::object();
  std::vector<std::string> robots;
};

struct Trigger {
  std::string topic;
  std::string key;
  nlohmann::json equals;  // scalar

  bool matches(const nlohmann::json& doc) const;
};

enum class RuleMode { Sequence, Parallel };

std::string_view to_string(RuleMode m) noexcept;

struct ReactiveRule {
  Trigger trigger;
  std::vector<ActionTemplate> actions;
  RuleMode mode = RuleMode::Sequence;
};

// execute_parallel() ran out of time for some robots.
class ParallelTimeout : public Error {
 public:
  ParallelTimeout(std::vector<std::string> missing, std::vector<ActionResult> results);

  const std::vector<std::string>& missing() const noexcept { return missing_; }
  const std::vector<ActionResult>& results() const noexcept { return results_; }

 private:
  std::vector<std::string> missing_;
  std::vector<ActionResult> results_;
};

struct FacadeOptions {
  std::chrono::milliseconds handshake{2000};
  std::chrono::milliseconds watchdog{30000};
};

// Talks to one action node per target robot over robot/<name>/cmd and
// robot/<name>/res. Confined to one thread.
class RobotFacade {
 public:
  RobotFacade(node::NodeContext& ctx, std::vector<std::string> targets, FacadeOptions options = {});

  const std::vector<std::string>& targets() const noexcept { return targets_; }
  bool is_connected(const std::string& robot) const;

  // Publishes `spec` and blocks until the action node answers with the same
  // id. An error result is returned, not thrown. Throws Error{Timeout}.
  ActionResult execute(BehaviorSpec spec);
  // Dispatches to every robot before waiting for any result.
  // Throws ParallelTimeout.
  std::vector<ActionResult> execute_parallel(Primitive primitive, const nlohmann::json& args,
                                             const std::vector<std::string>& robots);
  // Dispatches every spec, then awaits all of them. Throws ParallelTimeout.
  std::vector<ActionResult> execute_batch(std::vector<BehaviorSpec> specs);

  ActionResult say(const std::string& robot, std::string text);
  ActionResult posture(const std::string& robot, std::string name);
  ActionResult animation(const std::string& robot, std::string name);
  ActionResult wait(const std::string& robot, double seconds);

  // Results that matched no outstanding id.
  std::size_t orphans() const noexcept { return orphans_; }
  std::string next_id();

 private:
  struct Link {
    std::unique_ptr<pubsub::Publisher> cmd;
    std::unique_ptr<pubsub::Subscriber> res;
    bool connected = false;
  };

  Link& link(const std::string& robot);
  void dispatch(const BehaviorSpec& spec);
  // Waits for `id` on `robot`'s result channel until `deadline`.
  std::optional<ActionResult> await(const std::string& robot, const std::string& id,
                                    std::chrono::steady_clock::time_point deadline);

  friend RobotFacade robot_connect(node::NodeContext&, std::vector<std::string>, FacadeOptions);

  node::NodeContext& ctx_;
  std::vector<std::string> targets_;
  FacadeOptions options_;
  std::map<std::string, Link> links_;
  std::set<std::string> outstanding_;
  std::map<std::string, ActionResult> stash_;
  std::uint64_t counter_ = 0;
  std::size_t orphans_ = 0;
};

// Connects to every target and reports robot_connected or
// robot_connection_failed per robot on node_state.
RobotFacade robot_connect(node::NodeContext& ctx, std::vector<std::string> targets,
                          FacadeOptions options = {});

struct EngineOptions {
  std::chrono::milliseconds poll{100};
};

// Single-threaded reactive loop: polls each trigger topic in turn and fires
// every matching rule, in insertion order, through the facade.
class Engine {
 public:
  Engine(node::NodeContext& ctx, RobotFacade& facade, EngineOptions options = {});

  // Throws Error{EngineRunning} once run() has started.
  void add_rule(ReactiveRule rule);
  const std::vector<ReactiveRule>& rules() const noexcept { return rules_; }

  // Returns after `stop` is requested, having published shutdown_manual.
  void run(std::stop_token stop);

  std::size_t firings() const noexcept { return firings_; }
  bool running() const noexcept { return running_; }
  // Number of trigger subscribers currently connected.
  std::size_t connected_triggers() const noexcept { return connected_triggers_; }

 private:
  void fire(const ReactiveRule& rule, std::size_t index);

  node::NodeContext& ctx_;
  RobotFacade& facade_;
  EngineOptions options_;
  std::vector<ReactiveRule> rules_;
  std::atomic<bool> running_{false};
  std::atomic<std::size_t> firings_{0};
  std::atomic<std::size_t> connected_triggers_{0};
};

// ---------------------------------------------------------------------------
// Programs

struct RobotDecl {
  std::string name;
  std::string ip = "127.0.0.1";
  bool simulated = true;
};

struct ProgramDoc {
  std::vector<RobotDecl> robots;
  std::vector<node::LaunchSpec> launch;
  std::vector<ReactiveRule> rules;

  // Throws SchemaError{SchemaViolation | UnknownRobot} with a JSON pointer.
  static ProgramDoc parse(const nlohmann::json& doc);
  nlohmann::json to_json() const;
};

struct RunPlan {
  std::vector<node::LaunchSpec> launches;  // in program order
  std::vector<RobotDecl> robots;
  std::vector<ReactiveRule> rules;

  bool has_engine() const noexcept { return !rules.empty(); }
  // Human-readable steps, in execution order.
  std::vector<std::string> steps() const;
};

RunPlan interpret_program(const nlohmann::json& doc);

inline constexpr std::string_view kEngineNodeName = "behavior";

// The cognitive node that runs a plan's rules: claims its name, connects the
// robots, installs the rules and runs the engine on its own thread.
class BehaviorNode {
 public:
  BehaviorNode(const RunPlan& plan, const node::NetworkConfig& network, Clock& clock = real_clock(),
               std::string name = std::string(kEngineNodeName), FacadeOptions facade = {},
               EngineOptions engine = {});
  ~BehaviorNode();

  BehaviorNode(const BehaviorNode&) = delete;
  BehaviorNode& operator=(const BehaviorNode&) = delete;

  void stop();
  Engine& engine() noexcept { return *engine_; }
  RobotFacade& facade() noexcept { return *facade_; }
  node::NodeContext& context() noexcept { return *ctx_; }

 private:
  std::unique_ptr<node::NodeContext> ctx_;
  std::unique_ptr<RobotFacade> facade_;
  std::unique_ptr<Engine> engine_;
  std::jthread thread_;
};

}  // namespace nodeprim::behavior
