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

#include "nodeprim/behavior.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include <spdlog/spdlog.h>

namespace nodeprim::behavior {

using json = nlohmann::json;
using namespace std::chrono;
using node::NodeEvent;

namespace {
constexpr std::array<std::string_view, 4> kPrimitiveNames{"say", "posture", "animation", "wait"};
}

std::string_view to_string(Primitive p) noexcept { return kPrimitiveNames[static_cast<int>(p)]; }

std::optional<Primitive> try_parse_primitive(std::string_view s) noexcept {
  for (std::size_t i = 0; i < kPrimitiveNames.size(); ++i) {
    if (kPrimitiveNames[i] == s) return static_cast<Primitive>(i);
  }
  return std::nullopt;
}

node::PrimitiveLevel primitive_level(Primitive p) noexcept {
  return p == Primitive::Wait ? node::PrimitiveLevel::Control : node::PrimitiveLevel::Social;
}

std::string_view to_string(RuleMode m) noexcept {
  return m == RuleMode::Sequence ? "sequence" : "parallel";
}

void validate_args(Primitive p, const json& args) {
  if (!args.is_object()) throw Error(Errc::BadRequest, "args must be an object");
  auto need_string = [&](const char* key) {
    auto it = args.find(key);
    if (it == args.end() || !it->is_string()) {
      throw Error(Errc::BadRequest,
                  std::string(to_string(p)) + " needs a string '" + key + "' argument");
    }
  };
  switch (p) {
    case Primitive::Say:
      need_string("text");
      if (auto g = args.find("gesture"); g != args.end() && !g->is_string() && !g->is_null()) {
        throw Error(Errc::BadRequest, "say 'gesture' must be a string");
      }
      break;
    case Primitive::Posture:
    case Primitive::Animation:
      need_string("name");
      break;
    case Primitive::Wait: {
      auto it = args.find("seconds");
      if (it == args.end() || !it->is_number() || !std::isfinite(it->get<double>()) ||
          it->get<double>() < 0) {
        throw Error(Errc::BadRequest, "wait needs a non-negative number 'seconds'");
      }
      break;
    }
  }
}

std::string command_topic(std::string_view robot) { return "robot/" + std::string(robot) + "/cmd"; }
std::string result_topic(std::string_view robot) { return "robot/" + std::string(robot) + "/res"; }

json BehaviorSpec::to_json() const {
  return json{{"id", id}, {"robot", robot}, {"primitive", to_string(primitive)}, {"args", args}};
}

BehaviorSpec BehaviorSpec::from_json(const json& j) {
  if (!j.is_object()) throw Error(Errc::BadRequest, "spec must be an object");
  BehaviorSpec s;
  auto id = j.find("id");
  if (id == j.end() || !id->is_string() || id->get<std::string>().empty()) {
    throw Error(Errc::BadRequest, "spec needs a non-empty string id");
  }
  s.id = id->get<std::string>();
  s.robot = j.value("robot", std::string{});
  auto prim = j.find("primitive");
  if (prim == j.end() || !prim->is_string()) throw Error(Errc::BadRequest, "spec needs a primitive");
  auto p = try_parse_primitive(prim->get<std::string>());
  if (!p) throw Error(Errc::BadRequest, "unknown primitive '" + prim->get<std::string>() + "'");
  s.primitive = *p;
  s.args = j.value("args", json::object());
  validate_args(s.primitive, s.args);
  return s;
}

json ActionResult::to_json() const {
  return json{{"id", id},
              {"robot", robot},
              {"status", status == ResultStatus::Done ? "done" : "error"},
              {"detail", detail},
              {"elapsed", elapsed}};
}

ActionResult ActionResult::from_json(const json& j) {
  ActionResult r;
  r.id = j.at("id").get<std::string>();
  r.robot = j.value("robot", std::string{});
  const auto status = j.at("status").get<std::string>();
  if (status != "done" && status != "error") throw Error(Errc::BadRequest, "bad result status");
  r.status = status == "done" ? ResultStatus::Done : ResultStatus::Error;
  r.detail = j.value("detail", std::string{});
  r.elapsed = j.value("elapsed", 0.0);
  return r;
}

bool Trigger::matches(const json& doc) const {
  if (!doc.is_object()) return false;
  auto it = doc.find(key);
  return it != doc.end() && *it == equals;
}

ParallelTimeout::ParallelTimeout(std::vector<std::string> missing, std::vector<ActionResult> results)
    : Error(Errc::Timeout,
            "no result from " +
                [&] {
                  std::string s;
                  for (const auto& m : missing) s += (s.empty() ? "" : ", ") + m;
                  return s;
                }()),
      missing_(std::move(missing)),
      results_(std::move(results)) {}

// ---------------------------------------------------------------------------
// RobotFacade

RobotFacade::RobotFacade(node::NodeContext& ctx, std::vector<std::string> targets,
                         FacadeOptions options)
    : ctx_(ctx), targets_(std::move(targets)), options_(options) {
  for (const auto& robot : targets_) {
    Link l;
    l.cmd = std::make_unique<pubsub::Publisher>(command_topic(robot), ctx_.name(),
                                                wire::Encoding::Json, ctx_.network().master);
    l.res = std::make_unique<pubsub::Subscriber>(result_topic(robot), ctx_.name(),
                                                 ctx_.network().master);
    links_.emplace(robot, std::move(l));
  }
}

bool RobotFacade::is_connected(const std::string& robot) const {
  auto it = links_.find(robot);
  return it != links_.end() && it->second.connected;
}

RobotFacade::Link& RobotFacade::link(const std::string& robot) {
  auto it = links_.find(robot);
  if (it == links_.end()) throw Error(Errc::UnknownRobot, "robot '" + robot + "' is not a target");
  return it->second;
}

std::string RobotFacade::next_id() { return ctx_.name() + "-" + std::to_string(++counter_); }

void RobotFacade::dispatch(const BehaviorSpec& spec) {
  validate_args(spec.primitive, spec.args);
  auto& l = link(spec.robot);
  outstanding_.insert(spec.id);
  l.cmd->send_info(spec.to_json());
}

std::optional<ActionResult> RobotFacade::await(const std::string& robot, const std::string& id,
                                               steady_clock::time_point deadline) {
  if (auto it = stash_.find(id); it != stash_.end()) {
    auto r = std::move(it->second);
    stash_.erase(it);
    outstanding_.erase(id);
    return r;
  }
  auto& l = link(robot);
  // Every result queue is consumed here, including ones not listened to yet;
  // nothing but `robot`'s is served until the result is in.
  for (auto& [name, other] : links_) Activity::bind_queue(other.res->activity_key());
  Activity::Park park(l.res->activity_key());
  for (;;) {
    const auto left = std::chrono::ceil<milliseconds>(deadline - steady_clock::now());
    if (left.count() <= 0) return std::nullopt;
    pubsub::ListenResult got;
    try {
      got = l.res->listen_info(false, std::min(left, milliseconds(100)));
    } catch (const Error& e) {
      // The action node went away; nothing will answer.
      if (e.code() == Errc::ChannelClosed) return std::nullopt;
      throw;
    }
    if (!got.success) continue;
    try {
      auto result = ActionResult::from_json(std::get<wire::Document>(*got.payload));
      if (result.id == id) {
        outstanding_.erase(id);
        return result;
      }
      if (outstanding_.count(result.id)) {
        stash_.emplace(result.id, std::move(result));
        continue;
      }
    } catch (const std::exception& e) {
      spdlog::warn("facade: unreadable result from {}: {}", robot, e.what());
    }
    ++orphans_;
  }
}

ActionResult RobotFacade::execute(BehaviorSpec spec) {
  // The caller is busy until it next blocks, which is inside await().
  Activity::acquire();
  if (spec.id.empty()) spec.id = next_id();
  dispatch(spec);
  auto result = await(spec.robot, spec.id, steady_clock::now() + options_.watchdog);
  if (!result) {
    outstanding_.erase(spec.id);
    throw Error(Errc::Timeout, "no result for " + spec.id + " from " + spec.robot + " within " +
                                   std::to_string(options_.watchdog.count()) + " ms");
  }
  return *result;
}

std::vector<ActionResult> RobotFacade::execute_batch(std::vector<BehaviorSpec> specs) {
  // The caller is busy until it next blocks, which is inside await().
  Activity::acquire();
  for (auto& spec : specs) {
    if (spec.id.empty()) spec.id = next_id();
  }
  for (const auto& spec : specs) dispatch(spec);

  const auto deadline = steady_clock::now() + options_.watchdog;
  std::vector<ActionResult> results;
  std::vector<std::string> missing;
  for (const auto& spec : specs) {
    if (auto r = await(spec.robot, spec.id, deadline)) {
      results.push_back(std::move(*r));
    } else {
      outstanding_.erase(spec.id);
      missing.push_back(spec.robot);
    }
  }
  if (!missing.empty()) throw ParallelTimeout(std::move(missing), std::move(results));
  return results;
}

std::vector<ActionResult> RobotFacade::execute_parallel(Primitive primitive, const json& args,
                                                        const std::vector<std::string>& robots) {
  std::vector<BehaviorSpec> specs;
  specs.reserve(robots.size());
  for (const auto& robot : robots) specs.push_back(BehaviorSpec{{}, robot, primitive, args});
  return execute_batch(std::move(specs));
}

ActionResult RobotFacade::say(const std::string& robot, std::string text) {
  return execute({{}, robot, Primitive::Say, json{{"text", std::move(text)}}});
}
ActionResult RobotFacade::posture(const std::string& robot, std::string name) {
  return execute({{}, robot, Primitive::Posture, json{{"name", std::move(name)}}});
}
ActionResult RobotFacade::animation(const std::string& robot, std::string name) {
  return execute({{}, robot, Primitive::Animation, json{{"name", std::move(name)}}});
}
ActionResult RobotFacade::wait(const std::string& robot, double seconds) {
  return execute({{}, robot, Primitive::Wait, json{{"seconds", seconds}}});
}

RobotFacade robot_connect(node::NodeContext& ctx, std::vector<std::string> targets,
                          FacadeOptions options) {
  RobotFacade facade(ctx, std::move(targets), options);
  const auto deadline = steady_clock::now() + options.handshake;
  for (auto& [robot, l] : facade.links_) {
    auto left = [&] {
      return std::max(milliseconds(0), duration_cast<milliseconds>(deadline - steady_clock::now()));
    };
    const bool cmd_ok = l.cmd->wait_for_subscribers(1, left());
    const bool res_ok = l.res->wait_connected(left());
    l.connected = cmd_ok && res_ok;
    if (l.connected) {
      ctx.publish_state(NodeEvent::RobotConnected, robot);
    } else {
      ctx.publish_state(NodeEvent::RobotConnectionFailed,
                        "no action node answered for robot '" + robot + "'");
    }
  }
  return facade;
}

// ---------------------------------------------------------------------------
// Engine

Engine::Engine(node::NodeContext& ctx, RobotFacade& facade, EngineOptions options)
    : ctx_(ctx), facade_(facade), options_(options) {}

void Engine::add_rule(ReactiveRule rule) {
  if (running_) throw Error(Errc::EngineRunning, "rules cannot change while the engine runs");
  if (rule.actions.empty()) throw Error(Errc::BadRequest, "rule has no actions");
  if (rule.trigger.key.empty()) throw Error(Errc::BadRequest, "rule trigger key is empty");
  wire::validate_topic(rule.trigger.topic);
  rules_.push_back(std::move(rule));
}

void Engine::fire(const ReactiveRule& rule, std::size_t index) {
  ++firings_;
  ctx_.publish_state(NodeEvent::Executing, "rule " + std::to_string(index) + " fired: " +
                                               rule.trigger.key + "=" + rule.trigger.equals.dump());
  try {
    if (rule.mode == RuleMode::Sequence) {
      for (const auto& action : rule.actions) {
        if (action.robots.size() == 1) {
          auto r = facade_.execute({{}, action.robots.front(), action.primitive, action.args});
          if (!r.done()) spdlog::warn("engine: {} failed on {}: {}", to_string(action.primitive), r.robot, r.detail);
        } else {
          facade_.execute_parallel(action.primitive, action.args, action.robots);
        }
      }
    } else {
      // Every (action, robot) pair at once.
      std::vector<BehaviorSpec> specs;
      for (const auto& action : rule.actions) {
        for (const auto& robot : action.robots) {
          specs.push_back({{}, robot, action.primitive, action.args});
        }
      }
      facade_.execute_batch(std::move(specs));
    }
  } catch (const Error& e) {
    spdlog::warn("engine: rule {} action failed: {}", index, e.what());
  }
}

void Engine::run(std::stop_token stop) {
  running_ = true;
  std::vector<std::string> topics;
  for (const auto& r : rules_) {
    if (std::find(topics.begin(), topics.end(), r.trigger.topic) == topics.end()) {
      topics.push_back(r.trigger.topic);
    }
  }
  std::vector<pubsub::Subscriber> subs;
  for (const auto& t : topics) subs.emplace_back(t, ctx_.name(), ctx_.network().master);

  while (!stop.stop_requested()) {
    if (subs.empty()) {
      std::this_thread::sleep_for(options_.poll);
      continue;
    }
    std::size_t connected = 0;
    for (std::size_t i = 0; i < subs.size() && !stop.stop_requested(); ++i) {
      if (subs[i].connected()) ++connected;
      pubsub::ListenResult got;
      try {
        got = subs[i].listen_info(false, options_.poll);
      } catch (const Error& e) {
        // Trigger publisher gone; keep polling the others.
        std::this_thread::sleep_for(options_.poll);
        continue;
      }
      if (!got.success) continue;
      const auto* doc = std::get_if<wire::Document>(&*got.payload);
      if (!doc) continue;
      for (std::size_t r = 0; r < rules_.size(); ++r) {
        if (rules_[r].trigger.topic == topics[i] && rules_[r].trigger.matches(*doc)) {
          fire(rules_[r], r);
        }
      }
    }
    connected_triggers_ = connected;
  }
  Activity::release_held();
  running_ = false;
  ctx_.shutdown();
}

}  // namespace nodeprim::behavior
