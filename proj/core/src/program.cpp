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

#include <set>

#include <spdlog/spdlog.h>

#include "nodeprim/behavior.hpp"

namespace nodeprim::behavior {

using json = nlohmann::json;

namespace {

[[noreturn]] void violation(const std::string& path, const std::string& what) {
  throw SchemaError(Errc::SchemaViolation, path.empty() ? "/" : path, what);
}

const json& require(const json& obj, const std::string& path, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) violation(path + "/" + key, std::string("missing required field '") + key + "'");
  return *it;
}

const json& require_array(const json& obj, const std::string& path, const char* key) {
  const auto& v = require(obj, path, key);
  if (!v.is_array()) violation(path + "/" + key, "must be an array");
  return v;
}

std::string require_string(const json& obj, const std::string& path, const char* key,
                           bool non_empty = true) {
  const auto& v = require(obj, path, key);
  if (!v.is_string()) violation(path + "/" + key, "must be a string");
  auto s = v.get<std::string>();
  if (non_empty && s.empty()) violation(path + "/" + key, "must not be empty");
  return s;
}

void require_object(const json& v, const std::string& path) {
  if (!v.is_object()) violation(path, "must be an object");
}

std::string at(const std::string& base, std::size_t i) { return base + "/" + std::to_string(i); }

}  // namespace

ProgramDoc ProgramDoc::parse(const json& doc) {
  require_object(doc, "");
  // Check presence up front so the first missing section is reported.
  const auto& robots = require_array(doc, "", "robots");
  const auto& launch = require_array(doc, "", "launch");
  const auto& rules = require_array(doc, "", "rules");

  ProgramDoc out;
  std::set<std::string> robot_names;
  for (std::size_t i = 0; i < robots.size(); ++i) {
    const auto path = at("/robots", i);
    require_object(robots[i], path);
    RobotDecl r;
    r.name = require_string(robots[i], path, "name");
    if (!wire::is_valid_topic(r.name)) violation(path + "/name", "robot names are printable ASCII without spaces");
    if (auto ip = robots[i].find("ip"); ip != robots[i].end()) {
      if (!ip->is_string()) violation(path + "/ip", "must be a string");
      r.ip = ip->get<std::string>();
    }
    if (auto sim = robots[i].find("simulated"); sim != robots[i].end()) {
      if (!sim->is_boolean()) violation(path + "/simulated", "must be a boolean");
      r.simulated = sim->get<bool>();
    }
    if (!robot_names.insert(r.name).second) violation(path + "/name", "duplicate robot '" + r.name + "'");
    out.robots.push_back(std::move(r));
  }

  std::set<std::string> node_names;
  for (std::size_t i = 0; i < launch.size(); ++i) {
    const auto path = at("/launch", i);
    require_object(launch[i], path);
    node::LaunchSpec spec;
    const auto type = require_string(launch[i], path, "type");
    auto kind = node::try_parse_kind(type);
    if (!kind) violation(path + "/type", "unknown node type '" + type + "'");
    spec.kind = *kind;
    spec.name = require_string(launch[i], path, "name");
    if (!wire::is_valid_topic(spec.name)) violation(path + "/name", "node names are printable ASCII without spaces");
    if (auto args = launch[i].find("args"); args != launch[i].end()) {
      if (!args->is_object()) violation(path + "/args", "must be an object");
      spec.args = *args;
    }
    if (auto exe = launch[i].find("exec"); exe != launch[i].end()) {
      if (!exe->is_string()) violation(path + "/exec", "must be a string");
      spec.executable = exe->get<std::string>();
    }
    if (!node_names.insert(spec.name).second) violation(path + "/name", "duplicate node '" + spec.name + "'");
    out.launch.push_back(std::move(spec));
  }

  for (std::size_t i = 0; i < rules.size(); ++i) {
    const auto path = at("/rules", i);
    require_object(rules[i], path);
    ReactiveRule rule;
    const auto& when = require(rules[i], path, "when");
    require_object(when, path + "/when");
    rule.trigger.topic = require_string(when, path + "/when", "topic");
    if (!wire::is_valid_topic(rule.trigger.topic)) violation(path + "/when/topic", "not a valid topic");
    rule.trigger.key = require_string(when, path + "/when", "key");
    const auto& eq = require(when, path + "/when", "equals");
    if (!eq.is_primitive() || eq.is_null()) violation(path + "/when/equals", "must be a string, number or boolean");
    rule.trigger.equals = eq;

    if (auto mode = rules[i].find("mode"); mode != rules[i].end()) {
      if (*mode == "sequence") {
        rule.mode = RuleMode::Sequence;
      } else if (*mode == "parallel") {
        rule.mode = RuleMode::Parallel;
      } else {
        violation(path + "/mode", "must be \"sequence\" or \"parallel\"");
      }
    }

    const auto& actions = require_array(rules[i], path, "do");
    if (actions.empty()) violation(path + "/do", "a rule needs at least one action");
    for (std::size_t k = 0; k < actions.size(); ++k) {
      const auto apath = at(path + "/do", k);
      require_object(actions[k], apath);
      ActionTemplate a;
      const auto prim = require_string(actions[k], apath, "primitive");
      auto p = try_parse_primitive(prim);
      if (!p) violation(apath + "/primitive", "unknown primitive '" + prim + "'");
      a.primitive = *p;
      a.args = actions[k].value("args", json::object());
      try {
        validate_args(a.primitive, a.args);
      } catch (const Error& e) {
        violation(apath + "/args", e.detail());
      }
      const auto& targets = require_array(actions[k], apath, "robots");
      if (targets.empty()) violation(apath + "/robots", "an action needs at least one robot");
      for (std::size_t t = 0; t < targets.size(); ++t) {
        if (!targets[t].is_string()) violation(at(apath + "/robots", t), "must be a string");
        auto name = targets[t].get<std::string>();
        if (!robot_names.count(name)) {
          throw SchemaError(Errc::UnknownRobot, apath, "robot '" + name + "' is not declared");
        }
        a.robots.push_back(std::move(name));
      }
      rule.actions.push_back(std::move(a));
    }
    out.rules.push_back(std::move(rule));
  }
  return out;
}

json ProgramDoc::to_json() const {
  json robots_j = json::array();
  for (const auto& r : robots) {
    robots_j.push_back({{"name", r.name}, {"ip", r.ip}, {"simulated", r.simulated}});
  }
  json launch_j = json::array();
  for (const auto& l : launch) launch_j.push_back(l.to_json());
  json rules_j = json::array();
  for (const auto& r : rules) {
    json actions = json::array();
    for (const auto& a : r.actions) {
      actions.push_back({{"primitive", to_string(a.primitive)}, {"args", a.args}, {"robots", a.robots}});
    }
    rules_j.push_back({{"when", {{"topic", r.trigger.topic}, {"key", r.trigger.key}, {"equals", r.trigger.equals}}},
                       {"mode", to_string(r.mode)},
                       {"do", actions}});
  }
  return json{{"robots", robots_j}, {"launch", launch_j}, {"rules", rules_j}};
}

std::vector<std::string> RunPlan::steps() const {
  std::vector<std::string> out;
  for (const auto& l : launches) {
    out.push_back("launch " + std::string(node::to_string(l.kind)) + " " + l.name);
  }
  if (has_engine()) {
    for (const auto& r : robots) out.push_back("connect robot " + r.name);
    for (std::size_t i = 0; i < rules.size(); ++i) {
      out.push_back("install rule " + std::to_string(i) + " on " + rules[i].trigger.topic);
    }
    out.push_back("start engine");
  }
  return out;
}

RunPlan interpret_program(const json& doc) {
  auto program = ProgramDoc::parse(doc);
  return RunPlan{std::move(program.launch), std::move(program.robots), std::move(program.rules)};
}

// ---------------------------------------------------------------------------
// BehaviorNode

BehaviorNode::BehaviorNode(const RunPlan& plan, const node::NetworkConfig& network, Clock& clock,
                           std::string name, FacadeOptions facade, EngineOptions engine) {
  ctx_ = node::node_start(node::NodeDescriptor(std::move(name), node::NodeKind::Cognitive), network,
                          clock);
  std::vector<std::string> robots;
  for (const auto& r : plan.robots) robots.push_back(r.name);
  facade_ = std::make_unique<RobotFacade>(robot_connect(*ctx_, std::move(robots), facade));
  engine_ = std::make_unique<Engine>(*ctx_, *facade_, engine);
  for (const auto& rule : plan.rules) engine_->add_rule(rule);
  thread_ = std::jthread([this](std::stop_token st) {
    try {
      engine_->run(st);
    } catch (const std::exception& e) {
      spdlog::error("behavior node '{}' stopped: {}", ctx_->name(), e.what());
      ctx_->publish_state(node::NodeEvent::ShutdownUnexpected, e.what());
    }
  });
}

BehaviorNode::~BehaviorNode() { stop(); }

void BehaviorNode::stop() {
  if (thread_.joinable()) {
    thread_.request_stop();
    thread_.join();
  }
}

}  // namespace nodeprim::behavior
