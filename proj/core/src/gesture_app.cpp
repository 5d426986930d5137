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

#include <algorithm>
#include <set>

#include <spdlog/spdlog.h>

#include "nodeprim/master.hpp"
#include "nodeprim/relay.hpp"
#include "nodeprim/sim.hpp"
#include "nodeprim/wire.hpp"

namespace nodeprim::sim {

using json = nlohmann::json;
using namespace std::chrono;

namespace {

template <class Pred>
bool poll_until(steady_clock::time_point deadline, Pred pred) {
  while (!pred()) {
    if (steady_clock::now() >= deadline) return false;
    std::this_thread::sleep_for(milliseconds(2));
  }
  return true;
}

}  // namespace

GestureLabel perception_target(const node::LaunchSpec& l) {
  if (auto it = l.args.find("target"); it != l.args.end() && it->is_string()) {
    return parse_label(it->get<std::string>());
  }
  const std::string prefix = "gesture_";
  if (l.name.rfind(prefix, 0) == 0) {
    if (auto label = try_parse_label(l.name.substr(prefix.size()))) return *label;
  }
  throw Error(Errc::InvalidConfig, "perception node '" + l.name + "' has no gesture target");
}

GestureScript replay_script(const node::LaunchSpec& l) {
  auto it = l.args.find("script");
  if (it == l.args.end()) return {};
  if (it->is_string()) return GestureScript::load(it->get<std::string>());
  return GestureScript::from_json(*it);
}

std::string GestureAppResult::transcript_dump() const {
  json out = json::array();
  for (const auto& e : transcript) out.push_back(e.to_json());
  return wire::canonical_json(out);
}

json karate_program(std::size_t perceptual_nodes) {
  json launch = json::array();
  launch.push_back({{"type", "sensory"},
                    {"name", "gesture_replay"},
                    {"args", {{"script", json::array({{{"at", 1.0}, {"label", "hand_up"}},
                                                      {{"at", 3.0}, {"label", "karate"}}})}}}});
  for (std::size_t i = 0; i < std::min(perceptual_nodes, kGestureLabels.size()); ++i) {
    const std::string label(to_string(kGestureLabels[i]));
    launch.push_back({{"type", "perception"}, {"name", "gesture_" + label}, {"args", {{"target", label}}}});
  }
  launch.push_back({{"type", "action"},
                    {"name", "nao"},
                    {"args", {{"ip", "127.0.0.1"}, {"simulated", true}}}});
  json rule = {{"when", {{"topic", "gesture"}, {"key", "gesture"}, {"equals", "karate"}}},
               {"mode", "sequence"},
               {"do", json::array({{{"primitive", "say"}, {"args", {{"text", "Impressive!"}}}, {"robots", {"nao"}}},
                                   {{"primitive", "animation"}, {"args", {{"name", "cat"}}}, {"robots", {"nao"}}}})}};
  return json{{"robots", json::array({{{"name", "nao"}, {"ip", "127.0.0.1"}, {"simulated", true}}})},
              {"launch", launch},
              {"rules", json::array({rule})}};
}

GestureAppResult run_gesture_app(const GestureAppOptions& options) {
  const auto plan = behavior::interpret_program(options.program);
  const auto deadline = steady_clock::now() + options.timeout;

  // Declared first so every node outlives nothing that uses it.
  std::unique_ptr<VirtualClock> vclock;
  if (options.virtual_clock) vclock = std::make_unique<VirtualClock>();
  Clock& clock = vclock ? static_cast<Clock&>(*vclock) : real_clock();

  master::MasterServer master({net::Endpoint{"127.0.0.1", 0}, options.pool, std::nullopt, true});
  std::mutex events_mu;
  std::vector<node::NodeStateEvent> events;
  auto sink = relay::make_event_sink({"127.0.0.1", 0}, master.endpoint(),
                                     [&](const node::NodeStateEvent& e) {
                                       std::lock_guard lock(events_mu);
                                       events.push_back(e);
                                     });
  auto triggers = relay::make_trigger_relay({"127.0.0.1", 0}, master.endpoint());
  const node::NetworkConfig network{master.endpoint(), sink->endpoint(), triggers->endpoint()};

  std::size_t perception_count = 0;
  for (const auto& l : plan.launches) perception_count += l.kind == node::NodeKind::Perception;

  std::vector<std::unique_ptr<GestureReplay>> replays;
  std::vector<std::unique_ptr<PerceptualClassifier>> classifiers;
  std::vector<std::unique_ptr<SimRobot>> robots;
  for (const auto& l : plan.launches) {
    switch (l.kind) {
      case node::NodeKind::Sensory:
        replays.push_back(std::make_unique<GestureReplay>(options.script ? *options.script : replay_script(l),
                                                          network, clock, l.name, perception_count));
        break;
      case node::NodeKind::Perception:
        classifiers.push_back(std::make_unique<PerceptualClassifier>(perception_target(l), options.model,
                                                                     options.seed, network, clock, l.name));
        break;
      case node::NodeKind::Action:
        robots.push_back(std::make_unique<SimRobot>(SimRobotConfig::from_args(l.name, l.args), network,
                                                    clock, l.name));
        break;
      case node::NodeKind::Cognitive:
        throw Error(Errc::InvalidConfig, "cognitive launches are not simulated in-process");
    }
  }

  std::unique_ptr<behavior::BehaviorNode> engine;
  if (plan.has_engine()) engine = std::make_unique<behavior::BehaviorNode>(plan, network, clock);

  // Everything must be wired up before time may move.
  std::set<std::string> trigger_topics;
  for (const auto& r : plan.rules) trigger_topics.insert(r.trigger.topic);
  const bool wired = poll_until(deadline, [&] {
    for (const auto& r : replays) {
      if (r->subscriber_count() < perception_count) return false;
    }
    for (const auto& c : classifiers) {
      if (!c->connected()) return false;
    }
    for (const auto& r : robots) {
      if (!r->ready()) return false;
    }
    return !engine || engine->engine().connected_triggers() >= trigger_topics.size();
  });
  if (!wired) spdlog::warn("gesture app: not every channel connected before the deadline");

  GestureAppResult result;
  auto all_replays_done = [&] {
    return std::all_of(replays.begin(), replays.end(), [](const auto& r) { return r->finished(); });
  };
  if (vclock) {
    vclock->wait_for_sleepers(replays.size(),
                              duration_cast<milliseconds>(deadline - steady_clock::now()));
    vclock->start_auto_advance();
    result.completed = poll_until(deadline, [&] {
      return all_replays_done() && Activity::pending() == 0 && vclock->sleeper_count() == 0;
    });
    vclock->stop_auto_advance();
  } else {
    auto idle = [&] {
      for (const auto& r : robots) {
        const auto entries = r->transcript().entries();
        const auto starts = std::count_if(entries.begin(), entries.end(),
                                          [](const auto& e) { return e.marker == Marker::Start; });
        if (2 * static_cast<std::size_t>(starts) != entries.size()) return false;
      }
      return true;
    };
    result.completed = poll_until(deadline, all_replays_done);
    // Let the last trigger reach the engine and the robots finish.
    std::this_thread::sleep_for(milliseconds(300));
    result.completed = result.completed && poll_until(deadline, idle);
  }
  result.end_time = to_seconds(clock.now());

  if (engine) {
    result.firings = engine->engine().firings();
    engine->stop();
  }
  for (auto& c : classifiers) {
    result.triggers[c->name()] = c->triggers();
    c->stop();
  }
  std::vector<std::vector<TranscriptEntry>> parts;
  for (auto& r : robots) {
    r->stop();
    parts.push_back(r->transcript().entries());
  }
  for (auto& r : replays) r->stop();
  result.transcript = Transcript::merge(parts);

  const std::size_t nodes = plan.launches.size() + (engine ? 1 : 0);
  poll_until(steady_clock::now() + seconds(2), [&] {
    std::lock_guard lock(events_mu);
    return static_cast<std::size_t>(std::count_if(events.begin(), events.end(), [](const auto& e) {
             return node::is_shutdown(e.event);
           })) >= nodes;
  });
  triggers->stop();
  sink->stop();
  {
    std::lock_guard lock(events_mu);
    result.events = events;
  }
  return result;
}

}  // namespace nodeprim::sim
