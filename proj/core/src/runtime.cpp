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

#include "nodeprim/runtime.hpp"

#include <signal.h>
#include <sys/prctl.h>

#include <cerrno>
#include <ctime>
#include <fstream>

#include <spdlog/spdlog.h>

#include "nodeprim/behavior.hpp"
#include "nodeprim/sim.hpp"

namespace nodeprim::runtime {

using json = nlohmann::json;
using namespace std::chrono;

SignalStop::SignalStop() {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
  waiter_ = std::thread([this, set] {
    const timespec slice{0, 200'000'000};
    while (!quit_) {
      int sig = sigtimedwait(&set, nullptr, &slice);
      if (sig > 0) {
        received_ = sig;
        source_.request_stop();
        return;
      }
    }
  });
}

SignalStop::~SignalStop() {
  quit_ = true;
  if (waiter_.joinable()) waiter_.join();
}

void die_with_parent() { ::prctl(PR_SET_PDEATHSIG, SIGTERM); }

namespace {

void wait_stop(std::stop_token stop) {
  while (!stop.stop_requested()) std::this_thread::sleep_for(milliseconds(50));
}

int run_sensory(const node::LaunchSpec& spec, const node::NetworkConfig& network, std::stop_token stop) {
  auto script = sim::replay_script(spec);
  const auto wait_subs = spec.args.value("wait_subscribers", 0u);
  sim::GestureReplay replay(std::move(script), network, real_clock(), spec.name, wait_subs);
  while (!stop.stop_requested() && !replay.finished()) std::this_thread::sleep_for(milliseconds(20));
  replay.stop();
  return 0;
}

int run_perception(const node::LaunchSpec& spec, const node::NetworkConfig& network,
                   std::stop_token stop) {
  const auto target = sim::perception_target(spec);
  auto model = sim::ConfusionModel::resolve(spec.args.value("confusion", std::string("identity")));
  const auto seed = spec.args.value("seed", std::uint64_t{42});
  sim::PerceptualClassifier classifier(target, std::move(model), seed, network, real_clock(), spec.name);
  wait_stop(stop);
  classifier.stop();
  return 0;
}

int run_action(const node::LaunchSpec& spec, const node::NetworkConfig& network, std::stop_token stop) {
  if (!spec.args.value("simulated", true)) {
    // No hardware bridge is built in; say so and fail.
    auto ctx = node::node_start(spec.descriptor(), network);
    ctx->publish_state(node::NodeEvent::RobotConnectionFailed,
                       "no hardware bridge for robot at " + spec.args.value("ip", std::string("?")));
    return 3;
  }
  sim::SimRobot robot(sim::SimRobotConfig::from_args(spec.name, spec.args), network, real_clock(),
                      spec.name);
  wait_stop(stop);
  robot.stop();
  if (auto path = spec.args.value("transcript", std::string{}); !path.empty()) {
    std::ofstream(path) << robot.transcript().dump() << '\n';
  }
  return 0;
}

int run_cognitive(const node::LaunchSpec& spec, const node::NetworkConfig& network,
                  std::stop_token stop) {
  auto it = spec.args.find("program");
  if (it == spec.args.end()) throw Error(Errc::InvalidConfig, "cognitive node needs a 'program' arg");
  const auto plan = behavior::interpret_program(*it);
  behavior::BehaviorNode engine(plan, network, real_clock(), spec.name);
  wait_stop(stop);
  engine.stop();
  return 0;
}

}  // namespace

int run_node(const node::LaunchSpec& spec, const node::NetworkConfig& network, std::stop_token stop) {
  switch (spec.kind) {
    case node::NodeKind::Sensory:
      return run_sensory(spec, network, stop);
    case node::NodeKind::Perception:
      return run_perception(spec, network, stop);
    case node::NodeKind::Action:
      return run_action(spec, network, stop);
    case node::NodeKind::Cognitive:
      return run_cognitive(spec, network, stop);
  }
  return 2;
}

}  // namespace nodeprim::runtime
