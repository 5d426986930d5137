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

#include "nodeprim/launcher.hpp"

#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <climits>
#include <cstdlib>
#include <cstring>
#include <mutex>
#include <thread>

#include <spdlog/spdlog.h>

#include "nodeprim/error.hpp"

extern char** environ;

namespace nodeprim::node {

using json = nlohmann::json;
using namespace std::chrono;

json LaunchSpec::to_json() const {
  json j{{"type", to_string(kind)}, {"name", name}, {"args", args}};
  if (!executable.empty()) j["exec"] = executable;
  return j;
}

LaunchSpec LaunchSpec::from_json(const json& j) {
  LaunchSpec s;
  s.kind = parse_kind(j.at("type").get<std::string>());
  s.name = j.at("name").get<std::string>();
  s.args = j.value("args", json::object());
  s.executable = j.value("exec", std::string{});
  return s;
}

std::string default_node_executable() {
  if (const char* env = std::getenv("NODEPRIM_NODE_EXE"); env && *env) return env;
  char buf[PATH_MAX];
  ssize_t n = ::readlink("/proc/self/exe", buf, sizeof buf - 1);
  if (n <= 0) return "nodeprim";
  return std::string(buf, static_cast<std::size_t>(n));
}

std::vector<std::string> node_argv(const LaunchSpec& spec, const NetworkConfig& network) {
  return {"node",
          "--type", std::string(to_string(spec.kind)),
          "--name", spec.name,
          "--args", spec.args.dump(),
          "--master", network.master.str(),
          "--events", network.events.str(),
          "--triggers", network.triggers.str(),
          "--supervised"};
}

std::string ExitStatus::describe() const {
  if (signaled) return std::string("killed by signal ") + std::to_string(value) + " (" + ::strsignal(value) + ")";
  return "exit status " + std::to_string(value);
}

struct NodeHandle::State {
  LaunchSpec spec;
  pid_t pid = -1;
  std::mutex mu;
  std::optional<ExitStatus> exit;
  std::atomic<bool> killed{false};
  std::atomic<bool> stopping{false};
};

pid_t NodeHandle::pid() const noexcept { return state_->pid; }
const LaunchSpec& NodeHandle::spec() const noexcept { return state_->spec; }
bool NodeHandle::killed_by_supervisor() const noexcept { return state_->killed; }
bool NodeHandle::stop_requested() const noexcept { return state_->stopping; }

std::optional<ExitStatus> NodeHandle::try_wait() {
  std::lock_guard lock(state_->mu);
  if (state_->exit) return state_->exit;
  int status = 0;
  pid_t r = ::waitpid(state_->pid, &status, WNOHANG);
  if (r == state_->pid) {
    if (WIFSIGNALED(status)) {
      state_->exit = ExitStatus{true, WTERMSIG(status)};
    } else {
      state_->exit = ExitStatus{false, WEXITSTATUS(status)};
    }
  } else if (r < 0 && errno == ECHILD) {
    state_->exit = ExitStatus{false, -1};
  }
  return state_->exit;
}

ExitStatus NodeHandle::wait() {
  for (;;) {
    if (auto s = try_wait()) return *s;
    std::this_thread::sleep_for(milliseconds(10));
  }
}

bool NodeHandle::running() { return !try_wait().has_value(); }

void NodeHandle::kill() {
  std::lock_guard lock(state_->mu);
  if (state_->exit) return;
  state_->killed = true;
  ::kill(state_->pid, SIGKILL);
}

ExitStatus NodeHandle::stop(milliseconds grace) {
  {
    std::lock_guard lock(state_->mu);
    if (state_->exit) return *state_->exit;
    state_->stopping = true;
    ::kill(state_->pid, SIGTERM);
  }
  const auto deadline = steady_clock::now() + grace;
  while (steady_clock::now() < deadline) {
    if (auto s = try_wait()) return *s;
    std::this_thread::sleep_for(milliseconds(10));
  }
  kill();
  return wait();
}

NodeHandle launch(const LaunchSpec& spec, const NetworkConfig& network) {
  const std::string exe = spec.executable.empty() ? default_node_executable() : spec.executable;
  if (::access(exe.c_str(), X_OK) != 0) {
    throw Error(Errc::SpawnFailure, "'" + exe + "' is not executable: " + std::strerror(errno));
  }
  auto args = node_argv(spec, network);
  std::vector<char*> argv;
  argv.push_back(const_cast<char*>(exe.c_str()));
  for (auto& a : args) argv.push_back(a.data());
  argv.push_back(nullptr);

  // Children start with a clean signal state even if the parent routes
  // SIGTERM/SIGINT to a dedicated thread.
  posix_spawnattr_t attr;
  posix_spawnattr_init(&attr);
  sigset_t empty, defaults;
  sigemptyset(&empty);
  sigemptyset(&defaults);
  for (int sig : {SIGTERM, SIGINT, SIGPIPE, SIGHUP}) sigaddset(&defaults, sig);
  posix_spawnattr_setsigmask(&attr, &empty);
  posix_spawnattr_setsigdefault(&attr, &defaults);
  posix_spawnattr_setflags(&attr, POSIX_SPAWN_SETSIGMASK | POSIX_SPAWN_SETSIGDEF);

  pid_t pid = -1;
  int rc = ::posix_spawn(&pid, exe.c_str(), nullptr, &attr, argv.data(), environ);
  posix_spawnattr_destroy(&attr);
  if (rc != 0) throw Error(Errc::SpawnFailure, "spawning '" + exe + "': " + std::strerror(rc));

  auto state = std::make_shared<NodeHandle::State>();
  state->spec = spec;
  state->spec.executable = exe;
  state->pid = pid;
  spdlog::debug("launched {} '{}' as pid {}", to_string(spec.kind), spec.name, pid);
  return NodeHandle(std::move(state));
}

TerminationReport supervise(NodeHandle& handle, LineSender& events, std::stop_token stop,
                            milliseconds poll, Clock& clock) {
  std::optional<ExitStatus> status;
  while (!(status = handle.try_wait())) {
    if (stop.stop_requested()) {
      status = handle.stop();
      break;
    }
    std::this_thread::sleep_for(poll);
  }

  TerminationReport report{handle.spec().name, *status, std::nullopt};
  const bool ended_by_us =
      handle.killed_by_supervisor() || (handle.stop_requested() && status->signaled);
  // A clean exit means the node already announced itself.
  if (!status->clean()) {
    report.published = ended_by_us ? NodeEvent::ShutdownManual : NodeEvent::ShutdownUnexpected;
  }
  if (report.published) {
    publish_on_behalf(events, handle.spec().descriptor(), *report.published, status->describe(),
                      clock);
  }
  spdlog::debug("node '{}' ended: {}", report.node, status->describe());
  return report;
}

}  // namespace nodeprim::node
