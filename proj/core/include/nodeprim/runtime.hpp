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

// Entry points for the built-in node processes.

#include <atomic>
#include <stop_token>
#include <thread>

#include "nodeprim/launcher.hpp"
#include "nodeprim/node.hpp"

namespace nodeprim::runtime {

// Routes SIGINT and SIGTERM of the whole process to a stop request. Construct
// before any other thread starts so every thread inherits the blocked mask.
class SignalStop {
 public:
  SignalStop();
  ~SignalStop();

  SignalStop(const SignalStop&) = delete;
  SignalStop& operator=(const SignalStop&) = delete;

  std::stop_token token() const noexcept { return source_.get_token(); }
  // The signal that arrived, or 0.
  int received() const noexcept { return received_; }

 private:
  std::stop_source source_;
  std::atomic<int> received_{0};
  std::atomic<bool> quit_{false};
  std::thread waiter_;
};

// Ask the kernel to SIGTERM this process when its parent dies. Linux tracks
// the spawning thread, not the process: that thread must outlive the child.
void die_with_parent();

// Runs the built-in node described by `spec` until `stop` is requested or the
// node ends by itself, and returns the process exit code.
//   sensory    gesture replay; args: script (array or file), wait_subscribers
//   perception classifier; args: target, confusion, seed
//   action     simulated robot; args: simulated, speech_rate, ..., transcript
//   cognitive  behavior engine; args: program (a ProgramDoc)
int run_node(const node::LaunchSpec& spec, const node::NetworkConfig& network, std::stop_token stop);

}  // namespace nodeprim::runtime
