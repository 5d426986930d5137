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

// HTTP front end: program store, run control, node table and the SSE event
// stream.

#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nodeprim/master.hpp"
#include "nodeprim/net.hpp"
#include "nodeprim/node.hpp"

namespace nodeprim::gateway {

enum class RunState { Stored, Running, Stopped, Failed };

std::string_view to_string(RunState s) noexcept;
std::optional<RunState> try_parse_state(std::string_view s) noexcept;
// stored -> running -> {stopped | failed}
bool transition_allowed(RunState from, RunState to) noexcept;

struct RunRecord {
  std::string run_id;
  nlohmann::json doc;
  RunState state = RunState::Stored;
  double created = 0.0;  // seconds since the epoch
  std::string detail;    // why a run failed

  // Without the doc when `with_doc` is false.
  nlohmann::json to_json(bool with_doc = true) const;
  static RunRecord from_json(const nlohmann::json& j);
};

// One JSON file per run.
class RunStore {
 public:
  // Reloads every run found in `dir`. Runs left `running` by a previous
  // process become `failed`.
  explicit RunStore(std::filesystem::path dir);

  RunRecord create(nlohmann::json doc);
  std::optional<RunRecord> get(const std::string& run_id) const;
  std::vector<RunRecord> list() const;  // by creation, then id
  // Throws Error{BadRequest} on an illegal transition.
  RunRecord set_state(const std::string& run_id, RunState to, std::string detail = {});
  const std::filesystem::path& dir() const noexcept { return dir_; }

 private:
  void persist(const RunRecord& r) const;
  std::string fresh_id();

  std::filesystem::path dir_;
  mutable std::mutex mu_;
  std::map<std::string, RunRecord> runs_;
  std::uint64_t counter_ = 0;
};

struct EventLogEntry {
  std::uint64_t seq = 0;
  node::NodeStateEvent event;
};

// Single writer, many readers.
class EventLog {
 public:
  std::uint64_t append(node::NodeStateEvent e);
  std::vector<EventLogEntry> since(std::uint64_t after) const;
  // Waits up to `timeout` for an entry with seq > `after`.
  std::vector<EventLogEntry> wait_since(std::uint64_t after, std::chrono::milliseconds timeout) const;
  std::uint64_t last_seq() const;
  std::size_t size() const;
  // Wakes every waiter; later waits return at once.
  void close();
  bool closed() const;

 private:
  mutable std::mutex mu_;
  mutable std::condition_variable cv_;
  std::vector<EventLogEntry> entries_;
  bool closed_ = false;
};

// Per node name, in first-seen order: the node's last event.
nlohmann::json fold_nodes(const std::vector<EventLogEntry>& log);

// One SSE message.
std::string format_sse(const EventLogEntry& e);
inline constexpr std::string_view kHeartbeat = ": heartbeat\n\n";

struct GatewayOptions {
  net::Endpoint bind{"127.0.0.1", 8080};
  std::filesystem::path data_dir = "./runs";
  net::Endpoint master{"127.0.0.1", 7000};
  // Start a master on `master` inside the gateway, allocating from `pool`.
  bool embed_master = false;
  master::PortPool pool{};
  net::Endpoint events{"127.0.0.1", 7001};
  net::Endpoint triggers{"127.0.0.1", 7002};
  std::chrono::milliseconds heartbeat{15000};
  std::size_t max_body = 1u << 20;
  // Served at GET /; a built-in page when empty or missing.
  std::filesystem::path static_dir;
  // Grace a node gets between SIGTERM and SIGKILL on stop.
  std::chrono::milliseconds stop_grace{2000};
};

class Gateway {
 public:
  // Throws Error{BindFailure}.
  explicit Gateway(GatewayOptions options);
  ~Gateway();

  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  net::Endpoint endpoint() const;
  // Where child nodes are pointed (actual ports when 0 was asked for).
  const node::NetworkConfig& network() const;
  EventLog& log();
  RunStore& runs();

  // Stops every running run, then the HTTP server and the sinks.
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace nodeprim::gateway
