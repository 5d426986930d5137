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

#include "nodeprim/gateway.hpp"

#include <sys/socket.h>

#include <algorithm>
#include <chrono>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "nodeprim/behavior.hpp"
#include "nodeprim/error.hpp"
#include "nodeprim/launcher.hpp"
#include "nodeprim/master.hpp"
#include "nodeprim/relay.hpp"

namespace nodeprim::gateway {

using json = nlohmann::json;
using namespace std::chrono;
namespace fs = std::filesystem;

namespace {
constexpr std::array<std::string_view, 4> kStateNames{"stored", "running", "stopped", "failed"};
}

std::string_view to_string(RunState s) noexcept { return kStateNames[static_cast<int>(s)]; }

std::optional<RunState> try_parse_state(std::string_view s) noexcept {
  for (std::size_t i = 0; i < kStateNames.size(); ++i) {
    if (kStateNames[i] == s) return static_cast<RunState>(i);
  }
  return std::nullopt;
}

bool transition_allowed(RunState from, RunState to) noexcept {
  if (from == RunState::Stored) return to == RunState::Running;
  if (from == RunState::Running) return to == RunState::Stopped || to == RunState::Failed;
  return false;
}

json RunRecord::to_json(bool with_doc) const {
  json j{{"run_id", run_id}, {"state", to_string(state)}, {"created", created}};
  if (!detail.empty()) j["detail"] = detail;
  if (with_doc) j["doc"] = doc;
  return j;
}

RunRecord RunRecord::from_json(const json& j) {
  RunRecord r;
  r.run_id = j.at("run_id").get<std::string>();
  r.doc = j.at("doc");
  auto st = try_parse_state(j.at("state").get<std::string>());
  if (!st) throw Error(Errc::BadRequest, "bad run state");
  r.state = *st;
  r.created = j.value("created", 0.0);
  r.detail = j.value("detail", std::string{});
  return r;
}

// ---------------------------------------------------------------------------
// RunStore

RunStore::RunStore(fs::path dir) : dir_(std::move(dir)) {
  fs::create_directories(dir_);
  for (const auto& entry : fs::directory_iterator(dir_)) {
    if (entry.path().extension() != ".json") continue;
    try {
      std::ifstream in(entry.path());
      auto r = RunRecord::from_json(json::parse(in));
      if (r.state == RunState::Running) {
        r.state = RunState::Failed;
        r.detail = "gateway restarted while the run was running";
        persist(r);
      }
      runs_.emplace(r.run_id, std::move(r));
    } catch (const std::exception& e) {
      spdlog::warn("run store: skipping {}: {}", entry.path().string(), e.what());
    }
  }
}

void RunStore::persist(const RunRecord& r) const {
  const auto target = dir_ / (r.run_id + ".json");
  const auto tmp = dir_ / (r.run_id + ".json.tmp");
  {
    std::ofstream out(tmp, std::ios::trunc);
    out << r.to_json().dump() << '\n';
    if (!out) throw Error(Errc::BadRequest, "cannot write " + tmp.string());
  }
  fs::rename(tmp, target);
}

std::string RunStore::fresh_id() {
  static thread_local std::mt19937_64 rng(std::random_device{}());
  for (;;) {
    std::ostringstream id;
    id << "run-" << std::hex << (rng() & 0xFFFFFFFFFFull) << '-' << std::dec << ++counter_;
    if (!runs_.count(id.str()) && !fs::exists(dir_ / (id.str() + ".json"))) return id.str();
  }
}

RunRecord RunStore::create(json doc) {
  std::lock_guard lock(mu_);
  RunRecord r;
  r.run_id = fresh_id();
  r.doc = std::move(doc);
  r.created = duration<double>(system_clock::now().time_since_epoch()).count();
  persist(r);
  runs_.emplace(r.run_id, r);
  return r;
}

std::optional<RunRecord> RunStore::get(const std::string& run_id) const {
  std::lock_guard lock(mu_);
  auto it = runs_.find(run_id);
  if (it == runs_.end()) return std::nullopt;
  return it->second;
}

std::vector<RunRecord> RunStore::list() const {
  std::vector<RunRecord> out;
  {
    std::lock_guard lock(mu_);
    for (const auto& [_, r] : runs_) out.push_back(r);
  }
  std::sort(out.begin(), out.end(), [](const RunRecord& a, const RunRecord& b) {
    return a.created != b.created ? a.created < b.created : a.run_id < b.run_id;
  });
  return out;
}

RunRecord RunStore::set_state(const std::string& run_id, RunState to, std::string detail) {
  std::lock_guard lock(mu_);
  auto it = runs_.find(run_id);
  if (it == runs_.end()) throw Error(Errc::BadRequest, "no run " + run_id);
  if (!transition_allowed(it->second.state, to)) {
    throw Error(Errc::BadRequest, "run " + run_id + " cannot go from " +
                                      std::string(to_string(it->second.state)) + " to " +
                                      std::string(to_string(to)));
  }
  it->second.state = to;
  it->second.detail = std::move(detail);
  persist(it->second);
  return it->second;
}

// ---------------------------------------------------------------------------
// EventLog

std::uint64_t EventLog::append(node::NodeStateEvent e) {
  std::lock_guard lock(mu_);
  const std::uint64_t seq = entries_.empty() ? 1 : entries_.back().seq + 1;
  entries_.push_back({seq, std::move(e)});
  cv_.notify_all();
  return seq;
}

std::vector<EventLogEntry> EventLog::since(std::uint64_t after) const {
  std::lock_guard lock(mu_);
  // seq equals index + 1.
  const auto from = std::min<std::uint64_t>(after, entries_.size());
  return {entries_.begin() + static_cast<std::ptrdiff_t>(from), entries_.end()};
}

std::vector<EventLogEntry> EventLog::wait_since(std::uint64_t after, milliseconds timeout) const {
  std::unique_lock lock(mu_);
  cv_.wait_for(lock, timeout, [&] { return closed_ || entries_.size() > after; });
  const auto from = std::min<std::uint64_t>(after, entries_.size());
  return {entries_.begin() + static_cast<std::ptrdiff_t>(from), entries_.end()};
}

std::uint64_t EventLog::last_seq() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

std::size_t EventLog::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

void EventLog::close() {
  std::lock_guard lock(mu_);
  closed_ = true;
  cv_.notify_all();
}

bool EventLog::closed() const {
  std::lock_guard lock(mu_);
  return closed_;
}

json fold_nodes(const std::vector<EventLogEntry>& log) {
  std::vector<std::string> order;
  std::map<std::string, json> rows;
  for (const auto& entry : log) {
    const auto& e = entry.event;
    if (!rows.count(e.node)) order.push_back(e.node);
    rows[e.node] = json{{"node", e.node},
                        {"type", node::to_string(e.kind)},
                        {"event", node::to_string(e.event)},
                        {"detail", e.detail},
                        {"stamp", e.stamp},
                        {"seq", entry.seq},
                        {"alive", !node::is_shutdown(e.event)}};
  }
  json out = json::array();
  for (const auto& name : order) out.push_back(rows[name]);
  return out;
}

std::string format_sse(const EventLogEntry& e) {
  return "event: node_state\ndata: " + e.event.to_json().dump() + "\nid: " + std::to_string(e.seq) +
         "\n\n";
}

// ---------------------------------------------------------------------------
// Gateway

namespace {

const char* kIndexPage = R"(<!doctype html>
<html><head><meta charset="utf-8"><title>nodeprim</title></head>
<body>
<h1>nodeprim gateway</h1>
<p>No console assets are installed. The JSON API lives under <code>/api</code>:
programs, runs, nodes, and the <code>/api/events</code> stream.</p>
<pre id="log"></pre>
<script>
const log = document.getElementById('log');
new EventSource('/api/events').addEventListener('node_state', (m) => {
  log.textContent += m.lastEventId + ' ' + m.data + '\n';
});
</script>
</body></html>
)";

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void reply_error(httplib::Response& res, int status, std::string_view code, const std::string& detail,
                 const std::string& path = {}) {
  json body{{"error", code}, {"detail", detail}};
  if (!path.empty()) body["path"] = path;
  reply(res, status, body);
}

}  // namespace

struct Execution {
  std::string run_id;
  std::stop_source stop;
  std::thread worker;
  std::mutex mu;
  std::vector<std::jthread> supervisors;
  std::unique_ptr<behavior::BehaviorNode> engine;
};

struct Gateway::Impl {
  GatewayOptions options;
  std::unique_ptr<master::MasterServer> master;
  EventLog log;
  std::unique_ptr<relay::LineRelay> sink;
  std::unique_ptr<relay::LineRelay> triggers;
  node::NetworkConfig network;
  std::unique_ptr<RunStore> runs;
  httplib::Server server;
  net::Endpoint endpoint;
  std::thread http;
  std::mutex exec_mu;
  std::map<std::string, std::shared_ptr<Execution>> executions;
  bool stopped = false;

  void execute(std::shared_ptr<Execution> ex, behavior::RunPlan plan);
  void halt(Execution& ex);
  void routes();
};

void Gateway::Impl::execute(std::shared_ptr<Execution> ex, behavior::RunPlan plan) {
  auto events = std::make_shared<node::LineSender>(network.events);
  auto token = ex->stop.get_token();
  std::string failure;
  for (const auto& spec : plan.launches) {
    if (token.stop_requested()) return;
    try {
      auto handle = node::launch(spec, network);
      std::lock_guard lock(ex->mu);
      ex->supervisors.emplace_back([handle, events, token]() mutable {
        node::supervise(handle, *events, token);
      });
    } catch (const Error& e) {
      failure = "launching '" + spec.name + "': " + e.detail();
      break;
    }
  }
  if (failure.empty() && plan.has_engine() && !token.stop_requested()) {
    try {
      auto engine = std::make_unique<behavior::BehaviorNode>(plan, network, real_clock());
      std::lock_guard lock(ex->mu);
      ex->engine = std::move(engine);
    } catch (const Error& e) {
      failure = std::string("behavior engine: ") + e.what();
    }
  }
  if (failure.empty()) {
    // Children are told to exit when the thread that spawned them ends, so
    // this thread lives as long as the run.
    while (!token.stop_requested()) std::this_thread::sleep_for(milliseconds(50));
    return;
  }
  {
    spdlog::warn("run {} failed: {}", ex->run_id, failure);
    ex->stop.request_stop();
    {
      std::lock_guard lock(ex->mu);
      ex->engine.reset();
      ex->supervisors.clear();  // joins; each supervisor stops its node
    }
    try {
      runs->set_state(ex->run_id, RunState::Failed, failure);
    } catch (const Error&) {
    }
  }
}

void Gateway::Impl::halt(Execution& ex) {
  ex.stop.request_stop();
  if (ex.worker.joinable()) ex.worker.join();
  std::lock_guard lock(ex.mu);
  ex.engine.reset();
  ex.supervisors.clear();
}

void Gateway::Impl::routes() {
  if (!options.static_dir.empty() && fs::exists(options.static_dir / "index.html")) {
    server.set_mount_point("/", options.static_dir.string());
  } else {
    server.Get("/", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(kIndexPage, "text/html; charset=utf-8");
    });
  }

  server.Post("/api/programs", [this](const httplib::Request& req, httplib::Response& res) {
    if (req.body.size() > options.max_body) {
      return reply_error(res, 413, "Oversize",
                         "programs are limited to " + std::to_string(options.max_body) + " bytes");
    }
    json doc;
    try {
      doc = json::parse(req.body);
    } catch (const json::exception& e) {
      return reply_error(res, 400, "MalformedJson", e.what());
    }
    try {
      behavior::interpret_program(doc);
    } catch (const SchemaError& e) {
      return reply_error(res, 400, to_string(e.code()), e.detail(), e.path());
    }
    auto record = runs->create(std::move(doc));
    reply(res, 201, json{{"run_id", record.run_id}, {"state", to_string(record.state)}});
  });

  server.Post(R"(/api/runs/([^/]+)/start)", [this](const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    std::lock_guard lock(exec_mu);
    auto record = runs->get(id);
    if (!record) return reply_error(res, 404, "NotFound", "no run " + id);
    if (stopped || record->state != RunState::Stored) {
      return reply_error(res, 409, "Conflict",
                         "run " + id + " is " + std::string(to_string(record->state)));
    }
    auto plan = behavior::interpret_program(record->doc);
    runs->set_state(id, RunState::Running);
    auto ex = std::make_shared<Execution>();
    ex->run_id = id;
    executions[id] = ex;
    ex->worker = std::thread([this, ex, plan = std::move(plan)]() mutable { execute(ex, std::move(plan)); });
    reply(res, 200, json{{"run_id", id}, {"state", "running"}});
  });

  server.Post(R"(/api/runs/([^/]+)/stop)", [this](const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    std::shared_ptr<Execution> ex;
    {
      std::lock_guard lock(exec_mu);
      auto record = runs->get(id);
      if (!record) return reply_error(res, 404, "NotFound", "no run " + id);
      if (record->state != RunState::Running) {
        return reply_error(res, 409, "Conflict",
                           "run " + id + " is " + std::string(to_string(record->state)));
      }
      auto it = executions.find(id);
      if (it != executions.end()) {
        ex = it->second;
        executions.erase(it);
      }
    }
    if (ex) halt(*ex);
    try {
      auto r = runs->set_state(id, RunState::Stopped);
      reply(res, 200, json{{"run_id", id}, {"state", to_string(r.state)}});
    } catch (const Error&) {
      // The run failed while it was being stopped.
      auto r = runs->get(id);
      reply(res, 200, json{{"run_id", id}, {"state", to_string(r->state)}});
    }
  });

  server.Get("/api/runs", [this](const httplib::Request&, httplib::Response& res) {
    json out = json::array();
    for (const auto& r : runs->list()) out.push_back(r.to_json(false));
    reply(res, 200, out);
  });

  server.Get(R"(/api/runs/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    auto record = runs->get(req.matches[1]);
    if (!record) return reply_error(res, 404, "NotFound", "no run " + std::string(req.matches[1]));
    reply(res, 200, record->to_json(true));
  });

  server.Get("/api/nodes", [this](const httplib::Request&, httplib::Response& res) {
    reply(res, 200, fold_nodes(log.since(0)));
  });

  server.Get("/api/events", [this](const httplib::Request& req, httplib::Response& res) {
    std::uint64_t after = 0;
    std::string resume = req.get_header_value("Last-Event-ID");
    if (resume.empty()) resume = req.get_param_value("last_event_id");
    if (!resume.empty()) {
      try {
        after = std::stoull(resume);
      } catch (const std::exception&) {
        after = 0;
      }
    }
    res.set_header("Cache-Control", "no-cache");
    auto last_write = steady_clock::now();
    res.set_chunked_content_provider(
        "text/event-stream", [this, after, last_write](std::size_t, httplib::DataSink& sink) mutable {
          const auto slice = std::min(options.heartbeat, milliseconds(200));
          auto entries = log.wait_since(after, slice);
          if (log.closed()) return false;
          for (const auto& e : entries) {
            const auto msg = format_sse(e);
            if (!sink.write(msg.data(), msg.size())) return false;
            after = e.seq;
          }
          const auto now = steady_clock::now();
          if (!entries.empty()) {
            last_write = now;
          } else if (now - last_write >= options.heartbeat) {
            if (!sink.write(kHeartbeat.data(), kHeartbeat.size())) return false;
            last_write = now;
          }
          return true;
        });
  });
}

Gateway::Gateway(GatewayOptions options) : impl_(std::make_unique<Impl>()) {
  auto& d = *impl_;
  d.options = std::move(options);
  net::Endpoint master_ep = d.options.master;
  if (d.options.embed_master) {
    d.master = std::make_unique<master::MasterServer>(
        master::ServerOptions{d.options.master, d.options.pool, std::nullopt, true});
    master_ep = d.master->endpoint();
  }
  d.sink = relay::make_event_sink(d.options.events, master_ep,
                                  [impl = impl_.get()](const node::NodeStateEvent& e) { impl->log.append(e); });
  d.triggers = relay::make_trigger_relay(d.options.triggers, master_ep);
  d.network = node::NetworkConfig{master_ep, d.sink->endpoint(), d.triggers->endpoint()};
  d.runs = std::make_unique<RunStore>(d.options.data_dir);

  d.server.new_task_queue = [] { return new httplib::ThreadPool(32); };
  d.server.set_keep_alive_timeout(1);
  d.server.set_payload_max_length(d.options.max_body * 4 + 1024);
  // httplib's default turns on SO_REUSEPORT, which lets a second gateway
  // share the port silently.
  d.server.set_socket_options([](socket_t sock) {
    int yes = 1;
    ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  });
  d.routes();
  int port = d.options.bind.port;
  if (port == 0) {
    port = d.server.bind_to_any_port(d.options.bind.host);
  } else if (!d.server.bind_to_port(d.options.bind.host, port)) {
    port = -1;
  }
  if (port <= 0) throw Error(Errc::BindFailure, "cannot bind the gateway to " + d.options.bind.str());
  d.endpoint = net::Endpoint{d.options.bind.host == "0.0.0.0" ? "127.0.0.1" : d.options.bind.host,
                             static_cast<std::uint16_t>(port)};
  d.http = std::thread([impl = impl_.get()] { impl->server.listen_after_bind(); });
  d.server.wait_until_ready();
  spdlog::info("gateway on http://{}", d.endpoint.str());
}

Gateway::~Gateway() { stop(); }

void Gateway::stop() {
  auto& d = *impl_;
  std::map<std::string, std::shared_ptr<Execution>> running;
  {
    std::lock_guard lock(d.exec_mu);
    if (d.stopped) return;
    d.stopped = true;
    running.swap(d.executions);
  }
  for (auto& [id, ex] : running) {
    d.halt(*ex);
    try {
      d.runs->set_state(id, RunState::Stopped);
    } catch (const Error&) {
    }
  }
  d.log.close();
  d.server.stop();
  if (d.http.joinable()) d.http.join();
  d.triggers->stop();
  d.sink->stop();
  if (d.master) d.master->stop();
}

net::Endpoint Gateway::endpoint() const { return impl_->endpoint; }
const node::NetworkConfig& Gateway::network() const { return impl_->network; }
EventLog& Gateway::log() { return impl_->log; }
RunStore& Gateway::runs() { return *impl_->runs; }

}  // namespace nodeprim::gateway
