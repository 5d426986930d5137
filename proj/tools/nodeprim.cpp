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

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "nodeprim/error.hpp"
#include "nodeprim/gateway.hpp"
#include "nodeprim/launcher.hpp"
#include "nodeprim/master.hpp"
#include "nodeprim/relay.hpp"
#include "nodeprim/runtime.hpp"
#include "nodeprim/sim.hpp"

using json = nlohmann::json;
using namespace nodeprim;
using namespace std::chrono;

namespace {

struct NetFlags {
  std::string master = "127.0.0.1:7000";
  std::string events = "127.0.0.1:7001";
  std::string triggers = "127.0.0.1:7002";

  void add(CLI::App* app) {
    app->add_option("--master", master, "Master endpoint")->capture_default_str();
    app->add_option("--events", events, "Event sink endpoint")->capture_default_str();
    app->add_option("--triggers", triggers, "Trigger relay endpoint")->capture_default_str();
  }
  node::NetworkConfig config() const {
    return {net::parse_endpoint(master), net::parse_endpoint(events), net::parse_endpoint(triggers)};
  }
};

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::InvalidConfig, "cannot open " + path);
  return json::parse(in);
}

// k=v; v is JSON when it parses, else a string.
void apply_kv(json& args, const std::string& kv) {
  auto eq = kv.find('=');
  if (eq == std::string::npos || eq == 0) throw Error(Errc::BadRequest, "--arg wants key=value, got '" + kv + "'");
  const auto key = kv.substr(0, eq);
  const auto value = kv.substr(eq + 1);
  try {
    args[key] = json::parse(value);
  } catch (const json::exception&) {
    args[key] = value;
  }
}

void wait_for(std::stop_token stop) {
  while (!stop.stop_requested()) std::this_thread::sleep_for(milliseconds(100));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nodeprim: distributed nodes for end-user robot programming"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");
  app.parse_complete_callback([&] { spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info); });
  int exit_code = 0;

  // master
  auto* master_cmd = app.add_subcommand("master", "Run the name server (plus event sink and trigger relay)");
  std::string master_bind = "127.0.0.1:7000";
  std::string pool = "9000-9999";
  std::string advertise;
  std::string sink_bind = "127.0.0.1:7001";
  std::string trigger_bind = "127.0.0.1:7002";
  bool no_relays = false;
  master_cmd->add_option("--bind", master_bind)->capture_default_str();
  master_cmd->add_option("--ports,--pool", pool, "Data-plane port pool")->capture_default_str();
  master_cmd->add_option("--advertise", advertise, "Address handed to clients");
  master_cmd->add_option("--events", sink_bind)->capture_default_str();
  master_cmd->add_option("--triggers", trigger_bind)->capture_default_str();
  master_cmd->add_flag("--no-relays", no_relays, "Do not host the event sink and trigger relay");
  master_cmd->callback([&] {
    runtime::SignalStop signals;
    master::ServerOptions opts{net::parse_endpoint(master_bind), master::PortPool::parse(pool),
                               advertise.empty() ? std::nullopt : std::optional(advertise), true};
    master::MasterServer server(opts);
    std::unique_ptr<relay::LineRelay> sink, triggers;
    if (!no_relays) {
      sink = relay::make_event_sink(net::parse_endpoint(sink_bind), server.endpoint(),
                                    [](const node::NodeStateEvent& e) {
                                      std::cout << e.to_json().dump() << std::endl;
                                    });
      triggers = relay::make_trigger_relay(net::parse_endpoint(trigger_bind), server.endpoint());
    }
    spdlog::info("master on {}", server.endpoint().str());
    wait_for(signals.token());
  });

  // launch
  auto* launch_cmd = app.add_subcommand("launch", "Launch one node and supervise it");
  std::string kind = "perception";
  std::string name;
  std::string args_json = "{}";
  std::vector<std::string> kv_args;
  std::string exec;
  NetFlags launch_net;
  launch_cmd->add_option("--type", kind, "sensory | perception | cognitive | action")->required();
  launch_cmd->add_option("--name", name)->required();
  launch_cmd->add_option("--args", args_json, "Node args as a JSON object");
  launch_cmd->add_option("--arg", kv_args, "key=value, repeatable");
  launch_cmd->add_option("--exec", exec, "Node executable (default: this program)");
  launch_net.add(launch_cmd);
  launch_cmd->callback([&] {
    runtime::SignalStop signals;
    node::LaunchSpec spec{node::parse_kind(kind), name, json::parse(args_json), exec};
    for (const auto& kv : kv_args) apply_kv(spec.args, kv);
    const auto network = launch_net.config();
    auto handle = node::launch(spec, network);
    node::LineSender events(network.events);
    auto report = node::supervise(handle, events, signals.token());
    std::cerr << report.node << ": " << report.status.describe() << '\n';
    exit_code = report.status.clean() ? 0 : 1;
  });

  // serve
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP gateway");
  gateway::GatewayOptions gw;
  std::string gw_bind = "127.0.0.1:8080";
  std::string gw_data = "./runs";
  std::string gw_static;
  NetFlags serve_net;
  bool with_master = false;
  std::string gw_pool = "9000-9999";
  long heartbeat_ms = 15000;
  serve_cmd->add_option("--bind", gw_bind)->capture_default_str();
  serve_cmd->add_option("--data", gw_data, "Run store directory")->capture_default_str();
  serve_cmd->add_option("--static", gw_static, "Console assets served at /");
  serve_cmd->add_option("--heartbeat-ms", heartbeat_ms)->capture_default_str();
  serve_cmd->add_flag("--with-master", with_master, "Start a master inside the gateway");
  serve_cmd->add_option("--ports", gw_pool, "Port pool for --with-master")->capture_default_str();
  serve_net.add(serve_cmd);
  serve_cmd->callback([&] {
    runtime::SignalStop signals;
    const auto network = serve_net.config();
    gw.bind = net::parse_endpoint(gw_bind);
    gw.data_dir = gw_data;
    gw.static_dir = gw_static;
    gw.master = network.master;
    gw.events = network.events;
    gw.triggers = network.triggers;
    gw.embed_master = with_master;
    gw.pool = master::PortPool::parse(gw_pool);
    gw.heartbeat = milliseconds(heartbeat_ms);
    gateway::Gateway server(gw);
    wait_for(signals.token());
    server.stop();
  });

  // demo gestures
  auto* demo_cmd = app.add_subcommand("demo", "Self-contained demos");
  demo_cmd->require_subcommand(1);
  auto* gestures_cmd = demo_cmd->add_subcommand("gestures", "Run the gesture program in one process");
  std::string script_path, confusion = "identity", program_path;
  std::uint64_t seed = 42;
  bool real_time = false;
  gestures_cmd->add_option("--script", script_path, "Gesture script (JSON array)");
  gestures_cmd->add_option("--confusion", confusion, "identity | default | model file")->capture_default_str();
  gestures_cmd->add_option("--seed", seed)->capture_default_str();
  gestures_cmd->add_option("--program", program_path, "ProgramDoc (defaults to the karate program)");
  gestures_cmd->add_flag("--real-time", real_time, "Use the wall clock instead of virtual time");
  gestures_cmd->callback([&] {
    sim::GestureAppOptions opts;
    if (!script_path.empty()) opts.script = sim::GestureScript::load(script_path);
    opts.model = sim::ConfusionModel::resolve(confusion);
    opts.seed = seed;
    opts.program = program_path.empty() ? sim::karate_program() : read_json(program_path);
    opts.virtual_clock = !real_time;
    opts.timeout = seconds(real_time ? 120 : 30);
    auto result = sim::run_gesture_app(opts);
    json out{{"transcript", json::parse(result.transcript_dump())},
             {"triggers", result.triggers},
             {"firings", result.firings},
             {"end_time", result.end_time},
             {"completed", result.completed}};
    std::cout << out.dump(2) << '\n';
    exit_code = result.completed ? 0 : 1;
  });

  // node (what the launcher runs)
  auto* node_cmd = app.add_subcommand("node", "Run a built-in node in this process");
  std::string node_kind, node_name, node_args = "{}";
  bool supervised = false;
  NetFlags node_net;
  node_cmd->add_option("--type", node_kind)->required();
  node_cmd->add_option("--name", node_name)->required();
  node_cmd->add_option("--args", node_args);
  node_cmd->add_flag("--supervised", supervised, "Exit when the parent dies");
  node_net.add(node_cmd);
  node_cmd->callback([&] {
    runtime::SignalStop signals;
    if (supervised) runtime::die_with_parent();
    if (!verbose) spdlog::set_level(spdlog::level::warn);
    node::LaunchSpec spec{node::parse_kind(node_kind), node_name, json::parse(node_args), {}};
    exit_code = runtime::run_node(spec, node_net.config(), signals.token());
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "nodeprim: " << e.what() << '\n';
    return 1;
  }
  return exit_code;
}
