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

// Name server. Publishers and subscribers register topics over a
// newline-delimited JSON control channel; the master assigns each topic one
// data-plane endpoint and hands the same endpoint to everybody who asks.

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nodeprim/net.hpp"
#include "nodeprim/wire.hpp"

namespace nodeprim::master {

enum class Role { Pub, Sub };

std::string_view to_string(Role r) noexcept;

// Inclusive port range; first > last means empty.
struct PortPool {
  std::uint16_t first = 9000;
  std::uint16_t last = 9999;

  bool empty() const noexcept { return first > last; }
  std::size_t size() const noexcept { return empty() ? 0 : std::size_t(last) - first + 1; }
  // "9000-9999"
  static PortPool parse(std::string_view text);
};

struct RegistrationRequest {
  std::string topic;
  Role role = Role::Pub;
  std::string node;
  std::optional<wire::Encoding> encoding;

  nlohmann::json to_json() const;
  static RegistrationRequest from_json(const nlohmann::json& j);
};

struct RegistrationReply {
  std::string ip;
  std::uint16_t port = 0;
  wire::Encoding encoding = wire::Encoding::Json;
  bool matched = false;

  net::Endpoint endpoint() const { return {ip, port}; }
  nlohmann::json to_json() const;
  static RegistrationReply from_json(const nlohmann::json& j);
  bool operator==(const RegistrationReply&) const = default;
};

struct TopicRecord {
  std::string topic;
  net::Endpoint endpoint;
  wire::Encoding encoding = wire::Encoding::Json;
  // False until a publisher declares the encoding.
  bool encoding_fixed = false;
  std::set<std::string> publishers;
  std::set<std::string> subscribers;

  bool matched() const noexcept { return !publishers.empty() && !subscribers.empty(); }
  nlohmann::json to_json() const;
  static TopicRecord from_json(const nlohmann::json& j);
};

// Master state machine without any I/O. Not thread-safe; the server owns it
// from a single loop.
class Registry {
 public:
  using PortProbe = std::function<bool(const net::Endpoint&)>;

  Registry(std::string advertise_ip, PortPool pool, PortProbe probe = {});

  // Throws Error{InvalidTopic, BadRequest, EncodingConflict, SecondBinder,
  // PoolExhausted}.
  RegistrationReply register_topic(const RegistrationRequest& req);
  std::vector<TopicRecord> dump() const;

  // Live node names. A claim is owned by a connection id and released with it.
  void claim_node(const std::string& node, std::uint64_t owner);  // Error{DuplicateName}
  void release_owner(std::uint64_t owner);
  std::vector<std::string> live_nodes() const;

  // Applies one control-channel request and returns the reply object.
  nlohmann::json handle(const nlohmann::json& request, std::uint64_t owner);

  void reserve_port(std::uint16_t port) { reserved_.insert(port); }

 private:
  std::uint16_t allocate_port();

  std::string ip_;
  PortPool pool_;
  PortProbe probe_;
  std::uint32_t cursor_ = 0;
  std::map<std::string, TopicRecord> topics_;
  std::set<std::uint16_t> used_ports_;
  std::set<std::uint16_t> reserved_;
  std::map<std::string, std::uint64_t> claims_;
};

struct ServerOptions {
  net::Endpoint bind{"127.0.0.1", 7000};
  PortPool pool{};
  // Address handed to clients; defaults to the bind host (127.0.0.1 for 0.0.0.0).
  std::optional<std::string> advertise;
  // Skip pool ports something else already holds.
  bool probe_ports = true;
};

class MasterServer {
 public:
  // Throws Error{BindFailure}.
  explicit MasterServer(ServerOptions options);
  ~MasterServer();

  MasterServer(const MasterServer&) = delete;
  MasterServer& operator=(const MasterServer&) = delete;

  net::Endpoint endpoint() const { return endpoint_; }
  std::vector<TopicRecord> dump_state() const;
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  net::Endpoint endpoint_;
};

// Client side of the control channel. One request in flight at a time.
class MasterClient {
 public:
  // Throws Error{MasterUnreachable}.
  static MasterClient connect(const net::Endpoint& master,
                              std::chrono::milliseconds timeout = std::chrono::seconds(2));

  // Throws the Error carried by an error reply.
  RegistrationReply register_topic(const RegistrationRequest& req);
  std::vector<TopicRecord> dump();
  void claim_node(const std::string& node);

  nlohmann::json request(const nlohmann::json& req);

 private:
  explicit MasterClient(net::LineChannel ch, net::Endpoint ep)
      : channel_(std::move(ch)), endpoint_(std::move(ep)) {}

  net::LineChannel channel_;
  net::Endpoint endpoint_;
};

}  // namespace nodeprim::master
