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

#include "nodeprim/master.hpp"

#include <fcntl.h>
#include <poll.h>
#include <unistd.h>

#include <charconv>
#include <cstring>
#include <list>
#include <mutex>
#include <thread>

#include <spdlog/spdlog.h>

#include "nodeprim/error.hpp"

namespace nodeprim::master {

using json = nlohmann::json;
using namespace std::chrono;

std::string_view to_string(Role r) noexcept { return r == Role::Pub ? "pub" : "sub"; }

PortPool PortPool::parse(std::string_view text) {
  auto dash = text.find('-');
  if (dash == std::string_view::npos) throw Error(Errc::BadRequest, "port range must be A-B");
  auto num = [&](std::string_view s) {
    unsigned v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size() || v > 65535) {
      throw Error(Errc::BadRequest, "bad port '" + std::string(s) + "'");
    }
    return static_cast<std::uint16_t>(v);
  };
  return PortPool{num(text.substr(0, dash)), num(text.substr(dash + 1))};
}

json RegistrationRequest::to_json() const {
  json j{{"op", "register"}, {"topic", topic}, {"role", to_string(role)}, {"node", node}};
  if (encoding) j["encoding"] = wire::to_string(*encoding);
  return j;
}

RegistrationRequest RegistrationRequest::from_json(const json& j) {
  auto str = [&](const char* key) {
    auto it = j.find(key);
    if (it == j.end() || !it->is_string()) {
      throw Error(Errc::BadRequest, std::string("missing string field '") + key + "'");
    }
    return it->get<std::string>();
  };
  RegistrationRequest r;
  r.topic = str("topic");
  const auto role = str("role");
  if (role == "pub") {
    r.role = Role::Pub;
  } else if (role == "sub") {
    r.role = Role::Sub;
  } else {
    throw Error(Errc::BadRequest, "role must be pub or sub");
  }
  r.node = str("node");
  if (auto it = j.find("encoding"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) throw Error(Errc::BadRequest, "encoding must be a string");
    r.encoding = wire::parse_encoding(it->get<std::string>());
  }
  return r;
}

json RegistrationReply::to_json() const {
  return json{{"status", "ok"},
              {"ip", ip},
              {"port", port},
              {"encoding", wire::to_string(encoding)},
              {"matched", matched}};
}

RegistrationReply RegistrationReply::from_json(const json& j) {
  RegistrationReply r;
  r.ip = j.at("ip").get<std::string>();
  r.port = j.at("port").get<std::uint16_t>();
  r.encoding = wire::parse_encoding(j.at("encoding").get<std::string>());
  r.matched = j.at("matched").get<bool>();
  return r;
}

json TopicRecord::to_json() const {
  return json{{"topic", topic},
              {"ip", endpoint.host},
              {"port", endpoint.port},
              {"encoding", wire::to_string(encoding)},
              {"encoding_fixed", encoding_fixed},
              {"publishers", publishers},
              {"subscribers", subscribers},
              {"matched", matched()}};
}

TopicRecord TopicRecord::from_json(const json& j) {
  TopicRecord r;
  r.topic = j.at("topic").get<std::string>();
  r.endpoint = {j.at("ip").get<std::string>(), j.at("port").get<std::uint16_t>()};
  r.encoding = wire::parse_encoding(j.at("encoding").get<std::string>());
  r.encoding_fixed = j.value("encoding_fixed", true);
  r.publishers = j.at("publishers").get<std::set<std::string>>();
  r.subscribers = j.at("subscribers").get<std::set<std::string>>();
  return r;
}

// ---------------------------------------------------------------------------
// Registry

Registry::Registry(std::string advertise_ip, PortPool pool, PortProbe probe)
    : ip_(std::move(advertise_ip)), pool_(pool), probe_(std::move(probe)) {}

std::uint16_t Registry::allocate_port() {
  const std::size_t n = pool_.size();
  for (std::size_t tried = 0; tried < n; ++tried) {
    const auto port = static_cast<std::uint16_t>(pool_.first + (cursor_ + tried) % n);
    if (used_ports_.count(port) || reserved_.count(port)) continue;
    if (probe_ && !probe_(net::Endpoint{ip_, port})) continue;
    cursor_ = static_cast<std::uint32_t>((cursor_ + tried + 1) % n);
    return port;
  }
  throw Error(Errc::PoolExhausted, "no free port left in " + std::to_string(pool_.first) + "-" +
                                       std::to_string(pool_.last));
}

RegistrationReply Registry::register_topic(const RegistrationRequest& req) {
  wire::validate_topic(req.topic);
  if (req.node.empty()) throw Error(Errc::BadRequest, "node name is empty");
  if (req.role == Role::Pub && !req.encoding) {
    throw Error(Errc::BadRequest, "publisher registration needs an encoding");
  }

  auto it = topics_.find(req.topic);
  if (it != topics_.end() && req.role == Role::Pub) {
    const auto& rec = it->second;
    if (rec.encoding_fixed && rec.encoding != *req.encoding) {
      throw Error(Errc::EncodingConflict, "topic '" + req.topic + "' is " +
                                              std::string(wire::to_string(rec.encoding)));
    }
    if (!rec.publishers.empty() && !rec.publishers.count(req.node)) {
      throw Error(Errc::SecondBinder,
                  "topic '" + req.topic + "' is already published by " + *rec.publishers.begin());
    }
  }

  if (it == topics_.end()) {
    TopicRecord rec;
    rec.topic = req.topic;
    rec.endpoint = net::Endpoint{ip_, allocate_port()};
    rec.encoding = req.encoding.value_or(wire::Encoding::Json);
    used_ports_.insert(rec.endpoint.port);
    it = topics_.emplace(req.topic, std::move(rec)).first;
  }

  auto& rec = it->second;
  if (req.role == Role::Pub) {
    rec.publishers.insert(req.node);
    rec.encoding = *req.encoding;
    rec.encoding_fixed = true;
  } else {
    rec.subscribers.insert(req.node);
  }

  RegistrationReply reply;
  reply.ip = rec.endpoint.host;
  reply.port = rec.endpoint.port;
  reply.encoding = rec.encoding;
  reply.matched = rec.matched();
  return reply;
}

std::vector<TopicRecord> Registry::dump() const {
  std::vector<TopicRecord> out;
  out.reserve(topics_.size());
  for (const auto& [_, rec] : topics_) out.push_back(rec);
  return out;
}

void Registry::claim_node(const std::string& node, std::uint64_t owner) {
  if (node.empty()) throw Error(Errc::BadRequest, "node name is empty");
  auto it = claims_.find(node);
  if (it != claims_.end() && it->second != owner) {
    throw Error(Errc::DuplicateName, "node '" + node + "' is already running");
  }
  claims_[node] = owner;
}

void Registry::release_owner(std::uint64_t owner) {
  std::erase_if(claims_, [&](const auto& kv) { return kv.second == owner; });
}

std::vector<std::string> Registry::live_nodes() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : claims_) out.push_back(name);
  return out;
}

json Registry::handle(const json& request, std::uint64_t owner) {
  try {
    if (!request.is_object()) throw Error(Errc::BadRequest, "request must be a JSON object");
    const auto op = request.value("op", std::string{});
    if (op == "register") return register_topic(RegistrationRequest::from_json(request)).to_json();
    if (op == "dump") {
      json topics = json::array();
      for (const auto& rec : dump()) topics.push_back(rec.to_json());
      return json{{"status", "ok"}, {"topics", topics}, {"nodes", live_nodes()}};
    }
    if (op == "claim") {
      auto it = request.find("node");
      if (it == request.end() || !it->is_string()) throw Error(Errc::BadRequest, "claim needs node");
      claim_node(it->get<std::string>(), owner);
      return json{{"status", "ok"}};
    }
    throw Error(Errc::BadRequest, "unknown op '" + op + "'");
  } catch (const Error& e) {
    return json{{"status", "error"}, {"error", to_string(e.code())}, {"detail", e.detail()}};
  } catch (const json::exception& e) {
    return json{{"status", "error"}, {"error", "BadRequest"}, {"detail", e.what()}};
  }
}

// ---------------------------------------------------------------------------
// MasterServer

struct MasterServer::Impl {
  struct Conn {
    std::uint64_t id;
    net::LineChannel channel;
  };

  net::Socket listener;
  int wake[2] = {-1, -1};
  mutable std::mutex mu;  // guards registry between the loop and dump_state()
  Registry registry;
  std::list<Conn> conns;
  std::uint64_t next_id = 1;
  std::jthread loop;

  Impl(net::Socket l, Registry r) : listener(std::move(l)), registry(std::move(r)) {
    if (::pipe2(wake, O_CLOEXEC) != 0) throw Error(Errc::BindFailure, "pipe2 failed");
  }
  ~Impl() {
    for (int fd : wake) if (fd >= 0) ::close(fd);
  }

  void run(std::stop_token stop) {
    std::vector<pollfd> fds;
    while (!stop.stop_requested()) {
      fds.clear();
      fds.push_back({wake[0], POLLIN, 0});
      fds.push_back({listener.fd(), POLLIN, 0});
      for (auto& c : conns) fds.push_back({c.channel.socket().fd(), POLLIN, 0});
      int rc = ::poll(fds.data(), fds.size(), 500);
      if (rc < 0) {
        if (errno == EINTR) continue;
        spdlog::error("master: poll failed: {}", std::strerror(errno));
        return;
      }
      if (fds[0].revents) return;
      if (fds[1].revents & POLLIN) {
        if (auto s = net::accept_for(listener, milliseconds(0))) {
          conns.push_back(Conn{next_id++, net::LineChannel(std::move(s))});
        }
      }
      // Requests are applied strictly one at a time, in the order read.
      std::size_t idx = 2;
      for (auto it = conns.begin(); it != conns.end(); ++idx) {
        bool alive = true;
        if (idx < fds.size() && fds[idx].revents) {
          alive = it->channel.pump();
          while (auto line = it->channel.pop_line()) {
            if (line->empty()) continue;
            json reply;
            {
              std::lock_guard lock(mu);
              json req = json::parse(*line, nullptr, false);
              reply = req.is_discarded()
                          ? json{{"status", "error"}, {"error", "BadRequest"}, {"detail", "not JSON"}}
                          : registry.handle(req, it->id);
            }
            if (!it->channel.write_line(reply.dump())) alive = false;
          }
        }
        if (!alive) {
          std::lock_guard lock(mu);
          registry.release_owner(it->id);
          it = conns.erase(it);
        } else {
          ++it;
        }
      }
    }
  }
};

namespace {
std::string advertise_for(const ServerOptions& o) {
  if (o.advertise) return *o.advertise;
  return o.bind.host == "0.0.0.0" ? "127.0.0.1" : o.bind.host;
}
}  // namespace

MasterServer::MasterServer(ServerOptions options) {
  auto listener = net::listen_tcp(options.bind);
  endpoint_ = net::Endpoint{advertise_for(options), net::local_port(listener)};
  Registry::PortProbe probe;
  if (options.probe_ports) probe = [](const net::Endpoint& ep) { return net::port_is_free(ep); };
  Registry registry(endpoint_.host, options.pool, std::move(probe));
  registry.reserve_port(endpoint_.port);
  impl_ = std::make_unique<Impl>(std::move(listener), std::move(registry));
  impl_->loop = std::jthread([impl = impl_.get()](std::stop_token st) { impl->run(st); });
  spdlog::debug("master listening on {}", endpoint_.str());
}

MasterServer::~MasterServer() { stop(); }

void MasterServer::stop() {
  if (!impl_ || !impl_->loop.joinable()) return;
  impl_->loop.request_stop();
  char b = 1;
  [[maybe_unused]] auto n = ::write(impl_->wake[1], &b, 1);
  impl_->loop.join();
  impl_->conns.clear();
  impl_->listener.close();
}

std::vector<TopicRecord> MasterServer::dump_state() const {
  std::lock_guard lock(impl_->mu);
  return impl_->registry.dump();
}

// ---------------------------------------------------------------------------
// MasterClient

MasterClient MasterClient::connect(const net::Endpoint& master, milliseconds timeout) {
  auto s = net::connect_tcp(master, timeout);
  if (!s) throw Error(Errc::MasterUnreachable, "no master at " + master.str());
  return MasterClient(net::LineChannel(std::move(*s)), master);
}

json MasterClient::request(const json& req) {
  if (!channel_.write_line(req.dump())) {
    throw Error(Errc::MasterUnreachable, "lost connection to master at " + endpoint_.str());
  }
  auto line = channel_.read_line(seconds(10));
  if (!line) throw Error(Errc::MasterUnreachable, "no reply from master at " + endpoint_.str());
  json reply = json::parse(*line, nullptr, false);
  if (reply.is_discarded() || !reply.is_object()) {
    throw Error(Errc::BadRequest, "master sent a malformed reply");
  }
  return reply;
}

namespace {

const json& check(const json& reply) {
  if (reply.value("status", "") != "ok") {
    throw Error(errc_from_string(reply.value("error", "BadRequest")), reply.value("detail", ""));
  }
  return reply;
}

}  // namespace

RegistrationReply MasterClient::register_topic(const RegistrationRequest& req) {
  return RegistrationReply::from_json(check(request(req.to_json())));
}

std::vector<TopicRecord> MasterClient::dump() {
  auto reply = request(json{{"op", "dump"}});
  std::vector<TopicRecord> out;
  for (const auto& t : check(reply).at("topics")) out.push_back(TopicRecord::from_json(t));
  return out;
}

void MasterClient::claim_node(const std::string& node) {
  check(request(json{{"op", "claim"}, {"node", node}}));
}

}  // namespace nodeprim::master
