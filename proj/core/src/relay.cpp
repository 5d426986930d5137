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

#include "nodeprim/relay.hpp"

#include <fcntl.h>
#include <poll.h>
#include <unistd.h>

#include <list>
#include <thread>

#include <spdlog/spdlog.h>

#include "nodeprim/clock.hpp"
#include "nodeprim/error.hpp"

namespace nodeprim::relay {

using json = nlohmann::json;
using namespace std::chrono;

struct LineRelay::Impl {
  RelayOptions options;
  Filter filter;
  Observer observer;
  net::Socket listener;
  net::Endpoint endpoint;
  std::optional<pubsub::Publisher> publisher;
  std::list<net::LineChannel> conns;
  std::atomic<std::size_t> accepted{0};
  std::atomic<std::size_t> rejected{0};
  int wake[2] = {-1, -1};
  std::jthread loop;

  ~Impl() {
    for (int fd : wake) if (fd >= 0) ::close(fd);
  }

  void handle_line(const std::string& line, bool tracked) {
    if (tracked) Activity::adopt();
    try {
      json in = json::parse(line);
      json out = filter ? filter(in) : in;
      if (!out.is_object()) throw Error(Errc::BadRequest, "relay lines must be JSON objects");
      if (observer) observer(out);
      publisher->send_info(out);
      ++accepted;
    } catch (const std::exception& e) {
      ++rejected;
      spdlog::warn("relay {}: rejected line: {}", options.topic, e.what());
    }
    if (tracked) Activity::release_held();
  }

  void run(std::stop_token stop) {
    std::vector<pollfd> fds;
    while (!stop.stop_requested()) {
      fds.clear();
      fds.push_back({wake[0], POLLIN, 0});
      fds.push_back({listener.fd(), POLLIN, 0});
      for (auto& c : conns) fds.push_back({c.socket().fd(), POLLIN, 0});
      int rc = ::poll(fds.data(), fds.size(), 500);
      if (rc < 0 && errno == EINTR) continue;
      if (rc < 0 || fds[0].revents) return;
      if (fds[1].revents & POLLIN) {
        if (auto s = net::accept_for(listener, milliseconds(0))) conns.emplace_back(std::move(s));
      }
      std::size_t idx = 2;
      for (auto it = conns.begin(); it != conns.end(); ++idx) {
        bool alive = true;
        if (idx < fds.size() && fds[idx].revents) {
          alive = it->pump();
          while (auto line = it->pop_line()) {
            if (!line->empty()) handle_line(*line, Activity::tracks(options.topic));
          }
        }
        it = alive ? std::next(it) : conns.erase(it);
      }
    }
  }
};

LineRelay::LineRelay(RelayOptions options, Filter filter, Observer observer)
    : impl_(std::make_unique<Impl>()) {
  impl_->options = std::move(options);
  impl_->filter = std::move(filter);
  impl_->observer = std::move(observer);
  impl_->listener = net::listen_tcp(impl_->options.bind);
  impl_->endpoint = net::Endpoint{impl_->options.bind.host == "0.0.0.0" ? "127.0.0.1"
                                                                       : impl_->options.bind.host,
                                  net::local_port(impl_->listener)};
  impl_->publisher.emplace(impl_->options.topic, impl_->options.node, wire::Encoding::Json,
                           impl_->options.master);
  if (::pipe2(impl_->wake, O_CLOEXEC) != 0) throw Error(Errc::BindFailure, "pipe2 failed");
  impl_->loop = std::jthread([impl = impl_.get()](std::stop_token st) { impl->run(st); });
}

LineRelay::~LineRelay() { stop(); }

void LineRelay::stop() {
  if (!impl_->loop.joinable()) return;
  impl_->loop.request_stop();
  char b = 1;
  [[maybe_unused]] auto n = ::write(impl_->wake[1], &b, 1);
  impl_->loop.join();
  impl_->conns.clear();
  impl_->listener.close();
}

net::Endpoint LineRelay::endpoint() const { return impl_->endpoint; }
const pubsub::Publisher& LineRelay::publisher() const { return *impl_->publisher; }
std::size_t LineRelay::accepted() const noexcept { return impl_->accepted; }
std::size_t LineRelay::rejected() const noexcept { return impl_->rejected; }

std::unique_ptr<LineRelay> make_event_sink(const net::Endpoint& bind, const net::Endpoint& master,
                                           std::function<void(const node::NodeStateEvent&)> observer,
                                           std::string node_name) {
  RelayOptions opts{bind, std::string(node::kNodeStateTopic), std::move(node_name), master};
  auto filter = [](const json& in) { return node::NodeStateEvent::from_json(in).to_json(); };
  LineRelay::Observer obs;
  if (observer) {
    obs = [observer = std::move(observer)](const json& j) {
      observer(node::NodeStateEvent::from_json(j));
    };
  }
  return std::make_unique<LineRelay>(std::move(opts), filter, std::move(obs));
}

std::unique_ptr<LineRelay> make_trigger_relay(const net::Endpoint& bind, const net::Endpoint& master,
                                              std::string topic, std::string node_name) {
  RelayOptions opts{bind, std::move(topic), std::move(node_name), master};
  return std::make_unique<LineRelay>(std::move(opts));
}

}  // namespace nodeprim::relay
