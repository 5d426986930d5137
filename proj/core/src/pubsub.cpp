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

#include "nodeprim/pubsub.hpp"

#include <poll.h>
#include <sys/socket.h>

#include <condition_variable>
#include <deque>
#include <mutex>
#include <thread>
#include <vector>

#include <spdlog/spdlog.h>

#include "nodeprim/clock.hpp"
#include "nodeprim/error.hpp"
#include "nodeprim/master.hpp"

namespace nodeprim::pubsub {

using namespace std::chrono;

namespace {

// A subscriber never writes, so a readable channel means it hung up.
bool peer_gone(const net::Socket& s) {
  pollfd p{s.fd(), POLLIN | POLLRDHUP, 0};
  if (::poll(&p, 1, 0) <= 0) return false;
  return (p.revents & (POLLRDHUP | POLLHUP | POLLERR | POLLIN)) != 0;
}

}  // namespace

// ---------------------------------------------------------------------------
// Publisher

struct Publisher::Impl {
  std::string topic;
  std::string node;
  wire::Encoding encoding;
  net::Endpoint endpoint;
  net::Socket listener;

  mutable std::mutex mu;
  mutable std::condition_variable cv;
  std::vector<net::Socket> channels;
  std::jthread acceptor;

  void accept_loop(std::stop_token stop) {
    while (!stop.stop_requested()) {
      auto s = net::accept_for(listener, milliseconds(50));
      if (!s) continue;
      std::lock_guard lock(mu);
      channels.push_back(std::move(s));
      cv.notify_all();
    }
  }
};

Publisher::Publisher(std::string topic, std::string node, wire::Encoding encoding,
                     const net::Endpoint& master)
    : impl_(std::make_unique<Impl>()) {
  wire::validate_topic(topic);
  auto client = master::MasterClient::connect(master);
  master::RegistrationRequest req{topic, master::Role::Pub, node, encoding};
  auto reply = client.register_topic(req);
  impl_->topic = std::move(topic);
  impl_->node = std::move(node);
  impl_->encoding = encoding;
  impl_->endpoint = reply.endpoint();
  impl_->listener = net::listen_tcp(impl_->endpoint);
  impl_->acceptor = std::jthread([impl = impl_.get()](std::stop_token st) { impl->accept_loop(st); });
}

Publisher::~Publisher() = default;
Publisher::Publisher(Publisher&&) noexcept = default;
Publisher& Publisher::operator=(Publisher&&) noexcept = default;

void Publisher::send_info(const wire::Payload& payload) {
  const bool is_doc = std::holds_alternative<wire::Document>(payload);
  if (is_doc != (impl_->encoding == wire::Encoding::Json)) {
    throw Error(Errc::EncodingMismatch,
                std::string(is_doc ? "document" : "raw text") + " payload on " +
                    std::string(wire::to_string(impl_->encoding)) + " topic '" + impl_->topic + "'");
  }
  const auto frame = wire::encode_frame(impl_->topic, wire::encode_payload(payload));
  const bool tracked = Activity::tracks(impl_->topic);

  std::lock_guard lock(impl_->mu);
  auto& chans = impl_->channels;
  std::erase_if(chans, [](const net::Socket& s) { return peer_gone(s); });
  if (tracked) Activity::sent(chans.size());
  std::size_t failed = 0;
  std::erase_if(chans, [&](net::Socket& s) {
    if (s.send_all(frame)) return false;
    ++failed;
    return true;
  });
  if (tracked) Activity::dropped(failed);
}

const std::string& Publisher::topic() const { return impl_->topic; }
wire::Encoding Publisher::encoding() const { return impl_->encoding; }
net::Endpoint Publisher::endpoint() const { return impl_->endpoint; }

std::size_t Publisher::subscriber_count() const {
  std::lock_guard lock(impl_->mu);
  return impl_->channels.size();
}

bool Publisher::wait_for_subscribers(std::size_t n, milliseconds timeout) const {
  std::unique_lock lock(impl_->mu);
  return impl_->cv.wait_for(lock, timeout, [&] { return impl_->channels.size() >= n; });
}

// ---------------------------------------------------------------------------
// Subscriber

struct Subscriber::Impl {
  std::string topic;
  std::string node;
  milliseconds default_timeout;
  net::Endpoint endpoint;
  std::optional<master::MasterClient> master;

  mutable std::mutex mu;
  mutable std::condition_variable cv;
  struct Queued {
    wire::Payload payload;
    bool counted = false;
  };
  std::deque<Queued> queue;
  std::thread::id consumer;
  wire::Encoding encoding = wire::Encoding::Json;
  bool connected = false;
  bool closed = false;
  bool stopping = false;
  int live_fd = -1;
  std::size_t rejected = 0;
  std::jthread reader;

  void reject() {
    std::lock_guard lock(mu);
    ++rejected;
  }

  void read_loop(std::stop_token stop) {
    std::optional<net::Socket> sock;
    while (!stop.stop_requested()) {
      sock = net::connect_tcp(endpoint, milliseconds(500));
      if (sock) break;
      std::unique_lock lock(mu);
      cv.wait_for(lock, kReconnectInterval, [&] { return stopping; });
    }
    if (!sock) return;

    // Learn the encoding the publisher fixed, in case we registered first.
    wire::Encoding enc = encoding;
    try {
      auto reply = master->register_topic({topic, master::Role::Sub, node, std::nullopt});
      enc = reply.encoding;
    } catch (const Error& e) {
      spdlog::warn("subscriber {}: could not refresh encoding: {}", topic, e.what());
    }
    {
      std::lock_guard lock(mu);
      if (stopping) return;
      encoding = enc;
      connected = true;
      live_fd = sock->fd();
      cv.notify_all();
    }

    net::SocketSource source(*sock);
    wire::FrameReader frames(source);
    for (;;) {
      const bool tracked = Activity::tracks(topic);
      std::optional<wire::Frame> frame;
      try {
        frame = frames.next();
      } catch (const Error& e) {
        if (!stop.stop_requested()) spdlog::warn("subscriber {}: {}", topic, e.what());
      }
      if (!frame) break;
      if (frame->topic != topic) {
        if (tracked) Activity::dropped();
        reject();
        continue;
      }
      try {
        auto payload = wire::decode_payload(frame->payload, enc);
        std::lock_guard lock(mu);
        queue.push_back({std::move(payload), tracked});
        if (tracked) Activity::queued(this);
        cv.notify_all();
      } catch (const Error& e) {
        spdlog::warn("subscriber {}: dropping frame: {}", topic, e.what());
        if (tracked) Activity::dropped();
        reject();
      }
    }
    std::lock_guard lock(mu);
    live_fd = -1;
    closed = true;
    cv.notify_all();
  }
};

Subscriber::Subscriber(std::string topic, std::string node, const net::Endpoint& master,
                       milliseconds default_timeout)
    : impl_(std::make_unique<Impl>()) {
  wire::validate_topic(topic);
  impl_->master.emplace(master::MasterClient::connect(master));
  auto reply = impl_->master->register_topic({topic, master::Role::Sub, node, std::nullopt});
  impl_->topic = std::move(topic);
  impl_->node = std::move(node);
  impl_->default_timeout = default_timeout;
  impl_->endpoint = reply.endpoint();
  impl_->encoding = reply.encoding;
  impl_->reader = std::jthread([impl = impl_.get()](std::stop_token st) { impl->read_loop(st); });
}

Subscriber::~Subscriber() {
  if (!impl_) return;
  {
    std::lock_guard lock(impl_->mu);
    impl_->stopping = true;
    if (impl_->live_fd >= 0) ::shutdown(impl_->live_fd, SHUT_RDWR);
    impl_->cv.notify_all();
  }
  impl_->reader.request_stop();
  if (impl_->reader.joinable()) impl_->reader.join();
  Activity::queue_gone(impl_.get());
}

Subscriber::Subscriber(Subscriber&&) noexcept = default;
Subscriber& Subscriber::operator=(Subscriber&& other) noexcept {
  if (this != &other) {
    Subscriber dying(std::move(*this));
    impl_ = std::move(other.impl_);
  }
  return *this;
}

ListenResult Subscriber::listen_info(bool block, std::optional<milliseconds> timeout) {
  Activity::release_held();
  auto& s = *impl_;
  std::unique_lock lock(s.mu);
  if (s.consumer != std::this_thread::get_id()) {
    s.consumer = std::this_thread::get_id();
    Activity::bind_queue(&s);
  }
  auto ready = [&] { return !s.queue.empty() || s.closed; };
  if (block) {
    Activity::Park park(&s);
    s.cv.wait(lock, ready);
  } else {
    s.cv.wait_for(lock, timeout.value_or(s.default_timeout), ready);
  }
  if (!s.queue.empty()) {
    auto item = std::move(s.queue.front());
    s.queue.pop_front();
    if (item.counted) {
      Activity::dequeued(&s);
      Activity::adopt();
    }
    return ListenResult{true, std::move(item.payload)};
  }
  if (s.closed) throw Error(Errc::ChannelClosed, "publisher of '" + s.topic + "' went away");
  return {};
}

const std::string& Subscriber::topic() const { return impl_->topic; }

wire::Encoding Subscriber::encoding() const {
  std::lock_guard lock(impl_->mu);
  return impl_->encoding;
}

bool Subscriber::connected() const {
  std::lock_guard lock(impl_->mu);
  return impl_->connected && !impl_->closed;
}

bool Subscriber::wait_connected(milliseconds timeout) const {
  std::unique_lock lock(impl_->mu);
  return impl_->cv.wait_for(lock, timeout, [&] { return impl_->connected || impl_->closed; }) &&
         !impl_->closed;
}

std::size_t Subscriber::queued() const {
  std::lock_guard lock(impl_->mu);
  return impl_->queue.size();
}

std::size_t Subscriber::rejected() const {
  std::lock_guard lock(impl_->mu);
  return impl_->rejected;
}

}  // namespace nodeprim::pubsub
