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

// Topic publishers and subscribers. Both register with the master on
// construction; the publisher then binds the topic's endpoint and every
// subscriber connects to it.

#include <chrono>
#include <cstddef>
#include <memory>
#include <optional>
#include <string>

#include "nodeprim/net.hpp"
#include "nodeprim/wire.hpp"

namespace nodeprim::pubsub {

inline constexpr std::chrono::milliseconds kDefaultListenTimeout{100};
inline constexpr std::chrono::milliseconds kReconnectInterval{250};

class Publisher {
 public:
  // Throws Error{MasterUnreachable, EncodingConflict, SecondBinder, InvalidTopic,
  // PoolExhausted, BindFailure}.
  Publisher(std::string topic, std::string node, wire::Encoding encoding,
            const net::Endpoint& master);
  ~Publisher();

  Publisher(Publisher&&) noexcept;
  Publisher& operator=(Publisher&&) noexcept;

  // Writes one frame to every connected subscriber. With nobody connected the
  // message is dropped. Throws Error{EncodingMismatch}.
  void send_info(const wire::Payload& payload);
  void send_info(const wire::Document& doc) { send_info(wire::Payload(std::in_place_index<0>, doc)); }

  const std::string& topic() const;
  wire::Encoding encoding() const;
  net::Endpoint endpoint() const;

  std::size_t subscriber_count() const;
  bool wait_for_subscribers(std::size_t n, std::chrono::milliseconds timeout) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

struct ListenResult {
  bool success = false;
  std::optional<wire::Payload> payload;
};

class Subscriber {
 public:
  // Returns as soon as the master answered; the data-plane connection is made
  // in the background and retried every 250 ms. Throws Error{MasterUnreachable}.
  Subscriber(std::string topic, std::string node, const net::Endpoint& master,
             std::chrono::milliseconds default_timeout = kDefaultListenTimeout);
  ~Subscriber();

  Subscriber(Subscriber&&) noexcept;
  Subscriber& operator=(Subscriber&&) noexcept;

  // block=true waits for a message; otherwise waits at most `timeout` (the
  // subscriber default when absent). Throws Error{ChannelClosed} once the
  // publisher has gone away and nothing is left in the queue.
  ListenResult listen_info(bool block = true,
                           std::optional<std::chrono::milliseconds> timeout = std::nullopt);

  const std::string& topic() const;
  // The topic's encoding as last reported by the master.
  wire::Encoding encoding() const;
  bool connected() const;
  bool wait_connected(std::chrono::milliseconds timeout) const;
  std::size_t queued() const;
  // Frames dropped because they did not decode or named another topic.
  std::size_t rejected() const;
  // Identifies this subscriber's receive queue to Activity::Park.
  const void* activity_key() const noexcept { return impl_.get(); }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace nodeprim::pubsub
