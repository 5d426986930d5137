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

// Thin RAII layer over POSIX TCP sockets.

#include <chrono>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "nodeprim/wire.hpp"

namespace nodeprim::net {

struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;

  std::string str() const { return host + ":" + std::to_string(port); }
  bool operator==(const Endpoint&) const = default;
};

// "host:port"; throws Error{BadRequest} on malformed input.
Endpoint parse_endpoint(std::string_view text);

class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) noexcept : fd_(fd) {}
  ~Socket() { close(); }

  Socket(Socket&& other) noexcept : fd_(other.release()) {}
  Socket& operator=(Socket&& other) noexcept;
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;

  int fd() const noexcept { return fd_; }
  bool valid() const noexcept { return fd_ >= 0; }
  explicit operator bool() const noexcept { return valid(); }
  int release() noexcept;
  void close() noexcept;
  // Wakes up any thread blocked in accept/recv on this socket.
  void shutdown() noexcept;

  // True when every byte was written.
  bool send_all(std::span<const std::uint8_t> data) noexcept;
  bool send_all(std::string_view data) noexcept;
  // Returns 0 on EOF, -1 on error.
  long recv_some(std::span<std::uint8_t> out) noexcept;

 private:
  int fd_ = -1;
};

// Binds and listens. Port 0 picks an ephemeral port. Throws Error{BindFailure}.
Socket listen_tcp(const Endpoint& at, int backlog = 64);
std::uint16_t local_port(const Socket& s);

// Waits up to `timeout` for a pending connection; empty Socket on timeout.
Socket accept_for(const Socket& listener, std::chrono::milliseconds timeout);

// nullopt when the peer refused or did not answer within `timeout`.
std::optional<Socket> connect_tcp(const Endpoint& to, std::chrono::milliseconds timeout);

// True if something could bind `at` right now.
bool port_is_free(const Endpoint& at);

// Waits until `s` is readable; false on timeout.
bool wait_readable(const Socket& s, std::chrono::milliseconds timeout);

class SocketSource final : public wire::ByteSource {
 public:
  explicit SocketSource(Socket& socket) : socket_(socket) {}
  std::size_t read_some(std::span<std::uint8_t> out) override;

 private:
  Socket& socket_;
};

// Newline-delimited text over a socket. Not thread-safe.
class LineChannel {
 public:
  LineChannel() = default;
  explicit LineChannel(Socket socket) : socket_(std::move(socket)) {}

  bool valid() const noexcept { return socket_.valid(); }
  Socket& socket() noexcept { return socket_; }

  // Appends '\n'. False if the peer is gone.
  bool write_line(std::string_view line);
  // nullopt on EOF/error or when `timeout` passes without a full line.
  std::optional<std::string> read_line(std::optional<std::chrono::milliseconds> timeout = {});
  // Drains whatever is readable without blocking into the buffer; false on EOF.
  bool pump();
  // Pops one buffered complete line.
  std::optional<std::string> pop_line();

 private:
  Socket socket_;
  std::string buffer_;
};

}  // namespace nodeprim::net
