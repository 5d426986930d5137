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

#include "nodeprim/net.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <cstring>

#include "nodeprim/error.hpp"

namespace nodeprim::net {

using namespace std::chrono;

Endpoint parse_endpoint(std::string_view text) {
  const auto colon = text.rfind(':');
  if (colon == std::string_view::npos || colon == 0) {
    throw Error(Errc::BadRequest, "endpoint '" + std::string(text) + "' is not host:port");
  }
  unsigned value = 0;
  const auto port = text.substr(colon + 1);
  auto [ptr, ec] = std::from_chars(port.data(), port.data() + port.size(), value);
  if (ec != std::errc{} || ptr != port.data() + port.size() || value > 65535) {
    throw Error(Errc::BadRequest, "bad port in '" + std::string(text) + "'");
  }
  return Endpoint{std::string(text.substr(0, colon)), static_cast<std::uint16_t>(value)};
}

namespace {

sockaddr_in to_sockaddr(const Endpoint& ep) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(ep.port);
  std::string host = ep.host == "localhost" ? "127.0.0.1" : ep.host;
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    throw Error(Errc::BadRequest, "host '" + ep.host + "' is not an IPv4 address");
  }
  return addr;
}

int poll_one(int fd, short events, milliseconds timeout) {
  pollfd p{fd, events, 0};
  for (;;) {
    int rc = ::poll(&p, 1, static_cast<int>(timeout.count()));
    if (rc < 0 && errno == EINTR) continue;
    return rc;
  }
}

}  // namespace

Socket& Socket::operator=(Socket&& other) noexcept {
  if (this != &other) {
    close();
    fd_ = other.release();
  }
  return *this;
}

int Socket::release() noexcept {
  int fd = fd_;
  fd_ = -1;
  return fd;
}

void Socket::close() noexcept {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

void Socket::shutdown() noexcept {
  if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

bool Socket::send_all(std::span<const std::uint8_t> data) noexcept {
  std::size_t sent = 0;
  while (sent < data.size()) {
    ssize_t n = ::send(fd_, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    sent += static_cast<std::size_t>(n);
  }
  return true;
}

bool Socket::send_all(std::string_view data) noexcept {
  return send_all(std::span<const std::uint8_t>(
      reinterpret_cast<const std::uint8_t*>(data.data()), data.size()));
}

long Socket::recv_some(std::span<std::uint8_t> out) noexcept {
  for (;;) {
    ssize_t n = ::recv(fd_, out.data(), out.size(), 0);
    if (n < 0 && errno == EINTR) continue;
    return static_cast<long>(n);
  }
}

Socket listen_tcp(const Endpoint& at, int backlog) {
  Socket s(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
  if (!s) throw Error(Errc::BindFailure, std::strerror(errno));
  int one = 1;
  ::setsockopt(s.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  auto addr = to_sockaddr(at);
  if (::bind(s.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
    throw Error(Errc::BindFailure, at.str() + ": " + std::strerror(errno));
  }
  if (::listen(s.fd(), backlog) != 0) {
    throw Error(Errc::BindFailure, at.str() + ": " + std::strerror(errno));
  }
  return s;
}

std::uint16_t local_port(const Socket& s) {
  sockaddr_in addr{};
  socklen_t len = sizeof addr;
  ::getsockname(s.fd(), reinterpret_cast<sockaddr*>(&addr), &len);
  return ntohs(addr.sin_port);
}

Socket accept_for(const Socket& listener, milliseconds timeout) {
  if (poll_one(listener.fd(), POLLIN, timeout) <= 0) return {};
  int fd = ::accept4(listener.fd(), nullptr, nullptr, SOCK_CLOEXEC);
  if (fd < 0) return {};
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  return Socket(fd);
}

std::optional<Socket> connect_tcp(const Endpoint& to, milliseconds timeout) {
  auto addr = to_sockaddr(to);
  Socket s(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC | SOCK_NONBLOCK, 0));
  if (!s) return std::nullopt;
  int rc = ::connect(s.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof addr);
  if (rc != 0) {
    if (errno != EINPROGRESS) return std::nullopt;
    if (poll_one(s.fd(), POLLOUT, timeout) <= 0) return std::nullopt;
    int err = 0;
    socklen_t len = sizeof err;
    ::getsockopt(s.fd(), SOL_SOCKET, SO_ERROR, &err, &len);
    if (err != 0) return std::nullopt;
  }
  int flags = ::fcntl(s.fd(), F_GETFL);
  ::fcntl(s.fd(), F_SETFL, flags & ~O_NONBLOCK);
  int one = 1;
  ::setsockopt(s.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  return s;
}

bool port_is_free(const Endpoint& at) {
  try {
    Socket s(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
    int one = 1;
    ::setsockopt(s.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    auto addr = to_sockaddr(at);
    if (::bind(s.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) == 0) return true;
    // A non-local advertise address cannot be probed; assume it is usable.
    return errno == EADDRNOTAVAIL;
  } catch (const Error&) {
    return false;
  }
}

bool wait_readable(const Socket& s, milliseconds timeout) {
  return poll_one(s.fd(), POLLIN, timeout) > 0;
}

std::size_t SocketSource::read_some(std::span<std::uint8_t> out) {
  long n = socket_.recv_some(out);
  return n > 0 ? static_cast<std::size_t>(n) : 0;
}

bool LineChannel::write_line(std::string_view line) {
  std::string buf;
  buf.reserve(line.size() + 1);
  buf.append(line);
  buf.push_back('\n');
  return socket_.send_all(buf);
}

std::optional<std::string> LineChannel::pop_line() {
  auto nl = buffer_.find('\n');
  if (nl == std::string::npos) return std::nullopt;
  std::string line = buffer_.substr(0, nl);
  buffer_.erase(0, nl + 1);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

bool LineChannel::pump() {
  std::uint8_t chunk[4096];
  for (;;) {
    if (poll_one(socket_.fd(), POLLIN, milliseconds(0)) <= 0) return true;
    long n = socket_.recv_some(chunk);
    if (n <= 0) return false;
    buffer_.append(reinterpret_cast<const char*>(chunk), static_cast<std::size_t>(n));
  }
}

std::optional<std::string> LineChannel::read_line(std::optional<milliseconds> timeout) {
  const auto deadline = steady_clock::now() + timeout.value_or(milliseconds(0));
  std::uint8_t chunk[4096];
  for (;;) {
    if (auto line = pop_line()) return line;
    if (timeout) {
      auto left = duration_cast<milliseconds>(deadline - steady_clock::now());
      if (left.count() < 0 || poll_one(socket_.fd(), POLLIN, left) <= 0) return std::nullopt;
    }
    long n = socket_.recv_some(chunk);
    if (n <= 0) return std::nullopt;
    buffer_.append(reinterpret_cast<const char*>(chunk), static_cast<std::size_t>(n));
  }
}

}  // namespace nodeprim::net
