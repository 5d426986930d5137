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

// Data-plane framing and payload codecs.
//
// A frame on the wire is
//
//   +----------------------+-------------+------+---------------+
//   | length (u32, BE)     | topic bytes | 0x20 | payload bytes |
//   +----------------------+-------------+------+---------------+
//
// where `length` counts everything after the length field. docs/wire.md has
// the byte-level walkthrough.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

namespace nodeprim::wire {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

// Key-value payload. Always a JSON object; nlohmann's default object type is
// key-ordered, which is what makes serialization canonical.
using Document = nlohmann::json;

struct RawText {
  std::string text;
  bool operator==(const RawText&) const = default;
};

using Payload = std::variant<Document, RawText>;

enum class Encoding { Json, String };

std::string_view to_string(Encoding e) noexcept;
Encoding parse_encoding(std::string_view s);  // throws Error{BadRequest}

inline constexpr std::size_t kLengthFieldSize = 4;
inline constexpr std::uint64_t kMaxBody = 0xFFFFFFFFull;

// Throws Error{InvalidTopic} unless `topic` is non-empty printable ASCII
// without spaces (0x21..0x7E).
void validate_topic(std::string_view topic);
bool is_valid_topic(std::string_view topic) noexcept;

struct Frame {
  std::string topic;
  Bytes payload;
  bool operator==(const Frame&) const = default;
};

Bytes encode_frame(std::string_view topic, ByteView payload);

// Parses one complete body (the bytes after the length field).
Frame parse_body(ByteView body);

// A pull-based byte source. read_some returns 0 only at end of stream.
class ByteSource {
 public:
  virtual ~ByteSource() = default;
  virtual std::size_t read_some(std::span<std::uint8_t> out) = 0;
};

class SpanSource final : public ByteSource {
 public:
  explicit SpanSource(ByteView data) : data_(data) {}
  std::size_t read_some(std::span<std::uint8_t> out) override;
  std::size_t remaining() const noexcept { return data_.size() - pos_; }

 private:
  ByteView data_;
  std::size_t pos_ = 0;
};

// Streaming decoder bound to one source. next() returns nullopt on a clean
// end of stream between frames and throws Error{Truncated} mid-frame.
class FrameReader {
 public:
  explicit FrameReader(ByteSource& source, std::size_t max_body = 64u << 20)
      : source_(source), max_body_(max_body) {}

  std::optional<Frame> next();

 private:
  // Returns bytes read; short only at end of stream.
  std::size_t fill(std::span<std::uint8_t> out);

  ByteSource& source_;
  std::size_t max_body_;
};

// Reads exactly one frame; a stream that ends before a frame completes (even
// at offset zero) is Error{Truncated}.
Frame decode_frame(ByteSource& source);

Bytes encode_payload(const Payload& payload);
inline Bytes encode_payload(const Document& doc) { return encode_payload(Payload(std::in_place_index<0>, doc)); }
Payload decode_payload(ByteView bytes, Encoding encoding);

// Canonical JSON text for a document: sorted keys, no whitespace. Throws
// Error{Unserializable} for non-finite numbers.
std::string canonical_json(const Document& doc);

inline Bytes to_bytes(std::string_view s) { return Bytes(s.begin(), s.end()); }
inline std::string to_string(ByteView b) { return std::string(b.begin(), b.end()); }

bool is_valid_utf8(std::string_view s) noexcept;

}  // namespace nodeprim::wire
