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

#include "nodeprim/wire.hpp"

#include <algorithm>
#include <cmath>

#include "nodeprim/error.hpp"

namespace nodeprim::wire {

std::string_view to_string(Encoding e) noexcept {
  return e == Encoding::Json ? "json" : "string";
}

Encoding parse_encoding(std::string_view s) {
  if (s == "json") return Encoding::Json;
  if (s == "string") return Encoding::String;
  throw Error(Errc::BadRequest, "unknown encoding '" + std::string(s) + "'");
}

bool is_valid_topic(std::string_view topic) noexcept {
  if (topic.empty()) return false;
  return std::all_of(topic.begin(), topic.end(), [](char c) {
    auto b = static_cast<unsigned char>(c);
    return b >= 0x21 && b <= 0x7E;
  });
}

void validate_topic(std::string_view topic) {
  if (topic.empty()) throw Error(Errc::InvalidTopic, "topic is empty");
  if (!is_valid_topic(topic)) {
    throw Error(Errc::InvalidTopic,
                "topic '" + std::string(topic) + "' has space, control or non-ASCII bytes");
  }
}

bool is_valid_utf8(std::string_view s) noexcept {
  std::size_t i = 0;
  const std::size_t n = s.size();
  while (i < n) {
    auto c = static_cast<unsigned char>(s[i]);
    std::size_t len;
    std::uint32_t cp;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c & 0xE0) == 0xC0) {
      len = 2;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      len = 4;
      cp = c & 0x07;
    } else {
      return false;
    }
    if (i + len > n) return false;
    for (std::size_t k = 1; k < len; ++k) {
      auto cc = static_cast<unsigned char>(s[i + k]);
      if ((cc & 0xC0) != 0x80) return false;
      cp = (cp << 6) | (cc & 0x3F);
    }
    // Overlong forms, surrogates and out-of-range code points.
    if ((len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) || (len == 4 && cp < 0x10000) ||
        cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
      return false;
    }
    i += len;
  }
  return true;
}

Bytes encode_frame(std::string_view topic, ByteView payload) {
  validate_topic(topic);
  const std::uint64_t body = topic.size() + 1 + payload.size();
  if (body > kMaxBody) {
    throw Error(Errc::Oversize, "frame body of " + std::to_string(body) + " bytes");
  }
  Bytes out;
  out.reserve(kLengthFieldSize + body);
  const auto len = static_cast<std::uint32_t>(body);
  out.push_back(static_cast<std::uint8_t>(len >> 24));
  out.push_back(static_cast<std::uint8_t>(len >> 16));
  out.push_back(static_cast<std::uint8_t>(len >> 8));
  out.push_back(static_cast<std::uint8_t>(len));
  out.insert(out.end(), topic.begin(), topic.end());
  out.push_back(0x20);
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

Frame parse_body(ByteView body) {
  auto sep = std::find(body.begin(), body.end(), std::uint8_t{0x20});
  if (sep == body.end()) throw Error(Errc::NoSeparator, "frame body has no 0x20 separator");
  std::string topic(body.begin(), sep);
  if (!is_valid_utf8(topic)) throw Error(Errc::BadUtf8, "topic bytes are not valid UTF-8");
  validate_topic(topic);
  return Frame{std::move(topic), Bytes(sep + 1, body.end())};
}

std::size_t SpanSource::read_some(std::span<std::uint8_t> out) {
  const std::size_t n = std::min(out.size(), remaining());
  std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(pos_), n, out.begin());
  pos_ += n;
  return n;
}

std::size_t FrameReader::fill(std::span<std::uint8_t> out) {
  std::size_t got = 0;
  while (got < out.size()) {
    const std::size_t n = source_.read_some(out.subspan(got));
    if (n == 0) break;
    got += n;
  }
  return got;
}

std::optional<Frame> FrameReader::next() {
  std::uint8_t header[kLengthFieldSize];
  const std::size_t got = fill(header);
  if (got == 0) return std::nullopt;
  if (got < kLengthFieldSize) throw Error(Errc::Truncated, "stream ended inside a length field");
  const std::uint32_t len = (std::uint32_t{header[0]} << 24) | (std::uint32_t{header[1]} << 16) |
                            (std::uint32_t{header[2]} << 8) | std::uint32_t{header[3]};
  if (len > max_body_) {
    throw Error(Errc::Oversize, "frame body of " + std::to_string(len) + " bytes exceeds limit");
  }
  Bytes body(len);
  if (fill(body) < len) throw Error(Errc::Truncated, "stream ended inside a frame body");
  return parse_body(body);
}

Frame decode_frame(ByteSource& source) {
  FrameReader reader(source, kMaxBody);
  auto frame = reader.next();
  if (!frame) throw Error(Errc::Truncated, "stream ended before a frame");
  return std::move(*frame);
}

namespace {

void check_serializable(const Document& v) {
  if (v.is_number_float() && !std::isfinite(v.get<double>())) {
    throw Error(Errc::Unserializable, "non-finite number in document");
  }
  if (v.is_binary()) throw Error(Errc::Unserializable, "binary value in document");
  if (v.is_structured()) {
    for (const auto& child : v) check_serializable(child);
  }
}

}  // namespace

std::string canonical_json(const Document& doc) {
  check_serializable(doc);
  try {
    return doc.dump();
  } catch (const nlohmann::json::exception& e) {
    // Invalid UTF-8 inside strings.
    throw Error(Errc::Unserializable, e.what());
  }
}

Bytes encode_payload(const Payload& payload) {
  if (const auto* raw = std::get_if<RawText>(&payload)) return to_bytes(raw->text);
  const auto& doc = std::get<Document>(payload);
  if (doc.is_null()) return to_bytes("{}");
  if (!doc.is_object()) throw Error(Errc::Unserializable, "document payload must be an object");
  return to_bytes(canonical_json(doc));
}

Payload decode_payload(ByteView bytes, Encoding encoding) {
  if (encoding == Encoding::String) return RawText{to_string(bytes)};
  auto doc = Document::parse(bytes.begin(), bytes.end(), nullptr, /*allow_exceptions=*/false);
  if (doc.is_discarded() || !doc.is_object()) {
    throw Error(Errc::MalformedJson, "payload is not a JSON object");
  }
  return doc;
}

}  // namespace nodeprim::wire
