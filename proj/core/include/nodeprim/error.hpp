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

#include <stdexcept>
#include <string>
#include <string_view>

namespace nodeprim {

// Every failure surfaced by the library carries one of these codes. The
// names double as the `error` field of master replies and gateway bodies.
enum class Errc {
  // wire
  InvalidTopic,
  Oversize,
  Truncated,
  NoSeparator,
  BadUtf8,
  Unserializable,
  MalformedJson,
  // master
  BindFailure,
  EncodingConflict,
  SecondBinder,
  PoolExhausted,
  BadRequest,
  // pubsub
  MasterUnreachable,
  EncodingMismatch,
  ChannelClosed,
  // node
  DuplicateName,
  SpawnFailure,
  // behavior
  Timeout,
  EngineRunning,
  SchemaViolation,
  UnknownRobot,
  // sim
  ScriptOrder,
  InvalidConfig,
};

std::string_view to_string(Errc code) noexcept;
Errc errc_from_string(std::string_view name, Errc fallback = Errc::BadRequest) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, std::string detail);

  Errc code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  Errc code_;
  std::string detail_;
};

// Error raised for ProgramDoc validation; `path` is a JSON pointer.
class SchemaError : public Error {
 public:
  SchemaError(Errc code, std::string path, std::string detail);

  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

}  // namespace nodeprim
