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

#include "nodeprim/error.hpp"

namespace nodeprim {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::InvalidTopic: return "InvalidTopic";
    case Errc::Oversize: return "Oversize";
    case Errc::Truncated: return "Truncated";
    case Errc::NoSeparator: return "NoSeparator";
    case Errc::BadUtf8: return "BadUtf8";
    case Errc::Unserializable: return "Unserializable";
    case Errc::MalformedJson: return "MalformedJson";
    case Errc::BindFailure: return "BindFailure";
    case Errc::EncodingConflict: return "EncodingConflict";
    case Errc::SecondBinder: return "SecondBinder";
    case Errc::PoolExhausted: return "PoolExhausted";
    case Errc::BadRequest: return "BadRequest";
    case Errc::MasterUnreachable: return "MasterUnreachable";
    case Errc::EncodingMismatch: return "EncodingMismatch";
    case Errc::ChannelClosed: return "ChannelClosed";
    case Errc::DuplicateName: return "DuplicateName";
    case Errc::SpawnFailure: return "SpawnFailure";
    case Errc::Timeout: return "Timeout";
    case Errc::EngineRunning: return "EngineRunning";
    case Errc::SchemaViolation: return "SchemaViolation";
    case Errc::UnknownRobot: return "UnknownRobot";
    case Errc::ScriptOrder: return "ScriptOrder";
    case Errc::InvalidConfig: return "InvalidConfig";
  }
  return "Unknown";
}

Errc errc_from_string(std::string_view name, Errc fallback) noexcept {
  for (int i = 0; i <= static_cast<int>(Errc::InvalidConfig); ++i) {
    if (to_string(static_cast<Errc>(i)) == name) return static_cast<Errc>(i);
  }
  return fallback;
}

Error::Error(Errc code, std::string detail)
    : std::runtime_error(std::string(to_string(code)) + ": " + detail),
      code_(code),
      detail_(std::move(detail)) {}

SchemaError::SchemaError(Errc code, std::string path, std::string detail)
    : Error(code, path + ": " + detail), path_(std::move(path)) {}

}  // namespace nodeprim
