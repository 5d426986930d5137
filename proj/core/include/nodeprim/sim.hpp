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

// Simulated robot and the scripted gesture pipeline.

#include <array>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "nodeprim/behavior.hpp"
#include "nodeprim/clock.hpp"
#include "nodeprim/launcher.hpp"
#include "nodeprim/master.hpp"
#include "nodeprim/node.hpp"

namespace nodeprim::sim {

struct SimRobotConfig {
  std::string name = "nao";
  double speech_rate = 0.06;        // seconds per character
  double posture_duration = 1.0;    // seconds
  double animation_duration = 2.0;  // seconds

  // Throws Error{InvalidConfig}.
  void validate() const;
  // Reads speech_rate / posture_duration / animation_duration overrides.
  static SimRobotConfig from_args(std::string name, const nlohmann::json& args);
};

// Number of Unicode code points; invalid bytes count one each.
std::size_t count_characters(std::string_view utf8) noexcept;

// How long `spec` keeps the robot busy.
Nanos action_duration(const SimRobotConfig& cfg, const behavior::BehaviorSpec& spec);

enum class Marker { Start, End };

struct TranscriptEntry {
  double stamp = 0.0;
  std::string robot;
  std::string id;
  std::string primitive;
  nlohmann::json args = nlohmann::json::object();
  Marker marker = Marker::Start;

  nlohmann::json to_json() const;
  static TranscriptEntry from_json(const nlohmann::json& j);
  bool operator==(const TranscriptEntry&) const = default;
};

class Transcript {
 public:
  void append(TranscriptEntry e);
  std::vector<TranscriptEntry> entries() const;
  std::size_t size() const;

  nlohmann::json to_json() const;
  // One canonical JSON array.
  std::string dump() const;

  // Entries of several robots merged by stamp, then by robot name.
  static std::vector<TranscriptEntry> merge(const std::vector<std::vector<TranscriptEntry>>& parts);

 private:
  mutable std::mutex mu_;
  std::vector<TranscriptEntry> entries_;
};

class SimRobot {
 public:
  // Throws what node_start and the pub/sub endpoints throw.
  SimRobot(SimRobotConfig cfg, const node::NetworkConfig& network, Clock& clock = real_clock(),
           std::string node_name = {});
  ~SimRobot();

  SimRobot(const SimRobot&) = delete;
  SimRobot& operator=(const SimRobot&) = delete;

  const SimRobotConfig& config() const noexcept { return cfg_; }
  const Transcript& transcript() const noexcept { return transcript_; }
  std::size_t served() const noexcept { return served_; }
  bool ready() const;  // the command channel is connected
  void stop();

 private:
  void run(std::stop_token stop);
  void serve(const nlohmann::json& doc, std::stop_token stop);

  SimRobotConfig cfg_;
  Clock& clock_;
  std::unique_ptr<node::NodeContext> ctx_;
  std::unique_ptr<pubsub::Subscriber> cmd_;
  std::unique_ptr<pubsub::Publisher> res_;
  Transcript transcript_;
  std::atomic<std::size_t> served_{0};
  std::jthread thread_;
};

// ---------------------------------------------------------------------------
// Gestures

enum class GestureLabel { Katana, Batting, HandUp, Karate, StretchUp };

inline constexpr std::array<GestureLabel, 5> kGestureLabels{
    GestureLabel::Katana, GestureLabel::Batting, GestureLabel::HandUp, GestureLabel::Karate,
    GestureLabel::StretchUp};

std::string_view to_string(GestureLabel l) noexcept;
std::optional<GestureLabel> try_parse_label(std::string_view s) noexcept;
GestureLabel parse_label(std::string_view s);  // Error{InvalidConfig}

inline constexpr std::string_view kTruthTopic = "gesture_truth";

struct ScriptEntry {
  double at = 0.0;  // seconds after replay start
  GestureLabel label = GestureLabel::Karate;
  bool operator==(const ScriptEntry&) const = default;
};

struct GestureScript {
  std::vector<ScriptEntry> entries;

  // Throws Error{ScriptOrder} unless `at` is strictly increasing.
  void validate() const;
  // `[{"at":1.0,"label":"hand_up"},...]`. Throws Error{ScriptOrder, InvalidConfig}.
  static GestureScript from_json(const nlohmann::json& j);
  static GestureScript load(const std::filesystem::path& file);
  nlohmann::json to_json() const;
};

class GestureReplay {
 public:
  // Waits up to `subscriber_wait` (real time) for `wait_subscribers` truth
  // subscribers before the script clock starts.
  GestureReplay(GestureScript script, const node::NetworkConfig& network, Clock& clock = real_clock(),
                std::string node_name = "gesture_replay", std::size_t wait_subscribers = 0,
                std::chrono::milliseconds subscriber_wait = std::chrono::seconds(5));
  ~GestureReplay();

  GestureReplay(const GestureReplay&) = delete;
  GestureReplay& operator=(const GestureReplay&) = delete;

  std::size_t subscriber_count() const;
  std::size_t published() const noexcept { return published_; }
  bool finished() const noexcept { return finished_; }
  // Blocks (real time) until the replay announced its shutdown.
  bool wait_finished(std::chrono::milliseconds timeout) const;
  void stop();

 private:
  void run(std::stop_token stop);

  GestureScript script_;
  Clock& clock_;
  std::size_t wait_subscribers_;
  std::chrono::milliseconds subscriber_wait_;
  std::unique_ptr<node::NodeContext> ctx_;
  std::unique_ptr<pubsub::Publisher> pub_;
  std::atomic<std::size_t> published_{0};
  std::atomic<bool> finished_{false};
  std::jthread thread_;
};

// Row index 5 is "no detection".
inline constexpr std::size_t kNoDetection = 5;
using ConfusionRow = std::array<double, 6>;

class ConfusionModel {
 public:
  ConfusionModel();  // identity

  static ConfusionModel identity();
  // Illustrative defaults, not measured rates.
  static ConfusionModel defaults();
  // `{"batting":{"batting":0.6,"katana":0.2,"none":0.2},...}`; rows left out
  // stay identity. Throws Error{InvalidConfig}.
  static ConfusionModel from_json(const nlohmann::json& j);
  static ConfusionModel load(const std::filesystem::path& file);
  // "identity", "default", or a file path.
  static ConfusionModel resolve(const std::string& name_or_path);

  const ConfusionRow& row(GestureLabel truth) const noexcept {
    return rows_[static_cast<std::size_t>(truth)];
  }
  void set_row(GestureLabel truth, const ConfusionRow& row);  // Error{InvalidConfig}

  // Emitted label for one observation of `truth`, or nullopt for a miss.
  std::optional<GestureLabel> sample(GestureLabel truth, std::mt19937_64& rng) const;
  nlohmann::json to_json() const;

 private:
  std::array<ConfusionRow, 5> rows_{};
};

// Uniform in [0, 1) from the top 53 bits of one draw.
inline double uniform53(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

class PerceptualClassifier {
 public:
  PerceptualClassifier(GestureLabel target, ConfusionModel model, std::uint64_t seed,
                       const node::NetworkConfig& network, Clock& clock = real_clock(),
                       std::string node_name = {});
  ~PerceptualClassifier();

  PerceptualClassifier(const PerceptualClassifier&) = delete;
  PerceptualClassifier& operator=(const PerceptualClassifier&) = delete;

  GestureLabel target() const noexcept { return target_; }
  const std::string& name() const noexcept { return ctx_->name(); }
  std::size_t observed() const noexcept { return observed_; }
  std::size_t triggers() const noexcept { return triggers_; }
  bool connected() const;
  void stop();

 private:
  void run(std::stop_token stop);

  GestureLabel target_;
  ConfusionModel model_;
  std::mt19937_64 rng_;
  std::unique_ptr<node::NodeContext> ctx_;
  std::unique_ptr<pubsub::Subscriber> truth_;
  node::LineSender triggers_out_;
  std::atomic<std::size_t> observed_{0};
  std::atomic<std::size_t> triggers_{0};
  std::jthread thread_;
};

// ---------------------------------------------------------------------------
// In-process scenario harness: every node of a gesture program in one process,
// sharing one clock.

struct GestureAppOptions {
  // Replaces the sensory launches' own "script" args when set.
  std::optional<GestureScript> script;
  ConfusionModel model;
  std::uint64_t seed = 42;
  // A ProgramDoc. Sensory launches become replays of `script`, perception
  // launches classifiers for their "target" arg, action launches sim robots.
  nlohmann::json program;
  bool virtual_clock = true;
  // Data-plane ports for the run's private master.
  master::PortPool pool{};
  // Real-time cap on the whole run.
  std::chrono::milliseconds timeout{10000};
};

struct GestureAppResult {
  std::vector<TranscriptEntry> transcript;
  std::vector<node::NodeStateEvent> events;
  // Triggers emitted per perceptual node name.
  std::map<std::string, std::size_t> triggers;
  std::size_t firings = 0;
  double end_time = 0.0;  // clock seconds when the run ended
  bool completed = false;

  std::string transcript_dump() const;
};

// Launch args: "target" (or a gesture_<label> name) and "script".
GestureLabel perception_target(const node::LaunchSpec& launch);
GestureScript replay_script(const node::LaunchSpec& launch);

GestureAppResult run_gesture_app(const GestureAppOptions& options);

// The karate program used by the demo and the scenario tests.
nlohmann::json karate_program(std::size_t perceptual_nodes = 5);

}  // namespace nodeprim::sim
