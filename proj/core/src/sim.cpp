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

#include "nodeprim/sim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <spdlog/spdlog.h>

#include "nodeprim/relay.hpp"
#include "nodeprim/wire.hpp"

namespace nodeprim::sim {

using json = nlohmann::json;
using namespace std::chrono;
using behavior::BehaviorSpec;
using behavior::Primitive;

namespace {

double non_negative(const json& args, const char* key, double fallback) {
  auto it = args.find(key);
  if (it == args.end()) return fallback;
  if (!it->is_number()) throw Error(Errc::InvalidConfig, std::string(key) + " must be a number");
  return it->get<double>();
}

json read_json_file(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(Errc::InvalidConfig, "cannot open " + file.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(Errc::InvalidConfig, file.string() + ": " + e.what());
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// SimRobotConfig

void SimRobotConfig::validate() const {
  if (name.empty()) throw Error(Errc::InvalidConfig, "robot name is empty");
  for (double d : {speech_rate, posture_duration, animation_duration}) {
    if (!std::isfinite(d) || d < 0) throw Error(Errc::InvalidConfig, "durations must be >= 0");
  }
}

SimRobotConfig SimRobotConfig::from_args(std::string name, const json& args) {
  SimRobotConfig cfg;
  cfg.name = args.is_object() && args.contains("robot") ? args["robot"].get<std::string>()
                                                         : std::move(name);
  if (args.is_object()) {
    cfg.speech_rate = non_negative(args, "speech_rate", cfg.speech_rate);
    cfg.posture_duration = non_negative(args, "posture_duration", cfg.posture_duration);
    cfg.animation_duration = non_negative(args, "animation_duration", cfg.animation_duration);
  }
  cfg.validate();
  return cfg;
}

std::size_t count_characters(std::string_view utf8) noexcept {
  std::size_t n = 0;
  for (unsigned char c : utf8) {
    if ((c & 0xC0) != 0x80) ++n;
  }
  return n;
}

Nanos action_duration(const SimRobotConfig& cfg, const BehaviorSpec& spec) {
  switch (spec.primitive) {
    case Primitive::Say:
      return from_seconds(static_cast<double>(count_characters(spec.args.at("text").get<std::string>())) *
                          cfg.speech_rate);
    case Primitive::Posture:
      return from_seconds(cfg.posture_duration);
    case Primitive::Animation:
      return from_seconds(cfg.animation_duration);
    case Primitive::Wait:
      return from_seconds(spec.args.at("seconds").get<double>());
  }
  return Nanos(0);
}

// ---------------------------------------------------------------------------
// Transcript

json TranscriptEntry::to_json() const {
  return json{{"stamp", stamp},         {"robot", robot}, {"id", id},
              {"primitive", primitive}, {"args", args},   {"marker", marker == Marker::Start ? "start" : "end"}};
}

TranscriptEntry TranscriptEntry::from_json(const json& j) {
  TranscriptEntry e;
  e.stamp = j.at("stamp").get<double>();
  e.robot = j.at("robot").get<std::string>();
  e.id = j.at("id").get<std::string>();
  e.primitive = j.at("primitive").get<std::string>();
  e.args = j.at("args");
  const auto m = j.at("marker").get<std::string>();
  if (m != "start" && m != "end") throw Error(Errc::BadRequest, "bad transcript marker");
  e.marker = m == "start" ? Marker::Start : Marker::End;
  return e;
}

void Transcript::append(TranscriptEntry e) {
  std::lock_guard lock(mu_);
  entries_.push_back(std::move(e));
}

std::vector<TranscriptEntry> Transcript::entries() const {
  std::lock_guard lock(mu_);
  return entries_;
}

std::size_t Transcript::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

json Transcript::to_json() const {
  json out = json::array();
  for (const auto& e : entries()) out.push_back(e.to_json());
  return out;
}

std::string Transcript::dump() const { return wire::canonical_json(to_json()); }

std::vector<TranscriptEntry> Transcript::merge(const std::vector<std::vector<TranscriptEntry>>& parts) {
  std::vector<TranscriptEntry> out;
  for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  // Stable: a robot's own entries keep their order.
  std::stable_sort(out.begin(), out.end(), [](const TranscriptEntry& a, const TranscriptEntry& b) {
    if (a.stamp != b.stamp) return a.stamp < b.stamp;
    return a.robot < b.robot;
  });
  return out;
}

// ---------------------------------------------------------------------------
// SimRobot

SimRobot::SimRobot(SimRobotConfig cfg, const node::NetworkConfig& network, Clock& clock,
                   std::string node_name)
    : cfg_(std::move(cfg)), clock_(clock) {
  cfg_.validate();
  if (node_name.empty()) node_name = cfg_.name;
  // Endpoints first: the started event means commands can be accepted.
  cmd_ = std::make_unique<pubsub::Subscriber>(behavior::command_topic(cfg_.name), node_name,
                                              network.master);
  res_ = std::make_unique<pubsub::Publisher>(behavior::result_topic(cfg_.name), node_name,
                                             wire::Encoding::Json, network.master);
  ctx_ = node::node_start(node::NodeDescriptor(node_name, node::NodeKind::Action), network, clock);
  thread_ = std::jthread([this](std::stop_token st) { run(st); });
}

SimRobot::~SimRobot() { stop(); }

bool SimRobot::ready() const { return cmd_->connected(); }

void SimRobot::stop() {
  if (!thread_.joinable()) return;
  thread_.request_stop();
  thread_.join();
  ctx_->shutdown();
}

void SimRobot::run(std::stop_token stop) {
  while (!stop.stop_requested()) {
    pubsub::ListenResult got;
    try {
      got = cmd_->listen_info(false, milliseconds(100));
    } catch (const Error&) {
      // The cognitive node went away; a new one gets a fresh channel.
      Activity::release_held();
      std::this_thread::sleep_for(milliseconds(100));
      if (!stop.stop_requested()) {
        try {
          cmd_ = std::make_unique<pubsub::Subscriber>(behavior::command_topic(cfg_.name),
                                                      ctx_->name(), ctx_->network().master);
        } catch (const Error& e) {
          spdlog::warn("sim robot {}: {}", cfg_.name, e.what());
        }
      }
      continue;
    }
    if (!got.success) continue;
    if (const auto* doc = std::get_if<wire::Document>(&*got.payload)) {
      serve(*doc, stop);
    }
  }
  Activity::release_held();
}

void SimRobot::serve(const json& doc, std::stop_token stop) {
  behavior::ActionResult result;
  result.robot = cfg_.name;
  if (doc.is_object() && doc.contains("id") && doc["id"].is_string()) {
    result.id = doc["id"].get<std::string>();
  }
  if (result.id.empty()) {
    spdlog::warn("sim robot {}: command without id dropped", cfg_.name);
    return;
  }
  BehaviorSpec spec;
  try {
    spec = BehaviorSpec::from_json(doc);
  } catch (const Error& e) {
    result.status = behavior::ResultStatus::Error;
    result.detail = e.detail();
    res_->send_info(result.to_json());
    return;
  }
  const std::string prim(behavior::to_string(spec.primitive));
  const Nanos start = clock_.now();
  transcript_.append({to_seconds(start), cfg_.name, spec.id, prim, spec.args, Marker::Start});
  const bool finished = clock_.sleep_until(start + action_duration(cfg_, spec), stop);
  const Nanos end = clock_.now();
  transcript_.append({to_seconds(end), cfg_.name, spec.id, prim, spec.args, Marker::End});
  if (finished) {
    result.elapsed = to_seconds(end - start);
  } else {
    result.status = behavior::ResultStatus::Error;
    result.detail = "interrupted";
  }
  ++served_;
  res_->send_info(result.to_json());
}

// ---------------------------------------------------------------------------
// Gesture labels and scripts

namespace {
constexpr std::array<std::string_view, 5> kLabelNames{"katana", "batting", "hand_up", "karate",
                                                      "stretch_up"};
}

std::string_view to_string(GestureLabel l) noexcept { return kLabelNames[static_cast<int>(l)]; }

std::optional<GestureLabel> try_parse_label(std::string_view s) noexcept {
  for (std::size_t i = 0; i < kLabelNames.size(); ++i) {
    if (kLabelNames[i] == s) return static_cast<GestureLabel>(i);
  }
  return std::nullopt;
}

GestureLabel parse_label(std::string_view s) {
  if (auto l = try_parse_label(s)) return *l;
  throw Error(Errc::InvalidConfig, "unknown gesture '" + std::string(s) + "'");
}

void GestureScript::validate() const {
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (!std::isfinite(entries[i].at) || entries[i].at < 0) {
      throw Error(Errc::ScriptOrder, "entry " + std::to_string(i) + ": 'at' must be >= 0");
    }
    if (i > 0 && !(entries[i].at > entries[i - 1].at)) {
      throw Error(Errc::ScriptOrder, "entry " + std::to_string(i) + ": 'at' must increase strictly");
    }
  }
}

GestureScript GestureScript::from_json(const json& j) {
  if (!j.is_array()) throw Error(Errc::InvalidConfig, "a gesture script is a JSON array");
  GestureScript s;
  for (const auto& e : j) {
    if (!e.is_object() || !e.contains("at") || !e["at"].is_number() || !e.contains("label") ||
        !e["label"].is_string()) {
      throw Error(Errc::InvalidConfig, "script entries look like {\"at\":1.0,\"label\":\"karate\"}");
    }
    s.entries.push_back({e["at"].get<double>(), parse_label(e["label"].get<std::string>())});
  }
  s.validate();
  return s;
}

GestureScript GestureScript::load(const std::filesystem::path& file) {
  return from_json(read_json_file(file));
}

json GestureScript::to_json() const {
  json out = json::array();
  for (const auto& e : entries) out.push_back({{"at", e.at}, {"label", to_string(e.label)}});
  return out;
}

// ---------------------------------------------------------------------------
// GestureReplay

GestureReplay::GestureReplay(GestureScript script, const node::NetworkConfig& network, Clock& clock,
                             std::string node_name, std::size_t wait_subscribers,
                             milliseconds subscriber_wait)
    : script_(std::move(script)),
      clock_(clock),
      wait_subscribers_(wait_subscribers),
      subscriber_wait_(subscriber_wait) {
  script_.validate();
  pub_ = std::make_unique<pubsub::Publisher>(std::string(kTruthTopic), node_name,
                                             wire::Encoding::Json, network.master);
  ctx_ = node::node_start(node::NodeDescriptor(std::move(node_name), node::NodeKind::Sensory),
                          network, clock);
  thread_ = std::jthread([this](std::stop_token st) { run(st); });
}

GestureReplay::~GestureReplay() { stop(); }

std::size_t GestureReplay::subscriber_count() const { return pub_->subscriber_count(); }

bool GestureReplay::wait_finished(milliseconds timeout) const {
  const auto deadline = steady_clock::now() + timeout;
  while (!finished_) {
    if (steady_clock::now() >= deadline) return false;
    std::this_thread::sleep_for(milliseconds(5));
  }
  return true;
}

void GestureReplay::stop() {
  if (thread_.joinable()) {
    thread_.request_stop();
    thread_.join();
  }
  ctx_->shutdown();
  finished_ = true;
}

void GestureReplay::run(std::stop_token stop) {
  if (wait_subscribers_ > 0) pub_->wait_for_subscribers(wait_subscribers_, subscriber_wait_);
  const Nanos t0 = clock_.now();
  double last = 0.0;
  for (const auto& e : script_.entries) {
    if (!clock_.sleep_until(t0 + from_seconds(e.at), stop)) return;
    pub_->send_info(json{{"label", to_string(e.label)}});
    ++published_;
    last = e.at;
  }
  if (!clock_.sleep_until(t0 + from_seconds(last + 1.0), stop)) return;
  Activity::release_held();
  ctx_->shutdown();
  finished_ = true;
}

// ---------------------------------------------------------------------------
// ConfusionModel

ConfusionModel::ConfusionModel() {
  for (std::size_t i = 0; i < rows_.size(); ++i) {
    rows_[i].fill(0.0);
    rows_[i][i] = 1.0;
  }
}

ConfusionModel ConfusionModel::identity() { return {}; }

ConfusionModel ConfusionModel::defaults() {
  ConfusionModel m;
  auto idx = [](GestureLabel l) { return static_cast<std::size_t>(l); };
  ConfusionRow r{};
  r[idx(GestureLabel::StretchUp)] = 0.9;
  r[kNoDetection] = 0.1;
  m.set_row(GestureLabel::StretchUp, r);
  r = {};
  r[idx(GestureLabel::Katana)] = 0.9;
  r[kNoDetection] = 0.1;
  m.set_row(GestureLabel::Katana, r);
  r = {};
  r[idx(GestureLabel::Batting)] = 0.6;
  r[idx(GestureLabel::Katana)] = 0.2;
  r[kNoDetection] = 0.2;
  m.set_row(GestureLabel::Batting, r);
  return m;
}

void ConfusionModel::set_row(GestureLabel truth, const ConfusionRow& row) {
  double sum = 0.0;
  for (double p : row) {
    if (!std::isfinite(p) || p < 0 || p > 1) {
      throw Error(Errc::InvalidConfig, "row " + std::string(to_string(truth)) + ": probabilities lie in [0, 1]");
    }
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw Error(Errc::InvalidConfig, "row " + std::string(to_string(truth)) + " sums to " +
                                         std::to_string(sum) + ", not 1");
  }
  rows_[static_cast<std::size_t>(truth)] = row;
}

ConfusionModel ConfusionModel::from_json(const json& j) {
  if (!j.is_object()) throw Error(Errc::InvalidConfig, "a confusion model is a JSON object of rows");
  ConfusionModel m;
  for (const auto& [truth_name, row_j] : j.items()) {
    const auto truth = parse_label(truth_name);
    if (!row_j.is_object()) throw Error(Errc::InvalidConfig, "row " + truth_name + " must be an object");
    ConfusionRow row{};
    for (const auto& [emit_name, p] : row_j.items()) {
      if (!p.is_number()) throw Error(Errc::InvalidConfig, "row " + truth_name + ": probabilities are numbers");
      const std::size_t col =
          emit_name == "none" ? kNoDetection : static_cast<std::size_t>(parse_label(emit_name));
      row[col] = p.get<double>();
    }
    m.set_row(truth, row);
  }
  return m;
}

ConfusionModel ConfusionModel::load(const std::filesystem::path& file) {
  return from_json(read_json_file(file));
}

ConfusionModel ConfusionModel::resolve(const std::string& name_or_path) {
  if (name_or_path.empty() || name_or_path == "identity") return identity();
  if (name_or_path == "default") return defaults();
  return load(name_or_path);
}

std::optional<GestureLabel> ConfusionModel::sample(GestureLabel truth, std::mt19937_64& rng) const {
  const auto& r = row(truth);
  const double u = uniform53(rng);
  double cum = 0.0;
  std::size_t last_nonzero = kNoDetection;
  for (std::size_t i = 0; i < r.size(); ++i) {
    if (r[i] <= 0) continue;
    last_nonzero = i;
    cum += r[i];
    if (u < cum) return i == kNoDetection ? std::nullopt : std::optional(static_cast<GestureLabel>(i));
  }
  // Rounding left u above the final sum.
  return last_nonzero == kNoDetection ? std::nullopt
                                      : std::optional(static_cast<GestureLabel>(last_nonzero));
}

json ConfusionModel::to_json() const {
  json out = json::object();
  for (auto truth : kGestureLabels) {
    json row = json::object();
    const auto& r = this->row(truth);
    for (auto emit : kGestureLabels) row[std::string(to_string(emit))] = r[static_cast<std::size_t>(emit)];
    row["none"] = r[kNoDetection];
    out[std::string(to_string(truth))] = row;
  }
  return out;
}

// ---------------------------------------------------------------------------
// PerceptualClassifier

PerceptualClassifier::PerceptualClassifier(GestureLabel target, ConfusionModel model,
                                           std::uint64_t seed, const node::NetworkConfig& network,
                                           Clock& clock, std::string node_name)
    : target_(target),
      model_(std::move(model)),
      rng_(seed),
      triggers_out_(network.triggers, std::string(relay::kTriggerTopic)) {
  if (node_name.empty()) node_name = "gesture_" + std::string(to_string(target));
  truth_ = std::make_unique<pubsub::Subscriber>(std::string(kTruthTopic), node_name, network.master);
  ctx_ = node::node_start(node::NodeDescriptor(std::move(node_name), node::NodeKind::Perception),
                          network, clock);
  thread_ = std::jthread([this](std::stop_token st) { run(st); });
}

PerceptualClassifier::~PerceptualClassifier() { stop(); }

bool PerceptualClassifier::connected() const { return truth_->connected(); }

void PerceptualClassifier::stop() {
  if (!thread_.joinable()) return;
  thread_.request_stop();
  thread_.join();
  ctx_->shutdown();
}

void PerceptualClassifier::run(std::stop_token stop) {
  bool closed = false;
  while (!stop.stop_requested()) {
    if (closed) {
      std::this_thread::sleep_for(milliseconds(100));
      continue;
    }
    pubsub::ListenResult got;
    try {
      got = truth_->listen_info(false, milliseconds(100));
    } catch (const Error&) {
      // The replay finished; nothing more will arrive.
      closed = true;
      continue;
    }
    if (!got.success) continue;
    const auto* doc = std::get_if<wire::Document>(&*got.payload);
    if (!doc || !doc->is_object() || !doc->contains("label") || !(*doc)["label"].is_string()) continue;
    const auto truth = try_parse_label((*doc)["label"].get<std::string>());
    if (!truth) continue;
    ++observed_;
    if (model_.sample(*truth, rng_) == target_) {
      if (triggers_out_.send(json{{"gesture", to_string(target_)}})) ++triggers_;
    }
  }
  Activity::release_held();
}

}  // namespace nodeprim::sim
