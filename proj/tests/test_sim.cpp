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


#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <random>
#include <thread>

#include "harness.hpp"
#include "nodeprim/error.hpp"
#include "nodeprim/pubsub.hpp"
#include "nodeprim/sim.hpp"

using namespace nodeprim;
using namespace nodeprim::sim;
using namespace std::chrono_literals;
using behavior::BehaviorSpec;
using behavior::Primitive;
using nlohmann::json;
using nodeprim::testing::LocalNetwork;

namespace {

Errc code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return Errc::BadRequest;
}

json fixture(const std::string& name) {
  std::ifstream in(std::string(NODEPRIM_FIXTURES) + "/" + name);
  return json::parse(in);
}

// Independent re-derivation of one draw: top 53 bits scaled to [0, 1).
double draw(std::mt19937_64& rng) { return std::ldexp(static_cast<double>(rng() >> 11), -53); }

}  // namespace

// ---------------------------------------------------------------------------
// Robot

TEST(SimRobotConfig, DefaultsAndValidation) {
  SimRobotConfig c;
  EXPECT_EQ(c.name, "nao");
  EXPECT_EQ(c.speech_rate, 0.06);
  EXPECT_EQ(c.posture_duration, 1.0);
  EXPECT_EQ(c.animation_duration, 2.0);
  EXPECT_NO_THROW(c.validate());
  c.speech_rate = -0.1;
  EXPECT_EQ(code_of([&] { c.validate(); }), Errc::InvalidConfig);

  auto d = SimRobotConfig::from_args("pepper", {{"speech_rate", 0.1}, {"animation_duration", 3.5}});
  EXPECT_EQ(d.name, "pepper");
  EXPECT_EQ(d.speech_rate, 0.1);
  EXPECT_EQ(d.posture_duration, 1.0);
  EXPECT_EQ(d.animation_duration, 3.5);
  EXPECT_EQ(code_of([] { SimRobotConfig::from_args("x", {{"posture_duration", -1}}); }), Errc::InvalidConfig);
}

TEST(Durations, CharacterCount) {
  EXPECT_EQ(count_characters("Impressive!"), 11u);
  EXPECT_EQ(count_characters(""), 0u);
  EXPECT_EQ(count_characters("h\xc3\xa9llo"), 5u);
  EXPECT_EQ(count_characters("\xe3\x81\x82\xe3\x81\x84"), 2u);
  EXPECT_EQ(count_characters("a\xff" "b"), 3u);
}

TEST(Durations, PerPrimitive) {
  SimRobotConfig c;
  auto d = [&](Primitive p, json args) { return action_duration(c, BehaviorSpec{"i", "nao", p, std::move(args)}); };
  // 11 characters at 0.06 s.
  EXPECT_EQ(d(Primitive::Say, {{"text", "Impressive!"}}), Nanos(660'000'000));
  EXPECT_EQ(d(Primitive::Say, {{"text", ""}}), Nanos(0));
  EXPECT_EQ(d(Primitive::Posture, {{"name", "stand"}}), Nanos(1'000'000'000));
  EXPECT_EQ(d(Primitive::Animation, {{"name", "cat"}}), Nanos(2'000'000'000));
  EXPECT_EQ(d(Primitive::Wait, {{"seconds", 0.25}}), Nanos(250'000'000));
}

TEST(Transcript, JsonAndMerge) {
  TranscriptEntry e{3.0, "nao", "behavior-1", "say", {{"text", "Impressive!"}}, Marker::Start};
  EXPECT_EQ(e.to_json(), (json{{"stamp", 3.0}, {"robot", "nao"}, {"id", "behavior-1"}, {"primitive", "say"},
                               {"args", {{"text", "Impressive!"}}}, {"marker", "start"}}));
  EXPECT_EQ(TranscriptEntry::from_json(e.to_json()), e);

  std::vector<TranscriptEntry> a{{1.0, "b", "1", "say", json::object(), Marker::Start},
                                 {2.0, "b", "1", "say", json::object(), Marker::End}};
  std::vector<TranscriptEntry> b{{1.0, "a", "2", "say", json::object(), Marker::Start},
                                 {1.5, "a", "2", "say", json::object(), Marker::End}};
  auto m = Transcript::merge({a, b});
  ASSERT_EQ(m.size(), 4u);
  EXPECT_EQ(m[0].robot, "a");
  EXPECT_EQ(m[1].robot, "b");
  EXPECT_EQ(m[2].stamp, 1.5);
  EXPECT_EQ(m[3].stamp, 2.0);
}

namespace {

struct RobotRig {
  RobotRig() {
    robot = std::make_unique<SimRobot>(SimRobotConfig{}, net.config, clock);
    cmd = std::make_unique<pubsub::Publisher>(behavior::command_topic("nao"), "tester", wire::Encoding::Json,
                                              net.config.master);
    // The robot's command subscriber can only connect once somebody publishes.
    EXPECT_TRUE(nodeprim::testing::eventually([&] { return robot->ready(); }, 3s));
    EXPECT_TRUE(cmd->wait_for_subscribers(1, 3s));
    EXPECT_TRUE(res.wait_connected(3s));
    clock.start_auto_advance();
  }
  ~RobotRig() { clock.stop_auto_advance(); }

  behavior::ActionResult ask(const json& command) {
    cmd->send_info(command);
    auto got = res.listen_info(false, 3000ms);
    EXPECT_TRUE(got.success);
    if (!got.success) return {};
    return behavior::ActionResult::from_json(std::get<wire::Document>(*got.payload));
  }

  VirtualClock clock;
  LocalNetwork net;
  std::unique_ptr<SimRobot> robot;
  std::unique_ptr<pubsub::Publisher> cmd;
  pubsub::Subscriber res{behavior::result_topic("nao"), "tester", net.config.master};
};

}  // namespace

TEST(SimRobot, AnnouncesStarted) {
  RobotRig rig;
  EXPECT_TRUE(rig.net.events.wait_count("nao", node::NodeEvent::Started, 1, 2s));
  EXPECT_EQ(rig.net.events.snapshot()[0].kind, node::NodeKind::Action);
}

TEST(SimRobot, SayImpressiveElapsed) {
  RobotRig rig;
  auto r = rig.ask({{"id", "a1"}, {"robot", "nao"}, {"primitive", "say"}, {"args", {{"text", "Impressive!"}}}});
  EXPECT_EQ(r.id, "a1");
  EXPECT_TRUE(r.done());
  EXPECT_DOUBLE_EQ(r.elapsed, 0.66);
}

TEST(SimRobot, PostureDefaultDuration) {
  RobotRig rig;
  auto r = rig.ask({{"id", "p1"}, {"robot", "nao"}, {"primitive", "posture"}, {"args", {{"name", "stand"}}}});
  EXPECT_DOUBLE_EQ(r.elapsed, 1.0);
}

TEST(SimRobot, UnknownPrimitiveIsAnErrorResultAndServingContinues) {
  RobotRig rig;
  auto bad = rig.ask({{"id", "d1"}, {"robot", "nao"}, {"primitive", "dance"}, {"args", json::object()}});
  EXPECT_EQ(bad.id, "d1");
  EXPECT_FALSE(bad.done());
  EXPECT_NE(bad.detail.find("dance"), std::string::npos) << bad.detail;
  auto ok = rig.ask({{"id", "d2"}, {"robot", "nao"}, {"primitive", "wait"}, {"args", {{"seconds", 0}}}});
  EXPECT_TRUE(ok.done());
  EXPECT_EQ(rig.robot->served(), 1u);
}

TEST(SimRobot, CommandWithoutIdIsDropped) {
  RobotRig rig;
  rig.cmd->send_info(json{{"robot", "nao"}, {"primitive", "say"}, {"args", {{"text", "x"}}}});
  EXPECT_FALSE(rig.res.listen_info(false, 300ms).success);
  EXPECT_EQ(rig.robot->served(), 0u);
}

TEST(SimRobot, StopAnnouncesShutdown) {
  RobotRig rig;
  rig.robot->stop();
  EXPECT_TRUE(rig.net.events.wait_count("nao", node::NodeEvent::ShutdownManual, 1, 2s));
}

// ---------------------------------------------------------------------------
// Scripts and replay

TEST(GestureLabels, Names) {
  const std::vector<std::string> names{"katana", "batting", "hand_up", "karate", "stretch_up"};
  for (std::size_t i = 0; i < kGestureLabels.size(); ++i) {
    EXPECT_EQ(to_string(kGestureLabels[i]), names[i]);
    EXPECT_EQ(parse_label(names[i]), kGestureLabels[i]);
  }
  EXPECT_FALSE(try_parse_label("strech_up").has_value());
  EXPECT_EQ(code_of([] { parse_label("wave"); }), Errc::InvalidConfig);
}

TEST(GestureScript, ParseAndValidate) {
  auto s = GestureScript::from_json(json::parse(R"([{"at":1.0,"label":"hand_up"},{"at":3.0,"label":"karate"}])"));
  ASSERT_EQ(s.entries.size(), 2u);
  EXPECT_EQ(s.entries[1], (ScriptEntry{3.0, GestureLabel::Karate}));
  EXPECT_EQ(GestureScript::from_json(s.to_json()).entries, s.entries);

  EXPECT_EQ(code_of([] { GestureScript::from_json(json::parse(R"([{"at":3,"label":"karate"},{"at":1,"label":"katana"}])")); }),
            Errc::ScriptOrder);
  EXPECT_EQ(code_of([] { GestureScript::from_json(json::parse(R"([{"at":1,"label":"karate"},{"at":1,"label":"katana"}])")); }),
            Errc::ScriptOrder);
  EXPECT_EQ(code_of([] { GestureScript::from_json(json::parse(R"([{"at":-1,"label":"karate"}])")); }),
            Errc::ScriptOrder);
  EXPECT_EQ(code_of([] { GestureScript::from_json(json::parse(R"([{"at":1,"label":"wave"}])")); }),
            Errc::InvalidConfig);
  EXPECT_EQ(code_of([] { GestureScript::from_json(json::parse(R"({"at":1})")); }), Errc::InvalidConfig);
  EXPECT_TRUE(GestureScript::from_json(json::array()).entries.empty());
}

TEST(GestureReplay, TwoMessagesTwoSecondsApart) {
  VirtualClock clock;
  LocalNetwork net;
  pubsub::Subscriber truth(std::string(kTruthTopic), "watcher", net.config.master);
  GestureReplay replay(GestureScript{{{1.0, GestureLabel::HandUp}, {3.0, GestureLabel::Karate}}}, net.config,
                       clock, "gesture_replay", 1);
  ASSERT_TRUE(truth.wait_connected(3s));
  ASSERT_TRUE(clock.wait_for_sleepers(1, 3s));
  clock.start_auto_advance();
  std::vector<std::pair<double, std::string>> got;
  for (int i = 0; i < 2; ++i) {
    auto r = truth.listen_info(false, 3000ms);
    ASSERT_TRUE(r.success);
    got.emplace_back(to_seconds(clock.now()), std::get<wire::Document>(*r.payload)["label"]);
  }
  Activity::release_held();
  EXPECT_EQ(got[0], (std::pair<double, std::string>{1.0, "hand_up"}));
  EXPECT_EQ(got[1], (std::pair<double, std::string>{3.0, "karate"}));
  EXPECT_DOUBLE_EQ(got[1].first - got[0].first, 2.0);
  ASSERT_TRUE(replay.wait_finished(3000ms));
  EXPECT_EQ(to_seconds(clock.now()), 4.0);
  EXPECT_TRUE(net.events.wait_count("gesture_replay", node::NodeEvent::ShutdownManual, 1, 2s));
  clock.stop_auto_advance();
}

TEST(GestureReplay, EmptyScriptShutsDownCleanly) {
  VirtualClock clock;
  LocalNetwork net;
  GestureReplay replay(GestureScript{}, net.config, clock);
  clock.start_auto_advance();
  ASSERT_TRUE(replay.wait_finished(3000ms));
  EXPECT_EQ(replay.published(), 0u);
  EXPECT_TRUE(net.events.wait_count("gesture_replay", node::NodeEvent::Started, 1, 2s));
  EXPECT_TRUE(net.events.wait_count("gesture_replay", node::NodeEvent::ShutdownManual, 1, 2s));
  clock.stop_auto_advance();
}

// ---------------------------------------------------------------------------
// Confusion model

TEST(ConfusionModel, IdentityAndDefaults) {
  auto id = ConfusionModel::identity();
  for (auto l : kGestureLabels) {
    const auto& row = id.row(l);
    for (std::size_t j = 0; j < row.size(); ++j) EXPECT_EQ(row[j], j == static_cast<std::size_t>(l) ? 1.0 : 0.0);
  }
  auto d = ConfusionModel::defaults();
  auto at = [&](GestureLabel t, std::size_t j) { return d.row(t)[j]; };
  const auto K = static_cast<std::size_t>(GestureLabel::Katana);
  const auto B = static_cast<std::size_t>(GestureLabel::Batting);
  EXPECT_EQ(at(GestureLabel::HandUp, static_cast<std::size_t>(GestureLabel::HandUp)), 1.0);
  EXPECT_EQ(at(GestureLabel::Karate, static_cast<std::size_t>(GestureLabel::Karate)), 1.0);
  EXPECT_EQ(at(GestureLabel::StretchUp, static_cast<std::size_t>(GestureLabel::StretchUp)), 0.9);
  EXPECT_EQ(at(GestureLabel::StretchUp, kNoDetection), 0.1);
  EXPECT_EQ(at(GestureLabel::Katana, K), 0.9);
  EXPECT_EQ(at(GestureLabel::Katana, kNoDetection), 0.1);
  EXPECT_EQ(at(GestureLabel::Batting, B), 0.6);
  EXPECT_EQ(at(GestureLabel::Batting, K), 0.2);
  EXPECT_EQ(at(GestureLabel::Batting, kNoDetection), 0.2);
}

TEST(ConfusionModel, RowValidation) {
  ConfusionModel m;
  EXPECT_EQ(code_of([&] { m.set_row(GestureLabel::Karate, {0.5, 0.4, 0, 0, 0, 0}); }), Errc::InvalidConfig);
  EXPECT_EQ(code_of([&] { m.set_row(GestureLabel::Karate, {1.5, -0.5, 0, 0, 0, 0}); }), Errc::InvalidConfig);
  EXPECT_NO_THROW(m.set_row(GestureLabel::Karate, {0.1, 0.2, 0.3, 0.4, 0, 0}));
  EXPECT_EQ(code_of([] { ConfusionModel::from_json({{"wave", {{"wave", 1.0}}}}); }), Errc::InvalidConfig);
  EXPECT_EQ(code_of([] { ConfusionModel::from_json({{"karate", {{"karate", 0.5}}}}); }), Errc::InvalidConfig);
  EXPECT_EQ(code_of([] { ConfusionModel::from_json({{"karate", {{"dance", 1.0}}}}); }), Errc::InvalidConfig);
  EXPECT_EQ(code_of([] { ConfusionModel::resolve("/no/such/model.json"); }), Errc::InvalidConfig);
}

TEST(ConfusionModel, PartialFileKeepsIdentityRows) {
  auto m = ConfusionModel::from_json({{"batting", {{"batting", 0.6}, {"katana", 0.2}, {"none", 0.2}}}});
  EXPECT_EQ(m.row(GestureLabel::Batting)[kNoDetection], 0.2);
  EXPECT_EQ(m.row(GestureLabel::Karate)[static_cast<std::size_t>(GestureLabel::Karate)], 1.0);
  EXPECT_EQ(ConfusionModel::from_json(m.to_json()).to_json(), m.to_json());
}

TEST(ConfusionModelProperty, LoadedRowsSumToOne) {
  std::mt19937_64 rng(17);
  for (int i = 0; i < 500; ++i) {
    json j = json::object();
    bool valid = true;
    for (auto l : kGestureLabels) {
      if (rng() % 2) continue;
      std::array<double, 6> w{};
      double total = 0;
      for (auto& x : w) total += (x = static_cast<double>(rng() % 1000));
      if (total == 0) w[kNoDetection] = total = 1;
      json row = json::object();
      const bool corrupt = (rng() % 8) == 0;
      for (std::size_t k = 0; k < 5; ++k) row[std::string(to_string(kGestureLabels[k]))] = w[k] / total;
      row["none"] = w[kNoDetection] / total + (corrupt ? 0.01 : 0.0);
      valid = valid && !corrupt;
      j[std::string(to_string(l))] = row;
    }
    if (!valid) {
      EXPECT_THROW(ConfusionModel::from_json(j), Error);
      continue;
    }
    auto m = ConfusionModel::from_json(j);
    for (auto l : kGestureLabels) {
      double sum = 0;
      for (double p : m.row(l)) sum += p;
      EXPECT_NEAR(sum, 1.0, 1e-9);
    }
  }
}

TEST(ConfusionModel, IdentitySamplesAreTheTruth) {
  auto m = ConfusionModel::identity();
  std::mt19937_64 rng(1);
  for (int i = 0; i < 200; ++i) {
    for (auto l : kGestureLabels) EXPECT_EQ(m.sample(l, rng), l);
  }
}

TEST(ConfusionModel, BattingRowBinomialCount) {
  auto model = ConfusionModel::from_json({{"batting", {{"batting", 0.6}, {"katana", 0.2}, {"none", 0.2}}}});
  const std::uint64_t seed = 42;
  // Oracle: with outcomes ordered katana, batting, ..., none, batting is [0.2, 0.8).
  std::mt19937_64 oracle(seed);
  int expected = 0;
  for (int i = 0; i < 1000; ++i) {
    const double u = draw(oracle);
    expected += (u >= 0.2 && u < 0.8);
  }
  EXPECT_NEAR(expected, 600, 40);

  std::mt19937_64 rng(seed);
  int got = 0;
  for (int i = 0; i < 1000; ++i) got += model.sample(GestureLabel::Batting, rng) == GestureLabel::Batting;
  EXPECT_EQ(got, expected);
}

// ---------------------------------------------------------------------------
// Classifier nodes

namespace {

struct ClassifierRig {
  explicit ClassifierRig(GestureLabel target, ConfusionModel model = {}, std::uint64_t seed = 42) {
    truth = std::make_unique<pubsub::Publisher>(std::string(kTruthTopic), "truth_source", wire::Encoding::Json,
                                                net.config.master);
    classifier = std::make_unique<PerceptualClassifier>(target, std::move(model), seed, net.config);
    triggers = std::make_unique<pubsub::Subscriber>("gesture", "watcher", net.config.master);
    EXPECT_TRUE(truth->wait_for_subscribers(1, 3s));
    EXPECT_TRUE(triggers->wait_connected(3s));
  }
  void send(GestureLabel l) { truth->send_info(json{{"label", std::string(to_string(l))}}); }

  LocalNetwork net;
  std::unique_ptr<pubsub::Publisher> truth;
  std::unique_ptr<PerceptualClassifier> classifier;
  std::unique_ptr<pubsub::Subscriber> triggers;
};

}  // namespace

TEST(Classifier, MatchingTruthRaisesOneTrigger) {
  ClassifierRig rig(GestureLabel::Karate);
  EXPECT_EQ(rig.classifier->name(), "gesture_karate");
  rig.send(GestureLabel::Karate);
  auto r = rig.triggers->listen_info(false, 2000ms);
  ASSERT_TRUE(r.success);
  EXPECT_EQ(std::get<wire::Document>(*r.payload), (json{{"gesture", "karate"}}));
  EXPECT_FALSE(rig.triggers->listen_info(false, 300ms).success);
  EXPECT_EQ(rig.classifier->triggers(), 1u);
}

TEST(Classifier, OtherTruthStaysSilent) {
  ClassifierRig rig(GestureLabel::Batting);
  rig.send(GestureLabel::Karate);
  ASSERT_TRUE(nodeprim::testing::eventually([&] { return rig.classifier->observed() == 1; }, 2s));
  EXPECT_FALSE(rig.triggers->listen_info(false, 300ms).success);
  EXPECT_EQ(rig.classifier->triggers(), 0u);
}

TEST(Classifier, BattingNodeFiresAtTheSeededRate) {
  auto model = ConfusionModel::from_json({{"batting", {{"batting", 0.6}, {"katana", 0.2}, {"none", 0.2}}}});
  const std::uint64_t seed = 20261014;
  std::mt19937_64 oracle(seed);
  std::size_t expected = 0;
  for (int i = 0; i < 1000; ++i) {
    const double u = draw(oracle);
    expected += (u >= 0.2 && u < 0.8);
  }
  ASSERT_NEAR(static_cast<double>(expected), 600.0, 40.0);

  ClassifierRig rig(GestureLabel::Batting, model, seed);
  for (int i = 0; i < 1000; ++i) rig.send(GestureLabel::Batting);
  ASSERT_TRUE(nodeprim::testing::eventually([&] { return rig.classifier->observed() == 1000; }, 10s));
  EXPECT_EQ(rig.classifier->triggers(), expected);
  std::size_t delivered = 0;
  while (rig.triggers->listen_info(false, 300ms).success) ++delivered;
  EXPECT_EQ(delivered, expected);
}

// ---------------------------------------------------------------------------
// The whole pipeline in one process

TEST(GestureApp, KarateScenarioMatchesGoldenTranscript) {
  GestureAppOptions opts;
  opts.pool = nodeprim::testing::process_pool();
  opts.program = fixture("karate_program.json");
  auto result = run_gesture_app(opts);
  ASSERT_TRUE(result.completed);
  EXPECT_EQ(result.transcript_dump(), wire::canonical_json(fixture("karate_transcript.json")));
  EXPECT_EQ(result.firings, 1u);
  EXPECT_EQ(result.triggers.at("gesture_hand_up"), 1u);
  EXPECT_EQ(result.triggers.at("gesture_karate"), 1u);
  EXPECT_EQ(result.triggers.at("gesture_katana"), 0u);
  // The run ends when the replay signs off at its last entry + 1 s, or when
  // the robot finishes, whichever is later.
  EXPECT_DOUBLE_EQ(result.end_time, 5.66);
}

TEST(GestureApp, SayStartsAfterTriggerAndAnimationIsResultGated) {
  GestureAppOptions opts;
  opts.pool = nodeprim::testing::process_pool();
  opts.program = karate_program();
  auto result = run_gesture_app(opts);
  ASSERT_TRUE(result.completed);
  ASSERT_EQ(result.transcript.size(), 4u);
  EXPECT_GE(result.transcript[0].stamp, 3.0);
  EXPECT_EQ(result.transcript[2].stamp, result.transcript[1].stamp);
}

TEST(GestureApp, EveryNodeStartsAndShutsDownOnce) {
  GestureAppOptions opts;
  opts.pool = nodeprim::testing::process_pool();
  opts.program = karate_program();
  auto result = run_gesture_app(opts);
  std::map<std::string, int> started, shutdowns;
  for (const auto& e : result.events) {
    if (e.event == node::NodeEvent::Started) ++started[e.node];
    if (node::is_shutdown(e.event)) ++shutdowns[e.node];
  }
  for (const auto& name : {"gesture_replay", "gesture_katana", "gesture_batting", "gesture_hand_up",
                           "gesture_karate", "gesture_stretch_up", "nao", "behavior"}) {
    EXPECT_EQ(started[name], 1) << name;
    EXPECT_EQ(shutdowns[name], 1) << name;
  }
}

TEST(GestureApp, IdentityCompletenessOverAllLabels) {
  for (auto label : kGestureLabels) {
    GestureAppOptions opts;
    opts.pool = nodeprim::testing::process_pool();
    opts.program = karate_program();
    opts.script = GestureScript{{{1.0, label}}};
    auto result = run_gesture_app(opts);
    ASSERT_TRUE(result.completed) << to_string(label);
    for (auto other : kGestureLabels) {
      const auto name = "gesture_" + std::string(to_string(other));
      EXPECT_EQ(result.triggers.at(name), other == label ? 1u : 0u) << to_string(label) << " -> " << name;
    }
  }
}

TEST(GestureApp, DeterministicUnderTheDefaultModel) {
  GestureScript script;
  for (int i = 0; i < 12; ++i) script.entries.push_back({1.0 + 4.0 * i, kGestureLabels[(i * 3) % 5]});
  std::string first;
  std::map<std::string, std::size_t> first_triggers;
  for (int run = 0; run < 3; ++run) {
    GestureAppOptions opts;
    opts.pool = nodeprim::testing::process_pool();
    opts.program = karate_program();
    opts.script = script;
    opts.model = ConfusionModel::defaults();
    opts.seed = 7;
    opts.timeout = 20s;
    auto result = run_gesture_app(opts);
    ASSERT_TRUE(result.completed);
    if (run == 0) {
      first = result.transcript_dump();
      first_triggers = result.triggers;
    } else {
      EXPECT_EQ(result.transcript_dump(), first);
      EXPECT_EQ(result.triggers, first_triggers);
    }
  }
}

TEST(GestureApp, BackToBackKaratesQueueBehindTheFirst) {
  GestureAppOptions opts;
  opts.pool = nodeprim::testing::process_pool();
  opts.program = karate_program();
  opts.script = GestureScript{{{1.0, GestureLabel::Karate}, {2.0, GestureLabel::Karate}}};
  auto result = run_gesture_app(opts);
  ASSERT_TRUE(result.completed);
  ASSERT_EQ(result.transcript.size(), 8u);
  EXPECT_EQ(result.firings, 2u);
  // First firing runs 1.0 - 3.66; the second trigger waits for it.
  EXPECT_DOUBLE_EQ(result.transcript[3].stamp, 3.66);
  EXPECT_DOUBLE_EQ(result.transcript[4].stamp, 3.66);
  EXPECT_DOUBLE_EQ(result.transcript[7].stamp, 6.32);
}
