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

#include <random>
#include <thread>

#include "harness.hpp"
#include "nodeprim/error.hpp"
#include "nodeprim/node.hpp"
#include "nodeprim/pubsub.hpp"

using namespace nodeprim;
using namespace nodeprim::node;
using namespace std::chrono_literals;
using nodeprim::testing::LocalNetwork;

TEST(Kinds, DefaultLevels) {
  EXPECT_EQ(default_level(NodeKind::Sensory), PrimitiveLevel::Hardware);
  EXPECT_EQ(default_level(NodeKind::Perception), PrimitiveLevel::Algorithmic);
  EXPECT_EQ(default_level(NodeKind::Action), PrimitiveLevel::Social);
  EXPECT_EQ(default_level(NodeKind::Cognitive), PrimitiveLevel::Control);
  NodeDescriptor d("x", NodeKind::Action, PrimitiveLevel::Emergent);
  EXPECT_EQ(d.level, PrimitiveLevel::Emergent);
  EXPECT_EQ(NodeDescriptor("y", NodeKind::Sensory).level, PrimitiveLevel::Hardware);
}

TEST(Kinds, Names) {
  for (auto k : {NodeKind::Sensory, NodeKind::Perception, NodeKind::Cognitive, NodeKind::Action}) {
    EXPECT_EQ(parse_kind(to_string(k)), k);
  }
  EXPECT_EQ(to_string(NodeKind::Perception), "perception");
  EXPECT_FALSE(try_parse_kind("perceptual").has_value());
  EXPECT_THROW(parse_kind("robot"), Error);
  EXPECT_EQ(parse_level("social"), PrimitiveLevel::Social);
}

TEST(Events, SixKinds) {
  const std::vector<std::pair<NodeEvent, const char*>> all{
      {NodeEvent::Started, "started"},
      {NodeEvent::Executing, "executing"},
      {NodeEvent::RobotConnected, "robot_connected"},
      {NodeEvent::RobotConnectionFailed, "robot_connection_failed"},
      {NodeEvent::ShutdownManual, "shutdown_manual"},
      {NodeEvent::ShutdownUnexpected, "shutdown_unexpected"}};
  for (auto [e, name] : all) {
    EXPECT_EQ(to_string(e), name);
    EXPECT_EQ(try_parse_event(name), e);
  }
  EXPECT_FALSE(try_parse_event("crashed").has_value());
}

TEST(Events, JsonShape) {
  NodeStateEvent e{"gesture_karate", NodeKind::Perception, NodeEvent::Started, "", 12.5};
  auto j = e.to_json();
  EXPECT_EQ(j, (nlohmann::json{{"node", "gesture_karate"}, {"type", "perception"},
                               {"event", "started"}, {"detail", ""}, {"stamp", 12.5}}));
  EXPECT_EQ(NodeStateEvent::from_json(j), e);
  for (const char* bad : {R"({})", R"({"node":"x","type":"perception","event":"nope","stamp":1})",
                          R"({"node":"","type":"perception","event":"started","stamp":1})",
                          R"({"node":"x","type":"robot","event":"started","stamp":1})",
                          R"({"node":"x","type":"perception","event":"started","stamp":"1"})", R"([])"}) {
    EXPECT_THROW(NodeStateEvent::from_json(nlohmann::json::parse(bad)), Error) << bad;
  }
}

TEST(NodeStart, AnnouncesStarted) {
  LocalNetwork net;
  auto ctx = node_start(NodeDescriptor("gesture_karate", NodeKind::Perception), net.config);
  ASSERT_TRUE(net.events.wait_count("gesture_karate", NodeEvent::Started, 1, 2s));
  auto events = net.events.snapshot();
  ASSERT_EQ(events.size(), 1u);
  EXPECT_EQ(events[0].kind, NodeKind::Perception);
  EXPECT_EQ(ctx->name(), "gesture_karate");
}

TEST(NodeStart, DuplicateName) {
  LocalNetwork net;
  auto a = node_start(NodeDescriptor("camera", NodeKind::Sensory), net.config);
  try {
    node_start(NodeDescriptor("camera", NodeKind::Sensory), net.config);
    FAIL() << "second node_start succeeded";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::DuplicateName);
  }
  a.reset();
  // The claim goes away with the first context's connection.
  EXPECT_TRUE(nodeprim::testing::eventually(
      [&] {
        try {
          node_start(NodeDescriptor("camera", NodeKind::Sensory), net.config);
          return true;
        } catch (const Error&) {
          return false;
        }
      },
      2s, 50ms));
}

TEST(NodeStart, MasterUnreachable) {
  node::NetworkConfig cfg;
  {
    auto l = net::listen_tcp({"127.0.0.1", 0});
    cfg.master.port = net::local_port(l);
  }
  try {
    node_start(NodeDescriptor("x", NodeKind::Sensory), cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::MasterUnreachable);
  }
}

TEST(NodeStart, StartedThenShutdownInOrder) {
  LocalNetwork net;
  auto ctx = node_start(NodeDescriptor("n", NodeKind::Cognitive), net.config);
  ctx->shutdown();
  ctx->shutdown();  // once only
  EXPECT_TRUE(ctx->is_shut_down());
  ASSERT_TRUE(net.events.wait_count("n", NodeEvent::ShutdownManual, 1, 2s));
  std::this_thread::sleep_for(100ms);
  auto events = net.events.snapshot();
  ASSERT_EQ(events.size(), 2u);
  EXPECT_EQ(events[0].event, NodeEvent::Started);
  EXPECT_EQ(events[1].event, NodeEvent::ShutdownManual);
}

TEST(PublishState, DetailVerbatimAndStampsMonotone) {
  LocalNetwork net;
  auto ctx = node_start(NodeDescriptor("behavior", NodeKind::Cognitive), net.config);
  ctx->publish_state(NodeEvent::Executing, "rule fired");
  ctx->publish_state(NodeEvent::RobotConnectionFailed, "nao at 10.0.0.9 unreachable");
  ASSERT_TRUE(net.events.wait_for([](const auto& v) { return v.size() >= 3; }, 2s));
  auto events = net.events.snapshot();
  EXPECT_EQ(events[1].event, NodeEvent::Executing);
  EXPECT_EQ(events[1].detail, "rule fired");
  EXPECT_EQ(events[2].event, NodeEvent::RobotConnectionFailed);
  EXPECT_EQ(events[2].detail, "nao at 10.0.0.9 unreachable");
  EXPECT_LE(events[0].stamp, events[1].stamp);
  EXPECT_LE(events[1].stamp, events[2].stamp);
  EXPECT_GT(events[0].stamp, 1.6e9);  // seconds since the epoch
}

TEST(PublishState, StampsFromInjectedClock) {
  LocalNetwork net;
  VirtualClock clock(from_seconds(42.0));
  auto ctx = node_start(NodeDescriptor("v", NodeKind::Cognitive), net.config, clock);
  ASSERT_TRUE(net.events.wait_count("v", NodeEvent::Started, 1, 2s));
  EXPECT_DOUBLE_EQ(net.events.snapshot()[0].stamp, 42.0);
}

TEST(PublishOnBehalf, UsesTheNodesIdentity) {
  LocalNetwork net;
  LineSender sink(net.config.events);
  publish_on_behalf(sink, NodeDescriptor("child", NodeKind::Action), NodeEvent::ShutdownUnexpected,
                    "exit 134");
  ASSERT_TRUE(net.events.wait_count("child", NodeEvent::ShutdownUnexpected, 1, 2s));
  auto e = net.events.snapshot()[0];
  EXPECT_EQ(e.kind, NodeKind::Action);
  EXPECT_EQ(e.detail, "exit 134");
}

// Junk lines on the sink never reach node_state subscribers; everything that
// does arrive parses.
TEST(EventSinkProperty, OnlyValidEventsAreRepublished) {
  LocalNetwork net;
  pubsub::Subscriber sub(std::string(kNodeStateTopic), "watcher", net.config.master);
  ASSERT_TRUE(sub.wait_connected(3s));

  std::mt19937_64 rng(5);
  auto conn = net::connect_tcp(net.config.events, 1s);
  ASSERT_TRUE(conn.has_value());
  net::LineChannel ch(std::move(*conn));
  int valid = 0;
  const std::vector<std::string> junk{
      "{", "not json", "[]", "42", R"({"node":"x"})",
      R"({"node":"x","type":"perception","event":"exploded","detail":"","stamp":1})",
      R"({"node":"x","type":"alien","event":"started","detail":"","stamp":1})"};
  for (int i = 0; i < 300; ++i) {
    if (rng() % 2) {
      ch.write_line(junk[rng() % junk.size()]);
    } else {
      NodeStateEvent e{"n" + std::to_string(rng() % 5), NodeKind::Sensory, NodeEvent::Executing,
                       std::to_string(i), static_cast<double>(i)};
      ch.write_line(e.to_json().dump());
      ++valid;
    }
  }
  int got = 0;
  while (got < valid) {
    auto r = sub.listen_info(false, 2000ms);
    ASSERT_TRUE(r.success) << "only " << got << " of " << valid;
    EXPECT_NO_THROW(NodeStateEvent::from_json(std::get<wire::Document>(*r.payload)));
    ++got;
  }
  EXPECT_FALSE(sub.listen_info(false, 200ms).success);
  EXPECT_EQ(net.sink->accepted(), static_cast<std::size_t>(valid));
  EXPECT_EQ(net.sink->rejected(), 300u - static_cast<std::size_t>(valid));
}

TEST(LineSender, DeliversThroughRelay) {
  LocalNetwork net;
  LineSender s(net.config.triggers);
  pubsub::Subscriber sub("gesture", "watcher", net.config.master);
  ASSERT_TRUE(sub.wait_connected(3s));
  EXPECT_TRUE(s.send({{"gesture", "karate"}}));
  auto r = sub.listen_info(false, 2000ms);
  ASSERT_TRUE(r.success);
  EXPECT_EQ(std::get<wire::Document>(*r.payload)["gesture"], "karate");
}

TEST(LineSender, UnreachableReturnsFalse) {
  std::uint16_t port;
  {
    auto l = net::listen_tcp({"127.0.0.1", 0});
    port = net::local_port(l);
  }
  LineSender s({"127.0.0.1", port});
  EXPECT_FALSE(s.send({{"a", 1}}));
}
