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

#include <map>
#include <random>
#include <thread>

#include "harness.hpp"
#include "nodeprim/error.hpp"
#include "nodeprim/master.hpp"
#include "nodeprim/pubsub.hpp"

using namespace nodeprim;
using namespace nodeprim::pubsub;
using namespace std::chrono_literals;
using wire::Document;
using wire::Encoding;
using wire::RawText;

namespace {

struct PubSubTest : ::testing::Test {
  void SetUp() override {
    master::ServerOptions o;
    o.bind = {"127.0.0.1", 0};
    o.pool = nodeprim::testing::process_pool();
    server = std::make_unique<master::MasterServer>(o);
  }
  net::Endpoint m() const { return server->endpoint(); }
  std::unique_ptr<master::MasterServer> server;
};

// Both ends see the data-plane connection; later sends are not lost.
void sync(Publisher& pub, Subscriber& sub) {
  ASSERT_TRUE(sub.wait_connected(3s));
  ASSERT_TRUE(pub.wait_for_subscribers(1, 3s));
}

Document doc(const ListenResult& r) {
  EXPECT_TRUE(r.success);
  EXPECT_TRUE(r.payload.has_value());
  return std::get<Document>(*r.payload);
}

}  // namespace

TEST_F(PubSubTest, HumanBehaviourRoundTrip) {
  Publisher pub("human_behaviour", "emotion_node", Encoding::Json, m());
  Subscriber sub("human_behaviour", "cognitive", m());
  sync(pub, sub);
  EXPECT_EQ(pub.endpoint().host, "127.0.0.1");
  EXPECT_GE(pub.endpoint().port, nodeprim::testing::process_pool().first);
  EXPECT_LE(pub.endpoint().port, nodeprim::testing::process_pool().last);

  const Document happy{{"human_state", "happy"}};
  const auto t0 = std::chrono::steady_clock::now();
  pub.send_info(happy);
  auto r = sub.listen_info(true);
  EXPECT_LT(std::chrono::steady_clock::now() - t0, 500ms);
  EXPECT_EQ(doc(r), happy);
}

TEST_F(PubSubTest, SubscriberBeforePublisher) {
  Subscriber sub("late", "listener", m());
  EXPECT_FALSE(sub.connected());
  std::this_thread::sleep_for(300ms);
  Publisher pub("late", "talker", Encoding::Json, m());
  sync(pub, sub);
  pub.send_info(Document{{"n", 1}});
  EXPECT_EQ(doc(sub.listen_info(false, 1000ms))["n"], 1);
}

TEST_F(PubSubTest, SendWithoutSubscribersIsDropped) {
  Publisher pub("lonely", "talker", Encoding::Json, m());
  EXPECT_NO_THROW(pub.send_info(Document{{"x", 1}}));
  EXPECT_EQ(pub.subscriber_count(), 0u);
}

TEST_F(PubSubTest, EncodingMismatch) {
  Publisher pub("j", "talker", Encoding::Json, m());
  try {
    pub.send_info(RawText{"hi"});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::EncodingMismatch);
  }
  Publisher spub("s", "talker", Encoding::String, m());
  EXPECT_THROW(spub.send_info(Document{{"a", 1}}), Error);
}

TEST_F(PubSubTest, RawTextTopic) {
  Publisher pub("chatter", "talker", Encoding::String, m());
  Subscriber sub("chatter", "listener", m());
  sync(pub, sub);
  EXPECT_EQ(sub.encoding(), Encoding::String);
  pub.send_info(RawText{"hello world"});
  auto r = sub.listen_info(false, 1000ms);
  ASSERT_TRUE(r.success);
  EXPECT_EQ(std::get<RawText>(*r.payload).text, "hello world");
}

TEST_F(PubSubTest, SecondBinder) {
  Publisher a("t", "first", Encoding::Json, m());
  try {
    Publisher b("t", "second", Encoding::Json, m());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::SecondBinder);
  }
}

TEST(PubSubNoMaster, Unreachable) {
  std::uint16_t port;
  {
    auto l = net::listen_tcp({"127.0.0.1", 0});
    port = net::local_port(l);
  }
  const net::Endpoint gone{"127.0.0.1", port};
  auto t0 = std::chrono::steady_clock::now();
  try {
    Publisher p("t", "n", Encoding::Json, gone);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::MasterUnreachable);
  }
  EXPECT_LT(std::chrono::steady_clock::now() - t0, 2500ms);
  try {
    Subscriber s("t", "n", gone);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::MasterUnreachable);
  }
}

TEST_F(PubSubTest, NonBlockingTimeoutContract) {
  Publisher pub("idle", "talker", Encoding::Json, m());
  Subscriber sub("idle", "listener", m());
  sync(pub, sub);
  for (int i = 0; i < 20; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    auto r = sub.listen_info(false, 100ms);
    const auto dt = std::chrono::steady_clock::now() - t0;
    EXPECT_FALSE(r.success);
    EXPECT_FALSE(r.payload.has_value());
    EXPECT_GE(dt, 100ms);
    EXPECT_LT(dt, 200ms);
  }
}

TEST_F(PubSubTest, DefaultTimeoutIs100ms) {
  Subscriber sub("nobody", "listener", m());
  const auto t0 = std::chrono::steady_clock::now();
  auto r = sub.listen_info(false);
  const auto dt = std::chrono::steady_clock::now() - t0;
  EXPECT_FALSE(r.success);
  EXPECT_GE(dt, 100ms);
  EXPECT_LT(dt, 200ms);
}

TEST_F(PubSubTest, ThreeSendsInOrder) {
  Publisher pub("seq", "talker", Encoding::Json, m());
  Subscriber sub("seq", "listener", m());
  sync(pub, sub);
  for (int i = 1; i <= 3; ++i) pub.send_info(Document{{"seq", i}});
  for (int i = 1; i <= 3; ++i) EXPECT_EQ(doc(sub.listen_info(false, 1000ms))["seq"], i);
}

TEST_F(PubSubTest, ChannelClosedAfterQueueDrains) {
  auto pub = std::make_unique<Publisher>("bye", "talker", Encoding::Json, m());
  Subscriber sub("bye", "listener", m());
  sync(*pub, sub);
  pub->send_info(Document{{"last", true}});
  ASSERT_TRUE(nodeprim::testing::eventually([&] { return sub.queued() == 1; }, 2s));
  pub.reset();
  EXPECT_EQ(doc(sub.listen_info(false, 1000ms))["last"], true);
  ASSERT_TRUE(nodeprim::testing::eventually([&] { return !sub.connected(); }, 2s));
  try {
    sub.listen_info(false, 100ms);
    FAIL() << "no ChannelClosed";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ChannelClosed);
  }
}

TEST_F(PubSubTest, FanOutToSeveralSubscribers) {
  Publisher pub("fan", "talker", Encoding::Json, m());
  std::vector<std::unique_ptr<Subscriber>> subs;
  for (int i = 0; i < 4; ++i) {
    subs.push_back(std::make_unique<Subscriber>("fan", "l" + std::to_string(i), m()));
  }
  for (auto& s : subs) ASSERT_TRUE(s->wait_connected(3s));
  ASSERT_TRUE(pub.wait_for_subscribers(4, 3s));
  pub.send_info(Document{{"v", 7}});
  for (auto& s : subs) EXPECT_EQ(doc(s->listen_info(false, 1000ms))["v"], 7);
}

// A rogue endpoint that answers a subscriber with frames for the wrong topic
// and with undecodable payloads: none of them may be yielded.
TEST_F(PubSubTest, ForeignFramesAreRejected) {
  auto ctl = master::MasterClient::connect(m());
  auto reply = ctl.register_topic({"mine", master::Role::Pub, "rogue", Encoding::Json});
  auto listener = net::listen_tcp(reply.endpoint());

  Subscriber sub("mine", "listener", m());
  auto conn = net::accept_for(listener, 3s);
  ASSERT_TRUE(conn.valid());
  ASSERT_TRUE(sub.wait_connected(2s));

  conn.send_all(wire::encode_frame("theirs", wire::to_bytes(R"({"x":1})")));
  conn.send_all(wire::encode_frame("mine", wire::to_bytes("not json")));
  conn.send_all(wire::encode_frame("mine", wire::to_bytes(R"({"x":2})")));
  auto r = sub.listen_info(false, 1000ms);
  EXPECT_EQ(doc(r)["x"], 2);
  EXPECT_EQ(sub.rejected(), 2u);
  EXPECT_FALSE(sub.listen_info(false, 100ms).success);
}

TEST_F(PubSubTest, BlockingListenNeverFails) {
  Publisher pub("blk", "talker", Encoding::Json, m());
  Subscriber sub("blk", "listener", m());
  sync(pub, sub);
  std::thread sender([&] {
    std::this_thread::sleep_for(150ms);
    pub.send_info(Document{{"late", 1}});
  });
  auto r = sub.listen_info(true);
  sender.join();
  EXPECT_TRUE(r.success);
  EXPECT_EQ(doc(r)["late"], 1);
}

// 3 topics x 200 messages, interleaved at random.
TEST_F(PubSubTest, FifoAndIsolationFuzz) {
  const std::vector<std::string> topics{"alpha", "beta", "gamma"};
  std::vector<std::unique_ptr<Publisher>> pubs;
  std::vector<std::unique_ptr<Subscriber>> subs;
  for (const auto& t : topics) {
    pubs.push_back(std::make_unique<Publisher>(t, "pub_" + t, Encoding::Json, m()));
    subs.push_back(std::make_unique<Subscriber>(t, "sub_" + t, m()));
  }
  for (std::size_t i = 0; i < topics.size(); ++i) sync(*pubs[i], *subs[i]);

  std::mt19937_64 rng(3);
  std::vector<int> next(3, 1);
  std::vector<int> order;
  for (int t = 0; t < 3; ++t) order.insert(order.end(), 200, t);
  std::shuffle(order.begin(), order.end(), rng);
  for (int t : order) pubs[t]->send_info(Document{{"topic", topics[t]}, {"seq", next[t]++}});

  for (std::size_t t = 0; t < topics.size(); ++t) {
    int last = 0, count = 0;
    while (count < 200) {
      auto r = subs[t]->listen_info(false, 2000ms);
      ASSERT_TRUE(r.success) << topics[t] << " after " << count;
      auto d = std::get<Document>(*r.payload);
      ASSERT_EQ(d["topic"], topics[t]);
      const int seq = d["seq"];
      ASSERT_GT(seq, last);
      last = seq;
      ++count;
    }
    EXPECT_EQ(last, 200);
    EXPECT_FALSE(subs[t]->listen_info(false, 100ms).success);
  }
}
