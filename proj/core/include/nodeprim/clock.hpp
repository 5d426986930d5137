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

// Time sources for event stamps, scripted replay and simulated action
// durations. Transport timeouts always use the steady clock instead.

#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <list>
#include <mutex>
#include <stop_token>
#include <string_view>
#include <thread>

namespace nodeprim {

// Nanoseconds since the clock's epoch (Unix epoch for RealClock, zero for
// VirtualClock).
using Nanos = std::chrono::nanoseconds;

inline double to_seconds(Nanos t) { return static_cast<double>(t.count()) / 1e9; }
inline Nanos from_seconds(double s) { return Nanos(static_cast<std::int64_t>(std::llround(s * 1e9))); }

class Clock {
 public:
  virtual ~Clock() = default;

  virtual Nanos now() const = 0;
  // False when `stop` was requested before the deadline.
  virtual bool sleep_until(Nanos deadline, std::stop_token stop = {}) = 0;
  bool sleep_for(Nanos d, std::stop_token stop = {}) { return sleep_until(now() + d, stop); }

  virtual bool is_virtual() const noexcept { return false; }
};

class RealClock final : public Clock {
 public:
  Nanos now() const override;
  bool sleep_until(Nanos deadline, std::stop_token stop = {}) override;
};

RealClock& real_clock();

// Process-wide count of causally pending work, used to decide when a virtual
// clock may jump forward. A unit of work is a data-plane frame in flight, a
// message a thread has taken but not finished with, or a sleeper that was
// just woken. A thread "finishes" its held units the next time it blocks on
// a subscriber or on the clock. Disabled (every call a no-op) unless a
// VirtualClock is alive. node_state traffic is never counted.
class Activity {
 public:
  static bool enabled() noexcept;
  static bool tracks(std::string_view topic) noexcept;

  // Units written to the network by the calling thread.
  static void sent(std::size_t n = 1);
  // Units that were sent but will never be received.
  static void dropped(std::size_t n = 1);
  // The calling thread took ownership of already-counted units.
  static void adopt(std::size_t n = 1);
  // The calling thread starts work of its own.
  static void acquire();
  // The calling thread is about to block: its held units are done.
  static void release_held();

  // Units that landed in a consumer's receive queue stay pending while their
  // consumer thread could pick them up. They stop counting while that thread
  // is parked in a wait something else has to end.
  static void bind_queue(const void* queue);  // the calling thread consumes `queue`
  static void queued(const void* queue, std::size_t n = 1);
  static void dequeued(const void* queue, std::size_t n = 1);  // the consumer took them
  static void queue_gone(const void* queue);                  // what is left is dropped

  // Pending work, not counting units queued for parked threads.
  static std::int64_t pending();
  // True once pending() reached zero within `timeout`.
  static bool wait_quiescent(std::chrono::milliseconds timeout);

  // RAII: the calling thread is committed to a wait that only `except` or the
  // clock can end, so its other queues cannot make progress meanwhile.
  class Park {
   public:
    explicit Park(const void* except = nullptr);
    ~Park();
    Park(const Park&) = delete;
    Park& operator=(const Park&) = delete;

   private:
    bool had_previous_ = false;
    const void* previous_ = nullptr;
  };

  // RAII: acquire() now, release_held() on scope exit.
  class Scope {
   public:
    Scope() { acquire(); }
    ~Scope() { release_held(); }
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;
  };

 private:
  friend class VirtualClock;
  static void enable();
  static void disable();
};

// Logical time that only moves when the harness advances it, either
// explicitly or through the auto-advance driver, which jumps to the earliest
// sleeper deadline whenever Activity reports no pending work.
class VirtualClock final : public Clock {
 public:
  explicit VirtualClock(Nanos start = Nanos(0));
  ~VirtualClock() override;

  VirtualClock(const VirtualClock&) = delete;
  VirtualClock& operator=(const VirtualClock&) = delete;

  Nanos now() const override;
  bool sleep_until(Nanos deadline, std::stop_token stop = {}) override;
  bool is_virtual() const noexcept override { return true; }

  // Moves time forward (never backward) and wakes due sleepers.
  void advance_to(Nanos t);
  // Waits for quiescence, then advances to the earliest deadline. False when
  // no thread sleeps on the clock or quiescence did not come in `patience`.
  bool step(std::chrono::milliseconds patience = std::chrono::seconds(5));
  // Steps until nothing sleeps on the clock or the next deadline is past
  // `horizon`. Returns the number of advances.
  std::size_t run_until_idle(Nanos horizon = Nanos::max(),
                             std::chrono::milliseconds patience = std::chrono::seconds(5));

  std::size_t sleeper_count() const;
  // Blocks (real time) until at least `n` threads sleep on the clock.
  bool wait_for_sleepers(std::size_t n, std::chrono::milliseconds timeout) const;

  void start_auto_advance();
  void stop_auto_advance();

 private:
  struct Sleeper {
    Nanos deadline;
    bool granted = false;
  };

  mutable std::mutex mu_;
  mutable std::condition_variable_any cv_;
  Nanos now_;
  std::list<Sleeper> sleepers_;
  std::jthread driver_;
};

}  // namespace nodeprim
