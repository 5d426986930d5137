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

#include "nodeprim/clock.hpp"

#include <algorithm>
#include <atomic>
#include <cassert>
#include <map>
#include <optional>

namespace nodeprim {

using namespace std::chrono;

Nanos RealClock::now() const {
  return duration_cast<Nanos>(system_clock::now().time_since_epoch());
}

bool RealClock::sleep_until(Nanos deadline, std::stop_token stop) {
  std::mutex mu;
  std::condition_variable_any cv;
  std::unique_lock lock(mu);
  const auto wake = system_clock::time_point(duration_cast<system_clock::duration>(deadline));
  cv.wait_until(lock, stop, wake, [] { return false; });
  return !stop.stop_requested();
}

RealClock& real_clock() {
  static RealClock clock;
  return clock;
}

// ---------------------------------------------------------------------------
// Activity

namespace {

struct QueueRecord {
  std::thread::id owner;
  std::int64_t count = 0;
};

struct ActivityState {
  std::mutex mu;
  std::condition_variable cv;
  std::atomic<bool> enabled{false};
  std::atomic<std::uint64_t> epoch{0};
  std::int64_t pending = 0;
  std::map<const void*, QueueRecord> queues;
  // Parked threads and the queue each one still waits on.
  std::map<std::thread::id, const void*> parked;

  // Caller holds mu.
  std::int64_t effective() const {
    std::int64_t idle = 0;
    for (const auto& [key, q] : queues) {
      if (q.count == 0) continue;
      auto it = parked.find(q.owner);
      if (it != parked.end() && it->second != key) idle += q.count;
    }
    return pending - idle;
  }
};

ActivityState& state() {
  static ActivityState s;
  return s;
}

struct HeldUnits {
  std::uint64_t epoch = 0;
  std::int64_t count = 0;
};

thread_local HeldUnits t_held;

std::int64_t& held() {
  auto& s = state();
  const auto e = s.epoch.load();
  if (t_held.epoch != e) {
    t_held.epoch = e;
    t_held.count = 0;
  }
  return t_held.count;
}

void add_pending(std::int64_t delta) {
  auto& s = state();
  std::lock_guard lock(s.mu);
  s.pending += delta;
  if (s.effective() <= 0) s.cv.notify_all();
}

}  // namespace

bool Activity::enabled() noexcept { return state().enabled.load(); }

bool Activity::tracks(std::string_view topic) noexcept {
  return enabled() && topic != "node_state";
}

void Activity::sent(std::size_t n) {
  if (!enabled() || n == 0) return;
  add_pending(static_cast<std::int64_t>(n));
}

void Activity::dropped(std::size_t n) {
  if (!enabled() || n == 0) return;
  add_pending(-static_cast<std::int64_t>(n));
}

void Activity::adopt(std::size_t n) {
  if (!enabled()) return;
  held() += static_cast<std::int64_t>(n);
}

void Activity::acquire() {
  if (!enabled()) return;
  add_pending(1);
  held() += 1;
}

void Activity::release_held() {
  if (!enabled()) return;
  auto& h = held();
  if (h == 0) return;
  const auto n = h;
  h = 0;
  add_pending(-n);
}

void Activity::bind_queue(const void* queue) {
  if (!enabled()) return;
  auto& s = state();
  std::lock_guard lock(s.mu);
  s.queues[queue].owner = std::this_thread::get_id();
}

void Activity::queued(const void* queue, std::size_t n) {
  if (!enabled() || n == 0) return;
  auto& s = state();
  std::lock_guard lock(s.mu);
  s.queues[queue].count += static_cast<std::int64_t>(n);
  if (s.effective() <= 0) s.cv.notify_all();
}

void Activity::dequeued(const void* queue, std::size_t n) {
  if (!enabled() || n == 0) return;
  auto& s = state();
  std::lock_guard lock(s.mu);
  auto it = s.queues.find(queue);
  if (it != s.queues.end()) it->second.count = std::max<std::int64_t>(0, it->second.count - n);
}

void Activity::queue_gone(const void* queue) {
  if (!enabled()) return;
  auto& s = state();
  std::lock_guard lock(s.mu);
  auto it = s.queues.find(queue);
  if (it == s.queues.end()) return;
  s.pending -= it->second.count;
  s.queues.erase(it);
  if (s.effective() <= 0) s.cv.notify_all();
}

Activity::Park::Park(const void* except) {
  if (!enabled()) return;
  auto& s = state();
  std::lock_guard lock(s.mu);
  auto [it, fresh] = s.parked.try_emplace(std::this_thread::get_id(), except);
  if (!fresh) {
    had_previous_ = true;
    previous_ = it->second;
    it->second = except;
  }
  if (s.effective() <= 0) s.cv.notify_all();
}

Activity::Park::~Park() {
  if (!enabled()) return;
  auto& s = state();
  std::lock_guard lock(s.mu);
  if (had_previous_) {
    s.parked[std::this_thread::get_id()] = previous_;
  } else {
    s.parked.erase(std::this_thread::get_id());
  }
}

std::int64_t Activity::pending() {
  auto& s = state();
  std::lock_guard lock(s.mu);
  return s.effective();
}

bool Activity::wait_quiescent(milliseconds timeout) {
  auto& s = state();
  std::unique_lock lock(s.mu);
  return s.cv.wait_for(lock, timeout, [&] { return s.effective() <= 0; });
}

void Activity::enable() {
  auto& s = state();
  std::lock_guard lock(s.mu);
  s.pending = 0;
  s.queues.clear();
  s.parked.clear();
  s.epoch.fetch_add(1);
  s.enabled = true;
}

void Activity::disable() {
  auto& s = state();
  std::lock_guard lock(s.mu);
  s.enabled = false;
  s.pending = 0;
  s.queues.clear();
  s.parked.clear();
  s.epoch.fetch_add(1);
  s.cv.notify_all();
}

// ---------------------------------------------------------------------------
// VirtualClock

VirtualClock::VirtualClock(Nanos start) : now_(start) { Activity::enable(); }

VirtualClock::~VirtualClock() {
  stop_auto_advance();
  Activity::disable();
}

Nanos VirtualClock::now() const {
  std::lock_guard lock(mu_);
  return now_;
}

bool VirtualClock::sleep_until(Nanos deadline, std::stop_token stop) {
  std::unique_lock lock(mu_);
  if (deadline <= now_) {
    // Nothing to wait for; the caller keeps running on its current units.
    lock.unlock();
    Activity::release_held();
    Activity::acquire();
    return !stop.stop_requested();
  }
  auto it = sleepers_.insert(sleepers_.end(), Sleeper{deadline});
  // Registered before the units go, so time cannot jump past `deadline`.
  std::optional<Activity::Park> park;
  park.emplace();
  Activity::release_held();
  cv_.notify_all();
  cv_.wait(lock, stop, [&] { return it->granted; });
  park.reset();
  const bool granted = it->granted;
  sleepers_.erase(it);
  cv_.notify_all();
  lock.unlock();
  if (granted) Activity::adopt(1);
  return granted;
}

void VirtualClock::advance_to(Nanos t) {
  std::size_t woken = 0;
  {
    std::lock_guard lock(mu_);
    if (t > now_) now_ = t;
    for (auto& s : sleepers_) {
      if (!s.granted && s.deadline <= now_) {
        s.granted = true;
        ++woken;
      }
    }
    // Count the wake-ups before the sleepers can run and release them.
    Activity::sent(woken);
  }
  cv_.notify_all();
}

bool VirtualClock::step(milliseconds patience) {
  if (!Activity::wait_quiescent(patience)) return false;
  Nanos next = Nanos::max();
  {
    std::lock_guard lock(mu_);
    for (const auto& s : sleepers_) {
      if (!s.granted) next = std::min(next, s.deadline);
    }
  }
  if (next == Nanos::max()) return false;
  // A woken-but-not-yet-running sleeper is still pending work, so the
  // quiescence check above cannot race with it.
  advance_to(next);
  return true;
}

std::size_t VirtualClock::run_until_idle(Nanos horizon, milliseconds patience) {
  std::size_t steps = 0;
  for (;;) {
    if (!Activity::wait_quiescent(patience)) break;
    Nanos next = Nanos::max();
    {
      std::lock_guard lock(mu_);
      for (const auto& s : sleepers_) {
        if (!s.granted) next = std::min(next, s.deadline);
      }
    }
    if (next == Nanos::max() || next > horizon) break;
    advance_to(next);
    ++steps;
  }
  return steps;
}

std::size_t VirtualClock::sleeper_count() const {
  std::lock_guard lock(mu_);
  return static_cast<std::size_t>(
      std::count_if(sleepers_.begin(), sleepers_.end(), [](const Sleeper& s) { return !s.granted; }));
}

bool VirtualClock::wait_for_sleepers(std::size_t n, milliseconds timeout) const {
  std::unique_lock lock(mu_);
  return cv_.wait_for(lock, timeout, [&] {
    return static_cast<std::size_t>(std::count_if(sleepers_.begin(), sleepers_.end(),
                                                  [](const Sleeper& s) { return !s.granted; })) >= n;
  });
}

void VirtualClock::start_auto_advance() {
  if (driver_.joinable()) return;
  driver_ = std::jthread([this](std::stop_token stop) {
    while (!stop.stop_requested()) {
      if (!step(milliseconds(20))) {
        // Nothing due yet (or still busy); wait for a new sleeper or a poke.
        std::unique_lock lock(mu_);
        cv_.wait_for(lock, stop, milliseconds(20), [] { return false; });
      }
    }
  });
}

void VirtualClock::stop_auto_advance() {
  if (driver_.joinable()) {
    driver_.request_stop();
    driver_.join();
  }
}

}  // namespace nodeprim
