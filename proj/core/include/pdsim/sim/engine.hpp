#pragma once

#include <cstdint>
#include <functional>
#include <queue>
#include <string_view>
#include <vector>

namespace pdsim::sim {

using TimeMs = int64_t;

enum class EventKind : uint8_t {
  RequestArrival,
  PrefillComplete,
  TransferComplete,
  DecodeIteration,
  InstanceReady,
  InstanceTerminated,
  ScalerTick,
  MetricsTick,
};

std::string_view event_kind_name(EventKind kind);

struct SimEvent {
  TimeMs time = 0;
  uint64_t sequence = 0;  // monotone tie-break counter
  EventKind kind = EventKind::RequestArrival;
  std::function<void()> action;
};

// Virtual clock. Advances only when the queue head is dispatched.
class SimClock {
 public:
  TimeMs now() const { return now_; }

 private:
  friend class Engine;
  TimeMs now_ = 0;
};

// Deterministic single-threaded event loop. Events dispatch in
// nondecreasing time order; equal times break ties by scheduling sequence.
// A run's state is self-contained, so independent engines may execute on
// parallel workers.
class Engine {
 public:
  Engine() = default;
  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;

  const SimClock& clock() const { return clock_; }
  TimeMs now() const { return clock_.now(); }

  // Scheduling in the past is a programming error and throws std::logic_error.
  void schedule(TimeMs time, EventKind kind, std::function<void()> action);

  // Dispatches every event with time <= end_time, including follow-ups
  // scheduled by handlers, then leaves the clock at end_time.
  void run_until(TimeMs end_time);

  // Dispatches all remaining events regardless of time.
  void drain();

  uint64_t dispatched_count() const { return dispatched_; }

  // Invoked after every dispatch; used by debug runs to validate invariants
  // at each event boundary.
  void set_post_dispatch_hook(std::function<void(const SimEvent&)> hook) {
    post_dispatch_hook_ = std::move(hook);
  }

 private:
  struct Ordering {
    bool operator()(const SimEvent& a, const SimEvent& b) const {
      if (a.time != b.time) return a.time > b.time;
      return a.sequence > b.sequence;
    }
  };

  void dispatch_head();

  SimClock clock_;
  uint64_t next_sequence_ = 0;
  uint64_t dispatched_ = 0;
  std::priority_queue<SimEvent, std::vector<SimEvent>, Ordering> queue_;
  std::function<void(const SimEvent&)> post_dispatch_hook_;
};

}  // namespace pdsim::sim
