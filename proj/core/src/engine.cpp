#include "pdsim/sim/engine.hpp"

#include <sstream>
#include <stdexcept>

namespace pdsim::sim {

std::string_view event_kind_name(EventKind kind) {
  switch (kind) {
    case EventKind::RequestArrival: return "RequestArrival";
    case EventKind::PrefillComplete: return "PrefillComplete";
    case EventKind::TransferComplete: return "TransferComplete";
    case EventKind::DecodeIteration: return "DecodeIteration";
    case EventKind::InstanceReady: return "InstanceReady";
    case EventKind::InstanceTerminated: return "InstanceTerminated";
    case EventKind::ScalerTick: return "ScalerTick";
    case EventKind::MetricsTick: return "MetricsTick";
  }
  return "Unknown";
}

void Engine::schedule(TimeMs time, EventKind kind, std::function<void()> action) {
  if (time < clock_.now_) {
    std::ostringstream msg;
    msg << "schedule in the past: " << event_kind_name(kind) << " at t=" << time
        << " while clock is at t=" << clock_.now_;
    throw std::logic_error(msg.str());
  }
  queue_.push(SimEvent{time, next_sequence_++, kind, std::move(action)});
}

void Engine::dispatch_head() {
  // priority_queue::top returns const&; move out via const_cast is the usual
  // trick but copying the handle keeps this obviously safe.
  SimEvent event = queue_.top();
  queue_.pop();
  clock_.now_ = event.time;
  ++dispatched_;
  if (event.action) event.action();
  if (post_dispatch_hook_) post_dispatch_hook_(event);
}

void Engine::run_until(TimeMs end_time) {
  while (!queue_.empty() && queue_.top().time <= end_time) {
    dispatch_head();
  }
  if (end_time > clock_.now_) clock_.now_ = end_time;
}

void Engine::drain() {
  while (!queue_.empty()) {
    dispatch_head();
  }
}

}  // namespace pdsim::sim
