#include "pdsim/cluster/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace pdsim::cluster {

using sim::EventKind;

namespace {

int64_t ceil_ms(double tokens, double tokens_per_second) {
  // Guard against 100.0000000001-style float noise at exact boundaries.
  return static_cast<int64_t>(std::ceil(tokens * 1000.0 / tokens_per_second - 1e-9));
}

}  // namespace

std::string_view role_name(Role role) {
  switch (role) {
    case Role::Prefiller: return "prefiller";
    case Role::RegularDecoder: return "decoder";
    case Role::ConvertibleDecoder: return "convertible";
  }
  return "unknown";
}

std::string Request::placement_label() const {
  if (prefill_instance < 0) return "unplaced";
  std::ostringstream out;
  if (prefill_instance == decode_instance) {
    out << "C" << prefill_instance;  // local prefill + decode on a convertible
  } else {
    out << "P" << prefill_instance;
    if (decode_instance >= 0) out << ">D" << decode_instance;
  }
  if (was_queued) out << "+q";
  return out.str();
}

Cluster::Cluster(sim::Engine& engine, PerfModel perf, ConvertibleConfig convertible,
                 TimeMs startup_delay_ms)
    : engine_(engine),
      perf_(perf),
      convertible_(convertible),
      startup_delay_ms_(startup_delay_ms) {
  if (startup_delay_ms_ < 0) {
    throw std::invalid_argument("startup delay must be nonnegative");
  }
}

RequestId Cluster::add_request(TimeMs arrival_ms, int input_tokens, int output_tokens) {
  if (input_tokens < 1 || output_tokens < 1) {
    throw std::invalid_argument("request token counts must be >= 1");
  }
  Request req;
  req.id = static_cast<RequestId>(requests_.size());
  req.arrival_ms = arrival_ms;
  req.input_tokens = input_tokens;
  req.output_tokens = output_tokens;
  req.true_bucket = classify_lengths(input_tokens, output_tokens);
  req.predicted_bucket = req.true_bucket;
  requests_.push_back(req);
  return req.id;
}

InstanceId Cluster::start_instance(Role role) {
  Instance inst;
  inst.id = static_cast<InstanceId>(instances_.size());
  inst.role = role;
  inst.state = InstanceState::Starting;
  inst.gpus = perf_.gpus_per_instance;
  inst.start_ms = engine_.now();
  inst.ready_at_ms = inst.start_ms + startup_delay_ms_;
  inst.kvc_capacity = inst.is_decoder() ? perf_.kvc_capacity_tokens : 0;
  instances_.push_back(inst);
  generated_tokens_.push_back(0);
  completed_tokens_.push_back(0);

  const InstanceId id = inst.id;
  engine_.schedule(inst.ready_at_ms, EventKind::InstanceReady, [this, id] {
    Instance& target = instances_[static_cast<size_t>(id)];
    if (target.state != InstanceState::Starting) return;  // cancelled while booting
    target.state = InstanceState::Ready;
    if (target.role == Role::Prefiller || target.role == Role::ConvertibleDecoder) {
      if (callbacks_.on_prefill_capacity_change) callbacks_.on_prefill_capacity_change();
    }
    if (target.is_decoder()) {
      if (callbacks_.on_decode_capacity_change) callbacks_.on_decode_capacity_change();
    }
  });
  return id;
}

InstanceId Cluster::add_ready_instance(Role role) {
  Instance inst;
  inst.id = static_cast<InstanceId>(instances_.size());
  inst.role = role;
  inst.state = InstanceState::Ready;
  inst.gpus = perf_.gpus_per_instance;
  inst.start_ms = engine_.now();
  inst.ready_at_ms = inst.start_ms;
  inst.kvc_capacity = inst.is_decoder() ? perf_.kvc_capacity_tokens : 0;
  instances_.push_back(inst);
  generated_tokens_.push_back(0);
  completed_tokens_.push_back(0);
  return inst.id;
}

void Cluster::shut_down(InstanceId id) {
  Instance& inst = instances_[static_cast<size_t>(id)];
  switch (inst.state) {
    case InstanceState::Starting:
      inst.state = InstanceState::Terminated;
      inst.terminated_ms = engine_.now();
      return;
    case InstanceState::Ready:
      inst.state = InstanceState::Draining;
      maybe_terminate(inst);
      return;
    case InstanceState::Draining:
    case InstanceState::Terminated:
      return;
  }
}

std::vector<InstanceId> Cluster::ready_instances(Role role) const {
  std::vector<InstanceId> ids;
  for (const auto& inst : instances_) {
    if (inst.role == role && inst.state == InstanceState::Ready) ids.push_back(inst.id);
  }
  return ids;
}

std::vector<InstanceId> Cluster::active_instances(Role role) const {
  std::vector<InstanceId> ids;
  for (const auto& inst : instances_) {
    if (inst.role == role &&
        (inst.state == InstanceState::Starting || inst.state == InstanceState::Ready)) {
      ids.push_back(inst.id);
    }
  }
  return ids;
}

int Cluster::active_count(Role role) const {
  return static_cast<int>(active_instances(role).size());
}

int64_t Cluster::prefill_duration_ms(int input_tokens) const {
  return ceil_ms(static_cast<double>(input_tokens), perf_.prefill_velocity);
}

int64_t Cluster::transfer_duration_ms(int input_tokens) const {
  if (perf_.network_disabled() || std::isinf(perf_.network_velocity)) return 0;
  return ceil_ms(static_cast<double>(input_tokens), perf_.network_velocity);
}

void Cluster::assign_prefill(InstanceId id, RequestId rid) {
  Instance& inst = instances_[static_cast<size_t>(id)];
  if (inst.role != Role::Prefiller || !inst.accepts_work()) {
    throw std::logic_error("assign_prefill: instance " + std::to_string(id) +
                           " is not a ready prefiller");
  }
  Request& req = requests_[static_cast<size_t>(rid)];
  req.phase = RequestPhase::Prefilling;
  req.prefill_instance = id;
  inst.inflight_prefill_tokens += req.input_tokens;
  inst.prefill_queue.push_back(rid);
  if (!inst.prefill_active) begin_next_prefill(inst);
}

void Cluster::begin_next_prefill(Instance& inst) {
  const RequestId rid = inst.prefill_queue.front();
  Request& req = requests_[static_cast<size_t>(rid)];
  inst.prefill_active = true;
  req.prefill_start_ms = engine_.now();
  const InstanceId id = inst.id;
  engine_.schedule(engine_.now() + prefill_duration_ms(req.input_tokens),
                   EventKind::PrefillComplete,
                   [this, id, rid] { on_prefill_finished(instances_[static_cast<size_t>(id)], rid); });
}

void Cluster::on_prefill_finished(Instance& inst, RequestId rid) {
  Request& req = requests_[static_cast<size_t>(rid)];
  req.prefill_end_ms = engine_.now();
  req.phase = RequestPhase::AwaitingDecode;
  inst.inflight_prefill_tokens -= req.input_tokens;
  prefill_tokens_processed_ += req.input_tokens;
  inst.prefill_active = false;
  inst.prefill_queue.pop_front();
  if (!inst.prefill_queue.empty()) {
    begin_next_prefill(inst);
  } else {
    maybe_terminate(inst);
  }
  if (callbacks_.on_prefill_complete) callbacks_.on_prefill_complete(rid);
  if (callbacks_.on_prefill_capacity_change) callbacks_.on_prefill_capacity_change();
}

bool Cluster::can_admit_decode(InstanceId id, const Request& req) const {
  const Instance& inst = instances_[static_cast<size_t>(id)];
  if (!inst.is_decoder() || !inst.accepts_work()) return false;
  if (inst.active_sequences() >= perf_.max_decode_batch) return false;
  const int64_t fp = req.footprint();
  if (inst.kvc_committed + fp > inst.kvc_capacity) return false;
  if (inst.role == Role::ConvertibleDecoder &&
      inst.kvc_committed_decode + fp > inst.kvc_capacity - convertible_.reserved_tokens) {
    return false;
  }
  return true;
}

bool Cluster::can_admit_convertible_prefill(InstanceId id, const Request& req) const {
  const Instance& inst = instances_[static_cast<size_t>(id)];
  if (inst.role != Role::ConvertibleDecoder || !inst.accepts_work()) return false;
  if (inst.active_sequences() >= perf_.max_decode_batch) return false;
  return inst.kvc_committed + req.footprint() <= inst.kvc_capacity;
}

void Cluster::begin_transfer(InstanceId id, RequestId rid) {
  Instance& inst = instances_[static_cast<size_t>(id)];
  Request& req = requests_[static_cast<size_t>(rid)];
  if (!can_admit_decode(id, req)) {
    throw std::logic_error("begin_transfer: destination cannot admit request");
  }
  const int64_t fp = req.footprint();
  inst.kvc_committed += fp;
  inst.kvc_committed_decode += fp;
  inst.per_bucket_inflight[static_cast<size_t>(req.predicted_bucket)] += 1;
  inst.in_transfer += 1;
  req.phase = RequestPhase::Transferring;
  req.decode_instance = id;
  engine_.schedule(engine_.now() + transfer_duration_ms(req.input_tokens),
                   EventKind::TransferComplete, [this, id, rid] {
                     Instance& dest = instances_[static_cast<size_t>(id)];
                     Request& r = requests_[static_cast<size_t>(rid)];
                     dest.kvc_used += r.input_tokens;
                     r.held_slots += r.input_tokens;
                     dest.in_transfer -= 1;
                     dest.pending_joins.push_back(rid);
                     r.phase = RequestPhase::Decoding;
                     maybe_schedule_iteration(dest);
                   });
}

void Cluster::assign_convertible_prefill(InstanceId id, RequestId rid) {
  Instance& inst = instances_[static_cast<size_t>(id)];
  Request& req = requests_[static_cast<size_t>(rid)];
  if (!can_admit_convertible_prefill(id, req)) {
    throw std::logic_error("assign_convertible_prefill: instance cannot admit request");
  }
  inst.kvc_committed += req.footprint();
  inst.per_bucket_inflight[static_cast<size_t>(req.predicted_bucket)] += 1;
  inst.inflight_prefill_tokens += req.input_tokens;
  req.phase = RequestPhase::Prefilling;
  req.prefill_instance = id;
  req.decode_instance = id;  // decode continues on the same instance
  inst.convertible_tasks.push_back(rid);
  if (inst.convertible_tasks.size() == 1) {
    inst.active_task_remaining = req.input_tokens;
  }
  maybe_schedule_iteration(inst);
}

void Cluster::maybe_schedule_iteration(Instance& inst) {
  if (inst.iteration_in_flight) return;
  if (inst.decode_batch.empty() && inst.pending_joins.empty() &&
      inst.convertible_tasks.empty()) {
    return;
  }
  // Admissions join at iteration boundaries; membership is fixed mid-flight.
  for (RequestId rid : inst.pending_joins) inst.decode_batch.push_back(rid);
  inst.pending_joins.clear();

  int64_t prefill_tokens = 0;
  if (inst.role == Role::ConvertibleDecoder && !inst.convertible_tasks.empty()) {
    // Decode always gets priority: prefill work only fills the chunk headroom
    // left by the decode batch, one task at a time.
    const int64_t headroom =
        convertible_.chunk_size - static_cast<int64_t>(inst.decode_batch.size());
    prefill_tokens = std::clamp<int64_t>(inst.active_task_remaining, 0,
                                         std::max<int64_t>(headroom, 0));
    if (prefill_tokens > 0) {
      Request& task = requests_[static_cast<size_t>(inst.convertible_tasks.front())];
      if (task.prefill_start_ms < 0) task.prefill_start_ms = engine_.now();
    }
  }

  const double ms = perf_.iteration_time_ms(static_cast<int>(inst.decode_batch.size()),
                                            prefill_tokens);
  const int64_t duration = std::max<int64_t>(1, std::llround(ms));
  inst.iteration_in_flight = true;
  inst.planned_prefill_tokens = prefill_tokens;
  const InstanceId id = inst.id;
  engine_.schedule(engine_.now() + duration, EventKind::DecodeIteration,
                   [this, id] { run_iteration_end(id); });
}

void Cluster::run_iteration_end(InstanceId id) {
  Instance& inst = instances_[static_cast<size_t>(id)];
  inst.iteration_in_flight = false;

  std::vector<RequestId> finished;
  std::vector<RequestId> survivors;
  survivors.reserve(inst.decode_batch.size());
  for (RequestId rid : inst.decode_batch) {
    Request& req = requests_[static_cast<size_t>(rid)];
    req.tokens_generated += 1;
    req.held_slots += 1;
    inst.kvc_used += 1;
    generated_tokens_[static_cast<size_t>(id)] += 1;
    if (req.tokens_generated == 1) req.first_token_ms = engine_.now();
    if (req.tokens_generated >= req.output_tokens) {
      finished.push_back(rid);
    } else {
      survivors.push_back(rid);
    }
  }
  inst.decode_batch.swap(survivors);
  for (RequestId rid : finished) {
    finish_request(inst, requests_[static_cast<size_t>(rid)]);
  }

  bool task_finished = false;
  if (inst.planned_prefill_tokens > 0) {
    const RequestId rid = inst.convertible_tasks.front();
    Request& req = requests_[static_cast<size_t>(rid)];
    const int64_t done = inst.planned_prefill_tokens;
    inst.kvc_used += done;
    req.held_slots += done;
    inst.active_task_remaining -= done;
    inst.inflight_prefill_tokens -= done;
    prefill_tokens_processed_ += done;
    if (inst.active_task_remaining == 0) {
      req.prefill_end_ms = engine_.now();
      req.phase = RequestPhase::Decoding;
      inst.convertible_tasks.pop_front();
      inst.pending_joins.push_back(rid);
      if (!inst.convertible_tasks.empty()) {
        inst.active_task_remaining =
            requests_[static_cast<size_t>(inst.convertible_tasks.front())].input_tokens;
      }
      task_finished = true;
    }
  }
  inst.planned_prefill_tokens = 0;

  maybe_schedule_iteration(inst);
  maybe_terminate(inst);

  for (RequestId rid : finished) {
    if (callbacks_.on_request_complete) callbacks_.on_request_complete(rid);
  }
  if (!finished.empty() && callbacks_.on_decode_capacity_change) {
    callbacks_.on_decode_capacity_change();
  }
  if (task_finished && callbacks_.on_prefill_capacity_change) {
    callbacks_.on_prefill_capacity_change();
  }
}

void Cluster::finish_request(Instance& inst, Request& req) {
  req.completion_ms = engine_.now();
  req.phase = RequestPhase::Completed;
  const int64_t fp = req.footprint();
  inst.kvc_used -= fp;
  req.held_slots -= fp;
  inst.kvc_committed -= fp;
  if (req.prefill_instance != req.decode_instance) {
    inst.kvc_committed_decode -= fp;
  }
  inst.per_bucket_inflight[static_cast<size_t>(req.predicted_bucket)] -= 1;
  completed_tokens_[static_cast<size_t>(inst.id)] += fp;
}

double Cluster::memory_utilization(InstanceId id) const {
  const Instance& inst = instances_[static_cast<size_t>(id)];
  if (inst.kvc_capacity <= 0) return 0.0;
  return static_cast<double>(inst.kvc_used) / static_cast<double>(inst.kvc_capacity);
}

double Cluster::decoder_memory_utilization() const {
  int64_t used = 0, capacity = 0;
  for (const auto& inst : instances_) {
    if (inst.is_decoder() && inst.state == InstanceState::Ready) {
      used += inst.kvc_used;
      capacity += inst.kvc_capacity;
    }
  }
  return capacity > 0 ? static_cast<double>(used) / static_cast<double>(capacity) : 0.0;
}

bool Cluster::idle(const Instance& inst) const {
  if (inst.role == Role::Prefiller) {
    return !inst.prefill_active && inst.prefill_queue.empty();
  }
  return inst.decode_batch.empty() && inst.pending_joins.empty() &&
         inst.in_transfer == 0 && inst.convertible_tasks.empty() &&
         inst.kvc_committed == 0;
}

void Cluster::maybe_terminate(Instance& inst) {
  if (inst.state != InstanceState::Draining || !idle(inst) || inst.terminate_scheduled) {
    return;
  }
  inst.terminate_scheduled = true;
  const InstanceId id = inst.id;
  engine_.schedule(engine_.now(), EventKind::InstanceTerminated, [this, id] {
    Instance& target = instances_[static_cast<size_t>(id)];
    target.state = InstanceState::Terminated;
    target.terminated_ms = engine_.now();
  });
}

void Cluster::check_invariants() const {
  std::ostringstream problems;
  int64_t used_total = 0;
  for (const auto& inst : instances_) {
    used_total += inst.kvc_used;
    if (inst.kvc_used < 0 || inst.kvc_used > inst.kvc_capacity) {
      problems << "instance " << inst.id << ": kvc_used " << inst.kvc_used
               << " outside [0, " << inst.kvc_capacity << "]\n";
    }
    if (inst.is_decoder() && inst.kvc_used > inst.kvc_committed) {
      problems << "instance " << inst.id << ": used exceeds committed\n";
    }
    if (inst.is_decoder() && inst.kvc_committed > inst.kvc_capacity) {
      problems << "instance " << inst.id << ": committed exceeds capacity\n";
    }
    if (inst.role == Role::ConvertibleDecoder &&
        inst.kvc_committed_decode > inst.kvc_capacity - convertible_.reserved_tokens) {
      problems << "instance " << inst.id << ": decode work admitted into reserved region\n";
    }
    if (inst.role == Role::Prefiller) {
      if (!inst.prefill_active && !inst.prefill_queue.empty()) {
        problems << "instance " << inst.id << ": queued prefill with no active slot\n";
      }
      int64_t queued_tokens = 0;
      for (RequestId rid : inst.prefill_queue) {
        queued_tokens += requests_[static_cast<size_t>(rid)].input_tokens;
      }
      if (queued_tokens != inst.inflight_prefill_tokens) {
        problems << "instance " << inst.id << ": inflight prefill token drift\n";
      }
    }
    if (static_cast<int>(inst.decode_batch.size()) > perf_.max_decode_batch) {
      problems << "instance " << inst.id << ": decode batch above max\n";
    }
    if (inst.state == InstanceState::Starting &&
        (inst.prefill_active || !inst.decode_batch.empty() || inst.in_transfer > 0)) {
      problems << "instance " << inst.id << ": starting instance holds routed work\n";
    }
  }
  int64_t held_total = 0;
  for (const auto& req : requests_) {
    held_total += req.held_slots;
    if (req.held_slots < 0) {
      problems << "request " << req.id << ": negative held slots\n";
    }
    if (req.completed()) {
      if (req.held_slots != 0) {
        problems << "request " << req.id << ": completed but still holds slots\n";
      }
      if (req.tokens_generated != req.output_tokens) {
        problems << "request " << req.id << ": completed with wrong token count\n";
      }
      const bool ordered = req.arrival_ms <= req.prefill_start_ms &&
                           req.prefill_start_ms <= req.prefill_end_ms &&
                           req.prefill_end_ms <= req.first_token_ms &&
                           req.first_token_ms <= req.completion_ms;
      if (!ordered) {
        problems << "request " << req.id << ": lifecycle timestamps out of order\n";
      }
    }
  }
  if (used_total != held_total) {
    problems << "token conservation broken: instances hold " << used_total
             << " slots, requests account " << held_total << "\n";
  }
  const std::string text = problems.str();
  if (!text.empty()) {
    throw std::logic_error("cluster invariant violation at t=" +
                           std::to_string(engine_.now()) + ":\n" + text);
  }
}

}  // namespace pdsim::cluster
