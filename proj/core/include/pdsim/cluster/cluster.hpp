#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "pdsim/cluster/types.hpp"

namespace pdsim::cluster {

// Owns instances and requests and executes all stage mechanics: serial
// prefill, KVC transfer, batched decode iterations, restricted chunked
// prefill on convertible decoders, admission control, and instance
// lifecycle. All mutation happens inside event handlers on the owning
// engine's thread.
class Cluster {
 public:
  struct Callbacks {
    // Remote prefill finished; the request needs a decode placement.
    std::function<void(RequestId)> on_prefill_complete;
    // Prefill-side capacity changed (instance ready, prefill slot freed);
    // the router should re-evaluate its pending queue.
    std::function<void()> on_prefill_capacity_change;
    // Decode-side capacity changed (KVC released, decoder ready).
    std::function<void()> on_decode_capacity_change;
    std::function<void(RequestId)> on_request_complete;
  };

  Cluster(sim::Engine& engine, PerfModel perf, ConvertibleConfig convertible,
          TimeMs startup_delay_ms);

  const PerfModel& perf() const { return perf_; }
  const ConvertibleConfig& convertible_config() const { return convertible_; }
  TimeMs startup_delay_ms() const { return startup_delay_ms_; }
  void set_callbacks(Callbacks cb) { callbacks_ = std::move(cb); }

  // --- Requests ---
  RequestId add_request(TimeMs arrival_ms, int input_tokens, int output_tokens);
  Request& request(RequestId id) { return requests_[static_cast<size_t>(id)]; }
  const Request& request(RequestId id) const { return requests_[static_cast<size_t>(id)]; }
  const std::vector<Request>& requests() const { return requests_; }

  // --- Instance lifecycle ---
  InstanceId start_instance(Role role);
  // Warm instance for the initial fleet: Ready immediately, no startup delay.
  InstanceId add_ready_instance(Role role);
  // Draining instances accept no new work and terminate once idle;
  // Starting instances are cancelled outright.
  void shut_down(InstanceId id);
  Instance& instance(InstanceId id) { return instances_[static_cast<size_t>(id)]; }
  const Instance& instance(InstanceId id) const { return instances_[static_cast<size_t>(id)]; }
  const std::vector<Instance>& instances() const { return instances_; }

  // Ids of Ready instances with the given role, ascending.
  std::vector<InstanceId> ready_instances(Role role) const;
  // Starting or Ready (what a scaler counts as provisioned), ascending.
  std::vector<InstanceId> active_instances(Role role) const;
  int active_count(Role role) const;

  // --- Prefill stage ---
  // Serial prefill on a dedicated prefiller; duration ceil(1000 * L / V_P).
  void assign_prefill(InstanceId id, RequestId req);
  // Restricted chunked prefill on a convertible decoder. The instance works
  // on one task at a time; later tasks queue behind it.
  void assign_convertible_prefill(InstanceId id, RequestId req);

  // Waiting-time estimate inputs for the prefill routing policy.
  int64_t prefill_inflight_tokens(InstanceId id) const {
    return instance(id).inflight_prefill_tokens;
  }

  // --- Decode stage ---
  // Admission reserves the full prompt+output footprint so that decode can
  // never overflow KVC. Decode-routed work must stay out of a convertible's
  // reserved region; locally prefill-routed work may use it.
  bool can_admit_decode(InstanceId id, const Request& req) const;
  bool can_admit_convertible_prefill(InstanceId id, const Request& req) const;
  // Commits the footprint and starts the KVC transfer; decode joins the
  // batch at the first iteration boundary after the transfer lands.
  void begin_transfer(InstanceId id, RequestId req);

  std::deque<RequestId>& decode_admission_queue() { return decode_admission_queue_; }

  // --- Accounting ---
  int64_t transfer_duration_ms(int input_tokens) const;
  int64_t prefill_duration_ms(int input_tokens) const;
  double memory_utilization(InstanceId id) const;
  // Mean occupancy across Ready decoders (the utilization policies' signal).
  double decoder_memory_utilization() const;
  int64_t prefill_tokens_processed() const { return prefill_tokens_processed_; }
  int64_t generated_tokens(InstanceId id) const {
    return instances_[static_cast<size_t>(id)].role == Role::Prefiller
               ? 0
               : generated_tokens_[static_cast<size_t>(id)];
  }
  int64_t completed_request_tokens(InstanceId id) const {
    return completed_tokens_[static_cast<size_t>(id)];
  }

  // Validates token conservation, capacity bounds, prefiller serialism and
  // request accounting; throws std::logic_error on any violation.
  void check_invariants() const;

 private:
  void begin_next_prefill(Instance& inst);
  void on_prefill_finished(Instance& inst, RequestId rid);
  void maybe_schedule_iteration(Instance& inst);
  void run_iteration_end(InstanceId id);
  void finish_request(Instance& inst, Request& req);
  void maybe_terminate(Instance& inst);
  bool idle(const Instance& inst) const;

  sim::Engine& engine_;
  PerfModel perf_;
  ConvertibleConfig convertible_;
  TimeMs startup_delay_ms_;
  Callbacks callbacks_;

  std::vector<Request> requests_;
  std::vector<Instance> instances_;
  std::deque<RequestId> decode_admission_queue_;
  std::vector<int64_t> generated_tokens_;   // per instance
  std::vector<int64_t> completed_tokens_;   // per instance, L_in + L_out of finished requests
  int64_t prefill_tokens_processed_ = 0;
};

}  // namespace pdsim::cluster
