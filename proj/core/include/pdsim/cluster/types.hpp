#pragma once

#include <cstdint>
#include <deque>
#include <string>
#include <vector>

#include "pdsim/sim/engine.hpp"
#include "pdsim/velocity/bucket.hpp"
#include "pdsim/velocity/profile.hpp"

namespace pdsim::cluster {

using RequestId = int64_t;
using InstanceId = int;
using sim::TimeMs;

enum class Role : uint8_t { Prefiller, RegularDecoder, ConvertibleDecoder };
enum class InstanceState : uint8_t { Starting, Ready, Draining, Terminated };

std::string_view role_name(Role role);

enum class RequestPhase : uint8_t {
  PendingPrefill,   // waiting in the router's prefill queue
  Prefilling,       // assigned to a prefiller or convertible decoder
  AwaitingDecode,   // prefill done, waiting in the decode admission queue
  Transferring,     // KVC moving to the destination decoder
  Decoding,
  Completed,
};

struct Request {
  RequestId id = -1;
  TimeMs arrival_ms = 0;
  int input_tokens = 0;
  int output_tokens = 0;  // true length; policies only ever see the bucket prediction
  Bucket predicted_bucket = Bucket::SS;
  Bucket true_bucket = Bucket::SS;

  TimeMs prefill_start_ms = -1;
  TimeMs prefill_end_ms = -1;
  TimeMs first_token_ms = -1;
  TimeMs completion_ms = -1;
  int tokens_generated = 0;

  RequestPhase phase = RequestPhase::PendingPrefill;
  InstanceId prefill_instance = -1;
  InstanceId decode_instance = -1;
  bool was_queued = false;

  // KVC slots this request currently occupies anywhere in the cluster;
  // cross-checked against per-instance accounting by the invariant checker.
  int64_t held_slots = 0;

  int64_t footprint() const { return input_tokens + output_tokens; }
  bool completed() const { return phase == RequestPhase::Completed; }

  std::string placement_label() const;
};

struct Instance {
  InstanceId id = -1;
  Role role = Role::Prefiller;
  InstanceState state = InstanceState::Starting;
  int gpus = 1;
  TimeMs start_ms = 0;
  TimeMs ready_at_ms = 0;
  TimeMs terminated_ms = -1;

  int64_t kvc_capacity = 0;
  int64_t kvc_used = 0;
  // Committed = admitted footprints (prompt + full output). Admission against
  // committed capacity makes decode-time KVC overflow impossible.
  int64_t kvc_committed = 0;
  // Subset of kvc_committed that came in through decode routing; convertible
  // decoders keep this out of their reserved region.
  int64_t kvc_committed_decode = 0;

  // Prefiller state: serial execution, batch size 1.
  int64_t inflight_prefill_tokens = 0;
  std::deque<RequestId> prefill_queue;
  bool prefill_active = false;

  // Decoder state.
  std::vector<RequestId> decode_batch;
  std::vector<RequestId> pending_joins;   // admitted, join at next iteration boundary
  int in_transfer = 0;
  std::array<int, kBucketCount> per_bucket_inflight{};
  bool iteration_in_flight = false;
  int64_t planned_prefill_tokens = 0;

  // Convertible prefill tasks: front is the single active task.
  std::deque<RequestId> convertible_tasks;
  int64_t active_task_remaining = 0;

  bool terminate_scheduled = false;

  bool is_decoder() const {
    return role == Role::RegularDecoder || role == Role::ConvertibleDecoder;
  }
  bool accepts_work() const { return state == InstanceState::Ready; }
  int active_sequences() const {
    return static_cast<int>(decode_batch.size() + pending_joins.size()) + in_transfer +
           static_cast<int>(convertible_tasks.size());
  }
};

}  // namespace pdsim::cluster
