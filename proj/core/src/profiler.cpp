#include "pdsim/velocity/profiler.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>

#include "pdsim/cluster/cluster.hpp"
#include "pdsim/sim/engine.hpp"

namespace pdsim::velocity {

using cluster::Cluster;
using cluster::InstanceId;
using cluster::RequestId;
using cluster::Role;
using sim::EventKind;
using sim::TimeMs;

namespace {

constexpr TimeMs kWarmupMs = 10000;
constexpr TimeMs kMeasureMs = 20000;
constexpr int kMaxLadderSteps = 40;

// Drives one fixed-rate step of a saturation sweep on a private cluster.
// Arrivals are evenly spaced; a trivial least-loaded feed keeps the
// overprovisioned prefillers from ever being the bottleneck.
class SweepHarness {
 public:
  SweepHarness(const PerfModel& perf, int prefillers, int decoders)
      : cluster_(engine_, perf, ConvertibleConfig{}, 0) {
    for (int i = 0; i < prefillers; ++i) {
      prefiller_ids_.push_back(cluster_.add_ready_instance(Role::Prefiller));
    }
    for (int i = 0; i < decoders; ++i) {
      decoder_ids_.push_back(cluster_.add_ready_instance(Role::RegularDecoder));
    }
    Cluster::Callbacks callbacks;
    callbacks.on_prefill_complete = [this](RequestId rid) { place_or_queue(rid); };
    callbacks.on_decode_capacity_change = [this] { retry_queue(); };
    cluster_.set_callbacks(std::move(callbacks));
  }

  void inject(double requests_per_s, TimeMs until_ms, int input_tokens,
              int output_tokens) {
    const double gap_ms = 1000.0 / requests_per_s;
    double t = 0.0;
    while (t < static_cast<double>(until_ms)) {
      const TimeMs at = static_cast<TimeMs>(t);
      engine_.schedule(at, EventKind::RequestArrival, [this, at, input_tokens,
                                                       output_tokens] {
        const RequestId rid = cluster_.add_request(at, input_tokens, output_tokens);
        InstanceId best = prefiller_ids_.front();
        for (InstanceId id : prefiller_ids_) {
          if (cluster_.prefill_inflight_tokens(id) <
              cluster_.prefill_inflight_tokens(best)) {
            best = id;
          }
        }
        cluster_.assign_prefill(best, rid);
      });
      t += gap_ms;
    }
  }

  void run_until(TimeMs t) { engine_.run_until(t); }

  int64_t prefill_tokens() const { return cluster_.prefill_tokens_processed(); }
  int64_t released_tokens() const {
    int64_t total = 0;
    for (InstanceId id : decoder_ids_) total += cluster_.completed_request_tokens(id);
    return total;
  }
  int64_t transfers() const { return transfers_; }

 private:
  void place_or_queue(RequestId rid) {
    const auto& req = cluster_.request(rid);
    for (InstanceId id : decoder_ids_) {
      if (cluster_.can_admit_decode(id, req)) {
        cluster_.begin_transfer(id, rid);
        ++transfers_;
        return;
      }
    }
    waiting_.push_back(rid);
  }

  void retry_queue() {
    std::deque<RequestId> still;
    while (!waiting_.empty()) {
      const RequestId rid = waiting_.front();
      waiting_.pop_front();
      const auto& req = cluster_.request(rid);
      bool placed = false;
      for (InstanceId id : decoder_ids_) {
        if (cluster_.can_admit_decode(id, req)) {
          cluster_.begin_transfer(id, rid);
          ++transfers_;
          placed = true;
          break;
        }
      }
      if (!placed) still.push_back(rid);
    }
    waiting_.swap(still);
  }

  sim::Engine engine_;
  Cluster cluster_;
  std::vector<InstanceId> prefiller_ids_;
  std::vector<InstanceId> decoder_ids_;
  std::deque<RequestId> waiting_;
  int64_t transfers_ = 0;
};

// Rate ladder with the < 2% stop rule shared by both sweeps.
double ladder_sweep(double start_rate, const std::function<double(double)>& measure) {
  double best = 0.0;
  double rate = start_rate;
  int flat_steps = 0;
  for (int step = 0; step < kMaxLadderSteps; ++step) {
    const double value = measure(rate);
    if (value > best * 1.02) {
      flat_steps = 0;
    } else {
      ++flat_steps;
    }
    best = std::max(best, value);
    if (flat_steps >= 2) break;
    rate *= 1.25;
  }
  return best;
}

}  // namespace

double profile_prefill_velocity(const PerfModel& perf, int request_tokens) {
  const double start_rate =
      std::max(0.25, perf.prefill_velocity / static_cast<double>(request_tokens) / 8.0);
  return ladder_sweep(start_rate, [&](double rate) {
    SweepHarness harness(perf, /*prefillers=*/1, /*decoders=*/4);
    harness.inject(rate, kWarmupMs + kMeasureMs, request_tokens, /*output=*/1);
    harness.run_until(kWarmupMs);
    const int64_t at_warmup = harness.prefill_tokens();
    harness.run_until(kWarmupMs + kMeasureMs);
    return static_cast<double>(harness.prefill_tokens() - at_warmup) /
           (static_cast<double>(kMeasureMs) / 1000.0);
  });
}

double profile_decode_velocity(const BucketSpec& bucket, const PerfModel& perf) {
  const int64_t footprint = bucket.representative_input + bucket.representative_output;
  const int batch = static_cast<int>(
      std::min<int64_t>(perf.max_decode_batch, perf.kvc_capacity_tokens / footprint));
  const double analytic_rate =
      1000.0 * static_cast<double>(batch) * static_cast<double>(footprint) /
      (static_cast<double>(bucket.representative_output) *
       perf.iteration_time_ms(batch));
  const double start_rate =
      std::max(0.125, analytic_rate / static_cast<double>(footprint) / 8.0);
  return ladder_sweep(start_rate, [&](double rate) {
    SweepHarness harness(perf, /*prefillers=*/8, /*decoders=*/1);
    harness.inject(rate, kWarmupMs + kMeasureMs, bucket.representative_input,
                   bucket.representative_output);
    harness.run_until(kWarmupMs);
    const int64_t at_warmup = harness.released_tokens();
    harness.run_until(kWarmupMs + kMeasureMs);
    return static_cast<double>(harness.released_tokens() - at_warmup) /
           (static_cast<double>(kMeasureMs) / 1000.0);
  });
}

double profile_network_velocity(const PerfModel& perf) {
  // Transfers quantize to whole milliseconds; measure the effective rate over
  // a spread of representative sizes.
  sim::Engine probe_engine;
  Cluster probe(probe_engine, perf, ConvertibleConfig{}, 0);
  int64_t tokens = 0;
  int64_t total_ms = 0;
  for (const auto& spec : bucket_table()) {
    tokens += spec.representative_input;
    total_ms += probe.transfer_duration_ms(spec.representative_input);
  }
  if (total_ms == 0) return perf.network_velocity;
  return static_cast<double>(tokens) / (static_cast<double>(total_ms) / 1000.0);
}

VelocityProfile build_profile(const ProfilingConfig& config) {
  VelocityProfile profile;
  profile.v_p = profile_prefill_velocity(config.perf, config.prefill_probe_tokens);
  profile.v_n = profile_network_velocity(config.perf);
  for (const auto& spec : bucket_table()) {
    profile.v_d_per_bucket[static_cast<size_t>(spec.id)] =
        profile_decode_velocity(spec, config.perf);
  }
  profile.c0_ms = config.perf.decode_iter_base_ms;
  profile.c1_ms = config.perf.decode_iter_per_seq_ms;
  profile.kvc_capacity_tokens = config.perf.kvc_capacity_tokens;
  profile.gpus_per_instance = config.perf.gpus_per_instance;
  profile.max_decode_batch = config.perf.max_decode_batch;
  profile.prefill_equiv_tokens_per_seq = config.perf.prefill_equiv_tokens_per_seq;

  // Chunk size and reservation depend on each other through the expected
  // batch; one fixed-point pass starting from an empty reservation.
  const double tpot_s = config.tpot_slo_ms / 1000.0;
  int64_t reserved = 0;
  int batch = 0;
  int64_t chunk = 0;
  for (int pass = 0; pass < 2; ++pass) {
    batch = static_cast<int>(
        std::max<int64_t>(1, static_cast<int64_t>(
                                 (static_cast<double>(config.perf.kvc_capacity_tokens) -
                                  static_cast<double>(reserved)) /
                                 config.mean_request_tokens)));
    chunk = select_chunk_size(config.perf, batch, config.tpot_slo_ms);
    const double v_dp = convertible_prefill_velocity(chunk, batch, tpot_s);
    reserved = reserved_memory(v_dp, 1.0, config.reservation_ttft_s);
  }
  profile.expected_batch_size = batch;
  profile.chunk_size = chunk;
  profile.reserved_tokens = reserved;
  return profile;
}

}  // namespace pdsim::velocity
