#pragma once

#include <cstdint>

#include "pdsim/velocity/bucket.hpp"
#include "pdsim/velocity/profile.hpp"

namespace pdsim::velocity {

// Inputs for offline profiling of one (model, hardware) pair.
struct ProfilingConfig {
  PerfModel perf;
  double tpot_slo_ms = 100.0;
  // TTFT budget used to size the reserved region (short-request target).
  double reservation_ttft_s = 0.25;
  // Mean prompt+output tokens per request in the target trace; sets the
  // expected decode batch for chunk-size selection.
  double mean_request_tokens = 3622.0;
  int prefill_probe_tokens = 1024;  // request size used by the prefill sweep
};

// Saturation sweep on a single simulated prefiller: the arrival-rate ladder
// climbs by 1.25x per step until the processed-token rate stops improving
// (< 2% gain across two consecutive steps); returns the peak rate.
double profile_prefill_velocity(const PerfModel& perf, int request_tokens = 1024);

// Peak completed-token (released-slot) rate of a single simulated decoder fed
// by overprovisioned prefillers with requests of the bucket's representative
// lengths. Same ladder and stop rule as the prefill sweep.
double profile_decode_velocity(const BucketSpec& bucket, const PerfModel& perf);

// Measured KVC transfer rate, i.e. the configured bandwidth net of the
// millisecond quantization of individual transfers.
double profile_network_velocity(const PerfModel& perf);

// Runs every sweep, selects the chunk size, and resolves the mutually
// dependent expected batch / reservation by one fixed-point iteration
// starting from an empty reservation.
VelocityProfile build_profile(const ProfilingConfig& config);

}  // namespace pdsim::velocity
