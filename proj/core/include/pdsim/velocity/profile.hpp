#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "pdsim/velocity/bucket.hpp"

namespace pdsim {

// Mechanical performance parameters of one instance type for a
// (model, hardware) pair. Memory is accounted in token-slots: one slot per
// prompt or generated token, so mem-per-token is identically 1.
struct PerfModel {
  double prefill_velocity = 14000.0;        // V_P, tokens/s
  double network_velocity = 1e6;            // V_N, tokens/s; <=0 disables network modeling
  double decode_iter_base_ms = 40.65;       // c0
  double decode_iter_per_seq_ms = 0.064;    // c1
  int64_t kvc_capacity_tokens = 165840;
  int max_decode_batch = 512;
  // A prefill token co-scheduled on a convertible decoder costs
  // c1 / prefill_equiv_tokens_per_seq milliseconds of iteration time.
  double prefill_equiv_tokens_per_seq = 8.0;  // kappa
  int gpus_per_instance = 1;

  // Iteration latency is affine in batch size: c0 + c1 * batch. Mixed
  // iterations on a convertible add c1 * prefill_tokens / kappa.
  double iteration_time_ms(int decode_batch, int64_t prefill_tokens = 0) const {
    return decode_iter_base_ms + decode_iter_per_seq_ms * decode_batch +
           decode_iter_per_seq_ms * static_cast<double>(prefill_tokens) /
               prefill_equiv_tokens_per_seq;
  }

  bool network_disabled() const { return network_velocity <= 0.0; }
};

// Sizing of the convertible decoders' restricted chunked prefill.
struct ConvertibleConfig {
  int64_t chunk_size = 0;        // max prefill tokens + decode batch per iteration
  int expected_batch_size = 0;   // sequences
  int64_t reserved_tokens = 0;   // token-slots held back for prefill tasks
};

// Per-(model, hardware) velocity table plus the convertible sizing derived
// from it. This is the file the offline profiler emits and every simulation
// consumes.
struct VelocityProfile {
  double v_p = 0.0;
  double v_n = 0.0;
  std::array<double, kBucketCount> v_d_per_bucket{};
  int64_t chunk_size = 0;
  int expected_batch_size = 0;
  int64_t reserved_tokens = 0;
  double c0_ms = 0.0;
  double c1_ms = 0.0;
  int64_t kvc_capacity_tokens = 0;
  int gpus_per_instance = 1;
  int max_decode_batch = 512;
  double prefill_equiv_tokens_per_seq = 8.0;

  double decode_velocity(Bucket b) const {
    return v_d_per_bucket[static_cast<size_t>(b)];
  }

  // Prefill velocity of a convertible decoder at this profile's chunk size,
  // per the chunk-headroom rule.
  double convertible_prefill_velocity_tps(double tpot_slo_seconds) const;

  PerfModel perf_model() const;
  ConvertibleConfig convertible_config() const;

  // Structural validation; returns a list of problems (empty when valid).
  std::vector<std::string> validate() const;

  std::string to_json() const;
  static VelocityProfile from_json(const std::string& text);
  static VelocityProfile load(const std::string& path);
  void save(const std::string& path) const;
};

// Measured decode velocity: total tokens of the completed requests divided
// by the measured time-per-output-token.
// Throws std::invalid_argument on an empty set or nonpositive TPOT.
double measured_decode_velocity(const std::vector<int64_t>& completed_tokens,
                                double measured_tpot_seconds);

// Prefill velocity a convertible decoder can sustain: the chunk headroom
// left by the decode batch, released once per TPOT-SLO-bounded iteration.
// Requires chunk_size > batch_size and tpot_slo > 0.
double convertible_prefill_velocity(int64_t chunk_size, int batch_size,
                                    double tpot_slo_seconds);

// Token-slots reserved on a convertible decoder so that redirected prefill
// tasks admitted within one TTFT SLO window always have room.
int64_t reserved_memory(double v_dp_tokens_per_s, double mem_per_token,
                        double ttft_slo_seconds);

// Largest chunk size whose mixed-iteration time at the expected batch stays
// within the TPOT SLO: doubles until violation, then binary-searches the
// boundary. Requires headroom above the pure-decode iteration time.
// Throws std::invalid_argument when no feasible chunk exists.
int64_t select_chunk_size(const PerfModel& perf, int expected_batch_size,
                          double tpot_slo_ms);

}  // namespace pdsim
