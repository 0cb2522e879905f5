#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>

#include "pdsim/sim/engine.hpp"
#include "pdsim/velocity/bucket.hpp"
#include "pdsim/velocity/profile.hpp"

namespace pdsim::scaler {

using sim::TimeMs;

// Traffic and runtime signals measured over the scaler's windows. Token and
// request rates cover the last tick window; concurrency and memory
// utilization are sliding-window means, which is what gives those baseline
// policies their documented lag.
struct TrafficSnapshot {
  TimeMs window_start_ms = 0;
  TimeMs window_end_ms = 0;
  double lambda_input = 0.0;  // input-token arrival rate, tokens/s
  // Input + predicted-output token rate per predicted bucket, tokens/s.
  std::array<double, kBucketCount> lambda_prime_per_bucket{};
  double request_rate = 0.0;       // req/s over the tick window
  double concurrency = 0.0;        // in-flight + queued, sliding-window mean
  double decoder_mem_utilization = 0.0;  // sliding-window mean occupancy
  // p99 of TTFT normalized to each request's own SLO (1.0 = exactly at SLO),
  // over recently finished first tokens. TPOT p99 is in raw milliseconds.
  double ttft_slo_ratio_p99 = 0.0;
  double measured_tpot_p99_ms = 0.0;

  int current_prefillers = 0;
  int current_regular_decoders = 0;

  double lambda_prime_total() const {
    double total = 0.0;
    for (double v : lambda_prime_per_bucket) total += v;
    return total;
  }
};

struct ScalingDecision {
  int target_prefillers = 0;       // I^P
  int target_decoders_total = 0;   // I^D
  int convertible_count = 0;       // I^D_c, static for the whole run
  int target_regular_decoders = 0; // I^D_r = max(I^D - I^D_c, 0)
  TimeMs issued_at_ms = 0;
  std::string policy_name;
};

enum class PolicyKind : uint8_t {
  TokenVelocity,
  Concurrency,
  Rps,
  Utilization,
  SloReactive,
  Fixed,  // autoscaling disabled; hold the initial counts
};

std::string_view policy_kind_name(PolicyKind kind);
std::optional<PolicyKind> policy_kind_from_name(std::string_view name);

// Per-stage policy selection with its family's native threshold unit.
struct StagePolicy {
  PolicyKind kind = PolicyKind::TokenVelocity;
  double threshold_requests = 0.0;   // concurrency policies
  double threshold_rps = 0.0;        // RPS policies
  double threshold_fraction = 0.0;   // utilization policies
};

struct SloThresholds {
  double ttft_ratio = 1.0;   // reactive policies fire above this normalized TTFT
  double tpot_ms = 100.0;
};

// --- Token velocity targets ---

// Prefiller count from the input-token arrival rate against the slower of
// prefill and network velocity, with a configured floor.
int tv_prefiller_target(const TrafficSnapshot& snap, const VelocityProfile& profile,
                        int min_prefillers = 1);

struct DecoderTarget {
  int total = 0;     // I^D
  int regular = 0;   // I^D_r
  double fractional_demand = 0.0;  // pre-ceiling sum of per-bucket ratios
};

// Total decoders from the per-bucket demand/velocity ratios; regular
// decoders are what remains after the static convertible pool. Keep-alive
// floors are applied later, when the decision is acted on.
// Throws std::invalid_argument when a bucket with traffic has no velocity.
DecoderTarget tv_decoder_target(const TrafficSnapshot& snap, const VelocityProfile& profile,
                                int convertible_count);

// Convertible pool size: estimated maximum decoder count times the trace's
// burst ratio, rounded up. Held constant for the whole run.
int convertible_count(int max_decoders, double burst_ratio);

// --- Baseline policies (Table-style thresholds, native units) ---

int baseline_concurrency(const TrafficSnapshot& snap, double threshold_requests,
                         int min_floor = 1);

int baseline_rps(const TrafficSnapshot& snap, double threshold_rps, int min_floor = 1);

// One step up above the threshold, one step down below half of it
// (hysteresis); otherwise hold.
int baseline_utilization(const TrafficSnapshot& snap, double threshold_fraction,
                         int current_count, int min_floor = 1);

struct SloReactiveTargets {
  int prefillers = 0;
  int decoders = 0;
};

// Scales only after an SLO is already violated: one prefiller per TTFT
// breach, one decoder per TPOT breach.
SloReactiveTargets baseline_slo_reactive(const TrafficSnapshot& snap,
                                         const SloThresholds& slo, int current_prefillers,
                                         int current_decoders, int min_floor = 1);

}  // namespace pdsim::scaler
