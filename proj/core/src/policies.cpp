#include "pdsim/scaler/policies.hpp"

#include <cmath>
#include <stdexcept>

namespace pdsim::scaler {

namespace {

int ceil_ratio(double demand, double capacity) {
  if (demand <= 0.0) return 0;
  return static_cast<int>(std::ceil(demand / capacity - 1e-12));
}

}  // namespace

std::string_view policy_kind_name(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::TokenVelocity: return "token_velocity";
    case PolicyKind::Concurrency: return "concurrency";
    case PolicyKind::Rps: return "rps";
    case PolicyKind::Utilization: return "utilization";
    case PolicyKind::SloReactive: return "slo_reactive";
    case PolicyKind::Fixed: return "fixed";
  }
  return "unknown";
}

std::optional<PolicyKind> policy_kind_from_name(std::string_view name) {
  for (PolicyKind kind :
       {PolicyKind::TokenVelocity, PolicyKind::Concurrency, PolicyKind::Rps,
        PolicyKind::Utilization, PolicyKind::SloReactive, PolicyKind::Fixed}) {
    if (name == policy_kind_name(kind)) return kind;
  }
  return std::nullopt;
}

int tv_prefiller_target(const TrafficSnapshot& snap, const VelocityProfile& profile,
                        int min_prefillers) {
  const double stage_velocity = std::min(profile.v_p, profile.v_n);
  return std::max(min_prefillers, ceil_ratio(snap.lambda_input, stage_velocity));
}

DecoderTarget tv_decoder_target(const TrafficSnapshot& snap, const VelocityProfile& profile,
                                int convertible_count) {
  DecoderTarget target;
  for (int b = 0; b < kBucketCount; ++b) {
    const double rate = snap.lambda_prime_per_bucket[static_cast<size_t>(b)];
    if (rate <= 0.0) continue;
    const double velocity = profile.v_d_per_bucket[static_cast<size_t>(b)];
    if (!(velocity > 0.0)) {
      throw std::invalid_argument(
          "tv_decoder_target: bucket " +
          std::string(bucket_label(static_cast<Bucket>(b))) +
          " has traffic but no profiled velocity");
    }
    target.fractional_demand += rate / velocity;
  }
  target.total = static_cast<int>(std::ceil(target.fractional_demand - 1e-12));
  target.regular = std::max(target.total - convertible_count, 0);
  return target;
}

int convertible_count(int max_decoders, double burst_ratio) {
  if (burst_ratio < 0.0 || burst_ratio > 1.0) {
    throw std::invalid_argument("convertible_count: burst ratio must be in [0, 1]");
  }
  return static_cast<int>(std::ceil(max_decoders * burst_ratio - 1e-12));
}

int baseline_concurrency(const TrafficSnapshot& snap, double threshold_requests,
                         int min_floor) {
  if (!(threshold_requests > 0.0)) {
    throw std::invalid_argument("baseline_concurrency: threshold must be positive");
  }
  return std::max(min_floor, ceil_ratio(snap.concurrency, threshold_requests));
}

int baseline_rps(const TrafficSnapshot& snap, double threshold_rps, int min_floor) {
  if (!(threshold_rps > 0.0)) {
    throw std::invalid_argument("baseline_rps: threshold must be positive");
  }
  return std::max(min_floor, ceil_ratio(snap.request_rate, threshold_rps));
}

int baseline_utilization(const TrafficSnapshot& snap, double threshold_fraction,
                         int current_count, int min_floor) {
  if (!(threshold_fraction > 0.0) || threshold_fraction >= 1.0) {
    throw std::invalid_argument("baseline_utilization: threshold must be in (0, 1)");
  }
  // Strict inequalities: sitting exactly at the threshold holds steady.
  if (snap.decoder_mem_utilization > threshold_fraction) {
    return current_count + 1;
  }
  if (snap.decoder_mem_utilization < threshold_fraction / 2.0) {
    return std::max(min_floor, current_count - 1);
  }
  return current_count;
}

SloReactiveTargets baseline_slo_reactive(const TrafficSnapshot& snap,
                                         const SloThresholds& slo, int current_prefillers,
                                         int current_decoders, int min_floor) {
  SloReactiveTargets targets;
  targets.prefillers = std::max(min_floor, current_prefillers);
  targets.decoders = std::max(min_floor, current_decoders);
  if (snap.ttft_slo_ratio_p99 > slo.ttft_ratio) targets.prefillers += 1;
  if (snap.measured_tpot_p99_ms > slo.tpot_ms) targets.decoders += 1;
  return targets;
}

}  // namespace pdsim::scaler
