#include "pdsim/router/router.hpp"

#include <algorithm>

namespace pdsim::router {

using cluster::InstanceState;
using cluster::Role;

OutputPredictor::OutputPredictor(double accuracy, sim::RngStream rng)
    : accuracy_(accuracy), rng_(rng) {
  if (accuracy < 0.0 || accuracy > 1.0) {
    throw std::invalid_argument("predictor accuracy must be in [0, 1]");
  }
}

Bucket OutputPredictor::predict(Bucket true_bucket) {
  if (rng_.bernoulli(accuracy_)) return true_bucket;
  // Input length is observed, so a miss lands on one of the two other
  // output classes in the same input row.
  const int in_cls = input_class(true_bucket);
  const int out_cls = output_class(true_bucket);
  const int shift = 1 + static_cast<int>(rng_.next_below(2));
  return make_bucket(in_cls, (out_cls + shift) % 3);
}

Router::Router(cluster::Cluster& cluster, SloPolicy slo, OutputPredictor predictor,
               double convertible_memory_threshold)
    : cluster_(cluster),
      slo_(slo),
      predictor_(std::move(predictor)),
      convertible_memory_threshold_(convertible_memory_threshold) {}

void Router::record_arrival(RequestId rid, TimeMs now) {
  auto& req = cluster_.request(rid);
  req.predicted_bucket = predictor_.predict(req.true_bucket);
  arrivals_.push_back(ArrivalStamp{now, req.input_tokens, req.predicted_bucket});
}

bool Router::try_place(RequestId rid, double convertible_prefill_velocity_tps,
                       RoutingOutcome& outcome) {
  const auto& req = cluster_.request(rid);
  const double ttft_slo = slo_.ttft_slo_ms(req.input_tokens);

  for (InstanceId id : cluster_.ready_instances(Role::Prefiller)) {
    const double waiting_ms =
        1000.0 * static_cast<double>(cluster_.prefill_inflight_tokens(id)) /
        cluster_.perf().prefill_velocity;
    if (waiting_ms <= ttft_slo) {
      cluster_.assign_prefill(id, rid);
      outcome = RoutingOutcome{RoutingOutcome::Kind::Prefiller, id};
      return true;
    }
  }
  for (InstanceId id : cluster_.ready_instances(Role::ConvertibleDecoder)) {
    const double waiting_ms =
        1000.0 * static_cast<double>(cluster_.prefill_inflight_tokens(id)) /
        convertible_prefill_velocity_tps;
    if (waiting_ms <= ttft_slo && cluster_.can_admit_convertible_prefill(id, req)) {
      cluster_.assign_convertible_prefill(id, rid);
      outcome = RoutingOutcome{RoutingOutcome::Kind::Convertible, id};
      return true;
    }
  }
  return false;
}

RoutingOutcome Router::route_prefill(RequestId rid,
                                     double convertible_prefill_velocity_tps) {
  RoutingOutcome outcome{RoutingOutcome::Kind::Enqueued, -1};
  if (try_place(rid, convertible_prefill_velocity_tps, outcome)) return outcome;
  auto& req = cluster_.request(rid);
  req.phase = cluster::RequestPhase::PendingPrefill;
  req.was_queued = true;
  pending_queue_.push_back(rid);
  return outcome;
}

std::optional<InstanceId> Router::route_decode(RequestId rid) const {
  const auto& req = cluster_.request(rid);
  const size_t bucket = static_cast<size_t>(req.predicted_bucket);
  std::optional<InstanceId> best;
  int best_load = 0;
  for (const auto& inst : cluster_.instances()) {
    if (!inst.is_decoder() || inst.state != InstanceState::Ready) continue;
    if (inst.role == Role::ConvertibleDecoder) {
      const double usable = static_cast<double>(
          inst.kvc_capacity - cluster_.convertible_config().reserved_tokens);
      if (static_cast<double>(inst.kvc_used) > convertible_memory_threshold_ * usable) {
        continue;
      }
    }
    if (!cluster_.can_admit_decode(inst.id, req)) continue;
    const int load = inst.per_bucket_inflight[bucket];
    if (!best || load < best_load) {
      best = inst.id;
      best_load = load;
    }
  }
  return best;
}

void Router::reevaluate_queue(double convertible_prefill_velocity_tps) {
  if (pending_queue_.empty()) return;
  std::deque<RequestId> still_waiting;
  for (RequestId rid : pending_queue_) {
    RoutingOutcome outcome{RoutingOutcome::Kind::Enqueued, -1};
    if (!try_place(rid, convertible_prefill_velocity_tps, outcome)) {
      still_waiting.push_back(rid);
    }
  }
  pending_queue_.swap(still_waiting);
}

Router::WindowRates Router::window_rates(TimeMs window_end, TimeMs window_ms) const {
  WindowRates rates;
  const TimeMs window_start = window_end - window_ms;
  const double seconds = static_cast<double>(window_ms) / 1000.0;
  for (const auto& stamp : arrivals_) {
    if (stamp.time < window_start || stamp.time >= window_end) continue;
    rates.lambda_input += static_cast<double>(stamp.input_tokens);
    rates.lambda_prime[static_cast<size_t>(stamp.predicted)] += static_cast<double>(
        stamp.input_tokens + bucket_spec(stamp.predicted).representative_output);
    rates.request_rate += 1.0;
  }
  rates.lambda_input /= seconds;
  for (auto& v : rates.lambda_prime) v /= seconds;
  rates.request_rate /= seconds;
  return rates;
}

void Router::prune_arrivals(TimeMs older_than_ms) {
  while (!arrivals_.empty() && arrivals_.front().time < older_than_ms) {
    arrivals_.pop_front();
  }
}

}  // namespace pdsim::router
