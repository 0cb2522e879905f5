#pragma once

#include <deque>
#include <optional>
#include <vector>

#include "pdsim/cluster/cluster.hpp"
#include "pdsim/sim/rng.hpp"
#include "pdsim/velocity/bucket.hpp"

namespace pdsim::router {

using cluster::InstanceId;
using cluster::RequestId;
using sim::TimeMs;

// TTFT targets stepped by input length; TPOT target is flat.
struct SloPolicy {
  double ttft_short_ms = 250.0;    // inputs <= 256 tokens
  double ttft_medium_ms = 400.0;   // inputs <= 1024
  double ttft_long_ms = 2000.0;    // inputs <= 8192 (and clamped above)
  double tpot_ms = 100.0;

  double ttft_slo_ms(int input_tokens) const {
    if (input_tokens <= 256) return ttft_short_ms;
    if (input_tokens <= 1024) return ttft_medium_ms;
    return ttft_long_ms;
  }
  double tpot_slo_seconds() const { return tpot_ms / 1000.0; }
};

// Accuracy-parameterized stochastic classifier standing in for a
// content-based output predictor. The input class is directly observable at
// the gateway, so a misprediction only perturbs the output class: with
// probability `accuracy` the true bucket is returned, otherwise one of the
// two other output classes in the same input row, uniformly.
class OutputPredictor {
 public:
  OutputPredictor(double accuracy, sim::RngStream rng);

  Bucket predict(Bucket true_bucket);
  double accuracy() const { return accuracy_; }

 private:
  double accuracy_;
  sim::RngStream rng_;
};

struct RoutingOutcome {
  enum class Kind { Prefiller, Convertible, Enqueued } kind;
  InstanceId instance = -1;  // valid for Prefiller/Convertible
};

// Gateway + load balancer: records traffic, predicts buckets, places prefill
// work (two rounds, then the pending queue), places decode work on the
// least-loaded decoder of the predicted type, and re-evaluates the queue on
// capacity changes.
class Router {
 public:
  Router(cluster::Cluster& cluster, SloPolicy slo, OutputPredictor predictor,
         double convertible_memory_threshold = 0.9);

  const SloPolicy& slo() const { return slo_; }

  // Gateway entry: predicts the bucket and updates the traffic accumulators.
  void record_arrival(RequestId rid, TimeMs now);

  // Two-round placement: first prefiller whose estimated waiting time
  // (in-flight tokens over prefill velocity) fits the request's TTFT SLO,
  // then the convertible decoders against their prefill velocity, otherwise
  // the pending queue. Iteration order is ascending instance id.
  RoutingOutcome route_prefill(RequestId rid, double convertible_prefill_velocity_tps);

  // Least per-bucket-inflight Ready decoder that can admit the request;
  // convertibles above the memory threshold are excluded. Ties break by
  // lowest instance id. nullopt when nothing can admit it now.
  std::optional<InstanceId> route_decode(RequestId rid) const;

  // FIFO re-scan of the pending queue after a capacity change.
  void reevaluate_queue(double convertible_prefill_velocity_tps);

  const std::deque<RequestId>& pending_queue() const { return pending_queue_; }
  size_t pending_count() const { return pending_queue_.size(); }

  // --- Traffic accounting for snapshots ---
  struct WindowRates {
    double lambda_input = 0.0;                      // tokens/s
    std::array<double, kBucketCount> lambda_prime{};  // tokens/s per bucket
    double request_rate = 0.0;                      // req/s
  };
  // Rates over [window_end - window_ms, window_end).
  WindowRates window_rates(TimeMs window_end, TimeMs window_ms) const;
  // Drops arrivals older than the given horizon to bound memory.
  void prune_arrivals(TimeMs older_than_ms);

 private:
  struct ArrivalStamp {
    TimeMs time;
    int input_tokens;
    Bucket predicted;
  };

  bool try_place(RequestId rid, double convertible_prefill_velocity_tps,
                 RoutingOutcome& outcome);

  cluster::Cluster& cluster_;
  SloPolicy slo_;
  OutputPredictor predictor_;
  double convertible_memory_threshold_;
  std::deque<RequestId> pending_queue_;
  std::deque<ArrivalStamp> arrivals_;
};

}  // namespace pdsim::router
