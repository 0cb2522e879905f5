#pragma once

#include <deque>
#include <memory>
#include <string>

#include "pdsim/cluster/cluster.hpp"
#include "pdsim/metrics/metrics.hpp"
#include "pdsim/router/router.hpp"
#include "pdsim/scaler/policies.hpp"
#include "pdsim/trace/trace.hpp"
#include "pdsim/velocity/profile.hpp"

namespace pdsim {

struct SimulationOptions {
  VelocityProfile profile;
  router::SloPolicy slo;
  double predictor_accuracy = 0.85;
  uint64_t seed = 0;
  sim::TimeMs horizon_ms = 60000;

  scaler::StagePolicy prefill_policy;
  scaler::StagePolicy decode_policy;
  int convertible_count = 0;
  sim::TimeMs startup_delay_ms = 5000;
  sim::TimeMs scaler_tick_ms = 1000;
  int initial_prefillers = 1;
  int initial_regular_decoders = 1;
  int min_prefillers = 1;
  double convertible_memory_threshold = 0.9;
  // Sliding window (in ticks) for the lagging concurrency/utilization
  // signals and the reactive p99s.
  int lag_window_ticks = 5;
  // Targets below the current count apply only after this many consecutive
  // agreeing ticks; damping covers the token-velocity policy only, so the
  // baselines keep their documented fluctuation.
  int scale_down_ticks = 3;
  bool check_invariants = false;
  std::string policy_label;
  std::string trace_name;
};

// One deterministic single-threaded simulation run. Self-contained, so many
// Simulations can execute on parallel workers.
class Simulation {
 public:
  Simulation(SimulationOptions options, std::vector<trace::TraceRecord> records);

  metrics::SimReport run();

  const cluster::Cluster& cluster() const { return *cluster_; }
  const SimulationOptions& options() const { return options_; }

 private:
  void on_arrival(cluster::RequestId rid);
  void try_admit_decode_queue();
  void on_metrics_tick(sim::TimeMs now);
  void on_scaler_tick(sim::TimeMs now);
  scaler::TrafficSnapshot build_snapshot(sim::TimeMs now) const;
  int stage_target(const scaler::StagePolicy& policy, const scaler::TrafficSnapshot& snap,
                   bool prefill_stage, int current) const;
  void apply_prefiller_target(int target);
  void apply_regular_decoder_target(int target);
  void scale_role(cluster::Role role, int current, int target);
  double convertible_velocity() const;

  SimulationOptions options_;
  std::vector<trace::TraceRecord> records_;
  sim::Engine engine_;
  sim::RngState rng_;
  std::unique_ptr<cluster::Cluster> cluster_;
  std::unique_ptr<router::Router> router_;

  // Lagging-signal windows, one sample per metrics tick.
  std::deque<double> concurrency_samples_;
  std::deque<double> utilization_samples_;
  struct FinishStamp {
    sim::TimeMs time;
    double ttft_slo_ratio;
    double tpot_ms;
  };
  std::deque<FinishStamp> finish_window_;

  std::vector<metrics::InstanceSample> samples_;
  std::vector<scaler::ScalingDecision> decisions_;
  int64_t completed_count_ = 0;
  int64_t arrived_count_ = 0;
  int64_t last_prefill_tokens_ = 0;
  int prefill_downscale_streak_ = 0;
  int decode_downscale_streak_ = 0;
};

}  // namespace pdsim
