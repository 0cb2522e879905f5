#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pdsim/cluster/types.hpp"
#include "pdsim/router/router.hpp"
#include "pdsim/scaler/policies.hpp"

namespace pdsim::metrics {

using cluster::TimeMs;

struct LatencyRecord {
  cluster::RequestId id = -1;
  TimeMs arrival_ms = 0;
  int input_tokens = 0;
  int output_tokens = 0;
  Bucket bucket = Bucket::SS;  // true bucket
  double ttft_ms = -1.0;       // -1 when the first token never arrived
  double tpot_ms = -1.0;       // -1 when incomplete; 0 for single-token outputs
  bool completed = false;
  bool attained = false;
  std::string placement;
};

LatencyRecord latency_record(const cluster::Request& req, const router::SloPolicy& slo);

struct Attainment {
  double overall = 1.0;
  double ttft = 1.0;
  double tpot = 1.0;
};

// A request attains when it completed within the horizon, its TTFT is within
// the input-length SLO and its TPOT within the flat SLO. Requests still in
// flight at the horizon count as violations; an empty record set is
// vacuously 1.0.
Attainment slo_attainment(const std::vector<LatencyRecord>& records,
                          const router::SloPolicy& slo);

// One sampled point of the per-role instance-count timeseries.
struct InstanceSample {
  TimeMs time_ms = 0;
  int prefillers = 0;
  int regular_decoders = 0;
  int convertibles = 0;
  // Utilization signals for required-instance derivation.
  double prefill_throughput_utilization = 0.0;
  double decoder_memory_occupancy = 0.0;
  // Cumulative convertible-decoder token counters; window rates for the
  // burst-adaptation analysis come from their deltas.
  int64_t convertible_generated_total = 0;
  int64_t convertible_completed_total = 0;
};

// Time-weighted mean of provisioned GPUs over [0, horizon]. Starting and
// Draining instances occupy GPUs; Terminated ones stop counting.
double avg_gpu_usage(const std::vector<cluster::Instance>& instances, TimeMs horizon_ms);

struct RequiredSeries {
  std::vector<double> prefillers;
  std::vector<double> decoders;
};

// Ground-truth requirements from an overprovisioned companion run: measured
// utilization times the provisioned count, per tick.
// Throws std::invalid_argument when the companion samples are missing.
RequiredSeries required_instances_series(const std::vector<InstanceSample>& overprovisioned);

// Product-moment correlation; nullopt when either series has zero variance.
// Requires equal lengths >= 2.
std::optional<double> pearson(const std::vector<double>& a, const std::vector<double>& b);

struct SimReport {
  std::vector<LatencyRecord> records;
  Attainment attainment;
  double avg_gpus = 0.0;
  std::vector<InstanceSample> instance_samples;
  std::vector<scaler::ScalingDecision> decisions;
  std::optional<double> pearson_prefill;
  std::optional<double> pearson_decode;
  std::string policy;
  uint64_t seed = 0;
  std::string trace_name;
  TimeMs horizon_ms = 0;

  std::string summary_json() const;
  std::string requests_csv() const;
};

// Writes <out_dir>/summary.json and <out_dir>/requests.csv. Deterministic
// byte-for-byte for identical reports.
void emit_report(const SimReport& report, const std::string& out_dir);

}  // namespace pdsim::metrics
