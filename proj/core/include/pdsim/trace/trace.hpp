#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "pdsim/sim/rng.hpp"
#include "pdsim/velocity/bucket.hpp"

namespace pdsim::trace {

struct TraceRecord {
  int64_t arrival_ms = 0;
  int input_tokens = 0;
  int output_tokens = 0;
};

// One arrival-rate segment of a synthetic workload, [start_s, end_s).
struct RateSegment {
  double start_s = 0.0;
  double end_s = 0.0;
  double rps = 0.0;
};

// A point mass in the synthetic length mixture.
struct LengthMix {
  int input_tokens = 0;
  int output_tokens = 0;
  double weight = 1.0;
};

struct SynthesisSpec {
  std::vector<RateSegment> segments;
  std::vector<LengthMix> mixture;
};

struct ExcessFraction {
  double requests = 0.0;
  double tokens = 0.0;
};

// Sliding-window burstiness analysis. Instantaneous rates are measured over
// 1 s sub-windows; the running average is taken over the trailing window
// (default 60 s). A burst is a maximal run of sub-windows whose instantaneous
// rate exceeds the running average.
struct BurstReport {
  int64_t window_ms = 60000;
  double burst_time_fraction = 0.0;   // share of sub-windows above the running average
  double mean_burst_duration_s = 0.0;
  // Overprovisioning factor X -> share of requests / tokens arriving while
  // the instantaneous rate exceeds X * running average. Nonincreasing in X.
  std::map<double, ExcessFraction> excess_fraction;

  // Share of token traffic above the running average; sizes the convertible
  // decoder pool.
  double token_burst_ratio() const;

  std::string to_json() const;
};

// Parse errors carry every offending line, not just the first.
struct TraceParseError : std::runtime_error {
  explicit TraceParseError(const std::string& what, std::vector<std::string> problems_in)
      : std::runtime_error(what), problems(std::move(problems_in)) {}
  std::vector<std::string> problems;
};

// CSV with header `arrival_ms,input_tokens,output_tokens`. Records are
// returned sorted by arrival time (stable).
std::vector<TraceRecord> parse_trace(const std::string& path);
std::vector<TraceRecord> parse_trace_text(const std::string& text,
                                          const std::string& origin = "<memory>");
std::string serialize_trace(const std::vector<TraceRecord>& records);
void save_trace(const std::vector<TraceRecord>& records, const std::string& path);

// Poisson arrivals per segment; lengths drawn from the weighted mixture.
// Deterministic for a fixed seed.
std::vector<TraceRecord> synthesize(const SynthesisSpec& spec, const sim::RngState& rng);

// Seeded uniform thinning until the mean rate is within 2% of the target.
// Throws std::invalid_argument when the target exceeds the source rate
// (no upsampling).
std::vector<TraceRecord> rescale(const std::vector<TraceRecord>& records,
                                 double target_rps, const sim::RngState& rng);

double mean_rps(const std::vector<TraceRecord>& records);

BurstReport burstiness(const std::vector<TraceRecord>& records, int64_t window_ms,
                       const std::vector<double>& factors);

inline Bucket classify(const TraceRecord& r) {
  return classify_lengths(r.input_tokens, r.output_tokens);
}

}  // namespace pdsim::trace
