#pragma once

#include <string>
#include <vector>

#include "pdsim/config.hpp"
#include "pdsim/metrics/metrics.hpp"
#include "pdsim/simulation.hpp"

namespace pdsim::runner {

struct RunOverrides {
  std::optional<uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<std::string> trace_path;
};

// Thrown when a config fails validation; carries the full problem list.
struct ValidationError : std::runtime_error {
  explicit ValidationError(std::vector<std::string> problems_in)
      : std::runtime_error(problems_in.empty() ? "invalid config" : problems_in.front()),
        problems(std::move(problems_in)) {}
  std::vector<std::string> problems;
};

// Builds the workload for a config (file parse or seeded synthesis).
std::vector<trace::TraceRecord> load_workload(const config::ExperimentConfig& cfg);

// Resolves the convertible pool size (explicit count, burst-ratio sizing, or
// zero) for the given workload.
int resolve_convertible_count(const config::ExperimentConfig& cfg,
                              const std::vector<trace::TraceRecord>& records);

SimulationOptions build_options(const config::ExperimentConfig& cfg,
                                const std::vector<trace::TraceRecord>& records);

// One deterministic run; emits summary.json and requests.csv under out_dir.
metrics::SimReport run(const config::ExperimentConfig& cfg,
                       const RunOverrides& overrides = {});

struct CompareRow {
  std::string name;
  metrics::SimReport report;
};

struct CompareResult {
  std::vector<CompareRow> rows;
  std::string table_text;  // human-readable matrix
};

// Runs every variant on the shared trace+seed in parallel (one thread per
// run), plus an overprovisioned companion run that yields the required-
// instance series for the Pearson columns.
CompareResult compare(const config::ExperimentConfig& cfg,
                      const RunOverrides& overrides = {});

// The incremental ladder: baseline RPS policies, token-velocity prefiller,
// token-velocity both stages, and the full system with convertibles.
// The base config must use RPS policies on both stages.
CompareResult ablate(const config::ExperimentConfig& cfg,
                     const RunOverrides& overrides = {});

// Burstiness analysis of a trace file; writes <out>/burst_report.json.
trace::BurstReport analyze(const std::string& trace_path, int64_t window_ms,
                           const std::vector<double>& factors,
                           const std::string& out_dir);

// Offline profiling sweeps; writes the profile JSON to out_path.
VelocityProfile profile(const velocity::ProfilingConfig& cfg, const std::string& out_path);

}  // namespace pdsim::runner
