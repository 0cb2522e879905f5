#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pdsim/router/router.hpp"
#include "pdsim/scaler/policies.hpp"
#include "pdsim/trace/trace.hpp"
#include "pdsim/velocity/profiler.hpp"

namespace pdsim::config {

// One policy variant inside a compare matrix; unset fields inherit the base.
struct Variant {
  std::string name;
  scaler::StagePolicy prefill_policy;
  scaler::StagePolicy decode_policy;
  std::optional<int> convertible_count;
  std::optional<sim::TimeMs> startup_delay_ms;
};

struct ExperimentConfig {
  // Exactly one trace source.
  std::string trace_file;
  std::optional<trace::SynthesisSpec> synthesis;

  uint64_t seed = 0;
  sim::TimeMs horizon_ms = 60000;
  std::string profile_path;

  scaler::StagePolicy prefill_policy;
  scaler::StagePolicy decode_policy;
  std::string policy_label;

  router::SloPolicy slo;
  double predictor_accuracy = 0.85;

  // Convertible pool: an explicit count, or burst-ratio sizing against an
  // estimated maximum decoder count.
  std::optional<int> convertible_count;
  std::optional<int> convertible_auto_max_decoders;

  sim::TimeMs startup_delay_ms = 5000;
  sim::TimeMs scaler_tick_ms = 1000;
  int initial_prefillers = 1;
  int initial_regular_decoders = 1;
  int min_prefillers = 1;
  double convertible_memory_threshold = 0.9;
  bool autoscaling = true;
  bool check_invariants = false;
  std::string out_dir = "out";

  // compare/ablate support.
  std::vector<Variant> compare_variants;
  int companion_prefillers = 8;
  int companion_decoders = 8;

  std::string config_dir;  // directory of the config file, for relative paths
  std::vector<std::string> parse_problems;
};

// Collects every problem instead of stopping at the first.
std::vector<std::string> validate(const ExperimentConfig& config);

ExperimentConfig load_config(const std::string& path);
ExperimentConfig parse_config(const std::string& text, const std::string& config_dir);

velocity::ProfilingConfig load_profiling_config(const std::string& path);
velocity::ProfilingConfig parse_profiling_config(const std::string& text);

// Resolves a possibly relative path against the config file's directory.
std::string resolve_path(const ExperimentConfig& config, const std::string& path);

}  // namespace pdsim::config
