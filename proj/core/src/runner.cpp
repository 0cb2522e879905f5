#include "pdsim/runner.hpp"

#include <filesystem>
#include <fstream>
#include <future>
#include <iomanip>
#include <sstream>

#include "json.hpp"

namespace pdsim::runner {

using nlohmann::ordered_json;

namespace {

config::ExperimentConfig with_overrides(config::ExperimentConfig cfg,
                                        const RunOverrides& overrides) {
  if (overrides.seed) cfg.seed = *overrides.seed;
  if (overrides.out_dir) cfg.out_dir = *overrides.out_dir;
  if (overrides.trace_path) {
    cfg.trace_file = *overrides.trace_path;
    cfg.synthesis.reset();
    cfg.config_dir.clear();  // CLI paths resolve against the working directory
  }
  return cfg;
}

void validate_or_throw(const config::ExperimentConfig& cfg) {
  auto problems = config::validate(cfg);
  if (!problems.empty()) throw ValidationError(std::move(problems));
}

std::string trace_label(const config::ExperimentConfig& cfg) {
  if (!cfg.trace_file.empty()) {
    return std::filesystem::path(cfg.trace_file).filename().string();
  }
  return "synthetic";
}

std::vector<double> provisioned_prefillers(const metrics::SimReport& report) {
  std::vector<double> series;
  series.reserve(report.instance_samples.size());
  for (const auto& s : report.instance_samples) {
    series.push_back(static_cast<double>(s.prefillers));
  }
  return series;
}

std::vector<double> provisioned_decoders(const metrics::SimReport& report) {
  std::vector<double> series;
  series.reserve(report.instance_samples.size());
  for (const auto& s : report.instance_samples) {
    series.push_back(static_cast<double>(s.regular_decoders + s.convertibles));
  }
  return series;
}

void attach_pearson(metrics::SimReport& report, const metrics::RequiredSeries& required) {
  auto truncate = [](std::vector<double> a, size_t n) {
    a.resize(std::min(a.size(), n));
    return a;
  };
  const auto prov_p = provisioned_prefillers(report);
  const auto prov_d = provisioned_decoders(report);
  const size_t n_p = std::min(prov_p.size(), required.prefillers.size());
  const size_t n_d = std::min(prov_d.size(), required.decoders.size());
  if (n_p >= 2) {
    report.pearson_prefill =
        metrics::pearson(truncate(prov_p, n_p), truncate(required.prefillers, n_p));
  }
  if (n_d >= 2) {
    report.pearson_decode =
        metrics::pearson(truncate(prov_d, n_d), truncate(required.decoders, n_d));
  }
}

metrics::SimReport run_companion(const config::ExperimentConfig& cfg,
                                 const std::vector<trace::TraceRecord>& records) {
  SimulationOptions options = build_options(cfg, records);
  options.prefill_policy = scaler::StagePolicy{scaler::PolicyKind::Fixed, 0, 0, 0};
  options.decode_policy = scaler::StagePolicy{scaler::PolicyKind::Fixed, 0, 0, 0};
  options.initial_prefillers = cfg.companion_prefillers;
  options.initial_regular_decoders = cfg.companion_decoders;
  options.convertible_count = 0;
  options.policy_label = "companion_overprovisioned";
  Simulation sim(options, records);
  return sim.run();
}

std::string render_table(const std::vector<CompareRow>& rows) {
  std::ostringstream out;
  out << std::left << std::setw(22) << "policy" << std::right << std::setw(10)
      << "overall" << std::setw(10) << "ttft" << std::setw(10) << "tpot"
      << std::setw(10) << "avg_gpus" << std::setw(11) << "pearson_p" << std::setw(11)
      << "pearson_d" << "\n";
  out << std::string(84, '-') << "\n";
  out << std::fixed << std::setprecision(4);
  for (const auto& row : rows) {
    out << std::left << std::setw(22) << row.name << std::right << std::setw(10)
        << row.report.attainment.overall << std::setw(10) << row.report.attainment.ttft
        << std::setw(10) << row.report.attainment.tpot << std::setw(10)
        << row.report.avg_gpus;
    for (const auto& p : {row.report.pearson_prefill, row.report.pearson_decode}) {
      if (p) {
        out << std::setw(11) << *p;
      } else {
        out << std::setw(11) << "n/a";
      }
    }
    out << "\n";
  }
  return out.str();
}

void write_compare_summary(const std::vector<CompareRow>& rows, const std::string& out_dir,
                           const std::string& table) {
  ordered_json j = ordered_json::array();
  for (const auto& row : rows) {
    ordered_json e;
    e["name"] = row.name;
    e["slo_attainment_overall"] = row.report.attainment.overall;
    e["slo_attainment_ttft"] = row.report.attainment.ttft;
    e["slo_attainment_tpot"] = row.report.attainment.tpot;
    e["avg_gpus"] = row.report.avg_gpus;
    e["pearson_prefill"] =
        row.report.pearson_prefill ? ordered_json(*row.report.pearson_prefill) : ordered_json();
    e["pearson_decode"] =
        row.report.pearson_decode ? ordered_json(*row.report.pearson_decode) : ordered_json();
    j.push_back(e);
  }
  std::filesystem::create_directories(out_dir);
  std::ofstream json_out(out_dir + "/compare.json", std::ios::binary);
  json_out << j.dump(2) << "\n";
  std::ofstream table_out(out_dir + "/compare.txt", std::ios::binary);
  table_out << table;
}

CompareResult run_matrix(const config::ExperimentConfig& cfg,
                         const std::vector<config::Variant>& variants) {
  const auto records = load_workload(cfg);
  const auto companion = run_companion(cfg, records);
  const auto required = metrics::required_instances_series(companion.instance_samples);

  // Independent deterministic runs; merge in declaration order.
  std::vector<std::future<metrics::SimReport>> futures;
  futures.reserve(variants.size());
  for (const auto& variant : variants) {
    futures.push_back(std::async(std::launch::async, [&cfg, &records, variant] {
      config::ExperimentConfig variant_cfg = cfg;
      variant_cfg.prefill_policy = variant.prefill_policy;
      variant_cfg.decode_policy = variant.decode_policy;
      variant_cfg.policy_label = variant.name;
      if (variant.convertible_count) {
        variant_cfg.convertible_count = variant.convertible_count;
        variant_cfg.convertible_auto_max_decoders.reset();
      }
      if (variant.startup_delay_ms) variant_cfg.startup_delay_ms = *variant.startup_delay_ms;
      Simulation sim(build_options(variant_cfg, records), records);
      return sim.run();
    }));
  }

  CompareResult result;
  for (size_t i = 0; i < futures.size(); ++i) {
    CompareRow row;
    row.name = variants[i].name;
    row.report = futures[i].get();
    attach_pearson(row.report, required);
    metrics::emit_report(row.report, cfg.out_dir + "/" + row.name);
    result.rows.push_back(std::move(row));
  }
  result.table_text = render_table(result.rows);
  write_compare_summary(result.rows, cfg.out_dir, result.table_text);
  return result;
}

}  // namespace

std::vector<trace::TraceRecord> load_workload(const config::ExperimentConfig& cfg) {
  if (!cfg.trace_file.empty()) {
    return trace::parse_trace(config::resolve_path(cfg, cfg.trace_file));
  }
  sim::RngState rng{cfg.seed};
  return trace::synthesize(*cfg.synthesis, rng);
}

int resolve_convertible_count(const config::ExperimentConfig& cfg,
                              const std::vector<trace::TraceRecord>& records) {
  if (cfg.convertible_count) return *cfg.convertible_count;
  if (cfg.convertible_auto_max_decoders) {
    if (records.empty()) return 0;
    const auto report = trace::burstiness(records, 60000, {1.0});
    return scaler::convertible_count(*cfg.convertible_auto_max_decoders,
                                     report.token_burst_ratio());
  }
  return 0;
}

SimulationOptions build_options(const config::ExperimentConfig& cfg,
                                const std::vector<trace::TraceRecord>& records) {
  SimulationOptions options;
  options.profile = VelocityProfile::load(config::resolve_path(cfg, cfg.profile_path));
  options.slo = cfg.slo;
  options.predictor_accuracy = cfg.predictor_accuracy;
  options.seed = cfg.seed;
  options.horizon_ms = cfg.horizon_ms;
  if (cfg.autoscaling) {
    options.prefill_policy = cfg.prefill_policy;
    options.decode_policy = cfg.decode_policy;
  } else {
    options.prefill_policy = scaler::StagePolicy{scaler::PolicyKind::Fixed, 0, 0, 0};
    options.decode_policy = scaler::StagePolicy{scaler::PolicyKind::Fixed, 0, 0, 0};
  }
  options.convertible_count = resolve_convertible_count(cfg, records);
  options.startup_delay_ms = cfg.startup_delay_ms;
  options.scaler_tick_ms = cfg.scaler_tick_ms;
  options.initial_prefillers = cfg.initial_prefillers;
  options.initial_regular_decoders = cfg.initial_regular_decoders;
  options.min_prefillers = cfg.min_prefillers;
  options.convertible_memory_threshold = cfg.convertible_memory_threshold;
  options.check_invariants = cfg.check_invariants;
  options.policy_label = cfg.policy_label.empty()
                             ? std::string(scaler::policy_kind_name(cfg.prefill_policy.kind)) +
                                   "/" +
                                   std::string(scaler::policy_kind_name(cfg.decode_policy.kind))
                             : cfg.policy_label;
  options.trace_name = trace_label(cfg);
  return options;
}

metrics::SimReport run(const config::ExperimentConfig& cfg_in, const RunOverrides& overrides) {
  const auto cfg = with_overrides(cfg_in, overrides);
  validate_or_throw(cfg);
  const auto records = load_workload(cfg);
  Simulation sim(build_options(cfg, records), records);
  auto report = sim.run();
  metrics::emit_report(report, cfg.out_dir);
  return report;
}

CompareResult compare(const config::ExperimentConfig& cfg_in, const RunOverrides& overrides) {
  const auto cfg = with_overrides(cfg_in, overrides);
  validate_or_throw(cfg);
  if (cfg.compare_variants.size() < 2) {
    throw ValidationError({"compare requires at least two variants"});
  }
  return run_matrix(cfg, cfg.compare_variants);
}

CompareResult ablate(const config::ExperimentConfig& cfg_in, const RunOverrides& overrides) {
  const auto cfg = with_overrides(cfg_in, overrides);
  validate_or_throw(cfg);
  if (cfg.prefill_policy.kind != scaler::PolicyKind::Rps ||
      cfg.decode_policy.kind != scaler::PolicyKind::Rps) {
    throw ValidationError({"ablate: the base config must use RPS policies on both stages"});
  }

  const scaler::StagePolicy tv{scaler::PolicyKind::TokenVelocity, 0, 0, 0};
  std::vector<config::Variant> ladder;
  ladder.push_back({"B", cfg.prefill_policy, cfg.decode_policy, 0, std::nullopt});
  ladder.push_back({"B+P", tv, cfg.decode_policy, 0, std::nullopt});
  ladder.push_back({"B+P+D", tv, tv, 0, std::nullopt});
  config::Variant full{"full", tv, tv, std::nullopt, std::nullopt};
  // The full system keeps the config's convertible sizing (explicit or
  // burst-ratio derived); the first three stages run without convertibles.
  ladder.push_back(full);
  return run_matrix(cfg, ladder);
}

trace::BurstReport analyze(const std::string& trace_path, int64_t window_ms,
                           const std::vector<double>& factors, const std::string& out_dir) {
  const auto records = trace::parse_trace(trace_path);
  auto report = trace::burstiness(records, window_ms, factors);
  std::filesystem::create_directories(out_dir);
  std::ofstream out(out_dir + "/burst_report.json", std::ios::binary);
  if (!out) throw std::runtime_error("cannot write burst report under " + out_dir);
  out << report.to_json();
  return report;
}

VelocityProfile profile(const velocity::ProfilingConfig& cfg, const std::string& out_path) {
  auto result = velocity::build_profile(cfg);
  result.save(out_path);
  return result;
}

}  // namespace pdsim::runner
