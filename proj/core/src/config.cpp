#include "pdsim/config.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace pdsim::config {

using nlohmann::ordered_json;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

const char* threshold_key(scaler::PolicyKind kind) {
  switch (kind) {
    case scaler::PolicyKind::Concurrency: return "threshold_requests";
    case scaler::PolicyKind::Rps: return "threshold_rps";
    case scaler::PolicyKind::Utilization: return "threshold_fraction";
    default: return nullptr;
  }
}

scaler::StagePolicy parse_stage_policy(const ordered_json& j, const std::string& where,
                                       std::vector<std::string>& problems) {
  scaler::StagePolicy policy;
  if (!j.is_object() || !j.contains("kind")) {
    problems.push_back(where + ": policy must be an object with a 'kind'");
    return policy;
  }
  const std::string kind_name = j.at("kind").get<std::string>();
  const auto kind = scaler::policy_kind_from_name(kind_name);
  if (!kind) {
    problems.push_back(where + ": unknown policy kind '" + kind_name + "'");
    return policy;
  }
  policy.kind = *kind;
  const char* expected = threshold_key(policy.kind);
  for (const auto& [key, value] : j.items()) {
    if (key == "kind") continue;
    if (key == "threshold_requests" || key == "threshold_rps" ||
        key == "threshold_fraction") {
      if (!expected || key != expected) {
        problems.push_back(where + ": policy '" + kind_name + "' does not take '" + key +
                           (expected ? "' (expected '" + std::string(expected) + "')"
                                     : "'"));
        continue;
      }
      const double v = value.get<double>();
      if (key == "threshold_requests") policy.threshold_requests = v;
      if (key == "threshold_rps") policy.threshold_rps = v;
      if (key == "threshold_fraction") policy.threshold_fraction = v;
    } else {
      problems.push_back(where + ": unknown policy field '" + key + "'");
    }
  }
  if (expected) {
    const double v = policy.threshold_requests + policy.threshold_rps +
                     policy.threshold_fraction;
    if (!(v > 0.0)) {
      problems.push_back(where + ": policy '" + kind_name + "' requires a positive '" +
                         expected + "'");
    }
  }
  return policy;
}

trace::SynthesisSpec parse_synthesis(const ordered_json& j,
                                     std::vector<std::string>& problems) {
  trace::SynthesisSpec spec;
  if (!j.contains("segments") || !j.at("segments").is_array()) {
    problems.push_back("trace.synthesis: 'segments' array is required");
  } else {
    for (const auto& seg : j.at("segments")) {
      spec.segments.push_back(trace::RateSegment{seg.value("start_s", 0.0),
                                                 seg.value("end_s", 0.0),
                                                 seg.value("rps", 0.0)});
    }
  }
  if (!j.contains("mixture") || !j.at("mixture").is_array()) {
    problems.push_back("trace.synthesis: 'mixture' array is required");
  } else {
    for (const auto& mix : j.at("mixture")) {
      spec.mixture.push_back(trace::LengthMix{mix.value("input", 0),
                                              mix.value("output", 0),
                                              mix.value("weight", 1.0)});
    }
  }
  return spec;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text, const std::string& config_dir) {
  ordered_json j;
  std::vector<std::string> problems;
  try {
    j = ordered_json::parse(text);
  } catch (const std::exception& e) {
    ExperimentConfig broken;
    broken.config_dir = config_dir;
    broken.parse_problems.push_back(std::string("config is not valid JSON: ") + e.what());
    return broken;
  }

  ExperimentConfig cfg;
  cfg.config_dir = config_dir;
  static const std::set<std::string> known_keys = {
      "trace", "seed", "horizon_ms", "profile", "policy", "slo",
      "predictor_accuracy", "convertible", "startup_delay_ms", "scaler_tick_ms",
      "initial_prefillers", "initial_regular_decoders", "min_prefillers",
      "convertible_memory_threshold", "autoscaling", "check_invariants", "out_dir",
      "compare"};
  for (const auto& [key, value] : j.items()) {
    if (!known_keys.count(key)) {
      problems.push_back("unknown config key '" + key + "'");
    }
  }

  try {
    if (j.contains("trace")) {
      const auto& t = j.at("trace");
      if (t.contains("file")) cfg.trace_file = t.at("file").get<std::string>();
      if (t.contains("synthesis")) cfg.synthesis = parse_synthesis(t.at("synthesis"), problems);
    } else {
      problems.push_back("'trace' section is required");
    }
    cfg.seed = j.value("seed", 0ull);
    cfg.horizon_ms = j.value("horizon_ms", int64_t{60000});
    cfg.profile_path = j.value("profile", std::string());
    if (j.contains("policy")) {
      const auto& p = j.at("policy");
      cfg.policy_label = p.value("label", std::string());
      if (p.contains("prefill")) {
        cfg.prefill_policy = parse_stage_policy(p.at("prefill"), "policy.prefill", problems);
      } else {
        problems.push_back("policy.prefill is required");
      }
      if (p.contains("decode")) {
        cfg.decode_policy = parse_stage_policy(p.at("decode"), "policy.decode", problems);
      } else {
        problems.push_back("policy.decode is required");
      }
    } else {
      problems.push_back("'policy' section is required");
    }
    if (j.contains("slo")) {
      const auto& s = j.at("slo");
      cfg.slo.ttft_short_ms = s.value("ttft_short_ms", 250.0);
      cfg.slo.ttft_medium_ms = s.value("ttft_medium_ms", 400.0);
      cfg.slo.ttft_long_ms = s.value("ttft_long_ms", 2000.0);
      cfg.slo.tpot_ms = s.value("tpot_ms", 100.0);
    }
    cfg.predictor_accuracy = j.value("predictor_accuracy", 0.85);
    if (j.contains("convertible")) {
      const auto& c = j.at("convertible");
      if (c.contains("count")) cfg.convertible_count = c.at("count").get<int>();
      if (c.contains("auto_max_decoders")) {
        cfg.convertible_auto_max_decoders = c.at("auto_max_decoders").get<int>();
      }
    }
    cfg.startup_delay_ms = j.value("startup_delay_ms", int64_t{5000});
    cfg.scaler_tick_ms = j.value("scaler_tick_ms", int64_t{1000});
    cfg.initial_prefillers = j.value("initial_prefillers", 1);
    cfg.initial_regular_decoders = j.value("initial_regular_decoders", 1);
    cfg.min_prefillers = j.value("min_prefillers", 1);
    cfg.convertible_memory_threshold = j.value("convertible_memory_threshold", 0.9);
    cfg.autoscaling = j.value("autoscaling", true);
    cfg.check_invariants = j.value("check_invariants", false);
    cfg.out_dir = j.value("out_dir", std::string("out"));
    if (j.contains("compare")) {
      const auto& c = j.at("compare");
      cfg.companion_prefillers = c.value("companion_prefillers", 8);
      cfg.companion_decoders = c.value("companion_decoders", 8);
      for (const auto& v : c.value("variants", ordered_json::array())) {
        Variant variant;
        variant.name = v.value("name", std::string());
        const std::string where = "compare.variants['" + variant.name + "']";
        if (v.contains("prefill")) {
          variant.prefill_policy = parse_stage_policy(v.at("prefill"), where + ".prefill",
                                                      problems);
        } else {
          variant.prefill_policy = cfg.prefill_policy;
        }
        if (v.contains("decode")) {
          variant.decode_policy = parse_stage_policy(v.at("decode"), where + ".decode",
                                                     problems);
        } else {
          variant.decode_policy = cfg.decode_policy;
        }
        if (v.contains("convertible_count")) {
          variant.convertible_count = v.at("convertible_count").get<int>();
        }
        if (v.contains("startup_delay_ms")) {
          variant.startup_delay_ms = v.at("startup_delay_ms").get<int64_t>();
        }
        cfg.compare_variants.push_back(std::move(variant));
      }
    }
  } catch (const std::exception& e) {
    problems.push_back(std::string("config field type error: ") + e.what());
  }
  cfg.parse_problems = std::move(problems);
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  const std::string dir = std::filesystem::path(path).parent_path().string();
  return parse_config(read_file(path), dir);
}

std::string resolve_path(const ExperimentConfig& config, const std::string& path) {
  if (path.empty() || std::filesystem::path(path).is_absolute() ||
      config.config_dir.empty()) {
    return path;
  }
  return (std::filesystem::path(config.config_dir) / path).string();
}

std::vector<std::string> validate(const ExperimentConfig& cfg) {
  std::vector<std::string> problems = cfg.parse_problems;

  const bool has_file = !cfg.trace_file.empty();
  const bool has_synth = cfg.synthesis.has_value();
  if (has_file == has_synth) {
    problems.push_back("trace: exactly one of 'file' and 'synthesis' is required");
  }
  if (has_file && !std::filesystem::exists(resolve_path(cfg, cfg.trace_file))) {
    problems.push_back("trace file does not exist: " + cfg.trace_file);
  }
  if (has_synth) {
    double prev_end = 0.0;
    bool first = true;
    for (const auto& seg : cfg.synthesis->segments) {
      if (seg.rps < 0.0) problems.push_back("trace.synthesis: negative segment rate");
      if (seg.end_s < seg.start_s) problems.push_back("trace.synthesis: segment ends before start");
      if (!first && seg.start_s != prev_end) {
        problems.push_back("trace.synthesis: segments must be contiguous");
      }
      prev_end = seg.end_s;
      first = false;
    }
    if (cfg.synthesis->segments.empty()) problems.push_back("trace.synthesis: no segments");
    if (cfg.synthesis->mixture.empty()) problems.push_back("trace.synthesis: empty mixture");
    for (const auto& mix : cfg.synthesis->mixture) {
      if (mix.input_tokens < 1 || mix.output_tokens < 1) {
        problems.push_back("trace.synthesis: mixture token counts must be >= 1");
      }
      if (mix.weight < 0.0) problems.push_back("trace.synthesis: negative mixture weight");
    }
  }

  if (cfg.horizon_ms <= 0) problems.push_back("horizon_ms must be positive");
  if (cfg.scaler_tick_ms <= 0) problems.push_back("scaler_tick_ms must be positive");
  if (cfg.predictor_accuracy < 0.0 || cfg.predictor_accuracy > 1.0) {
    problems.push_back("predictor_accuracy must be in [0, 1]");
  }
  if (cfg.startup_delay_ms < 0 || cfg.startup_delay_ms > 10000) {
    problems.push_back("startup_delay_ms must be in [0, 10000]");
  }
  if (cfg.min_prefillers < 1) problems.push_back("min_prefillers must be >= 1");
  if (cfg.initial_prefillers < cfg.min_prefillers) {
    problems.push_back("initial_prefillers must be >= min_prefillers");
  }
  if (cfg.initial_regular_decoders < 1) {
    problems.push_back("initial_regular_decoders must be >= 1");
  }
  if (cfg.convertible_memory_threshold <= 0.0 || cfg.convertible_memory_threshold > 1.0) {
    problems.push_back("convertible_memory_threshold must be in (0, 1]");
  }
  if (cfg.convertible_count && *cfg.convertible_count < 0) {
    problems.push_back("convertible.count must be >= 0");
  }
  if (cfg.convertible_count && cfg.convertible_auto_max_decoders) {
    problems.push_back("convertible: give either 'count' or 'auto_max_decoders', not both");
  }
  if (cfg.convertible_auto_max_decoders && *cfg.convertible_auto_max_decoders < 0) {
    problems.push_back("convertible.auto_max_decoders must be >= 0");
  }

  if (cfg.prefill_policy.kind == scaler::PolicyKind::Utilization) {
    problems.push_back(
        "policy.prefill: utilization scaling tracks decoder memory and is decode-only");
  }
  if (cfg.profile_path.empty()) {
    problems.push_back("'profile' path is required");
  } else if (!std::filesystem::exists(resolve_path(cfg, cfg.profile_path))) {
    problems.push_back("profile file does not exist: " + cfg.profile_path);
  } else {
    try {
      auto profile = VelocityProfile::load(resolve_path(cfg, cfg.profile_path));
      for (auto& p : profile.validate()) problems.push_back(p);
    } catch (const std::exception& e) {
      problems.push_back(std::string("profile load failed: ") + e.what());
    }
  }

  if (!(cfg.slo.ttft_short_ms > 0.0) ||
      cfg.slo.ttft_medium_ms < cfg.slo.ttft_short_ms ||
      cfg.slo.ttft_long_ms < cfg.slo.ttft_medium_ms) {
    problems.push_back("slo: TTFT targets must be positive and nondecreasing with length");
  }
  if (!(cfg.slo.tpot_ms > 0.0)) problems.push_back("slo: tpot_ms must be positive");

  std::set<std::string> names;
  for (const auto& variant : cfg.compare_variants) {
    if (variant.name.empty()) problems.push_back("compare variant with empty name");
    if (!names.insert(variant.name).second) {
      problems.push_back("duplicate compare variant name '" + variant.name + "'");
    }
    if (variant.prefill_policy.kind == scaler::PolicyKind::Utilization) {
      problems.push_back("compare.variants['" + variant.name +
                         "'].prefill: utilization scaling is decode-only");
    }
  }
  return problems;
}

velocity::ProfilingConfig parse_profiling_config(const std::string& text) {
  ordered_json j = ordered_json::parse(text);
  velocity::ProfilingConfig cfg;
  cfg.perf.prefill_velocity = j.value("v_p", cfg.perf.prefill_velocity);
  cfg.perf.network_velocity = j.value("v_n", cfg.perf.network_velocity);
  cfg.perf.decode_iter_base_ms = j.value("c0_ms", cfg.perf.decode_iter_base_ms);
  cfg.perf.decode_iter_per_seq_ms = j.value("c1_ms", cfg.perf.decode_iter_per_seq_ms);
  cfg.perf.kvc_capacity_tokens = j.value("kvc_capacity_tokens", cfg.perf.kvc_capacity_tokens);
  cfg.perf.max_decode_batch = j.value("max_decode_batch", cfg.perf.max_decode_batch);
  cfg.perf.prefill_equiv_tokens_per_seq =
      j.value("prefill_equiv_tokens_per_seq", cfg.perf.prefill_equiv_tokens_per_seq);
  cfg.perf.gpus_per_instance = j.value("gpus_per_instance", cfg.perf.gpus_per_instance);
  cfg.tpot_slo_ms = j.value("tpot_slo_ms", cfg.tpot_slo_ms);
  cfg.reservation_ttft_s = j.value("reservation_ttft_s", cfg.reservation_ttft_s);
  cfg.mean_request_tokens = j.value("mean_request_tokens", cfg.mean_request_tokens);
  cfg.prefill_probe_tokens = j.value("prefill_probe_tokens", cfg.prefill_probe_tokens);
  return cfg;
}

velocity::ProfilingConfig load_profiling_config(const std::string& path) {
  return parse_profiling_config(read_file(path));
}

}  // namespace pdsim::config
