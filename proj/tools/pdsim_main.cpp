#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pdsim/runner.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::string trace_path;
  uint64_t seed = 0;
  bool seed_set = false;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool config_required = true) {
  auto* config_opt = cmd->add_option("--config", args.config_path, "experiment config file");
  if (config_required) config_opt->required();
  cmd->add_option("--out", args.out_dir, "output directory (overrides config)");
  cmd->add_option("--trace", args.trace_path, "trace CSV (overrides config)");
  cmd->add_option("--seed", args.seed, "rng seed (overrides config)")
      ->each([&args](const std::string&) { args.seed_set = true; });
}

pdsim::runner::RunOverrides overrides_of(const CommonArgs& args) {
  pdsim::runner::RunOverrides overrides;
  if (args.seed_set) overrides.seed = args.seed;
  if (!args.out_dir.empty()) overrides.out_dir = args.out_dir;
  if (!args.trace_path.empty()) overrides.trace_path = args.trace_path;
  return overrides;
}

int report_validation(const pdsim::runner::ValidationError& err) {
  std::cerr << "config validation failed (" << err.problems.size() << " problem(s)):\n";
  for (const auto& p : err.problems) std::cerr << "  - " << p << "\n";
  return kExitValidation;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Discrete-event simulator for autoscaled prefill/decode-disaggregated "
               "LLM serving clusters"};
  app.require_subcommand(1);

  CommonArgs run_args, compare_args, ablate_args;
  auto* run_cmd = app.add_subcommand("run", "execute one simulation");
  add_common(run_cmd, run_args);
  auto* compare_cmd = app.add_subcommand("compare", "run the config's policy variants "
                                                    "on a shared trace and seed");
  add_common(compare_cmd, compare_args);
  auto* ablate_cmd =
      app.add_subcommand("ablate", "incremental ladder from the RPS baseline to the "
                                   "full token-velocity system");
  add_common(ablate_cmd, ablate_args);

  std::string analyze_trace, analyze_out = "out";
  int64_t analyze_window = 60000;
  std::vector<double> analyze_factors{1.0, 2.0, 3.0, 4.0};
  auto* analyze_cmd = app.add_subcommand("analyze", "sliding-window burstiness analysis");
  analyze_cmd->add_option("--trace", analyze_trace, "trace CSV")->required();
  analyze_cmd->add_option("--window-ms", analyze_window, "running-average window");
  analyze_cmd->add_option("--factors", analyze_factors, "overprovisioning factors");
  analyze_cmd->add_option("--out", analyze_out, "output directory");

  std::string profile_config, profile_out = "profile.json";
  auto* profile_cmd = app.add_subcommand("profile", "offline velocity profiling sweeps");
  profile_cmd->add_option("--config", profile_config, "profiling config JSON")->required();
  profile_cmd->add_option("--out", profile_out, "profile output path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run_cmd->parsed()) {
      const auto cfg = pdsim::config::load_config(run_args.config_path);
      const auto report = pdsim::runner::run(cfg, overrides_of(run_args));
      std::cout << "attainment overall=" << report.attainment.overall
                << " ttft=" << report.attainment.ttft
                << " tpot=" << report.attainment.tpot
                << " avg_gpus=" << report.avg_gpus << "\n";
    } else if (compare_cmd->parsed()) {
      const auto cfg = pdsim::config::load_config(compare_args.config_path);
      const auto result = pdsim::runner::compare(cfg, overrides_of(compare_args));
      std::cout << result.table_text;
    } else if (ablate_cmd->parsed()) {
      const auto cfg = pdsim::config::load_config(ablate_args.config_path);
      const auto result = pdsim::runner::ablate(cfg, overrides_of(ablate_args));
      std::cout << result.table_text;
    } else if (analyze_cmd->parsed()) {
      const auto report =
          pdsim::runner::analyze(analyze_trace, analyze_window, analyze_factors, analyze_out);
      std::cout << report.to_json();
    } else if (profile_cmd->parsed()) {
      const auto cfg = pdsim::config::load_profiling_config(profile_config);
      const auto profile = pdsim::runner::profile(cfg, profile_out);
      std::cout << profile.to_json();
    }
  } catch (const pdsim::runner::ValidationError& err) {
    return report_validation(err);
  } catch (const pdsim::trace::TraceParseError& err) {
    std::cerr << "trace parse failed:\n";
    for (const auto& p : err.problems) std::cerr << "  - " << p << "\n";
    return kExitValidation;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}
