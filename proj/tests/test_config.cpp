#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "pdsim/config.hpp"

using namespace pdsim;
using namespace pdsim::config;

namespace {

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() / "pdsim_config_test";
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }

  std::string write(const std::string& name, const std::string& content) const {
    const auto file = path / name;
    std::ofstream out(file, std::ios::binary);
    out << content;
    return file.string();
  }
};

std::string valid_profile_json() {
  VelocityProfile p;
  p.v_p = 14000;
  p.v_n = 819200;
  for (int i = 0; i < kBucketCount; ++i) p.v_d_per_bucket[i] = 9000.0 + i;
  p.chunk_size = 4000;
  p.expected_batch_size = 40;
  p.reserved_tokens = 1000;
  p.c0_ms = 40.0;
  p.c1_ms = 0.064;
  p.kvc_capacity_tokens = 165840;
  p.gpus_per_instance = 1;
  return p.to_json();
}

std::string base_config(const std::string& extra = "") {
  return R"({
  "trace": {"synthesis": {"segments": [{"start_s": 0, "end_s": 10, "rps": 2.0}],
                          "mixture": [{"input": 256, "output": 100, "weight": 1.0}]}},
  "seed": 7,
  "horizon_ms": 12000,
  "profile": "profile.json",
  "policy": {"prefill": {"kind": "token_velocity"}, "decode": {"kind": "token_velocity"}},
  "convertible": {"count": 1})" +
         extra + "\n}";
}

}  // namespace

TEST_CASE("a minimal config validates cleanly") {
  TempDir dir;
  dir.write("profile.json", valid_profile_json());
  const auto cfg = parse_config(base_config(), dir.path.string());
  const auto problems = validate(cfg);
  for (const auto& p : problems) CAPTURE(p);
  CHECK(problems.empty());
  CHECK(cfg.seed == 7);
  CHECK(cfg.convertible_count == 1);
}

TEST_CASE("a threshold of the wrong family is rejected by name") {
  TempDir dir;
  dir.write("profile.json", valid_profile_json());
  const std::string text = R"({
  "trace": {"synthesis": {"segments": [{"start_s": 0, "end_s": 10, "rps": 2.0}],
                          "mixture": [{"input": 256, "output": 100, "weight": 1.0}]}},
  "profile": "profile.json",
  "policy": {"prefill": {"kind": "rps", "threshold_rps": 14.0},
             "decode": {"kind": "utilization", "threshold_rps": 28.0}}
})";
  const auto cfg = parse_config(text, dir.path.string());
  const auto problems = validate(cfg);
  REQUIRE(!problems.empty());
  bool found = false;
  for (const auto& p : problems) {
    if (p.find("does not take 'threshold_rps'") != std::string::npos) found = true;
  }
  CHECK(found);
}

TEST_CASE("validation enumerates every problem, not just the first") {
  TempDir dir;
  const std::string text = R"({
  "trace": {},
  "horizon_ms": -5,
  "predictor_accuracy": 1.5,
  "startup_delay_ms": 90000,
  "policy": {"prefill": {"kind": "nonsense"}, "decode": {"kind": "rps"}},
  "mystery_key": 1
})";
  const auto cfg = parse_config(text, dir.path.string());
  const auto problems = validate(cfg);
  CHECK(problems.size() >= 6);
}

TEST_CASE("utilization scaling is rejected for the prefill stage") {
  TempDir dir;
  dir.write("profile.json", valid_profile_json());
  const std::string text = R"({
  "trace": {"synthesis": {"segments": [{"start_s": 0, "end_s": 10, "rps": 2.0}],
                          "mixture": [{"input": 256, "output": 100, "weight": 1.0}]}},
  "profile": "profile.json",
  "policy": {"prefill": {"kind": "utilization", "threshold_fraction": 0.7},
             "decode": {"kind": "rps", "threshold_rps": 28.0}}
})";
  const auto problems = validate(parse_config(text, dir.path.string()));
  bool found = false;
  for (const auto& p : problems) {
    if (p.find("decode-only") != std::string::npos) found = true;
  }
  CHECK(found);
}

TEST_CASE("missing files and malformed json are validation problems") {
  TempDir dir;
  const auto cfg = parse_config(base_config(), dir.path.string());  // no profile.json
  const auto problems = validate(cfg);
  bool missing_profile = false;
  for (const auto& p : problems) {
    if (p.find("profile file does not exist") != std::string::npos) missing_profile = true;
  }
  CHECK(missing_profile);

  const auto broken = parse_config("{not json", dir.path.string());
  CHECK(!validate(broken).empty());
}

TEST_CASE("compare variants type-check and require unique names") {
  TempDir dir;
  dir.write("profile.json", valid_profile_json());
  const std::string extra = R"(,
  "compare": {"variants": [
    {"name": "a", "prefill": {"kind": "rps", "threshold_rps": 14}, "decode": {"kind": "rps", "threshold_rps": 28}},
    {"name": "a", "prefill": {"kind": "token_velocity"}, "decode": {"kind": "token_velocity"}}
  ]})";
  const auto cfg = parse_config(base_config(extra), dir.path.string());
  const auto problems = validate(cfg);
  bool dup = false;
  for (const auto& p : problems) {
    if (p.find("duplicate compare variant name") != std::string::npos) dup = true;
  }
  CHECK(dup);
}
