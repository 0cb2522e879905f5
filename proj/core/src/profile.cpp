#include "pdsim/velocity/profile.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace pdsim {

using nlohmann::ordered_json;

double measured_decode_velocity(const std::vector<int64_t>& completed_tokens,
                                double measured_tpot_seconds) {
  if (completed_tokens.empty()) {
    throw std::invalid_argument("measured_decode_velocity: no completed requests");
  }
  if (!(measured_tpot_seconds > 0.0)) {
    throw std::invalid_argument("measured_decode_velocity: TPOT must be positive");
  }
  int64_t total = 0;
  for (int64_t t : completed_tokens) total += t;
  return static_cast<double>(total) / measured_tpot_seconds;
}

double convertible_prefill_velocity(int64_t chunk_size, int batch_size,
                                    double tpot_slo_seconds) {
  if (chunk_size <= batch_size) {
    throw std::invalid_argument(
        "convertible_prefill_velocity: chunk_size must exceed batch_size");
  }
  if (!(tpot_slo_seconds > 0.0)) {
    throw std::invalid_argument("convertible_prefill_velocity: TPOT SLO must be positive");
  }
  return static_cast<double>(chunk_size - batch_size) / tpot_slo_seconds;
}

int64_t reserved_memory(double v_dp_tokens_per_s, double mem_per_token,
                        double ttft_slo_seconds) {
  if (v_dp_tokens_per_s < 0.0 || mem_per_token < 0.0 || ttft_slo_seconds < 0.0) {
    throw std::invalid_argument("reserved_memory: arguments must be nonnegative");
  }
  return static_cast<int64_t>(
      std::llround(v_dp_tokens_per_s * mem_per_token * ttft_slo_seconds));
}

int64_t select_chunk_size(const PerfModel& perf, int expected_batch_size,
                          double tpot_slo_ms) {
  const auto iter_ms = [&](int64_t chunk) {
    return perf.iteration_time_ms(expected_batch_size, chunk - expected_batch_size);
  };
  if (!(tpot_slo_ms > perf.decode_iter_base_ms) ||
      iter_ms(expected_batch_size + 1) > tpot_slo_ms) {
    throw std::invalid_argument(
        "select_chunk_size: TPOT SLO leaves no headroom above the decode iteration");
  }
  // Double until the mixed iteration violates the SLO, then binary search the
  // largest feasible chunk in (lo, hi).
  int64_t lo = expected_batch_size + 1;
  int64_t hi = lo;
  while (iter_ms(hi) <= tpot_slo_ms) {
    lo = hi;
    hi *= 2;
  }
  while (lo + 1 < hi) {
    const int64_t mid = lo + (hi - lo) / 2;
    if (iter_ms(mid) <= tpot_slo_ms) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return lo;
}

double VelocityProfile::convertible_prefill_velocity_tps(double tpot_slo_seconds) const {
  return convertible_prefill_velocity(chunk_size, expected_batch_size, tpot_slo_seconds);
}

PerfModel VelocityProfile::perf_model() const {
  PerfModel perf;
  perf.prefill_velocity = v_p;
  perf.network_velocity = v_n;
  perf.decode_iter_base_ms = c0_ms;
  perf.decode_iter_per_seq_ms = c1_ms;
  perf.kvc_capacity_tokens = kvc_capacity_tokens;
  perf.max_decode_batch = max_decode_batch;
  perf.prefill_equiv_tokens_per_seq = prefill_equiv_tokens_per_seq;
  perf.gpus_per_instance = gpus_per_instance;
  return perf;
}

ConvertibleConfig VelocityProfile::convertible_config() const {
  return ConvertibleConfig{chunk_size, expected_batch_size, reserved_tokens};
}

std::vector<std::string> VelocityProfile::validate() const {
  std::vector<std::string> problems;
  if (!(v_p > 0.0)) problems.push_back("profile: v_p must be positive");
  if (!(v_n > 0.0)) problems.push_back("profile: v_n must be positive");
  for (int i = 0; i < kBucketCount; ++i) {
    if (!(v_d_per_bucket[i] > 0.0)) {
      problems.push_back("profile: v_d_per_bucket[" +
                         std::string(bucket_label(static_cast<Bucket>(i))) +
                         "] must be positive");
    }
  }
  if (chunk_size <= expected_batch_size) {
    problems.push_back("profile: chunk_size must exceed expected_batch_size");
  }
  if (expected_batch_size < 1) problems.push_back("profile: expected_batch_size must be >= 1");
  if (reserved_tokens < 0) problems.push_back("profile: reserved_tokens must be >= 0");
  if (reserved_tokens >= kvc_capacity_tokens) {
    problems.push_back("profile: reserved_tokens must leave decode capacity");
  }
  if (!(c0_ms >= 0.0)) problems.push_back("profile: c0_ms must be >= 0");
  if (!(c1_ms >= 0.0)) problems.push_back("profile: c1_ms must be >= 0");
  if (kvc_capacity_tokens <= 0) problems.push_back("profile: kvc_capacity_tokens must be positive");
  if (gpus_per_instance < 1) problems.push_back("profile: gpus_per_instance must be >= 1");
  if (max_decode_batch < 1) problems.push_back("profile: max_decode_batch must be >= 1");
  if (!(prefill_equiv_tokens_per_seq > 0.0)) {
    problems.push_back("profile: prefill_equiv_tokens_per_seq must be positive");
  }
  return problems;
}

std::string VelocityProfile::to_json() const {
  ordered_json j;
  j["v_p"] = v_p;
  j["v_n"] = v_n;
  ordered_json vd;
  for (const auto& spec : bucket_table()) {
    vd[spec.label] = v_d_per_bucket[static_cast<size_t>(spec.id)];
  }
  j["v_d_per_bucket"] = vd;
  j["chunk_size"] = chunk_size;
  j["expected_batch_size"] = expected_batch_size;
  j["reserved_tokens"] = reserved_tokens;
  j["c0_ms"] = c0_ms;
  j["c1_ms"] = c1_ms;
  j["kvc_capacity_tokens"] = kvc_capacity_tokens;
  j["gpus_per_instance"] = gpus_per_instance;
  j["max_decode_batch"] = max_decode_batch;
  j["prefill_equiv_tokens_per_seq"] = prefill_equiv_tokens_per_seq;
  return j.dump(2) + "\n";
}

VelocityProfile VelocityProfile::from_json(const std::string& text) {
  ordered_json j = ordered_json::parse(text);
  VelocityProfile p;
  p.v_p = j.at("v_p").get<double>();
  p.v_n = j.at("v_n").get<double>();
  const auto& vd = j.at("v_d_per_bucket");
  if (vd.size() != kBucketCount) {
    throw std::invalid_argument("profile: v_d_per_bucket must have 9 entries");
  }
  for (const auto& [label, value] : vd.items()) {
    auto b = bucket_from_label(label);
    if (!b) throw std::invalid_argument("profile: unknown bucket label " + label);
    p.v_d_per_bucket[static_cast<size_t>(*b)] = value.get<double>();
  }
  p.chunk_size = j.at("chunk_size").get<int64_t>();
  p.expected_batch_size = j.at("expected_batch_size").get<int>();
  p.reserved_tokens = j.at("reserved_tokens").get<int64_t>();
  p.c0_ms = j.at("c0_ms").get<double>();
  p.c1_ms = j.at("c1_ms").get<double>();
  p.kvc_capacity_tokens = j.at("kvc_capacity_tokens").get<int64_t>();
  p.gpus_per_instance = j.at("gpus_per_instance").get<int>();
  p.max_decode_batch = j.value("max_decode_batch", 512);
  p.prefill_equiv_tokens_per_seq = j.value("prefill_equiv_tokens_per_seq", 8.0);
  return p;
}

VelocityProfile VelocityProfile::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open profile file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_json(buf.str());
}

void VelocityProfile::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write profile file: " + path);
  out << to_json();
}

}  // namespace pdsim
