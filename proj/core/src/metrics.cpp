#include "pdsim/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace pdsim::metrics {

using nlohmann::ordered_json;

LatencyRecord latency_record(const cluster::Request& req, const router::SloPolicy& slo) {
  LatencyRecord rec;
  rec.id = req.id;
  rec.arrival_ms = req.arrival_ms;
  rec.input_tokens = req.input_tokens;
  rec.output_tokens = req.output_tokens;
  rec.bucket = req.true_bucket;
  rec.completed = req.completed();
  rec.placement = req.placement_label();
  if (req.first_token_ms >= 0) {
    rec.ttft_ms = static_cast<double>(req.first_token_ms - req.arrival_ms);
  }
  if (rec.completed) {
    // Single-token outputs have no inter-token gap; TPOT is 0 by convention.
    rec.tpot_ms = req.output_tokens > 1
                      ? static_cast<double>(req.completion_ms - req.first_token_ms) /
                            static_cast<double>(req.output_tokens - 1)
                      : 0.0;
  }
  const bool ttft_ok = rec.ttft_ms >= 0 && rec.ttft_ms <= slo.ttft_slo_ms(req.input_tokens);
  const bool tpot_ok = rec.completed && rec.tpot_ms <= slo.tpot_ms;
  rec.attained = rec.completed && ttft_ok && tpot_ok;
  return rec;
}

Attainment slo_attainment(const std::vector<LatencyRecord>& records,
                          const router::SloPolicy& slo) {
  Attainment result;
  if (records.empty()) return result;  // vacuous: all rates 1.0
  size_t overall = 0, ttft = 0, tpot = 0;
  for (const auto& rec : records) {
    // TTFT credit needs only the first token; TPOT credit needs completion.
    // Requests still in flight at the horizon count as violations everywhere.
    const bool ttft_ok =
        rec.ttft_ms >= 0 && rec.ttft_ms <= slo.ttft_slo_ms(rec.input_tokens);
    const bool tpot_ok = rec.completed && rec.tpot_ms <= slo.tpot_ms;
    if (ttft_ok) ++ttft;
    if (tpot_ok) ++tpot;
    if (rec.completed && ttft_ok && tpot_ok) ++overall;
  }
  const double n = static_cast<double>(records.size());
  result.overall = static_cast<double>(overall) / n;
  result.ttft = static_cast<double>(ttft) / n;
  result.tpot = static_cast<double>(tpot) / n;
  return result;
}

double avg_gpu_usage(const std::vector<cluster::Instance>& instances, TimeMs horizon_ms) {
  if (horizon_ms <= 0) throw std::invalid_argument("avg_gpu_usage: horizon must be positive");
  double gpu_ms = 0.0;
  for (const auto& inst : instances) {
    const TimeMs start = std::min(inst.start_ms, horizon_ms);
    const TimeMs end = inst.terminated_ms >= 0 ? std::min(inst.terminated_ms, horizon_ms)
                                               : horizon_ms;
    gpu_ms += static_cast<double>(inst.gpus) * static_cast<double>(end - start);
  }
  return gpu_ms / static_cast<double>(horizon_ms);
}

RequiredSeries required_instances_series(const std::vector<InstanceSample>& overprovisioned) {
  if (overprovisioned.empty()) {
    throw std::invalid_argument("required_instances_series: companion run has no samples");
  }
  RequiredSeries series;
  series.prefillers.reserve(overprovisioned.size());
  series.decoders.reserve(overprovisioned.size());
  for (const auto& s : overprovisioned) {
    series.prefillers.push_back(s.prefill_throughput_utilization *
                                static_cast<double>(s.prefillers));
    series.decoders.push_back(s.decoder_memory_occupancy *
                              static_cast<double>(s.regular_decoders + s.convertibles));
  }
  return series;
}

std::optional<double> pearson(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) {
    throw std::invalid_argument("pearson: series must have equal lengths >= 2");
  }
  const double n = static_cast<double>(a.size());
  double mean_a = 0.0, mean_b = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    mean_a += a[i];
    mean_b += b[i];
  }
  mean_a /= n;
  mean_b /= n;
  double cov = 0.0, var_a = 0.0, var_b = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - mean_a;
    const double db = b[i] - mean_b;
    cov += da * db;
    var_a += da * da;
    var_b += db * db;
  }
  if (var_a == 0.0 || var_b == 0.0) return std::nullopt;
  return cov / std::sqrt(var_a * var_b);
}

namespace {

std::string format_double(double v) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(4);
  out << v;
  return out.str();
}

}  // namespace

std::string SimReport::summary_json() const {
  ordered_json j;
  j["slo_attainment_overall"] = attainment.overall;
  j["slo_attainment_ttft"] = attainment.ttft;
  j["slo_attainment_tpot"] = attainment.tpot;
  j["avg_gpus"] = avg_gpus;
  j["pearson_prefill"] = pearson_prefill ? ordered_json(*pearson_prefill) : ordered_json();
  j["pearson_decode"] = pearson_decode ? ordered_json(*pearson_decode) : ordered_json();
  j["policy"] = policy;
  j["seed"] = seed;
  j["trace"] = trace_name;
  j["horizon_ms"] = horizon_ms;
  return j.dump(2) + "\n";
}

std::string SimReport::requests_csv() const {
  std::ostringstream out;
  out << "id,arrival_ms,input_tokens,output_tokens,bucket,ttft_ms,tpot_ms,attained,placement\n";
  for (const auto& rec : records) {
    out << rec.id << ',' << rec.arrival_ms << ',' << rec.input_tokens << ','
        << rec.output_tokens << ',' << bucket_label(rec.bucket) << ','
        << format_double(rec.ttft_ms) << ',' << format_double(rec.tpot_ms) << ','
        << (rec.attained ? 1 : 0) << ',' << rec.placement << "\n";
  }
  return out.str();
}

void emit_report(const SimReport& report, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  const auto write = [&](const std::string& name, const std::string& content) {
    const std::string path = out_dir + "/" + name;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write report file: " + path);
    out << content;
  };
  write("summary.json", report.summary_json());
  write("requests.csv", report.requests_csv());
}

}  // namespace pdsim::metrics
