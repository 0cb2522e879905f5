#include "pdsim/trace/trace.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace pdsim::trace {

using nlohmann::ordered_json;

namespace {

constexpr const char* kHeader = "arrival_ms,input_tokens,output_tokens";

bool parse_fields(const std::string& line, int64_t& arrival, int64_t& input,
                  int64_t& output) {
  std::istringstream ss(line);
  std::string field;
  int64_t* slots[3] = {&arrival, &input, &output};
  for (int i = 0; i < 3; ++i) {
    if (!std::getline(ss, field, ',')) return false;
    try {
      size_t consumed = 0;
      *slots[i] = std::stoll(field, &consumed);
      if (consumed != field.size()) return false;
    } catch (const std::exception&) {
      return false;
    }
  }
  std::string rest;
  return !std::getline(ss, rest, ',');  // exactly three columns
}

}  // namespace

std::vector<TraceRecord> parse_trace_text(const std::string& text,
                                          const std::string& origin) {
  std::vector<TraceRecord> records;
  std::vector<std::string> problems;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  bool saw_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!saw_header) {
      if (line != kHeader) {
        problems.push_back("line 1: expected header '" + std::string(kHeader) + "'");
      }
      saw_header = true;
      continue;
    }
    int64_t arrival = 0, input = 0, output = 0;
    if (!parse_fields(line, arrival, input, output)) {
      problems.push_back("line " + std::to_string(line_no) +
                         ": expected three numeric fields, got '" + line + "'");
      continue;
    }
    if (arrival < 0) {
      problems.push_back("line " + std::to_string(line_no) + ": negative arrival_ms");
    }
    if (input < 1 || output < 1) {
      problems.push_back("line " + std::to_string(line_no) +
                         ": token counts must be >= 1");
    }
    if (problems.empty()) {
      records.push_back(TraceRecord{arrival, static_cast<int>(input),
                                    static_cast<int>(output)});
    }
  }
  if (!saw_header) problems.push_back("empty trace file");
  if (!problems.empty()) {
    std::string what = origin + ": " + std::to_string(problems.size()) +
                       " malformed line(s); first: " + problems.front();
    throw TraceParseError(what, std::move(problems));
  }
  std::stable_sort(records.begin(), records.end(),
                   [](const TraceRecord& a, const TraceRecord& b) {
                     return a.arrival_ms < b.arrival_ms;
                   });
  return records;
}

std::vector<TraceRecord> parse_trace(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open trace file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_trace_text(buf.str(), path);
}

std::string serialize_trace(const std::vector<TraceRecord>& records) {
  std::ostringstream out;
  out << kHeader << "\n";
  for (const auto& r : records) {
    out << r.arrival_ms << ',' << r.input_tokens << ',' << r.output_tokens << "\n";
  }
  return out.str();
}

void save_trace(const std::vector<TraceRecord>& records, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write trace file: " + path);
  out << serialize_trace(records);
}

std::vector<TraceRecord> synthesize(const SynthesisSpec& spec, const sim::RngState& rng) {
  if (spec.mixture.empty()) {
    throw std::invalid_argument("synthesize: length mixture is empty");
  }
  double total_weight = 0.0;
  for (const auto& m : spec.mixture) {
    if (m.input_tokens < 1 || m.output_tokens < 1) {
      throw std::invalid_argument("synthesize: mixture token counts must be >= 1");
    }
    if (m.weight < 0.0) throw std::invalid_argument("synthesize: negative mixture weight");
    total_weight += m.weight;
  }
  if (!(total_weight > 0.0)) {
    throw std::invalid_argument("synthesize: mixture weights sum to zero");
  }
  double prev_end = 0.0;
  for (const auto& seg : spec.segments) {
    if (seg.rps < 0.0) throw std::invalid_argument("synthesize: negative segment rate");
    if (seg.end_s < seg.start_s) {
      throw std::invalid_argument("synthesize: segment ends before it starts");
    }
    if (seg.start_s != prev_end) {
      throw std::invalid_argument("synthesize: segments must be contiguous");
    }
    prev_end = seg.end_s;
  }

  auto arrivals_rng = rng.stream("trace/arrivals");
  auto lengths_rng = rng.stream("trace/lengths");
  std::vector<TraceRecord> records;
  for (const auto& seg : spec.segments) {
    if (seg.rps <= 0.0) continue;
    double t = seg.start_s;
    while (true) {
      t += arrivals_rng.next_exponential(seg.rps);
      if (t >= seg.end_s) break;
      double pick = lengths_rng.next_double() * total_weight;
      const LengthMix* chosen = &spec.mixture.back();
      for (const auto& m : spec.mixture) {
        if (pick < m.weight) {
          chosen = &m;
          break;
        }
        pick -= m.weight;
      }
      records.push_back(TraceRecord{static_cast<int64_t>(std::llround(t * 1000.0)),
                                    chosen->input_tokens, chosen->output_tokens});
    }
  }
  std::stable_sort(records.begin(), records.end(),
                   [](const TraceRecord& a, const TraceRecord& b) {
                     return a.arrival_ms < b.arrival_ms;
                   });
  return records;
}

double mean_rps(const std::vector<TraceRecord>& records) {
  if (records.size() < 2) return 0.0;
  const double span_s =
      static_cast<double>(records.back().arrival_ms - records.front().arrival_ms) / 1000.0;
  if (!(span_s > 0.0)) return 0.0;
  return static_cast<double>(records.size() - 1) / span_s;
}

std::vector<TraceRecord> rescale(const std::vector<TraceRecord>& records,
                                 double target_rps, const sim::RngState& rng) {
  if (!(target_rps > 0.0)) throw std::invalid_argument("rescale: target rate must be positive");
  const double source = mean_rps(records);
  if (target_rps > source * 1.0000001) {
    throw std::invalid_argument("rescale: target rate exceeds source rate (no upsampling)");
  }
  double keep = target_rps / source;
  for (int attempt = 0; attempt < 32; ++attempt) {
    auto stream = rng.stream("trace/rescale/" + std::to_string(attempt));
    std::vector<TraceRecord> thinned;
    thinned.reserve(static_cast<size_t>(keep * static_cast<double>(records.size())) + 16);
    for (const auto& r : records) {
      if (stream.next_double() < keep) thinned.push_back(r);
    }
    const double achieved = mean_rps(thinned);
    if (achieved > 0.0 && std::abs(achieved - target_rps) / target_rps <= 0.02) {
      return thinned;
    }
    if (achieved > 0.0) keep = std::min(1.0, keep * target_rps / achieved);
  }
  throw std::runtime_error("rescale: could not reach target rate within 2%");
}

double BurstReport::token_burst_ratio() const {
  auto it = excess_fraction.find(1.0);
  return it == excess_fraction.end() ? 0.0 : it->second.tokens;
}

std::string BurstReport::to_json() const {
  ordered_json j;
  j["window_ms"] = window_ms;
  j["burst_time_fraction"] = burst_time_fraction;
  j["mean_burst_duration_s"] = mean_burst_duration_s;
  ordered_json ef;
  for (const auto& [factor, frac] : excess_fraction) {
    std::ostringstream key;
    key << factor;
    ef[key.str()] = {{"requests", frac.requests}, {"tokens", frac.tokens}};
  }
  j["excess_fraction"] = ef;
  return j.dump(2) + "\n";
}

BurstReport burstiness(const std::vector<TraceRecord>& records, int64_t window_ms,
                       const std::vector<double>& factors) {
  if (records.empty()) throw std::invalid_argument("burstiness: empty trace");
  if (window_ms < 1000) throw std::invalid_argument("burstiness: window must be >= 1 s");

  // 1 s sub-windows resolve bursts much shorter than the running-average window.
  constexpr int64_t kSubMs = 1000;
  const int64_t t0 = records.front().arrival_ms / kSubMs * kSubMs;
  const int64_t t1 = records.back().arrival_ms;
  const size_t n_sub = static_cast<size_t>((t1 - t0) / kSubMs + 1);
  const size_t win_sub = static_cast<size_t>(window_ms / kSubMs);

  std::vector<int64_t> req_count(n_sub, 0);
  std::vector<int64_t> tok_count(n_sub, 0);
  for (const auto& r : records) {
    const size_t i = static_cast<size_t>((r.arrival_ms - t0) / kSubMs);
    req_count[i] += 1;
    tok_count[i] += r.input_tokens;  // token bursts are measured on input tokens
  }

  // Trailing running averages including the current sub-window.
  std::vector<double> req_avg(n_sub, 0.0), tok_avg(n_sub, 0.0);
  int64_t req_sum = 0, tok_sum = 0;
  for (size_t i = 0; i < n_sub; ++i) {
    req_sum += req_count[i];
    tok_sum += tok_count[i];
    if (i >= win_sub) {
      req_sum -= req_count[i - win_sub];
      tok_sum -= tok_count[i - win_sub];
    }
    const double denom = static_cast<double>(std::min(i + 1, win_sub));
    req_avg[i] = static_cast<double>(req_sum) / denom;
    tok_avg[i] = static_cast<double>(tok_sum) / denom;
  }

  BurstReport report;
  report.window_ms = window_ms;

  size_t above = 0;
  std::vector<size_t> burst_lengths;
  size_t run = 0;
  for (size_t i = 0; i < n_sub; ++i) {
    if (static_cast<double>(req_count[i]) > req_avg[i]) {
      ++above;
      ++run;
    } else if (run > 0) {
      burst_lengths.push_back(run);
      run = 0;
    }
  }
  if (run > 0) burst_lengths.push_back(run);
  report.burst_time_fraction = static_cast<double>(above) / static_cast<double>(n_sub);
  if (!burst_lengths.empty()) {
    size_t total = 0;
    for (size_t len : burst_lengths) total += len;
    report.mean_burst_duration_s =
        static_cast<double>(total) / static_cast<double>(burst_lengths.size());
  }

  std::vector<double> all_factors = factors;
  if (std::find(all_factors.begin(), all_factors.end(), 1.0) == all_factors.end()) {
    all_factors.push_back(1.0);
  }
  int64_t total_req = 0, total_tok = 0;
  for (size_t i = 0; i < n_sub; ++i) {
    total_req += req_count[i];
    total_tok += tok_count[i];
  }
  for (double x : all_factors) {
    if (!(x > 0.0)) throw std::invalid_argument("burstiness: factors must be positive");
    int64_t req_excess = 0, tok_excess = 0;
    for (size_t i = 0; i < n_sub; ++i) {
      if (static_cast<double>(req_count[i]) > x * req_avg[i]) req_excess += req_count[i];
      if (static_cast<double>(tok_count[i]) > x * tok_avg[i]) tok_excess += tok_count[i];
    }
    report.excess_fraction[x] =
        ExcessFraction{static_cast<double>(req_excess) / static_cast<double>(total_req),
                       static_cast<double>(tok_excess) / static_cast<double>(total_tok)};
  }
  return report;
}

}  // namespace pdsim::trace
