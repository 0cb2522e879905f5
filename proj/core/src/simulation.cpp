#include "pdsim/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace pdsim {

using cluster::InstanceId;
using cluster::InstanceState;
using cluster::RequestId;
using cluster::RequestPhase;
using cluster::Role;
using scaler::PolicyKind;
using sim::EventKind;
using sim::TimeMs;

namespace {

double window_mean(const std::deque<double>& samples) {
  if (samples.empty()) return 0.0;
  return std::accumulate(samples.begin(), samples.end(), 0.0) /
         static_cast<double>(samples.size());
}

double p99(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const size_t idx = static_cast<size_t>(
      std::ceil(0.99 * static_cast<double>(values.size()))) - 1;
  return values[std::min(idx, values.size() - 1)];
}

}  // namespace

Simulation::Simulation(SimulationOptions options, std::vector<trace::TraceRecord> records)
    : options_(std::move(options)), records_(std::move(records)) {
  rng_.seed = options_.seed;
  auto problems = options_.profile.validate();
  if (!problems.empty()) {
    throw std::invalid_argument("simulation profile invalid: " + problems.front());
  }
  cluster_ = std::make_unique<cluster::Cluster>(
      engine_, options_.profile.perf_model(), options_.profile.convertible_config(),
      options_.startup_delay_ms);
  router_ = std::make_unique<router::Router>(
      *cluster_, options_.slo,
      router::OutputPredictor(options_.predictor_accuracy, rng_.stream("predictor")),
      options_.convertible_memory_threshold);

  for (int i = 0; i < options_.initial_prefillers; ++i) {
    cluster_->add_ready_instance(Role::Prefiller);
  }
  for (int i = 0; i < options_.initial_regular_decoders; ++i) {
    cluster_->add_ready_instance(Role::RegularDecoder);
  }
  for (int i = 0; i < options_.convertible_count; ++i) {
    cluster_->add_ready_instance(Role::ConvertibleDecoder);
  }
}

double Simulation::convertible_velocity() const {
  return options_.profile.convertible_prefill_velocity_tps(
      options_.slo.tpot_slo_seconds());
}

void Simulation::on_arrival(RequestId rid) {
  ++arrived_count_;
  router_->record_arrival(rid, engine_.now());
  router_->route_prefill(rid, convertible_velocity());
}

void Simulation::try_admit_decode_queue() {
  auto& queue = cluster_->decode_admission_queue();
  std::deque<RequestId> waiting;
  while (!queue.empty()) {
    const RequestId rid = queue.front();
    queue.pop_front();
    if (auto dest = router_->route_decode(rid)) {
      cluster_->begin_transfer(*dest, rid);
    } else {
      waiting.push_back(rid);
    }
  }
  queue.swap(waiting);
}

metrics::SimReport Simulation::run() {
  cluster::Cluster::Callbacks callbacks;
  callbacks.on_prefill_complete = [this](RequestId rid) {
    if (auto dest = router_->route_decode(rid)) {
      cluster_->begin_transfer(*dest, rid);
    } else {
      cluster_->decode_admission_queue().push_back(rid);
    }
  };
  callbacks.on_prefill_capacity_change = [this] {
    router_->reevaluate_queue(convertible_velocity());
  };
  callbacks.on_decode_capacity_change = [this] { try_admit_decode_queue(); };
  callbacks.on_request_complete = [this](RequestId rid) {
    ++completed_count_;
    const auto& req = cluster_->request(rid);
    const double ttft =
        static_cast<double>(req.first_token_ms - req.arrival_ms);
    const double tpot =
        req.output_tokens > 1
            ? static_cast<double>(req.completion_ms - req.first_token_ms) /
                  static_cast<double>(req.output_tokens - 1)
            : 0.0;
    finish_window_.push_back(FinishStamp{
        engine_.now(), ttft / options_.slo.ttft_slo_ms(req.input_tokens), tpot});
  };
  cluster_->set_callbacks(std::move(callbacks));

  if (options_.check_invariants) {
    engine_.set_post_dispatch_hook([this](const sim::SimEvent&) {
      cluster_->check_invariants();
      size_t pending = 0, awaiting = 0;
      for (const auto& req : cluster_->requests()) {
        if (req.phase == RequestPhase::PendingPrefill) ++pending;
        if (req.phase == RequestPhase::AwaitingDecode) ++awaiting;
      }
      if (pending != router_->pending_count() ||
          awaiting != cluster_->decode_admission_queue().size()) {
        throw std::logic_error("queue accounting drift at t=" +
                               std::to_string(engine_.now()));
      }
    });
  }

  for (const auto& rec : records_) {
    if (rec.arrival_ms >= options_.horizon_ms) continue;
    engine_.schedule(rec.arrival_ms, EventKind::RequestArrival, [this, rec] {
      const RequestId rid =
          cluster_->add_request(rec.arrival_ms, rec.input_tokens, rec.output_tokens);
      on_arrival(rid);
    });
  }
  if (options_.scaler_tick_ms > 0 && options_.scaler_tick_ms <= options_.horizon_ms) {
    engine_.schedule(options_.scaler_tick_ms, EventKind::MetricsTick,
                     [this] { on_metrics_tick(engine_.now()); });
    engine_.schedule(options_.scaler_tick_ms, EventKind::ScalerTick,
                     [this] { on_scaler_tick(engine_.now()); });
  }

  engine_.run_until(options_.horizon_ms);

  metrics::SimReport report;
  report.records.reserve(cluster_->requests().size());
  for (const auto& req : cluster_->requests()) {
    report.records.push_back(metrics::latency_record(req, options_.slo));
  }
  report.attainment = metrics::slo_attainment(report.records, options_.slo);
  report.avg_gpus = metrics::avg_gpu_usage(cluster_->instances(), options_.horizon_ms);
  report.instance_samples = samples_;
  report.decisions = decisions_;
  report.policy = options_.policy_label;
  report.seed = options_.seed;
  report.trace_name = options_.trace_name;
  report.horizon_ms = options_.horizon_ms;
  return report;
}

void Simulation::on_metrics_tick(TimeMs now) {
  const double tick_s = static_cast<double>(options_.scaler_tick_ms) / 1000.0;

  metrics::InstanceSample sample;
  sample.time_ms = now;
  sample.prefillers = cluster_->active_count(Role::Prefiller);
  sample.regular_decoders = cluster_->active_count(Role::RegularDecoder);
  sample.convertibles = cluster_->active_count(Role::ConvertibleDecoder);

  const int ready_prefillers =
      static_cast<int>(cluster_->ready_instances(Role::Prefiller).size());
  const int64_t prefill_tokens = cluster_->prefill_tokens_processed();
  const double processed =
      static_cast<double>(prefill_tokens - last_prefill_tokens_);
  last_prefill_tokens_ = prefill_tokens;
  if (ready_prefillers > 0) {
    sample.prefill_throughput_utilization =
        std::clamp(processed / (static_cast<double>(ready_prefillers) *
                                options_.profile.v_p * tick_s),
                   0.0, 1.0);
  }
  sample.decoder_memory_occupancy = cluster_->decoder_memory_utilization();
  for (const auto& inst : cluster_->instances()) {
    if (inst.role == Role::ConvertibleDecoder) {
      sample.convertible_generated_total += cluster_->generated_tokens(inst.id);
      sample.convertible_completed_total += cluster_->completed_request_tokens(inst.id);
    }
  }
  samples_.push_back(sample);

  concurrency_samples_.push_back(static_cast<double>(arrived_count_ - completed_count_));
  utilization_samples_.push_back(sample.decoder_memory_occupancy);
  while (static_cast<int>(concurrency_samples_.size()) > options_.lag_window_ticks) {
    concurrency_samples_.pop_front();
  }
  while (static_cast<int>(utilization_samples_.size()) > options_.lag_window_ticks) {
    utilization_samples_.pop_front();
  }
  const TimeMs lag_ms = options_.scaler_tick_ms * options_.lag_window_ticks;
  while (!finish_window_.empty() && finish_window_.front().time < now - lag_ms) {
    finish_window_.pop_front();
  }
  router_->prune_arrivals(now - lag_ms);

  const TimeMs next = now + options_.scaler_tick_ms;
  if (next <= options_.horizon_ms) {
    engine_.schedule(next, EventKind::MetricsTick, [this] { on_metrics_tick(engine_.now()); });
  }
}

scaler::TrafficSnapshot Simulation::build_snapshot(TimeMs now) const {
  scaler::TrafficSnapshot snap;
  snap.window_start_ms = now - options_.scaler_tick_ms;
  snap.window_end_ms = now;
  const auto rates = router_->window_rates(now, options_.scaler_tick_ms);
  snap.lambda_input = rates.lambda_input;
  snap.lambda_prime_per_bucket = rates.lambda_prime;
  snap.request_rate = rates.request_rate;
  snap.concurrency = window_mean(concurrency_samples_);
  snap.decoder_mem_utilization = window_mean(utilization_samples_);
  std::vector<double> ttft_ratios, tpots;
  ttft_ratios.reserve(finish_window_.size());
  tpots.reserve(finish_window_.size());
  for (const auto& stamp : finish_window_) {
    ttft_ratios.push_back(stamp.ttft_slo_ratio);
    tpots.push_back(stamp.tpot_ms);
  }
  snap.ttft_slo_ratio_p99 = p99(std::move(ttft_ratios));
  snap.measured_tpot_p99_ms = p99(std::move(tpots));
  snap.current_prefillers = cluster_->active_count(Role::Prefiller);
  snap.current_regular_decoders = cluster_->active_count(Role::RegularDecoder);
  return snap;
}

int Simulation::stage_target(const scaler::StagePolicy& policy,
                             const scaler::TrafficSnapshot& snap, bool prefill_stage,
                             int current) const {
  switch (policy.kind) {
    case PolicyKind::TokenVelocity:
      if (prefill_stage) {
        return scaler::tv_prefiller_target(snap, options_.profile, options_.min_prefillers);
      }
      return scaler::tv_decoder_target(snap, options_.profile, options_.convertible_count)
          .regular;
    case PolicyKind::Concurrency:
      return scaler::baseline_concurrency(snap, policy.threshold_requests);
    case PolicyKind::Rps:
      return scaler::baseline_rps(snap, policy.threshold_rps);
    case PolicyKind::Utilization:
      return scaler::baseline_utilization(snap, policy.threshold_fraction, current);
    case PolicyKind::SloReactive: {
      const auto targets = scaler::baseline_slo_reactive(
          snap, scaler::SloThresholds{1.0, options_.slo.tpot_ms}, snap.current_prefillers,
          snap.current_regular_decoders);
      return prefill_stage ? targets.prefillers : targets.decoders;
    }
    case PolicyKind::Fixed:
      return current;
  }
  return current;
}

void Simulation::on_scaler_tick(TimeMs now) {
  const auto snap = build_snapshot(now);

  int prefill_target = stage_target(options_.prefill_policy, snap, true,
                                    snap.current_prefillers);
  prefill_target = std::max(prefill_target, options_.min_prefillers);
  int decode_target = stage_target(options_.decode_policy, snap, false,
                                   snap.current_regular_decoders);
  decode_target = std::max(decode_target, 1);  // keep I_c + 1 decoders alive

  // Scale-down damping for the token-velocity policy only.
  if (options_.prefill_policy.kind == PolicyKind::TokenVelocity &&
      prefill_target < snap.current_prefillers) {
    ++prefill_downscale_streak_;
    if (prefill_downscale_streak_ < options_.scale_down_ticks) {
      prefill_target = snap.current_prefillers;
    } else {
      prefill_downscale_streak_ = 0;
    }
  } else {
    prefill_downscale_streak_ = 0;
  }
  if (options_.decode_policy.kind == PolicyKind::TokenVelocity &&
      decode_target < snap.current_regular_decoders) {
    ++decode_downscale_streak_;
    if (decode_downscale_streak_ < options_.scale_down_ticks) {
      decode_target = snap.current_regular_decoders;
    } else {
      decode_downscale_streak_ = 0;
    }
  } else {
    decode_downscale_streak_ = 0;
  }

  scaler::ScalingDecision decision;
  decision.target_prefillers = prefill_target;
  decision.convertible_count = options_.convertible_count;
  decision.target_regular_decoders = decode_target;
  decision.target_decoders_total = decode_target + options_.convertible_count;
  decision.issued_at_ms = now;
  decision.policy_name = options_.policy_label;
  decisions_.push_back(decision);

  apply_prefiller_target(prefill_target);
  apply_regular_decoder_target(decode_target);

  const TimeMs next = now + options_.scaler_tick_ms;
  if (next <= options_.horizon_ms) {
    engine_.schedule(next, EventKind::ScalerTick, [this] { on_scaler_tick(engine_.now()); });
  }
}

void Simulation::apply_prefiller_target(int target) {
  scale_role(Role::Prefiller, cluster_->active_count(Role::Prefiller), target);
}

void Simulation::apply_regular_decoder_target(int target) {
  scale_role(Role::RegularDecoder, cluster_->active_count(Role::RegularDecoder), target);
}

void Simulation::scale_role(Role role, int current, int target) {
  if (target > current) {
    for (int i = 0; i < target - current; ++i) cluster_->start_instance(role);
    return;
  }
  if (target >= current) return;

  // Victims: cancel still-booting instances first (newest first), then drain
  // the Ready ones carrying the least work; ties prefer the newest.
  std::vector<InstanceId> starting, ready;
  for (InstanceId id : cluster_->active_instances(role)) {
    const auto& inst = cluster_->instance(id);
    (inst.state == InstanceState::Starting ? starting : ready).push_back(id);
  }
  std::sort(starting.begin(), starting.end(), std::greater<>());
  std::stable_sort(ready.begin(), ready.end(), [this, role](InstanceId a, InstanceId b) {
    const auto& ia = cluster_->instance(a);
    const auto& ib = cluster_->instance(b);
    const int64_t wa = role == Role::Prefiller ? ia.inflight_prefill_tokens : ia.kvc_committed;
    const int64_t wb = role == Role::Prefiller ? ib.inflight_prefill_tokens : ib.kvc_committed;
    if (wa != wb) return wa < wb;
    return a > b;
  });

  int to_remove = current - target;
  for (InstanceId id : starting) {
    if (to_remove == 0) return;
    cluster_->shut_down(id);
    --to_remove;
  }
  for (InstanceId id : ready) {
    if (to_remove == 0) return;
    cluster_->shut_down(id);
    --to_remove;
  }
}

}  // namespace pdsim
