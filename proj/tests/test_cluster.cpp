#include "doctest.h"
#include "pdsim/cluster/cluster.hpp"

using namespace pdsim;
using namespace pdsim::cluster;

namespace {

PerfModel table_perf() {
  PerfModel perf;
  perf.prefill_velocity = 14000.0;
  perf.network_velocity = 819200.0;
  perf.decode_iter_base_ms = 20.0;
  perf.decode_iter_per_seq_ms = 0.1;
  perf.kvc_capacity_tokens = 100000;
  perf.max_decode_batch = 512;
  perf.prefill_equiv_tokens_per_seq = 8.0;
  return perf;
}

}  // namespace

TEST_CASE("instance startup schedules readiness after the configured delay") {
  sim::Engine engine;
  Cluster cluster(engine, table_perf(), ConvertibleConfig{}, 5000);
  engine.run_until(10000);
  const InstanceId id = cluster.start_instance(Role::Prefiller);
  CHECK(cluster.instance(id).ready_at_ms == 15000);
  CHECK(cluster.instance(id).state == InstanceState::Starting);
  CHECK(cluster.instance(id).ready_at_ms - cluster.instance(id).start_ms == 5000);
  engine.run_until(14999);
  CHECK(cluster.instance(id).state == InstanceState::Starting);
  engine.run_until(15000);
  CHECK(cluster.instance(id).state == InstanceState::Ready);
}

TEST_CASE("zero startup delay emulates live autoscaling") {
  sim::Engine engine;
  Cluster cluster(engine, table_perf(), ConvertibleConfig{}, 0);
  engine.run_until(700);
  const InstanceId id = cluster.start_instance(Role::RegularDecoder);
  CHECK(cluster.instance(id).ready_at_ms == 700);
  engine.run_until(700);
  CHECK(cluster.instance(id).state == InstanceState::Ready);
}

TEST_CASE("instances started in the same tick get distinct ids, same readiness") {
  sim::Engine engine;
  Cluster cluster(engine, table_perf(), ConvertibleConfig{}, 5000);
  const InstanceId a = cluster.start_instance(Role::Prefiller);
  const InstanceId b = cluster.start_instance(Role::Prefiller);
  CHECK(a != b);
  CHECK(cluster.instance(a).ready_at_ms == cluster.instance(b).ready_at_ms);
}

TEST_CASE("prefill takes ceil(1000 L / V_P) milliseconds") {
  sim::Engine engine;
  Cluster cluster(engine, table_perf(), ConvertibleConfig{}, 0);
  const InstanceId p = cluster.add_ready_instance(Role::Prefiller);

  CHECK(cluster.prefill_duration_ms(1400) == 100);
  CHECK(cluster.prefill_duration_ms(1) == 1);  // minimum one tick of work

  const RequestId rid = cluster.add_request(0, 1400, 10);
  cluster.assign_prefill(p, rid);
  engine.run_until(99);
  CHECK(cluster.request(rid).prefill_end_ms == -1);
  engine.run_until(100);
  CHECK(cluster.request(rid).prefill_start_ms == 0);
  CHECK(cluster.request(rid).prefill_end_ms == 100);
}

TEST_CASE("prefills on one instance execute serially") {
  sim::Engine engine;
  Cluster cluster(engine, table_perf(), ConvertibleConfig{}, 0);
  const InstanceId p = cluster.add_ready_instance(Role::Prefiller);
  const RequestId first = cluster.add_request(0, 1400, 10);
  const RequestId second = cluster.add_request(0, 700, 10);
  cluster.assign_prefill(p, first);
  cluster.assign_prefill(p, second);
  CHECK(cluster.prefill_inflight_tokens(p) == 2100);
  engine.run_until(200);
  CHECK(cluster.request(first).prefill_end_ms == 100);
  CHECK(cluster.request(second).prefill_start_ms == 100);  // starts when first ends
  CHECK(cluster.request(second).prefill_end_ms == 150);
  CHECK(cluster.prefill_inflight_tokens(p) == 0);
}

TEST_CASE("routing prefill to a non-ready instance is a fault") {
  sim::Engine engine;
  Cluster cluster(engine, table_perf(), ConvertibleConfig{}, 5000);
  const InstanceId p = cluster.start_instance(Role::Prefiller);  // still booting
  const RequestId rid = cluster.add_request(0, 100, 10);
  CHECK_THROWS_AS(cluster.assign_prefill(p, rid), std::logic_error);
}

TEST_CASE("kvc transfer takes ceil(1000 L / V_N), zero when disabled") {
  sim::Engine engine;
  Cluster cluster(engine, table_perf(), ConvertibleConfig{}, 0);
  CHECK(cluster.transfer_duration_ms(8192) == 10);
  // Transfer is an order of magnitude below this input's prefill time.
  CHECK(cluster.transfer_duration_ms(8192) * 10 <= cluster.prefill_duration_ms(8192));

  PerfModel no_network = table_perf();
  no_network.network_velocity = 0.0;  // disable sentinel
  Cluster direct(engine, no_network, ConvertibleConfig{}, 0);
  CHECK(direct.transfer_duration_ms(8192) == 0);
}

TEST_CASE("a full decoder defers admission until a request releases its slots") {
  sim::Engine engine;
  PerfModel perf = table_perf();
  perf.kvc_capacity_tokens = 150;  // exactly one 100+50 request
  Cluster cluster(engine, perf, ConvertibleConfig{}, 0);
  const InstanceId d = cluster.add_ready_instance(Role::RegularDecoder);

  const RequestId first = cluster.add_request(0, 100, 50);
  const RequestId second = cluster.add_request(0, 100, 50);
  REQUIRE(cluster.can_admit_decode(d, cluster.request(first)));
  cluster.begin_transfer(d, first);
  CHECK(!cluster.can_admit_decode(d, cluster.request(second)));

  // 50 output tokens at ~20 ms per iteration; wait for completion.
  engine.run_until(60000);
  CHECK(cluster.request(first).completed());
  CHECK(cluster.instance(d).kvc_committed == 0);
  CHECK(cluster.can_admit_decode(d, cluster.request(second)));
  cluster.begin_transfer(d, second);
  engine.run_until(120000);
  CHECK(cluster.request(second).completed());
}

TEST_CASE("decode iterations are affine in batch size") {
  sim::Engine engine;
  Cluster cluster(engine, table_perf(), ConvertibleConfig{}, 0);
  const InstanceId d = cluster.add_ready_instance(Role::RegularDecoder);

  // Batch of one: c0 + c1 = 20.1 ms, which lands on 20 ms ticks.
  const RequestId rid = cluster.add_request(0, 10, 5);
  cluster.begin_transfer(d, rid);  // instant transfer start; 1 ms on the wire
  engine.run_until(1);
  engine.run_until(21);
  CHECK(cluster.request(rid).first_token_ms == 21);  // transfer 1ms + one iteration
  engine.run_until(200);
  CHECK(cluster.request(rid).completed());
  // TPOT is one iteration: (completion - first_token) / (outputs - 1) = 20.
  CHECK((cluster.request(rid).completion_ms - cluster.request(rid).first_token_ms) /
            (cluster.request(rid).output_tokens - 1) ==
        20);
}

TEST_CASE("a lone request with 100 output tokens takes 100 iterations") {
  sim::Engine engine;
  Cluster cluster(engine, table_perf(), ConvertibleConfig{}, 0);
  const InstanceId d = cluster.add_ready_instance(Role::RegularDecoder);
  const RequestId rid = cluster.add_request(0, 64, 100);
  cluster.begin_transfer(d, rid);
  engine.run_until(1000000);
  const auto& req = cluster.request(rid);
  REQUIRE(req.completed());
  CHECK(req.tokens_generated == 100);
  // 100 iterations of 20 ms each after the transfer lands.
  CHECK(req.completion_ms - cluster.transfer_duration_ms(64) == 100 * 20);
}

TEST_CASE("convertible chunked prefill fills only the headroom and reverts") {
  sim::Engine engine;
  PerfModel perf = table_perf();
  ConvertibleConfig conv{512, 112, 0};
  Cluster cluster(engine, perf, conv, 0);
  const InstanceId c = cluster.add_ready_instance(Role::ConvertibleDecoder);

  // Pin a decode batch of 112 long-lived sequences.
  std::vector<RequestId> batch;
  for (int i = 0; i < 112; ++i) {
    const RequestId rid = cluster.add_request(0, 10, 100000);
    cluster.begin_transfer(c, rid);
    batch.push_back(rid);
  }
  engine.run_until(1);  // transfers land; first iteration begins

  const RequestId task = cluster.add_request(1, 1024, 50);
  cluster.assign_convertible_prefill(c, task);
  CHECK(cluster.prefill_inflight_tokens(c) == 1024);

  // Chunk headroom is 512 - 112 = 400: iterations of 400/400/224 tokens.
  // Mixed iteration time: 20 + 0.1*112 + 0.1*p/8.
  engine.run_until(4000);
  const auto& req = cluster.request(task);
  REQUIRE(req.prefill_end_ms > 0);
  const int64_t heavy = std::llround(20.0 + 11.2 + 0.1 * 400 / 8.0);  // 36 ms
  const int64_t light = std::llround(20.0 + 11.2 + 0.1 * 224 / 8.0);  // 34 ms
  CHECK(req.prefill_end_ms - req.prefill_start_ms == 2 * heavy + light);
  CHECK(cluster.prefill_inflight_tokens(c) == 0);

  // After the task the instance steps as a pure decoder again.
  const int64_t plain = std::llround(20.0 + 0.1 * 113);  // task joined the batch
  const int64_t mark = engine.now();
  const int64_t generated_before = cluster.generated_tokens(c);
  engine.run_until(mark + plain * 10);
  CHECK(cluster.generated_tokens(c) - generated_before >= 113 * 9);
}

TEST_CASE("decode always preempts prefill headroom on a convertible") {
  sim::Engine engine;
  PerfModel perf = table_perf();
  perf.max_decode_batch = 600;
  ConvertibleConfig conv{512, 112, 0};
  Cluster cluster(engine, perf, conv, 0);
  const InstanceId c = cluster.add_ready_instance(Role::ConvertibleDecoder);

  // Decode batch at the full chunk size leaves zero prefill headroom.
  for (int i = 0; i < 512; ++i) {
    cluster.begin_transfer(c, cluster.add_request(0, 10, 100000));
  }
  engine.run_until(1);
  const RequestId starved = cluster.add_request(1, 100, 10);
  cluster.assign_convertible_prefill(c, starved);
  engine.run_until(800);
  CHECK(cluster.request(starved).prefill_start_ms == -1);  // never got a chunk

  // An empty decode batch hands the whole chunk to prefill.
  const InstanceId empty = cluster.add_ready_instance(Role::ConvertibleDecoder);
  const RequestId solo = cluster.add_request(engine.now(), 512, 10);
  cluster.assign_convertible_prefill(empty, solo);
  const sim::TimeMs start = engine.now();
  engine.run_until(start + 100);
  CHECK(cluster.request(solo).prefill_end_ms - cluster.request(solo).prefill_start_ms ==
        std::llround(20.0 + 0.1 * 512 / 8.0));  // one full-chunk iteration: 26 ms
}

TEST_CASE("a second prefill task queues behind the active one") {
  sim::Engine engine;
  ConvertibleConfig conv{512, 112, 0};
  Cluster cluster(engine, table_perf(), conv, 0);
  const InstanceId c = cluster.add_ready_instance(Role::ConvertibleDecoder);
  const RequestId first = cluster.add_request(0, 512, 50);
  const RequestId second = cluster.add_request(0, 512, 50);
  cluster.assign_convertible_prefill(c, first);
  cluster.assign_convertible_prefill(c, second);
  engine.run_until(5000);
  CHECK(cluster.request(first).prefill_end_ms > 0);
  CHECK(cluster.request(second).prefill_start_ms >= cluster.request(first).prefill_end_ms);
}

TEST_CASE("convertible decode admission respects the reserved region") {
  sim::Engine engine;
  PerfModel perf = table_perf();
  perf.kvc_capacity_tokens = 1000;
  ConvertibleConfig conv{512, 112, 300};
  Cluster cluster(engine, perf, conv, 0);
  const InstanceId c = cluster.add_ready_instance(Role::ConvertibleDecoder);

  // Decode-routed work may use only capacity - reserved = 700 slots.
  const RequestId remote = cluster.add_request(0, 500, 100);  // footprint 600
  REQUIRE(cluster.can_admit_decode(c, cluster.request(remote)));
  cluster.begin_transfer(c, remote);
  const RequestId too_much = cluster.add_request(0, 100, 50);  // would exceed 700
  CHECK(!cluster.can_admit_decode(c, cluster.request(too_much)));

  // A prefill task may dip into the reserved region: 600 + 350 <= 1000.
  const RequestId local = cluster.add_request(0, 300, 50);
  CHECK(cluster.can_admit_convertible_prefill(c, cluster.request(local)));
}

TEST_CASE("draining instances finish their work and then terminate") {
  sim::Engine engine;
  Cluster cluster(engine, table_perf(), ConvertibleConfig{}, 0);
  const InstanceId p = cluster.add_ready_instance(Role::Prefiller);
  const RequestId rid = cluster.add_request(0, 1400, 10);
  cluster.assign_prefill(p, rid);
  cluster.shut_down(p);
  CHECK(cluster.instance(p).state == InstanceState::Draining);
  CHECK_THROWS_AS(cluster.assign_prefill(p, cluster.add_request(0, 10, 10)),
                  std::logic_error);
  engine.run_until(200);
  CHECK(cluster.request(rid).prefill_end_ms == 100);  // in-flight work completed
  CHECK(cluster.instance(p).state == InstanceState::Terminated);

  SUBCASE("starting instances cancel outright") {
    sim::Engine engine2;
    Cluster cluster2(engine2, table_perf(), ConvertibleConfig{}, 5000);
    const InstanceId booting = cluster2.start_instance(Role::RegularDecoder);
    cluster2.shut_down(booting);
    CHECK(cluster2.instance(booting).state == InstanceState::Terminated);
    engine2.run_until(6000);  // the stale InstanceReady event must not revive it
    CHECK(cluster2.instance(booting).state == InstanceState::Terminated);
  }
}

TEST_CASE("token conservation holds at every event boundary") {
  sim::Engine engine;
  PerfModel perf = table_perf();
  perf.kvc_capacity_tokens = 2000;
  ConvertibleConfig conv{512, 112, 200};
  Cluster cluster(engine, perf, conv, 0);
  engine.set_post_dispatch_hook([&](const sim::SimEvent&) { cluster.check_invariants(); });

  const InstanceId p = cluster.add_ready_instance(Role::Prefiller);
  const InstanceId d = cluster.add_ready_instance(Role::RegularDecoder);
  const InstanceId c = cluster.add_ready_instance(Role::ConvertibleDecoder);

  Cluster::Callbacks callbacks;
  callbacks.on_prefill_complete = [&](RequestId rid) {
    const auto& req = cluster.request(rid);
    if (cluster.can_admit_decode(d, req)) {
      cluster.begin_transfer(d, rid);
    } else if (cluster.can_admit_decode(c, req)) {
      cluster.begin_transfer(c, rid);
    } else {
      cluster.decode_admission_queue().push_back(rid);
    }
  };
  callbacks.on_decode_capacity_change = [&] {
    auto& queue = cluster.decode_admission_queue();
    std::deque<RequestId> keep;
    while (!queue.empty()) {
      const RequestId rid = queue.front();
      queue.pop_front();
      if (cluster.can_admit_decode(d, cluster.request(rid))) {
        cluster.begin_transfer(d, rid);
      } else {
        keep.push_back(rid);
      }
    }
    queue.swap(keep);
  };
  cluster.set_callbacks(std::move(callbacks));

  sim::RngState rng{4711};
  auto stream = rng.stream("conservation");
  sim::TimeMs t = 0;
  for (int i = 0; i < 60; ++i) {
    t += static_cast<sim::TimeMs>(stream.next_below(120));
    const int input = 50 + static_cast<int>(stream.next_below(400));
    const int output = 5 + static_cast<int>(stream.next_below(60));
    engine.schedule(t, sim::EventKind::RequestArrival, [&, input, output] {
      const RequestId rid = cluster.add_request(engine.now(), input, output);
      if (stream.bernoulli(0.3) &&
          cluster.can_admit_convertible_prefill(c, cluster.request(rid))) {
        cluster.assign_convertible_prefill(c, rid);
      } else {
        cluster.assign_prefill(p, rid);
      }
    });
  }
  engine.drain();

  // No request lost: everything arrived is completed at quiescence.
  for (const auto& req : cluster.requests()) {
    CHECK(req.completed());
    CHECK(req.held_slots == 0);
  }
  CHECK(cluster.instance(d).kvc_used == 0);
  CHECK(cluster.instance(c).kvc_used == 0);
}
