#include <cmath>

#include "doctest.h"
#include "pdsim/sim/rng.hpp"
#include "pdsim/velocity/bucket.hpp"
#include "pdsim/velocity/profile.hpp"

using namespace pdsim;

TEST_CASE("bucket classification matches the representative table") {
  CHECK(classify_lengths(256, 100) == Bucket::SS);
  CHECK(classify_lengths(8192, 610) == Bucket::LL);
  CHECK(classify_lengths(9000, 700) == Bucket::LL);  // clamp above the top class
  CHECK(classify_lengths(1, 1) == Bucket::SS);
  CHECK(classify_lengths(257, 100) == Bucket::MS);
  CHECK(classify_lengths(1024, 350) == Bucket::MM);
  CHECK(classify_lengths(1025, 351) == Bucket::LL);
  CHECK(classify_lengths(300, 610) == Bucket::ML);
}

TEST_CASE("bucket partition is total and single-valued") {
  for (int input = 1; input <= 9000; input += 37) {
    for (int output = 1; output <= 700; output += 11) {
      const Bucket b = classify_lengths(input, output);
      const auto& spec = bucket_spec(b);
      // The value lies within its class...
      CHECK(input <= (input_class(b) == 2 ? std::max(input, spec.input_boundary)
                                          : spec.input_boundary));
      CHECK(output <= (output_class(b) == 2 ? std::max(output, spec.output_boundary)
                                            : spec.output_boundary));
      // ...and no smaller class would contain it.
      if (input_class(b) > 0) {
        CHECK(input > bucket_spec(make_bucket(input_class(b) - 1, 0)).input_boundary);
      }
      if (output_class(b) > 0) {
        CHECK(output > bucket_spec(make_bucket(0, output_class(b) - 1)).output_boundary);
      }
    }
  }
}

TEST_CASE("bucket labels round-trip") {
  for (const auto& spec : bucket_table()) {
    auto parsed = bucket_from_label(spec.label);
    REQUIRE(parsed.has_value());
    CHECK(*parsed == spec.id);
  }
  CHECK(!bucket_from_label("X-L").has_value());
}

TEST_CASE("measured decode velocity is total tokens over TPOT") {
  CHECK(measured_decode_velocity({100, 350}, 0.1) == doctest::Approx(4500.0));
  CHECK(measured_decode_velocity({100}, 0.1) == doctest::Approx(1000.0));
  CHECK_THROWS_AS(measured_decode_velocity({}, 0.1), std::invalid_argument);
  CHECK_THROWS_AS(measured_decode_velocity({100}, 0.0), std::invalid_argument);
}

TEST_CASE("convertible prefill velocity is chunk headroom per SLO window") {
  CHECK(convertible_prefill_velocity(512, 112, 0.1) == doctest::Approx(4000.0));
  CHECK(convertible_prefill_velocity(113, 112, 1.0) == doctest::Approx(1.0));
  // Linearity: doubling both numerator terms doubles the result.
  CHECK(convertible_prefill_velocity(1024, 224, 0.1) == doctest::Approx(8000.0));
  CHECK_THROWS_AS(convertible_prefill_velocity(112, 112, 0.1), std::invalid_argument);
  CHECK_THROWS_AS(convertible_prefill_velocity(100, 112, 0.1), std::invalid_argument);
}

TEST_CASE("reserved memory covers one TTFT window of convertible prefill") {
  CHECK(reserved_memory(4000.0, 1.0, 0.25) == 1000);
  CHECK(reserved_memory(4000.0, 1.0, 0.0) == 0);
  CHECK(reserved_memory(4000.0, 1.0, 2.0) == 8000);
}

namespace {

// Independent oracle: linear scan for the largest chunk whose mixed
// iteration stays within the SLO.
int64_t brute_force_chunk(const PerfModel& perf, int batch, double slo_ms) {
  int64_t best = -1;
  for (int64_t chunk = batch + 1; chunk < batch + 200000; ++chunk) {
    if (perf.iteration_time_ms(batch, chunk - batch) <= slo_ms) {
      best = chunk;
    } else {
      break;
    }
  }
  return best;
}

}  // namespace

TEST_CASE("chunk selection finds the largest SLO-feasible chunk") {
  PerfModel perf;
  perf.decode_iter_base_ms = 20.0;
  perf.decode_iter_per_seq_ms = 0.1;
  perf.prefill_equiv_tokens_per_seq = 8.0;

  const int64_t chosen = select_chunk_size(perf, 112, 100.0);
  CHECK(chosen == brute_force_chunk(perf, 112, 100.0));
  // Closed form: 20 + 0.1*112 + 0.1*(n-112)/8 <= 100.
  CHECK(chosen == 112 + 5504);

  SUBCASE("no headroom above the decode iteration is a configuration error") {
    CHECK_THROWS_AS(select_chunk_size(perf, 112, 31.0), std::invalid_argument);
    CHECK_THROWS_AS(select_chunk_size(perf, 112, 20.0), std::invalid_argument);
  }

  SUBCASE("halving the SLO never increases the chunk") {
    sim::RngState rng{4242};
    auto stream = rng.stream("chunk-prop");
    for (int i = 0; i < 50; ++i) {
      PerfModel p;
      p.decode_iter_base_ms = 5.0 + stream.next_double() * 30.0;
      p.decode_iter_per_seq_ms = 0.01 + stream.next_double() * 0.3;
      p.prefill_equiv_tokens_per_seq = 1.0 + stream.next_double() * 15.0;
      const int batch = 1 + static_cast<int>(stream.next_below(200));
      const double slo = p.iteration_time_ms(batch, 1) + 1.0 + stream.next_double() * 120.0;
      const int64_t full = select_chunk_size(p, batch, slo);
      CHECK(full == brute_force_chunk(p, batch, slo));
      if (p.iteration_time_ms(batch, 1) <= slo / 2.0) {
        CHECK(select_chunk_size(p, batch, slo / 2.0) <= full);
      }
    }
  }
}

TEST_CASE("profile json round-trips") {
  VelocityProfile p;
  p.v_p = 14000.0;
  p.v_n = 819200.0;
  for (int i = 0; i < kBucketCount; ++i) p.v_d_per_bucket[i] = 1000.0 + 7.5 * i;
  p.chunk_size = 10710;
  p.expected_batch_size = 38;
  p.reserved_tokens = 26680;
  p.c0_ms = 40.65;
  p.c1_ms = 0.064;
  p.kvc_capacity_tokens = 165840;
  p.gpus_per_instance = 4;
  p.max_decode_batch = 512;
  p.prefill_equiv_tokens_per_seq = 12.0;

  const auto q = VelocityProfile::from_json(p.to_json());
  CHECK(q.v_p == p.v_p);
  CHECK(q.v_n == p.v_n);
  CHECK(q.v_d_per_bucket == p.v_d_per_bucket);
  CHECK(q.chunk_size == p.chunk_size);
  CHECK(q.expected_batch_size == p.expected_batch_size);
  CHECK(q.reserved_tokens == p.reserved_tokens);
  CHECK(q.c0_ms == p.c0_ms);
  CHECK(q.c1_ms == p.c1_ms);
  CHECK(q.kvc_capacity_tokens == p.kvc_capacity_tokens);
  CHECK(q.gpus_per_instance == p.gpus_per_instance);
  CHECK(q.max_decode_batch == p.max_decode_batch);
  CHECK(q.prefill_equiv_tokens_per_seq == p.prefill_equiv_tokens_per_seq);
  CHECK(q.to_json() == p.to_json());
  CHECK(q.validate().empty());
}

TEST_CASE("profile validation flags structural problems") {
  VelocityProfile p;  // zeros everywhere
  const auto problems = p.validate();
  CHECK(problems.size() >= 3);
}
