#include "pdsim/velocity/bucket.hpp"

#include <stdexcept>

namespace pdsim {

namespace {

constexpr std::array<int, 3> kInputBounds = {256, 1024, 8192};
constexpr std::array<int, 3> kOutputBounds = {100, 350, 610};

constexpr std::array<BucketSpec, kBucketCount> kBuckets = {{
    {Bucket::SS, "S-S", 256, 100, 256, 100},
    {Bucket::SM, "S-M", 256, 350, 256, 350},
    {Bucket::SL, "S-L", 256, 610, 256, 610},
    {Bucket::MS, "M-S", 1024, 100, 1024, 100},
    {Bucket::MM, "M-M", 1024, 350, 1024, 350},
    {Bucket::ML, "M-L", 1024, 610, 1024, 610},
    {Bucket::LS, "L-S", 8192, 100, 8192, 100},
    {Bucket::LM, "L-M", 8192, 350, 8192, 350},
    {Bucket::LL, "L-L", 8192, 610, 8192, 610},
}};

}  // namespace

const std::array<BucketSpec, kBucketCount>& bucket_table() { return kBuckets; }

const BucketSpec& bucket_spec(Bucket b) { return kBuckets[static_cast<size_t>(b)]; }

int input_class_of(int input_tokens) {
  if (input_tokens < 1) {
    throw std::invalid_argument("input_tokens must be >= 1");
  }
  for (int c = 0; c < 2; ++c) {
    if (input_tokens <= kInputBounds[c]) return c;
  }
  return 2;  // clamp above 8192 into L
}

int output_class_of(int output_tokens) {
  if (output_tokens < 1) {
    throw std::invalid_argument("output_tokens must be >= 1");
  }
  for (int c = 0; c < 2; ++c) {
    if (output_tokens <= kOutputBounds[c]) return c;
  }
  return 2;
}

Bucket classify_lengths(int input_tokens, int output_tokens) {
  return make_bucket(input_class_of(input_tokens), output_class_of(output_tokens));
}

std::string_view bucket_label(Bucket b) { return bucket_spec(b).label; }

std::optional<Bucket> bucket_from_label(std::string_view label) {
  for (const auto& spec : kBuckets) {
    if (label == spec.label) return spec.id;
  }
  return std::nullopt;
}

}  // namespace pdsim
