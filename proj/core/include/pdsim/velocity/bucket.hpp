#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace pdsim {

// Request categories along the (input length, output length) plane.
// Three input classes (S/M/L) times three output classes, nine buckets total.
// Index layout: input_class * 3 + output_class.
enum class Bucket : uint8_t {
  SS = 0,
  SM,
  SL,
  MS,
  MM,
  ML,
  LS,
  LM,
  LL,
};

inline constexpr int kBucketCount = 9;

struct BucketSpec {
  Bucket id;
  const char* label;           // "S-S", "M-L", ...
  int input_boundary;          // max input tokens for the input class
  int output_boundary;         // max output tokens for the output class
  int representative_input;    // tokens used when a point estimate is needed
  int representative_output;
};

// Class boundaries double as representatives: inputs 256/1024/8192,
// outputs 100/350/610. Values beyond the top boundary clamp into L.
const std::array<BucketSpec, kBucketCount>& bucket_table();

const BucketSpec& bucket_spec(Bucket b);

// Total and single-valued over all positive lengths (clamping rule).
Bucket classify_lengths(int input_tokens, int output_tokens);

int input_class_of(int input_tokens);   // 0=S, 1=M, 2=L
int output_class_of(int output_tokens);

inline int input_class(Bucket b) { return static_cast<int>(b) / 3; }
inline int output_class(Bucket b) { return static_cast<int>(b) % 3; }

inline Bucket make_bucket(int input_cls, int output_cls) {
  return static_cast<Bucket>(input_cls * 3 + output_cls);
}

std::string_view bucket_label(Bucket b);

// Parses "S-S" style labels; nullopt on anything else.
std::optional<Bucket> bucket_from_label(std::string_view label);

}  // namespace pdsim
