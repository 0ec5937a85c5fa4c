#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sqz/config.hpp"

namespace sqz {

// One accounted component. macs counts multiply-accumulates; flops is
// 2 * macs plus the per-element costs of bias adds, activations and norms.
struct FlopsEntry {
  std::string path;
  double macs = 0.0;
  double flops = 0.0;
};

// Closed-form cost model for a config at a given input duration.
//
// Counting conventions (fixed, documented in the README):
//   - one multiply-accumulate = 2 FLOPs; bias adds = 1 FLOP per output
//   - per-element costs: relu 1, scaling 2, batch-stat norm 4, sigmoid 4,
//     swish 5, glu 5, softmax 5, layer norm 8
//   - the attention score/context pass is counted pairwise: one MAC per
//     (query, key, channel) triple, i.e. 2*T^2*C FLOPs per attention module
//   - the relative-position projection runs over its full 2T-1 table
//   - residual adds, frame copies and truncations are free
struct FlopsReport {
  double seconds = 0.0;
  double frame_ms = 10.0;
  // Frame counts per stage: input, after conv1, after subsampling (the block
  // rate), and the U-Net reduced rate (0 when the U-Net is off).
  int64_t input_frames = 0;
  int64_t conv1_frames = 0;
  int64_t block_frames = 0;
  int64_t reduced_frames = 0;
  std::vector<FlopsEntry> entries;

  double total_macs() const;
  double total_flops() const;
  // Sum of flops over entries whose path starts with the prefix.
  double flops_matching(const std::string& prefix) const;

  std::string to_text() const;  // one line per entry: path, MACs, FLOPs
  std::string to_json() const;  // versioned machine-readable schema
};

// Pure function of (config, duration): identical inputs give identical
// reports. Throws ConfigError for nonpositive durations.
FlopsReport count_flops(const ModelConfig& config, double input_seconds,
                        double frame_ms = 10.0);

}  // namespace sqz
