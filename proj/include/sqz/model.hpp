#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sqz/config.hpp"
#include "sqz/modules.hpp"

namespace sqz {

// Assembled encoder: subsampling front end, the block stack with optional
// temporal U-Net resampling, and the CTC projection (vocab + 1 logits, blank
// last). Immutable during inference; training mutates parameters from a
// single thread.
struct EncoderModel {
  ModelConfig config;
  int64_t downsample_block = 0;  // resolved 1-based position, 0 = no unet
  SubsamplingBlock subsample;
  std::vector<EncoderBlock> blocks;
  TemporalResampler resampler;
  Linear ctc_proj;

  // features: [T, F] -> logits [ceil(ceil(T/2)/2), vocab + 1].
  // block_taps, when given, receives each block's output in order.
  TensorPtr forward(Ctx& ctx, const TensorPtr& features,
                    std::vector<TensorPtr>* block_taps = nullptr) const;

  // Sampling rate a block runs at, assuming a 10ms input hop: 40ms, or 80ms
  // inside the U-Net's reduced span (blocks D..n-2, 0-based).
  int64_t block_rate_ms(int64_t block_index) const;

  std::vector<std::pair<std::string, TensorPtr>> named_parameters() const;
  std::vector<std::pair<std::string, TensorPtr>> named_buffers() const;
  int64_t num_params() const;
};

// Deterministic build: the same config and seed give bit-identical
// parameters.
EncoderModel build(const ModelConfig& config, uint64_t seed);

// Analytic parameter count with a per-module breakdown; matches the built
// model exactly without allocating it.
struct ParamBreakdown {
  std::vector<std::pair<std::string, int64_t>> entries;
  int64_t total = 0;
};
ParamBreakdown count_params(const ModelConfig& config);

// Per-frame argmax, collapse adjacent repeats, drop blanks (blank id =
// vocab, the last logit index). Ties resolve to the lowest index.
std::vector<int64_t> ctc_greedy_decode(const Tensor& logits);

// Output frame count after the 4x subsampling chain.
int64_t subsampled_len(int64_t t);

}  // namespace sqz
