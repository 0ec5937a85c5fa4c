#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "sqz/tensor.hpp"

namespace sqz {

struct SpecAugmentParams {
  int64_t freq_masks = 2;
  int64_t freq_width = 27;       // mask width drawn uniformly from [0, freq_width]
  int64_t time_masks = 5;
  double time_mask_ratio = 0.05;  // width drawn from [0, ratio * T]
};

void validate(const SpecAugmentParams& p);

// Half-open [start, start + width) bands that were zeroed.
struct AppliedMasks {
  std::vector<std::pair<int64_t, int64_t>> freq;
  std::vector<std::pair<int64_t, int64_t>> time;
};

// Zeroes the drawn frequency and time bands of features [T, F]. Training-time
// data augmentation only; the result carries no gradient. Identical seeds
// place identical masks.
TensorPtr spec_augment(const TensorPtr& features, const SpecAugmentParams& p,
                       uint64_t seed, AppliedMasks* masks_out = nullptr);

}  // namespace sqz
