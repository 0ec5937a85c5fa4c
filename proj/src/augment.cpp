#include "sqz/augment.hpp"

#include <algorithm>
#include <stdexcept>

#include "sqz/rng.hpp"

namespace sqz {

void validate(const SpecAugmentParams& p) {
  if (p.freq_masks < 0 || p.time_masks < 0) {
    throw std::invalid_argument("spec_augment: mask counts must be >= 0");
  }
  if (p.freq_width < 0) {
    throw std::invalid_argument("spec_augment: freq_width must be >= 0");
  }
  if (p.time_mask_ratio < 0.0 || p.time_mask_ratio > 1.0) {
    throw std::invalid_argument("spec_augment: time_mask_ratio must be in [0, 1]");
  }
}

TensorPtr spec_augment(const TensorPtr& features, const SpecAugmentParams& p,
                       uint64_t seed, AppliedMasks* masks_out) {
  validate(p);
  if (features->ndim() != 2) {
    throw std::invalid_argument("spec_augment: features must be [T, F], got " +
                                shape_str(features->shape));
  }
  const int64_t t = features->dim(0);
  const int64_t f = features->dim(1);
  auto out = tensor(features->shape, features->data, false);
  Rng rng(seed);
  AppliedMasks masks;

  for (int64_t i = 0; i < p.freq_masks; ++i) {
    const int64_t w = rng.uniform_int(0, std::min(p.freq_width, f));
    const int64_t f0 = rng.uniform_int(0, f - w);
    masks.freq.emplace_back(f0, w);
    for (int64_t r = 0; r < t; ++r) {
      for (int64_t c = f0; c < f0 + w; ++c) out->data[r * f + c] = 0.0;
    }
  }
  const int64_t max_time_w =
      static_cast<int64_t>(p.time_mask_ratio * static_cast<double>(t));
  for (int64_t i = 0; i < p.time_masks; ++i) {
    const int64_t w = rng.uniform_int(0, max_time_w);
    const int64_t t0 = rng.uniform_int(0, t - w);
    masks.time.emplace_back(t0, w);
    for (int64_t r = t0; r < t0 + w; ++r) {
      for (int64_t c = 0; c < f; ++c) out->data[r * f + c] = 0.0;
    }
  }
  if (masks_out) *masks_out = std::move(masks);
  return out;
}

}  // namespace sqz
