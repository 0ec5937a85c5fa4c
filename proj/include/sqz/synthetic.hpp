#pragma once

#include <cstdint>
#include <vector>

#include "sqz/tensor.hpp"

namespace sqz {

// Desk-scale copy task: each label is written as a one-hot feature row
// repeated `upsample` times, plus Gaussian noise. With upsample = 4 the
// encoder's 4x subsampling maps one output frame to each label. Adjacent
// labels never repeat, so every target stays alignable at that rate.
struct SyntheticTask {
  int64_t vocab = 8;
  int64_t label_len = 6;
  int64_t upsample = 4;
  int64_t feature_dim = 16;
  double noise = 0.05;
  uint64_t seed = 0;
};

void validate(const SyntheticTask& task);

struct Sample {
  TensorPtr features;  // [upsample * label_len, feature_dim]
  std::vector<int64_t> labels;
};

// Deterministic in (task.seed, n): the same arguments reproduce the dataset
// bit-exactly.
std::vector<Sample> gen_synthetic(const SyntheticTask& task, int64_t n);

// Token-level edit distance (insertions, deletions, substitutions).
int64_t edit_distance(const std::vector<int64_t>& a,
                      const std::vector<int64_t>& b);

}  // namespace sqz
