#pragma once

#include <cstdint>
#include <vector>

#include "sqz/model.hpp"

namespace sqz {

// Mean cosine similarity between embeddings d positions apart, per block.
// Positions are indexed in each block's own frame space, so blocks running
// at the U-Net reduced rate measure adjacency at that rate.
struct RedundancyProfile {
  std::vector<int64_t> distances;
  // mean_cosine[block][k] over all positions and inputs at distances[k];
  // 0 when no pair contributed (see pair_counts).
  std::vector<std::vector<double>> mean_cosine;
  std::vector<std::vector<int64_t>> pair_counts;
  int64_t inputs_used = 0;
  int64_t inputs_skipped = 0;  // too short after subsampling

  std::string to_text() const;  // columnar: block then one mean per distance
};

// Runs the model in eval mode over each input, tapping every block output.
// Inputs whose subsampled length does not exceed the largest distance are
// skipped and counted. Distances must be >= 1.
RedundancyProfile redundancy_profile(const EncoderModel& model,
                                     const std::vector<TensorPtr>& inputs,
                                     const std::vector<int64_t>& distances);

// Mean cosine over rows i, i+d of a [T, C] tensor; pairs with a zero-norm
// side are skipped. Returns {mean, pairs}.
std::pair<double, int64_t> mean_cosine_at_distance(const Tensor& x, int64_t d);

}  // namespace sqz
