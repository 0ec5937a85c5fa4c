#pragma once

#include <cstdint>
#include <vector>

#include "sqz/tensor.hpp"

namespace sqz {

// Minimum number of frames that admits any alignment for the target:
// its length plus one separating blank per adjacent repeat.
int64_t ctc_min_frames(const std::vector<int64_t>& target);

// Connectionist temporal classification loss. log_probs: [T, V+1] with the
// blank as the last index; target ids in [0, V). Returns the negative log
// of the total probability over all valid alignments, computed with the
// log-space forward recursion; the gradient flows back through log_probs.
// Throws std::invalid_argument when the target cannot be aligned in T frames.
TensorPtr ctc_loss(Graph& g, const TensorPtr& log_probs,
                   const std::vector<int64_t>& target);

}  // namespace sqz
