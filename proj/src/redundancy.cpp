#include "sqz/redundancy.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace sqz {

std::pair<double, int64_t> mean_cosine_at_distance(const Tensor& x, int64_t d) {
  if (x.ndim() != 2) {
    throw std::invalid_argument("mean_cosine_at_distance: need [T, C]");
  }
  const int64_t t = x.dim(0), c = x.dim(1);
  double sum = 0.0;
  int64_t pairs = 0;
  for (int64_t i = 0; i + d < t; ++i) {
    const double* a = x.data.data() + i * c;
    const double* b = x.data.data() + (i + d) * c;
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (int64_t j = 0; j < c; ++j) {
      dot += a[j] * b[j];
      na += a[j] * a[j];
      nb += b[j] * b[j];
    }
    if (na == 0.0 || nb == 0.0) continue;
    sum += dot / (std::sqrt(na) * std::sqrt(nb));
    ++pairs;
  }
  return {pairs > 0 ? sum / static_cast<double>(pairs) : 0.0, pairs};
}

RedundancyProfile redundancy_profile(const EncoderModel& model,
                                     const std::vector<TensorPtr>& inputs,
                                     const std::vector<int64_t>& distances) {
  if (inputs.empty()) {
    throw std::invalid_argument("redundancy_profile: need at least one input");
  }
  for (int64_t d : distances) {
    if (d < 1) {
      throw std::invalid_argument(
          "redundancy_profile: distances must be >= 1, got " +
          std::to_string(d));
    }
  }
  const int64_t max_d = *std::max_element(distances.begin(), distances.end());
  const size_t n_blocks = model.blocks.size();
  const size_t n_dist = distances.size();

  RedundancyProfile out;
  out.distances = distances;
  std::vector<std::vector<double>> sums(n_blocks,
                                        std::vector<double>(n_dist, 0.0));
  out.pair_counts.assign(n_blocks, std::vector<int64_t>(n_dist, 0));

  for (const auto& input : inputs) {
    if (subsampled_len(input->dim(0)) <= max_d) {
      ++out.inputs_skipped;
      continue;
    }
    Graph g(false);
    Ctx ctx{g, false, nullptr};
    std::vector<TensorPtr> taps;
    model.forward(ctx, input, &taps);
    for (size_t b = 0; b < taps.size(); ++b) {
      for (size_t k = 0; k < n_dist; ++k) {
        auto [mean, pairs] = mean_cosine_at_distance(*taps[b], distances[k]);
        sums[b][k] += mean * static_cast<double>(pairs);
        out.pair_counts[b][k] += pairs;
      }
    }
    ++out.inputs_used;
  }

  out.mean_cosine.assign(n_blocks, std::vector<double>(n_dist, 0.0));
  for (size_t b = 0; b < n_blocks; ++b) {
    for (size_t k = 0; k < n_dist; ++k) {
      if (out.pair_counts[b][k] > 0) {
        out.mean_cosine[b][k] =
            sums[b][k] / static_cast<double>(out.pair_counts[b][k]);
      }
    }
  }
  return out;
}

std::string RedundancyProfile::to_text() const {
  std::ostringstream os;
  os.precision(17);
  os << "block";
  for (int64_t d : distances) os << "\td" << d;
  os << "\n";
  for (size_t b = 0; b < mean_cosine.size(); ++b) {
    os << b;
    for (double v : mean_cosine[b]) os << "\t" << v;
    os << "\n";
  }
  return os.str();
}

}  // namespace sqz
