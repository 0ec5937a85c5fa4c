#include "sqz/synthetic.hpp"

#include <algorithm>
#include <stdexcept>

#include "sqz/rng.hpp"

namespace sqz {

void validate(const SyntheticTask& task) {
  if (task.vocab < 2) {
    throw std::invalid_argument("synthetic: vocab must be >= 2");
  }
  if (task.label_len < 1) {
    throw std::invalid_argument("synthetic: label_len must be >= 1");
  }
  if (task.upsample < 1) {
    throw std::invalid_argument("synthetic: upsample must be >= 1");
  }
  if (task.feature_dim < task.vocab) {
    throw std::invalid_argument("synthetic: feature_dim must be >= vocab");
  }
  if (task.noise < 0.0) {
    throw std::invalid_argument("synthetic: noise must be >= 0");
  }
}

std::vector<Sample> gen_synthetic(const SyntheticTask& task, int64_t n) {
  validate(task);
  if (n < 1) throw std::invalid_argument("synthetic: n must be >= 1");
  Rng rng(task.seed);
  std::vector<Sample> out;
  out.reserve(static_cast<size_t>(n));
  const int64_t t = task.upsample * task.label_len;
  for (int64_t i = 0; i < n; ++i) {
    Sample s;
    s.labels.resize(static_cast<size_t>(task.label_len));
    for (int64_t j = 0; j < task.label_len; ++j) {
      if (j == 0) {
        s.labels[0] = rng.uniform_int(0, task.vocab - 1);
      } else {
        // Uniform over the vocab minus the previous label.
        int64_t v = rng.uniform_int(0, task.vocab - 2);
        if (v >= s.labels[static_cast<size_t>(j - 1)]) ++v;
        s.labels[static_cast<size_t>(j)] = v;
      }
    }
    s.features = zeros({t, task.feature_dim});
    for (int64_t j = 0; j < task.label_len; ++j) {
      for (int64_t r = j * task.upsample; r < (j + 1) * task.upsample; ++r) {
        s.features->data[r * task.feature_dim +
                         s.labels[static_cast<size_t>(j)]] = 1.0;
      }
    }
    if (task.noise > 0.0) {
      for (auto& v : s.features->data) v += task.noise * rng.normal();
    }
    out.push_back(std::move(s));
  }
  return out;
}

int64_t edit_distance(const std::vector<int64_t>& a,
                      const std::vector<int64_t>& b) {
  const size_t n = a.size(), m = b.size();
  std::vector<int64_t> prev(m + 1), cur(m + 1);
  for (size_t j = 0; j <= m; ++j) prev[j] = static_cast<int64_t>(j);
  for (size_t i = 1; i <= n; ++i) {
    cur[0] = static_cast<int64_t>(i);
    for (size_t j = 1; j <= m; ++j) {
      const int64_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

}  // namespace sqz
