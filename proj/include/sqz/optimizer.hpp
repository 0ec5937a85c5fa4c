#pragma once

#include <cstdint>
#include <vector>

#include "sqz/tensor.hpp"

namespace sqz {

struct AdamWParams {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
  double weight_decay = 5e-4;
};

// Adam with decoupled weight decay: the decay term lr * wd * p is subtracted
// from the weights directly rather than folded into the gradient, so with
// zero gradients and decay wd each step multiplies the weights by
// (1 - lr * wd). Missing gradients count as zero.
class AdamW {
 public:
  AdamW(std::vector<TensorPtr> params, AdamWParams hp = {});

  void step(double lr);
  void zero_grad();
  int64_t steps_taken() const { return t_; }

 private:
  std::vector<TensorPtr> params_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  AdamWParams hp_;
  int64_t t_ = 0;
};

}  // namespace sqz
