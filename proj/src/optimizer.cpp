#include "sqz/optimizer.hpp"

#include <cmath>
#include <stdexcept>

#include "sqz/kernels.hpp"

namespace sqz {

AdamW::AdamW(std::vector<TensorPtr> params, AdamWParams hp)
    : params_(std::move(params)), hp_(hp) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    m_.emplace_back(p->data.size(), 0.0);
    v_.emplace_back(p->data.size(), 0.0);
  }
}

void AdamW::zero_grad() {
  for (auto& p : params_) {
    if (p->has_grad()) std::fill(p->grad.begin(), p->grad.end(), 0.0);
  }
}

void AdamW::step(double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(hp_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(hp_.beta2, static_cast<double>(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    auto& p = *params_[i];
    auto& m = m_[i];
    auto& v = v_[i];
    if (p.has_grad() && p.grad.size() != p.data.size()) {
      throw std::invalid_argument("adamw: gradient shape mismatch");
    }
    const bool has_grad = p.has_grad();
    kernels::parallel_for(p.numel(), [&](int64_t j) {
      const double g = has_grad ? p.grad[static_cast<size_t>(j)] : 0.0;
      m[static_cast<size_t>(j)] =
          hp_.beta1 * m[static_cast<size_t>(j)] + (1.0 - hp_.beta1) * g;
      v[static_cast<size_t>(j)] =
          hp_.beta2 * v[static_cast<size_t>(j)] + (1.0 - hp_.beta2) * g * g;
      const double mhat = m[static_cast<size_t>(j)] / bc1;
      const double vhat = v[static_cast<size_t>(j)] / bc2;
      p.data[static_cast<size_t>(j)] -=
          lr * (mhat / (std::sqrt(vhat) + hp_.eps) +
                hp_.weight_decay * p.data[static_cast<size_t>(j)]);
    });
  }
}

}  // namespace sqz
