#include "sqz/ctc.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace sqz {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double logsumexp2(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = a > b ? a : b;
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

}  // namespace

int64_t ctc_min_frames(const std::vector<int64_t>& target) {
  int64_t n = static_cast<int64_t>(target.size());
  for (size_t i = 1; i < target.size(); ++i) {
    if (target[i] == target[i - 1]) ++n;
  }
  return n;
}

TensorPtr ctc_loss(Graph& g, const TensorPtr& log_probs,
                   const std::vector<int64_t>& target) {
  if (log_probs->ndim() != 2) {
    throw std::invalid_argument("ctc_loss: log_probs must be [T, V+1], got " +
                                shape_str(log_probs->shape));
  }
  const int64_t t_len = log_probs->dim(0);
  const int64_t cols = log_probs->dim(1);
  const int64_t blank = cols - 1;
  for (int64_t id : target) {
    if (id < 0 || id >= blank) {
      throw std::invalid_argument("ctc_loss: target id " + std::to_string(id) +
                                  " out of range [0, " + std::to_string(blank) +
                                  ")");
    }
  }
  if (t_len < ctc_min_frames(target)) {
    throw std::invalid_argument(
        "ctc_loss: target needs at least " +
        std::to_string(ctc_min_frames(target)) + " frames, got " +
        std::to_string(t_len));
  }

  // Extended label sequence: blank, l1, blank, l2, ..., blank.
  const int64_t s_len = 2 * static_cast<int64_t>(target.size()) + 1;
  auto ext = std::make_shared<std::vector<int64_t>>(
      static_cast<size_t>(s_len));
  for (int64_t s = 0; s < s_len; ++s) {
    (*ext)[static_cast<size_t>(s)] =
        (s % 2 == 0) ? blank : target[static_cast<size_t>((s - 1) / 2)];
  }

  const double* lp = log_probs->data.data();
  auto alpha = std::make_shared<std::vector<double>>(
      static_cast<size_t>(t_len * s_len), kNegInf);
  auto& a = *alpha;

  a[0] = lp[blank];
  if (s_len > 1) a[1] = lp[(*ext)[1]];
  for (int64_t t = 1; t < t_len; ++t) {
    for (int64_t s = 0; s < s_len; ++s) {
      const int64_t lab = (*ext)[static_cast<size_t>(s)];
      double best = a[(t - 1) * s_len + s];
      if (s >= 1) best = logsumexp2(best, a[(t - 1) * s_len + s - 1]);
      if (s >= 2 && lab != blank && lab != (*ext)[static_cast<size_t>(s - 2)]) {
        best = logsumexp2(best, a[(t - 1) * s_len + s - 2]);
      }
      a[t * s_len + s] = best == kNegInf ? kNegInf : best + lp[t * cols + lab];
    }
  }

  double log_p = a[(t_len - 1) * s_len + s_len - 1];
  if (s_len > 1) {
    log_p = logsumexp2(log_p, a[(t_len - 1) * s_len + s_len - 2]);
  }

  auto loss = std::make_shared<Tensor>();
  loss->shape = {1};
  loss->data = {-log_p};
  loss->requires_grad = g.recording() && log_probs->requires_grad;

  if (loss->requires_grad) {
    g.record("ctc_loss", [log_probs, loss, alpha, ext, t_len, s_len, cols,
                          blank, log_p] {
      const double* lpd = log_probs->data.data();
      const auto& al = *alpha;
      // Backward (suffix) scores, including the emission at t.
      std::vector<double> beta(static_cast<size_t>(t_len * s_len), kNegInf);
      beta[(t_len - 1) * s_len + s_len - 1] =
          lpd[(t_len - 1) * cols + (*ext)[static_cast<size_t>(s_len - 1)]];
      if (s_len > 1) {
        beta[(t_len - 1) * s_len + s_len - 2] =
            lpd[(t_len - 1) * cols + (*ext)[static_cast<size_t>(s_len - 2)]];
      }
      for (int64_t t = t_len - 2; t >= 0; --t) {
        for (int64_t s = s_len - 1; s >= 0; --s) {
          const int64_t lab = (*ext)[static_cast<size_t>(s)];
          double best = beta[(t + 1) * s_len + s];
          if (s + 1 < s_len) {
            best = logsumexp2(best, beta[(t + 1) * s_len + s + 1]);
          }
          if (s + 2 < s_len && lab != blank &&
              lab != (*ext)[static_cast<size_t>(s + 2)]) {
            best = logsumexp2(best, beta[(t + 1) * s_len + s + 2]);
          }
          beta[t * s_len + s] =
              best == kNegInf ? kNegInf : best + lpd[t * cols + lab];
        }
      }

      auto& dx = log_probs->ensure_grad();
      const double dloss = loss->grad[0];
      std::vector<double> acc(static_cast<size_t>(cols));
      for (int64_t t = 0; t < t_len; ++t) {
        for (int64_t k = 0; k < cols; ++k) acc[static_cast<size_t>(k)] = kNegInf;
        for (int64_t s = 0; s < s_len; ++s) {
          const int64_t lab = (*ext)[static_cast<size_t>(s)];
          const double path = al[t * s_len + s] + beta[t * s_len + s] -
                              lpd[t * cols + lab];
          acc[static_cast<size_t>(lab)] =
              logsumexp2(acc[static_cast<size_t>(lab)], path);
        }
        for (int64_t k = 0; k < cols; ++k) {
          const double lse = acc[static_cast<size_t>(k)];
          if (lse != kNegInf) {
            dx[t * cols + k] -= dloss * std::exp(lse - log_p);
          }
        }
      }
    });
  }
  return loss;
}

}  // namespace sqz
