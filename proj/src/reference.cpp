#include "sqz/reference.hpp"

#include <cmath>

namespace sqz::ref {

void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k,
          const double* a, const double* b, double* c, bool accumulate) {
  const int64_t lda = trans_a ? m : k;
  const int64_t ldb = trans_b ? k : n;
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t j = 0; j < n; ++j) {
      double acc = accumulate ? c[i * n + j] : 0.0;
      for (int64_t p = 0; p < k; ++p) {
        const double av = trans_a ? a[p * lda + i] : a[i * lda + p];
        const double bv = trans_b ? b[j * ldb + p] : b[p * ldb + j];
        acc += av * bv;
      }
      c[i * n + j] = acc;
    }
  }
}

void conv1d(const double* x, int64_t t, int64_t c_in, const double* w,
            const double* bias, int64_t c_out, int64_t k, int64_t stride,
            int64_t pad_left, double* y, int64_t t_out) {
  for (int64_t to = 0; to < t_out; ++to) {
    for (int64_t co = 0; co < c_out; ++co) {
      double acc = bias ? bias[co] : 0.0;
      for (int64_t kk = 0; kk < k; ++kk) {
        const int64_t ti = to * stride - pad_left + kk;
        if (ti < 0 || ti >= t) continue;
        for (int64_t ci = 0; ci < c_in; ++ci) {
          acc += w[(co * k + kk) * c_in + ci] * x[ti * c_in + ci];
        }
      }
      y[to * c_out + co] = acc;
    }
  }
}

void conv1d_depthwise(const double* x, int64_t t, int64_t c, const double* w,
                      const double* bias, int64_t k, int64_t stride,
                      int64_t pad_left, double* y, int64_t t_out) {
  for (int64_t to = 0; to < t_out; ++to) {
    for (int64_t ch = 0; ch < c; ++ch) {
      double acc = bias ? bias[ch] : 0.0;
      for (int64_t kk = 0; kk < k; ++kk) {
        const int64_t ti = to * stride - pad_left + kk;
        if (ti < 0 || ti >= t) continue;
        acc += w[ch * k + kk] * x[ti * c + ch];
      }
      y[to * c + ch] = acc;
    }
  }
}

void conv2d(const double* x, int64_t t, int64_t f, int64_t c_in,
            const double* w, const double* bias, int64_t c_out, int64_t kt,
            int64_t kf, int64_t stride_t, int64_t stride_f, int64_t pad_t,
            int64_t pad_f, double* y, int64_t t_out, int64_t f_out) {
  for (int64_t to = 0; to < t_out; ++to) {
    for (int64_t fo = 0; fo < f_out; ++fo) {
      for (int64_t co = 0; co < c_out; ++co) {
        double acc = bias ? bias[co] : 0.0;
        for (int64_t a = 0; a < kt; ++a) {
          const int64_t ti = to * stride_t - pad_t + a;
          if (ti < 0 || ti >= t) continue;
          for (int64_t b = 0; b < kf; ++b) {
            const int64_t fi = fo * stride_f - pad_f + b;
            if (fi < 0 || fi >= f) continue;
            for (int64_t ci = 0; ci < c_in; ++ci) {
              acc += w[((co * kt + a) * kf + b) * c_in + ci] *
                     x[(ti * f + fi) * c_in + ci];
            }
          }
        }
        y[(to * f_out + fo) * c_out + co] = acc;
      }
    }
  }
}

void softmax_rows(const double* x, int64_t rows, int64_t cols, double* y) {
  for (int64_t r = 0; r < rows; ++r) {
    const double* xr = x + r * cols;
    double* yr = y + r * cols;
    double mx = xr[0];
    for (int64_t j = 1; j < cols; ++j) mx = xr[j] > mx ? xr[j] : mx;
    double sum = 0.0;
    for (int64_t j = 0; j < cols; ++j) {
      yr[j] = std::exp(xr[j] - mx);
      sum += yr[j];
    }
    const double inv = 1.0 / sum;
    for (int64_t j = 0; j < cols; ++j) yr[j] *= inv;
  }
}

void layer_norm_rows(const double* x, const double* gamma, const double* beta,
                     int64_t rows, int64_t cols, double eps, double* y) {
  for (int64_t r = 0; r < rows; ++r) {
    const double* xr = x + r * cols;
    double mu = 0.0;
    for (int64_t j = 0; j < cols; ++j) mu += xr[j];
    mu /= static_cast<double>(cols);
    double var = 0.0;
    for (int64_t j = 0; j < cols; ++j) {
      const double d = xr[j] - mu;
      var += d * d;
    }
    var /= static_cast<double>(cols);
    const double rs = 1.0 / std::sqrt(var + eps);
    double* yr = y + r * cols;
    for (int64_t j = 0; j < cols; ++j) {
      yr[j] = (xr[j] - mu) * rs * gamma[j] + beta[j];
    }
  }
}

}  // namespace sqz::ref
