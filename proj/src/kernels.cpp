#include "sqz/kernels.hpp"

#include <cmath>

namespace sqz::kernels {

void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k,
          const double* a, const double* b, double* c, bool accumulate) {
  // Leading dimensions of the stored (untransposed) matrices.
  const int64_t lda = trans_a ? m : k;
  const int64_t ldb = trans_b ? k : n;
  parallel_for(m * n, k, [&](int64_t idx) {
    const int64_t i = idx / n;
    const int64_t j = idx % n;
    double acc = accumulate ? c[idx] : 0.0;
    for (int64_t p = 0; p < k; ++p) {
      const double av = trans_a ? a[p * lda + i] : a[i * lda + p];
      const double bv = trans_b ? b[j * ldb + p] : b[p * ldb + j];
      acc += av * bv;
    }
    c[idx] = acc;
  });
}

void conv1d(const double* x, int64_t t, int64_t c_in, const double* w,
            const double* bias, int64_t c_out, int64_t k, int64_t stride,
            int64_t pad_left, double* y, int64_t t_out) {
  parallel_for(t_out * c_out, k * c_in, [&](int64_t idx) {
    const int64_t to = idx / c_out;
    const int64_t co = idx % c_out;
    double acc = bias ? bias[co] : 0.0;
    const int64_t base = to * stride - pad_left;
    for (int64_t kk = 0; kk < k; ++kk) {
      const int64_t ti = base + kk;
      if (ti < 0 || ti >= t) continue;
      const double* wrow = w + (co * k + kk) * c_in;
      const double* xrow = x + ti * c_in;
      for (int64_t ci = 0; ci < c_in; ++ci) acc += wrow[ci] * xrow[ci];
    }
    y[to * c_out + co] = acc;
  });
}

void conv1d_dx(const double* dy, int64_t t_out, int64_t c_out, const double* w,
               int64_t k, int64_t c_in, int64_t stride, int64_t pad_left,
               double* dx, int64_t t) {
  parallel_for(t * c_in, k * c_out, [&](int64_t idx) {
    const int64_t ti = idx / c_in;
    const int64_t ci = idx % c_in;
    double acc = 0.0;
    for (int64_t kk = 0; kk < k; ++kk) {
      const int64_t num = ti + pad_left - kk;
      if (num < 0 || num % stride != 0) continue;
      const int64_t to = num / stride;
      if (to >= t_out) continue;
      for (int64_t co = 0; co < c_out; ++co) {
        acc += dy[to * c_out + co] * w[(co * k + kk) * c_in + ci];
      }
    }
    dx[idx] += acc;
  });
}

void conv1d_dw(const double* dy, int64_t t_out, int64_t c_out, const double* x,
               int64_t t, int64_t c_in, int64_t k, int64_t stride,
               int64_t pad_left, double* dw, double* db) {
  if (dw) parallel_for(c_out * k * c_in, t_out, [&](int64_t idx) {
    const int64_t co = idx / (k * c_in);
    const int64_t kk = (idx / c_in) % k;
    const int64_t ci = idx % c_in;
    double acc = 0.0;
    for (int64_t to = 0; to < t_out; ++to) {
      const int64_t ti = to * stride - pad_left + kk;
      if (ti < 0 || ti >= t) continue;
      acc += dy[to * c_out + co] * x[ti * c_in + ci];
    }
    dw[idx] += acc;
  });
  if (db) {
    parallel_for(c_out, [&](int64_t co) {
      double acc = 0.0;
      for (int64_t to = 0; to < t_out; ++to) acc += dy[to * c_out + co];
      db[co] += acc;
    });
  }
}

void conv1d_depthwise(const double* x, int64_t t, int64_t c, const double* w,
                      const double* bias, int64_t k, int64_t stride,
                      int64_t pad_left, double* y, int64_t t_out) {
  parallel_for(t_out * c, k, [&](int64_t idx) {
    const int64_t to = idx / c;
    const int64_t ch = idx % c;
    double acc = bias ? bias[ch] : 0.0;
    const int64_t base = to * stride - pad_left;
    for (int64_t kk = 0; kk < k; ++kk) {
      const int64_t ti = base + kk;
      if (ti < 0 || ti >= t) continue;
      acc += w[ch * k + kk] * x[ti * c + ch];
    }
    y[idx] = acc;
  });
}

void conv1d_depthwise_dx(const double* dy, int64_t t_out, int64_t c,
                         const double* w, int64_t k, int64_t stride,
                         int64_t pad_left, double* dx, int64_t t) {
  parallel_for(t * c, k, [&](int64_t idx) {
    const int64_t ti = idx / c;
    const int64_t ch = idx % c;
    double acc = 0.0;
    for (int64_t kk = 0; kk < k; ++kk) {
      const int64_t num = ti + pad_left - kk;
      if (num < 0 || num % stride != 0) continue;
      const int64_t to = num / stride;
      if (to >= t_out) continue;
      acc += dy[to * c + ch] * w[ch * k + kk];
    }
    dx[idx] += acc;
  });
}

void conv1d_depthwise_dw(const double* dy, int64_t t_out, int64_t c,
                         const double* x, int64_t t, int64_t k, int64_t stride,
                         int64_t pad_left, double* dw, double* db) {
  if (dw) parallel_for(c * k, t_out, [&](int64_t idx) {
    const int64_t ch = idx / k;
    const int64_t kk = idx % k;
    double acc = 0.0;
    for (int64_t to = 0; to < t_out; ++to) {
      const int64_t ti = to * stride - pad_left + kk;
      if (ti < 0 || ti >= t) continue;
      acc += dy[to * c + ch] * x[ti * c + ch];
    }
    dw[idx] += acc;
  });
  if (db) {
    parallel_for(c, [&](int64_t ch) {
      double acc = 0.0;
      for (int64_t to = 0; to < t_out; ++to) acc += dy[to * c + ch];
      db[ch] += acc;
    });
  }
}

void conv2d(const double* x, int64_t t, int64_t f, int64_t c_in,
            const double* w, const double* bias, int64_t c_out, int64_t kt,
            int64_t kf, int64_t stride_t, int64_t stride_f, int64_t pad_t,
            int64_t pad_f, double* y, int64_t t_out, int64_t f_out) {
  parallel_for(t_out * f_out * c_out, kt * kf * c_in, [&](int64_t idx) {
    const int64_t to = idx / (f_out * c_out);
    const int64_t fo = (idx / c_out) % f_out;
    const int64_t co = idx % c_out;
    double acc = bias ? bias[co] : 0.0;
    for (int64_t a = 0; a < kt; ++a) {
      const int64_t ti = to * stride_t - pad_t + a;
      if (ti < 0 || ti >= t) continue;
      for (int64_t b = 0; b < kf; ++b) {
        const int64_t fi = fo * stride_f - pad_f + b;
        if (fi < 0 || fi >= f) continue;
        const double* wrow = w + ((co * kt + a) * kf + b) * c_in;
        const double* xrow = x + (ti * f + fi) * c_in;
        for (int64_t ci = 0; ci < c_in; ++ci) acc += wrow[ci] * xrow[ci];
      }
    }
    y[idx] = acc;
  });
}

void conv2d_dx(const double* dy, int64_t t_out, int64_t f_out, int64_t c_out,
               const double* w, int64_t kt, int64_t kf, int64_t c_in,
               int64_t stride_t, int64_t stride_f, int64_t pad_t, int64_t pad_f,
               double* dx, int64_t t, int64_t f) {
  parallel_for(t * f * c_in, kt * kf * c_out, [&](int64_t idx) {
    const int64_t ti = idx / (f * c_in);
    const int64_t fi = (idx / c_in) % f;
    const int64_t ci = idx % c_in;
    double acc = 0.0;
    for (int64_t a = 0; a < kt; ++a) {
      const int64_t nt = ti + pad_t - a;
      if (nt < 0 || nt % stride_t != 0) continue;
      const int64_t to = nt / stride_t;
      if (to >= t_out) continue;
      for (int64_t b = 0; b < kf; ++b) {
        const int64_t nf = fi + pad_f - b;
        if (nf < 0 || nf % stride_f != 0) continue;
        const int64_t fo = nf / stride_f;
        if (fo >= f_out) continue;
        const double* dyrow = dy + (to * f_out + fo) * c_out;
        for (int64_t co = 0; co < c_out; ++co) {
          acc += dyrow[co] * w[((co * kt + a) * kf + b) * c_in + ci];
        }
      }
    }
    dx[idx] += acc;
  });
}

void conv2d_dw(const double* dy, int64_t t_out, int64_t f_out, int64_t c_out,
               const double* x, int64_t t, int64_t f, int64_t c_in, int64_t kt,
               int64_t kf, int64_t stride_t, int64_t stride_f, int64_t pad_t,
               int64_t pad_f, double* dw, double* db) {
  if (dw) parallel_for(c_out * kt * kf * c_in, t_out * f_out, [&](int64_t idx) {
    const int64_t co = idx / (kt * kf * c_in);
    const int64_t a = (idx / (kf * c_in)) % kt;
    const int64_t b = (idx / c_in) % kf;
    const int64_t ci = idx % c_in;
    double acc = 0.0;
    for (int64_t to = 0; to < t_out; ++to) {
      const int64_t ti = to * stride_t - pad_t + a;
      if (ti < 0 || ti >= t) continue;
      for (int64_t fo = 0; fo < f_out; ++fo) {
        const int64_t fi = fo * stride_f - pad_f + b;
        if (fi < 0 || fi >= f) continue;
        acc += dy[(to * f_out + fo) * c_out + co] * x[(ti * f + fi) * c_in + ci];
      }
    }
    dw[idx] += acc;
  });
  if (db) {
    parallel_for(c_out, [&](int64_t co) {
      double acc = 0.0;
      for (int64_t i = 0; i < t_out * f_out; ++i) acc += dy[i * c_out + co];
      db[co] += acc;
    });
  }
}

void conv2d_depthwise(const double* x, int64_t t, int64_t f, int64_t c,
                      const double* w, const double* bias, int64_t kt,
                      int64_t kf, int64_t stride_t, int64_t stride_f,
                      int64_t pad_t, int64_t pad_f, double* y, int64_t t_out,
                      int64_t f_out) {
  parallel_for(t_out * f_out * c, kt * kf, [&](int64_t idx) {
    const int64_t to = idx / (f_out * c);
    const int64_t fo = (idx / c) % f_out;
    const int64_t ch = idx % c;
    double acc = bias ? bias[ch] : 0.0;
    for (int64_t a = 0; a < kt; ++a) {
      const int64_t ti = to * stride_t - pad_t + a;
      if (ti < 0 || ti >= t) continue;
      for (int64_t b = 0; b < kf; ++b) {
        const int64_t fi = fo * stride_f - pad_f + b;
        if (fi < 0 || fi >= f) continue;
        acc += w[(ch * kt + a) * kf + b] * x[(ti * f + fi) * c + ch];
      }
    }
    y[idx] = acc;
  });
}

void conv2d_depthwise_dx(const double* dy, int64_t t_out, int64_t f_out,
                         int64_t c, const double* w, int64_t kt, int64_t kf,
                         int64_t stride_t, int64_t stride_f, int64_t pad_t,
                         int64_t pad_f, double* dx, int64_t t, int64_t f) {
  parallel_for(t * f * c, kt * kf, [&](int64_t idx) {
    const int64_t ti = idx / (f * c);
    const int64_t fi = (idx / c) % f;
    const int64_t ch = idx % c;
    double acc = 0.0;
    for (int64_t a = 0; a < kt; ++a) {
      const int64_t nt = ti + pad_t - a;
      if (nt < 0 || nt % stride_t != 0) continue;
      const int64_t to = nt / stride_t;
      if (to >= t_out) continue;
      for (int64_t b = 0; b < kf; ++b) {
        const int64_t nf = fi + pad_f - b;
        if (nf < 0 || nf % stride_f != 0) continue;
        const int64_t fo = nf / stride_f;
        if (fo >= f_out) continue;
        acc += dy[(to * f_out + fo) * c + ch] * w[(ch * kt + a) * kf + b];
      }
    }
    dx[idx] += acc;
  });
}

void conv2d_depthwise_dw(const double* dy, int64_t t_out, int64_t f_out,
                         int64_t c, const double* x, int64_t t, int64_t f,
                         int64_t kt, int64_t kf, int64_t stride_t,
                         int64_t stride_f, int64_t pad_t, int64_t pad_f,
                         double* dw, double* db) {
  if (dw) parallel_for(c * kt * kf, t_out * f_out, [&](int64_t idx) {
    const int64_t ch = idx / (kt * kf);
    const int64_t a = (idx / kf) % kt;
    const int64_t b = idx % kf;
    double acc = 0.0;
    for (int64_t to = 0; to < t_out; ++to) {
      const int64_t ti = to * stride_t - pad_t + a;
      if (ti < 0 || ti >= t) continue;
      for (int64_t fo = 0; fo < f_out; ++fo) {
        const int64_t fi = fo * stride_f - pad_f + b;
        if (fi < 0 || fi >= f) continue;
        acc += dy[(to * f_out + fo) * c + ch] * x[(ti * f + fi) * c + ch];
      }
    }
    dw[idx] += acc;
  });
  if (db) {
    parallel_for(c, [&](int64_t ch) {
      double acc = 0.0;
      for (int64_t i = 0; i < t_out * f_out; ++i) acc += dy[i * c + ch];
      db[ch] += acc;
    });
  }
}

void softmax_rows(const double* x, int64_t rows, int64_t cols, double* y) {
  parallel_for(rows, cols, [&](int64_t r) {
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
  });
}

void softmax_rows_dx(const double* y, const double* dy, int64_t rows,
                     int64_t cols, double* dx) {
  parallel_for(rows, cols, [&](int64_t r) {
    const double* yr = y + r * cols;
    const double* dyr = dy + r * cols;
    double dot = 0.0;
    for (int64_t j = 0; j < cols; ++j) dot += yr[j] * dyr[j];
    double* dxr = dx + r * cols;
    for (int64_t j = 0; j < cols; ++j) dxr[j] += yr[j] * (dyr[j] - dot);
  });
}

void layer_norm_rows(const double* x, const double* gamma, const double* beta,
                     int64_t rows, int64_t cols, double eps, double* y,
                     double* mean, double* rstd) {
  parallel_for(rows, [&](int64_t r) {
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
    mean[r] = mu;
    rstd[r] = rs;
  });
}

void layer_norm_rows_dx(const double* x, const double* gamma, const double* dy,
                        const double* mean, const double* rstd, int64_t rows,
                        int64_t cols, double* dx, double* dgamma,
                        double* dbeta) {
  parallel_for(rows, cols, [&](int64_t r) {
    const double* xr = x + r * cols;
    const double* dyr = dy + r * cols;
    const double mu = mean[r];
    const double rs = rstd[r];
    double sum_g = 0.0, sum_gx = 0.0;
    for (int64_t j = 0; j < cols; ++j) {
      const double xhat = (xr[j] - mu) * rs;
      const double gdy = dyr[j] * gamma[j];
      sum_g += gdy;
      sum_gx += gdy * xhat;
    }
    const double inv_n = 1.0 / static_cast<double>(cols);
    double* dxr = dx + r * cols;
    for (int64_t j = 0; j < cols; ++j) {
      const double xhat = (xr[j] - mu) * rs;
      const double gdy = dyr[j] * gamma[j];
      dxr[j] += rs * (gdy - inv_n * sum_g - xhat * inv_n * sum_gx);
    }
  });
  // Channel-owned reductions keep the accumulation order fixed.
  parallel_for(cols, rows, [&](int64_t j) {
    double dg = 0.0, db = 0.0;
    for (int64_t r = 0; r < rows; ++r) {
      const double xhat = (x[r * cols + j] - mean[r]) * rstd[r];
      dg += dy[r * cols + j] * xhat;
      db += dy[r * cols + j];
    }
    dgamma[j] += dg;
    dbeta[j] += db;
  });
}

}  // namespace sqz::kernels
