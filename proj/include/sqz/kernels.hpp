#pragma once

#include <cstdint>

namespace sqz::kernels {

// OpenMP-parallel numeric kernels. Every kernel assigns each output element
// to exactly one loop iteration and accumulates serially within it, so
// results are bit-identical for any thread count (and match the serial
// reference in sqz::ref, which keeps the same accumulation order).

// Loops below this size run serially; the fork/join overhead dominates
// otherwise on small tensors.
inline constexpr int64_t kParallelThreshold = 16384;

template <class F>
void parallel_for(int64_t n, F&& f) {
  if (n < kParallelThreshold) {
    for (int64_t i = 0; i < n; ++i) f(i);
    return;
  }
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) f(i);
}

// For loops whose iterations are themselves loops: parallelize when the
// total work n * cost_per_iter clears the threshold.
template <class F>
void parallel_for(int64_t n, int64_t cost_per_iter, F&& f) {
  if (n * cost_per_iter < kParallelThreshold) {
    for (int64_t i = 0; i < n; ++i) f(i);
    return;
  }
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) f(i);
}

// C[m,n] = op(A) * op(B), optionally accumulating into C.
// op(A) is [m,k] after the optional transpose; likewise op(B) is [k,n].
void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k,
          const double* a, const double* b, double* c, bool accumulate);

// 1-D cross-correlation, x: [T, c_in], w: [c_out, k, c_in], y: [t_out, c_out].
// pad_left zeros are conceptually prepended; anything past T reads as zero.
void conv1d(const double* x, int64_t t, int64_t c_in, const double* w,
            const double* bias, int64_t c_out, int64_t k, int64_t stride,
            int64_t pad_left, double* y, int64_t t_out);
void conv1d_dx(const double* dy, int64_t t_out, int64_t c_out, const double* w,
               int64_t k, int64_t c_in, int64_t stride, int64_t pad_left,
               double* dx, int64_t t);
void conv1d_dw(const double* dy, int64_t t_out, int64_t c_out, const double* x,
               int64_t t, int64_t c_in, int64_t k, int64_t stride,
               int64_t pad_left, double* dw, double* db);

// Depthwise variant: one filter per channel, w: [c, k].
void conv1d_depthwise(const double* x, int64_t t, int64_t c, const double* w,
                      const double* bias, int64_t k, int64_t stride,
                      int64_t pad_left, double* y, int64_t t_out);
void conv1d_depthwise_dx(const double* dy, int64_t t_out, int64_t c,
                         const double* w, int64_t k, int64_t stride,
                         int64_t pad_left, double* dx, int64_t t);
void conv1d_depthwise_dw(const double* dy, int64_t t_out, int64_t c,
                         const double* x, int64_t t, int64_t k, int64_t stride,
                         int64_t pad_left, double* dw, double* db);

// 2-D cross-correlation over (time, freq), x: [t, f, c_in],
// w: [c_out, kt, kf, c_in], y: [t_out, f_out, c_out].
void conv2d(const double* x, int64_t t, int64_t f, int64_t c_in,
            const double* w, const double* bias, int64_t c_out, int64_t kt,
            int64_t kf, int64_t stride_t, int64_t stride_f, int64_t pad_t,
            int64_t pad_f, double* y, int64_t t_out, int64_t f_out);
void conv2d_dx(const double* dy, int64_t t_out, int64_t f_out, int64_t c_out,
               const double* w, int64_t kt, int64_t kf, int64_t c_in,
               int64_t stride_t, int64_t stride_f, int64_t pad_t, int64_t pad_f,
               double* dx, int64_t t, int64_t f);
void conv2d_dw(const double* dy, int64_t t_out, int64_t f_out, int64_t c_out,
               const double* x, int64_t t, int64_t f, int64_t c_in, int64_t kt,
               int64_t kf, int64_t stride_t, int64_t stride_f, int64_t pad_t,
               int64_t pad_f, double* dw, double* db);

// Depthwise 2-D variant, w: [c, kt, kf].
void conv2d_depthwise(const double* x, int64_t t, int64_t f, int64_t c,
                      const double* w, const double* bias, int64_t kt,
                      int64_t kf, int64_t stride_t, int64_t stride_f,
                      int64_t pad_t, int64_t pad_f, double* y, int64_t t_out,
                      int64_t f_out);
void conv2d_depthwise_dx(const double* dy, int64_t t_out, int64_t f_out,
                         int64_t c, const double* w, int64_t kt, int64_t kf,
                         int64_t stride_t, int64_t stride_f, int64_t pad_t,
                         int64_t pad_f, double* dx, int64_t t, int64_t f);
void conv2d_depthwise_dw(const double* dy, int64_t t_out, int64_t f_out,
                         int64_t c, const double* x, int64_t t, int64_t f,
                         int64_t kt, int64_t kf, int64_t stride_t,
                         int64_t stride_f, int64_t pad_t, int64_t pad_f,
                         double* dw, double* db);

// Row-wise max-subtracted softmax, x and y: [rows, cols].
void softmax_rows(const double* x, int64_t rows, int64_t cols, double* y);
// dx from the softmax output y (not the input).
void softmax_rows_dx(const double* y, const double* dy, int64_t rows,
                     int64_t cols, double* dx);

// Row-wise layer norm with population variance; saves per-row mean and
// reciprocal stddev for the backward pass.
void layer_norm_rows(const double* x, const double* gamma, const double* beta,
                     int64_t rows, int64_t cols, double eps, double* y,
                     double* mean, double* rstd);
void layer_norm_rows_dx(const double* x, const double* gamma, const double* dy,
                        const double* mean, const double* rstd, int64_t rows,
                        int64_t cols, double* dx, double* dgamma,
                        double* dbeta);

}  // namespace sqz::kernels
