#pragma once

#include <cstdint>

namespace sqz::ref {

// Serial reference kernels: plain nested loops, written independently of the
// OpenMP implementations in sqz::kernels. Kept for correctness tests (the
// parallel kernels must match them bit for bit) and as the baseline side of
// the kernel benchmark. Not used by the production forward/backward path.

void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k,
          const double* a, const double* b, double* c, bool accumulate);

void conv1d(const double* x, int64_t t, int64_t c_in, const double* w,
            const double* bias, int64_t c_out, int64_t k, int64_t stride,
            int64_t pad_left, double* y, int64_t t_out);

void conv1d_depthwise(const double* x, int64_t t, int64_t c, const double* w,
                      const double* bias, int64_t k, int64_t stride,
                      int64_t pad_left, double* y, int64_t t_out);

void conv2d(const double* x, int64_t t, int64_t f, int64_t c_in,
            const double* w, const double* bias, int64_t c_out, int64_t kt,
            int64_t kf, int64_t stride_t, int64_t stride_f, int64_t pad_t,
            int64_t pad_f, double* y, int64_t t_out, int64_t f_out);

void softmax_rows(const double* x, int64_t rows, int64_t cols, double* y);

void layer_norm_rows(const double* x, const double* gamma, const double* beta,
                     int64_t rows, int64_t cols, double eps, double* y);

}  // namespace sqz::ref
