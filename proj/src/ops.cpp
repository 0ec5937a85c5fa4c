#include "sqz/ops.hpp"

#include <cmath>
#include <stdexcept>

#include "sqz/kernels.hpp"

namespace sqz {

namespace {

using kernels::parallel_for;

bool want_grad(const Graph& g, std::initializer_list<TensorPtr> ins) {
  if (!g.recording()) return false;
  for (const auto& t : ins) {
    if (t && t->requires_grad) return true;
  }
  return false;
}

TensorPtr make_out(std::vector<int64_t> shape, bool requires_grad) {
  auto t = std::make_shared<Tensor>();
  t->shape = std::move(shape);
  t->data.assign(static_cast<size_t>(shape_numel(t->shape)), 0.0);
  t->requires_grad = requires_grad;
  return t;
}

[[noreturn]] void shape_error(const std::string& op, const Tensor& a,
                              const Tensor& b) {
  throw std::invalid_argument(op + ": incompatible shapes " +
                              shape_str(a.shape) + " and " +
                              shape_str(b.shape));
}

std::vector<int64_t> row_major_strides(const std::vector<int64_t>& shape) {
  std::vector<int64_t> s(shape.size());
  int64_t acc = 1;
  for (int i = static_cast<int>(shape.size()) - 1; i >= 0; --i) {
    s[static_cast<size_t>(i)] = acc;
    acc *= shape[static_cast<size_t>(i)];
  }
  return s;
}

// Strides of b aligned to a's dims, 0 where b broadcasts. Throws if b is not
// broadcastable to a's shape.
std::vector<int64_t> broadcast_strides(const std::string& op, const Tensor& a,
                                       const Tensor& b) {
  const int an = a.ndim(), bn = b.ndim();
  if (bn > an) shape_error(op, a, b);
  const int off = an - bn;
  auto bs = row_major_strides(b.shape);
  std::vector<int64_t> out(static_cast<size_t>(an), 0);
  for (int i = 0; i < an; ++i) {
    const int64_t bdim = i < off ? 1 : b.shape[static_cast<size_t>(i - off)];
    if (bdim == 1) {
      out[static_cast<size_t>(i)] = 0;
    } else if (bdim == a.shape[static_cast<size_t>(i)]) {
      out[static_cast<size_t>(i)] = bs[static_cast<size_t>(i - off)];
    } else {
      shape_error(op, a, b);
    }
  }
  return out;
}

// Flat index into b for a flat index into a, under the aligned strides.
int64_t map_index(int64_t idx, const std::vector<int64_t>& a_strides,
                  const std::vector<int64_t>& b_strides) {
  int64_t bi = 0;
  for (size_t i = 0; i < a_strides.size(); ++i) {
    bi += (idx / a_strides[i]) * b_strides[i];
    idx %= a_strides[i];
  }
  return bi;
}

double sigmoid_scalar(double v) { return 1.0 / (1.0 + std::exp(-v)); }

}  // namespace

int64_t same_pad_left(int64_t t, int64_t k, int64_t stride) {
  const int64_t t_out = (t + stride - 1) / stride;
  const int64_t total = std::max<int64_t>((t_out - 1) * stride + k - t, 0);
  return total / 2;  // extra pad element goes on the right
}

int64_t conv_out_len(int64_t t, int64_t k, int64_t stride, Padding padding) {
  if (padding == Padding::kSame) return (t + stride - 1) / stride;
  if (t < k) {
    throw std::invalid_argument("conv: input length " + std::to_string(t) +
                                " shorter than kernel " + std::to_string(k) +
                                " with valid padding");
  }
  return (t - k) / stride + 1;
}

TensorPtr add(Graph& g, const TensorPtr& a, const TensorPtr& b) {
  if (a->shape == b->shape) {
    auto y = make_out(a->shape, want_grad(g, {a, b}));
    const int64_t n = a->numel();
    parallel_for(n, [&](int64_t i) { y->data[i] = a->data[i] + b->data[i]; });
    if (y->requires_grad) {
      g.record("add", [a, b, y] {
        const int64_t m = y->numel();
        if (a->requires_grad) {
          auto& da = a->ensure_grad();
          parallel_for(m, [&](int64_t i) { da[i] += y->grad[i]; });
        }
        if (b->requires_grad) {
          auto& db = b->ensure_grad();
          parallel_for(m, [&](int64_t i) { db[i] += y->grad[i]; });
        }
      });
    }
    return y;
  }
  auto bstr = broadcast_strides("add", *a, *b);
  auto astr = row_major_strides(a->shape);
  auto y = make_out(a->shape, want_grad(g, {a, b}));
  const int64_t n = a->numel();
  parallel_for(n, [&](int64_t i) {
    y->data[i] = a->data[i] + b->data[map_index(i, astr, bstr)];
  });
  if (y->requires_grad) {
    g.record("add", [a, b, y, astr, bstr] {
      const int64_t m = y->numel();
      if (a->requires_grad) {
        auto& da = a->ensure_grad();
        parallel_for(m, [&](int64_t i) { da[i] += y->grad[i]; });
      }
      if (b->requires_grad) {
        auto& db = b->ensure_grad();
        // Serial scatter keeps the reduction order fixed.
        for (int64_t i = 0; i < m; ++i) {
          db[map_index(i, astr, bstr)] += y->grad[i];
        }
      }
    });
  }
  return y;
}

TensorPtr mul(Graph& g, const TensorPtr& a, const TensorPtr& b) {
  auto bstr = broadcast_strides("mul", *a, *b);
  auto astr = row_major_strides(a->shape);
  auto y = make_out(a->shape, want_grad(g, {a, b}));
  const int64_t n = a->numel();
  parallel_for(n, [&](int64_t i) {
    y->data[i] = a->data[i] * b->data[map_index(i, astr, bstr)];
  });
  if (y->requires_grad) {
    g.record("mul", [a, b, y, astr, bstr] {
      const int64_t m = y->numel();
      if (a->requires_grad) {
        auto& da = a->ensure_grad();
        parallel_for(m, [&](int64_t i) {
          da[i] += y->grad[i] * b->data[map_index(i, astr, bstr)];
        });
      }
      if (b->requires_grad) {
        auto& db = b->ensure_grad();
        for (int64_t i = 0; i < m; ++i) {
          db[map_index(i, astr, bstr)] += y->grad[i] * a->data[i];
        }
      }
    });
  }
  return y;
}

TensorPtr add_scaled(Graph& g, const TensorPtr& a, const TensorPtr& b,
                     double r) {
  if (a->shape != b->shape) shape_error("add_scaled", *a, *b);
  auto y = make_out(a->shape, want_grad(g, {a, b}));
  const int64_t n = a->numel();
  parallel_for(n, [&](int64_t i) { y->data[i] = a->data[i] + r * b->data[i]; });
  if (y->requires_grad) {
    g.record("add_scaled", [a, b, y, r] {
      const int64_t m = y->numel();
      if (a->requires_grad) {
        auto& da = a->ensure_grad();
        parallel_for(m, [&](int64_t i) { da[i] += y->grad[i]; });
      }
      if (b->requires_grad) {
        auto& db = b->ensure_grad();
        parallel_for(m, [&](int64_t i) { db[i] += r * y->grad[i]; });
      }
    });
  }
  return y;
}

TensorPtr scale(Graph& g, const TensorPtr& x, double c) {
  auto y = make_out(x->shape, want_grad(g, {x}));
  const int64_t n = x->numel();
  parallel_for(n, [&](int64_t i) { y->data[i] = c * x->data[i]; });
  if (y->requires_grad) {
    g.record("scale", [x, y, c] {
      auto& dx = x->ensure_grad();
      parallel_for(x->numel(), [&](int64_t i) { dx[i] += c * y->grad[i]; });
    });
  }
  return y;
}

TensorPtr matmul(Graph& g, const TensorPtr& a, const TensorPtr& b,
                 bool trans_a, bool trans_b) {
  if (a->ndim() != 2 || b->ndim() != 2) shape_error("matmul", *a, *b);
  const int64_t m = trans_a ? a->dim(1) : a->dim(0);
  const int64_t ka = trans_a ? a->dim(0) : a->dim(1);
  const int64_t kb = trans_b ? b->dim(1) : b->dim(0);
  const int64_t n = trans_b ? b->dim(0) : b->dim(1);
  if (ka != kb) shape_error("matmul", *a, *b);
  auto y = make_out({m, n}, want_grad(g, {a, b}));
  kernels::gemm(trans_a, trans_b, m, n, ka, a->data.data(), b->data.data(),
                y->data.data(), false);
  if (y->requires_grad) {
    g.record("matmul", [a, b, y, trans_a, trans_b, m, n, ka] {
      const double* dy = y->grad.data();
      if (a->requires_grad) {
        double* da = a->ensure_grad().data();
        if (!trans_a) {
          // dA = dC * op(B)^T
          kernels::gemm(false, !trans_b, m, ka, n, dy, b->data.data(), da,
                        true);
        } else {
          // A stored [k, m]: dA = op(B) * dC^T
          kernels::gemm(trans_b, true, ka, m, n, b->data.data(), dy, da, true);
        }
      }
      if (b->requires_grad) {
        double* db = b->ensure_grad().data();
        if (!trans_b) {
          // dB = op(A)^T * dC
          kernels::gemm(!trans_a, false, ka, n, m, a->data.data(), dy, db,
                        true);
        } else {
          // B stored [n, k]: dB = dC^T * op(A)
          kernels::gemm(true, trans_a, n, ka, m, dy, a->data.data(), db, true);
        }
      }
    });
  }
  return y;
}

TensorPtr bmm(Graph& g, const TensorPtr& a, const TensorPtr& b, bool trans_a,
              bool trans_b) {
  if (a->ndim() != 3 || b->ndim() != 3 || a->dim(0) != b->dim(0)) {
    shape_error("bmm", *a, *b);
  }
  const int64_t batches = a->dim(0);
  const int64_t m = trans_a ? a->dim(2) : a->dim(1);
  const int64_t ka = trans_a ? a->dim(1) : a->dim(2);
  const int64_t kb = trans_b ? b->dim(2) : b->dim(1);
  const int64_t n = trans_b ? b->dim(1) : b->dim(2);
  if (ka != kb) shape_error("bmm", *a, *b);
  auto y = make_out({batches, m, n}, want_grad(g, {a, b}));
  const int64_t a_sz = a->dim(1) * a->dim(2);
  const int64_t b_sz = b->dim(1) * b->dim(2);
  for (int64_t i = 0; i < batches; ++i) {
    kernels::gemm(trans_a, trans_b, m, n, ka, a->data.data() + i * a_sz,
                  b->data.data() + i * b_sz, y->data.data() + i * m * n, false);
  }
  if (y->requires_grad) {
    g.record("bmm", [a, b, y, trans_a, trans_b, batches, m, n, ka, a_sz, b_sz] {
      for (int64_t i = 0; i < batches; ++i) {
        const double* dy = y->grad.data() + i * m * n;
        const double* av = a->data.data() + i * a_sz;
        const double* bv = b->data.data() + i * b_sz;
        if (a->requires_grad) {
          double* da = a->ensure_grad().data() + i * a_sz;
          if (!trans_a) {
            kernels::gemm(false, !trans_b, m, ka, n, dy, bv, da, true);
          } else {
            kernels::gemm(trans_b, true, ka, m, n, bv, dy, da, true);
          }
        }
        if (b->requires_grad) {
          double* db = b->ensure_grad().data() + i * b_sz;
          if (!trans_b) {
            kernels::gemm(!trans_a, false, ka, n, m, av, dy, db, true);
          } else {
            kernels::gemm(true, trans_a, n, ka, m, dy, av, db, true);
          }
        }
      }
    });
  }
  return y;
}

TensorPtr conv1d(Graph& g, const TensorPtr& x, const TensorPtr& w,
                 const TensorPtr& bias, int64_t stride, ConvMode mode,
                 Padding padding) {
  if (stride <= 0) {
    throw std::invalid_argument("conv1d: stride must be positive, got " +
                                std::to_string(stride));
  }
  if (x->ndim() != 2) {
    throw std::invalid_argument("conv1d: input must be [T, C], got " +
                                shape_str(x->shape));
  }
  const int64_t t = x->dim(0);
  const int64_t c_in = x->dim(1);

  int64_t k = 0, c_out = 0;
  TensorPtr weight = w;
  bool pointwise = false;
  switch (mode) {
    case ConvMode::kFull:
      if (w->ndim() != 3 || w->dim(2) != c_in) shape_error("conv1d", *x, *w);
      c_out = w->dim(0);
      k = w->dim(1);
      break;
    case ConvMode::kDepthwise:
      if (w->ndim() != 2 || w->dim(0) != c_in) shape_error("conv1d", *x, *w);
      c_out = c_in;
      k = w->dim(1);
      break;
    case ConvMode::kPointwise:
      if (w->ndim() != 2 || w->dim(0) != c_in) shape_error("conv1d", *x, *w);
      c_out = w->dim(1);
      k = 1;
      pointwise = true;
      break;
  }
  if (k < 1) {
    throw std::invalid_argument("conv1d: kernel size must be >= 1, got " +
                                std::to_string(k));
  }
  if (bias && bias->numel() != c_out) shape_error("conv1d", *w, *bias);

  const int64_t t_out = conv_out_len(t, k, stride, padding);
  const int64_t pad_left =
      padding == Padding::kSame ? same_pad_left(t, k, stride) : 0;

  auto y = make_out({t_out, c_out}, want_grad(g, {x, w, bias}));
  const double* bp = bias ? bias->data.data() : nullptr;

  if (pointwise && stride == 1) {
    kernels::gemm(false, false, t, c_out, c_in, x->data.data(),
                  w->data.data(), y->data.data(), false);
    if (bp) {
      parallel_for(t_out * c_out,
                   [&](int64_t i) { y->data[i] += bp[i % c_out]; });
    }
  } else if (mode == ConvMode::kDepthwise) {
    kernels::conv1d_depthwise(x->data.data(), t, c_in, w->data.data(), bp, k,
                              stride, pad_left, y->data.data(), t_out);
  } else {
    // Pointwise with stride > 1 runs through the dense path on a transposed
    // weight copy.
    if (pointwise) {
      weight = make_out({c_out, 1, c_in}, false);
      for (int64_t ci = 0; ci < c_in; ++ci) {
        for (int64_t co = 0; co < c_out; ++co) {
          weight->data[co * c_in + ci] = w->data[ci * c_out + co];
        }
      }
    }
    kernels::conv1d(x->data.data(), t, c_in, weight->data.data(), bp, c_out, k,
                    stride, pad_left, y->data.data(), t_out);
  }

  if (y->requires_grad) {
    g.record("conv1d", [x, w, bias, y, weight, mode, stride, pad_left, t,
                        c_in, c_out, k, t_out, pointwise] {
      const double* dy = y->grad.data();
      if (mode == ConvMode::kDepthwise) {
        if (x->requires_grad) {
          kernels::conv1d_depthwise_dx(dy, t_out, c_in, w->data.data(), k,
                                       stride, pad_left,
                                       x->ensure_grad().data(), t);
        }
        if (w->requires_grad) {
          kernels::conv1d_depthwise_dw(
              dy, t_out, c_in, x->data.data(), t, k, stride, pad_left,
              w->ensure_grad().data(),
              bias && bias->requires_grad ? bias->ensure_grad().data()
                                          : nullptr);
        } else if (bias && bias->requires_grad) {
          kernels::conv1d_depthwise_dw(dy, t_out, c_in, x->data.data(), t, k,
                                       stride, pad_left, nullptr,
                                       bias->ensure_grad().data());
        }
        return;
      }
      if (pointwise && stride == 1) {
        if (x->requires_grad) {
          kernels::gemm(false, true, t, c_in, c_out, dy, w->data.data(),
                        x->ensure_grad().data(), true);
        }
        if (w->requires_grad) {
          kernels::gemm(true, false, c_in, c_out, t, x->data.data(), dy,
                        w->ensure_grad().data(), true);
        }
        if (bias && bias->requires_grad) {
          auto& db = bias->ensure_grad();
          parallel_for(c_out, [&](int64_t co) {
            double acc = 0.0;
            for (int64_t i = 0; i < t_out; ++i) acc += dy[i * c_out + co];
            db[co] += acc;
          });
        }
        return;
      }
      if (x->requires_grad) {
        kernels::conv1d_dx(dy, t_out, c_out, weight->data.data(), k, c_in,
                           stride, pad_left, x->ensure_grad().data(), t);
      }
      if (w->requires_grad || (bias && bias->requires_grad)) {
        std::vector<double> dwt(static_cast<size_t>(c_out * k * c_in), 0.0);
        kernels::conv1d_dw(dy, t_out, c_out, x->data.data(), t, c_in, k,
                           stride, pad_left, dwt.data(),
                           bias && bias->requires_grad
                               ? bias->ensure_grad().data()
                               : nullptr);
        if (w->requires_grad) {
          auto& dw = w->ensure_grad();
          if (pointwise) {
            for (int64_t co = 0; co < c_out; ++co) {
              for (int64_t ci = 0; ci < c_in; ++ci) {
                dw[ci * c_out + co] += dwt[static_cast<size_t>(co * c_in + ci)];
              }
            }
          } else {
            parallel_for(static_cast<int64_t>(dwt.size()),
                         [&](int64_t i) { dw[i] += dwt[static_cast<size_t>(i)]; });
          }
        }
      }
    });
  }
  return y;
}

TensorPtr conv2d(Graph& g, const TensorPtr& x, const TensorPtr& w,
                 const TensorPtr& bias, int64_t stride_t, int64_t stride_f,
                 Padding padding, bool depthwise) {
  if (stride_t <= 0 || stride_f <= 0) {
    throw std::invalid_argument("conv2d: strides must be positive");
  }
  if (x->ndim() != 3) {
    throw std::invalid_argument("conv2d: input must be [T, F, C], got " +
                                shape_str(x->shape));
  }
  const int64_t t = x->dim(0), f = x->dim(1), c_in = x->dim(2);
  int64_t kt = 0, kf = 0, c_out = 0;
  if (depthwise) {
    if (w->ndim() != 3 || w->dim(0) != c_in) shape_error("conv2d", *x, *w);
    c_out = c_in;
    kt = w->dim(1);
    kf = w->dim(2);
  } else {
    if (w->ndim() != 4 || w->dim(3) != c_in) shape_error("conv2d", *x, *w);
    c_out = w->dim(0);
    kt = w->dim(1);
    kf = w->dim(2);
  }
  if (bias && bias->numel() != c_out) shape_error("conv2d", *w, *bias);

  const int64_t t_out = conv_out_len(t, kt, stride_t, padding);
  const int64_t f_out = conv_out_len(f, kf, stride_f, padding);
  const int64_t pad_t =
      padding == Padding::kSame ? same_pad_left(t, kt, stride_t) : 0;
  const int64_t pad_f =
      padding == Padding::kSame ? same_pad_left(f, kf, stride_f) : 0;

  auto y = make_out({t_out, f_out, c_out}, want_grad(g, {x, w, bias}));
  const double* bp = bias ? bias->data.data() : nullptr;
  if (depthwise) {
    kernels::conv2d_depthwise(x->data.data(), t, f, c_in, w->data.data(), bp,
                              kt, kf, stride_t, stride_f, pad_t, pad_f,
                              y->data.data(), t_out, f_out);
  } else {
    kernels::conv2d(x->data.data(), t, f, c_in, w->data.data(), bp, c_out, kt,
                    kf, stride_t, stride_f, pad_t, pad_f, y->data.data(),
                    t_out, f_out);
  }

  if (y->requires_grad) {
    g.record("conv2d", [x, w, bias, y, depthwise, stride_t, stride_f, pad_t,
                        pad_f, t, f, c_in, c_out, kt, kf, t_out, f_out] {
      const double* dy = y->grad.data();
      double* db =
          bias && bias->requires_grad ? bias->ensure_grad().data() : nullptr;
      if (depthwise) {
        if (x->requires_grad) {
          kernels::conv2d_depthwise_dx(dy, t_out, f_out, c_in, w->data.data(),
                                       kt, kf, stride_t, stride_f, pad_t,
                                       pad_f, x->ensure_grad().data(), t, f);
        }
        if (w->requires_grad || db) {
          kernels::conv2d_depthwise_dw(
              dy, t_out, f_out, c_in, x->data.data(), t, f, kt, kf, stride_t,
              stride_f, pad_t, pad_f,
              w->requires_grad ? w->ensure_grad().data() : nullptr, db);
        }
      } else {
        if (x->requires_grad) {
          kernels::conv2d_dx(dy, t_out, f_out, c_out, w->data.data(), kt, kf,
                             c_in, stride_t, stride_f, pad_t, pad_f,
                             x->ensure_grad().data(), t, f);
        }
        if (w->requires_grad || db) {
          kernels::conv2d_dw(dy, t_out, f_out, c_out, x->data.data(), t, f,
                             c_in, kt, kf, stride_t, stride_f, pad_t, pad_f,
                             w->requires_grad ? w->ensure_grad().data()
                                              : nullptr,
                             db);
        }
      }
    });
  }
  return y;
}

TensorPtr layer_norm(Graph& g, const TensorPtr& x, const TensorPtr& gamma,
                     const TensorPtr& beta, double eps) {
  if (eps < 0) throw std::invalid_argument("layer_norm: eps must be >= 0");
  const int64_t cols = x->dim(-1);
  if (gamma->numel() != cols || beta->numel() != cols) {
    throw std::invalid_argument(
        "layer_norm: channel mismatch: x " + shape_str(x->shape) + ", gamma " +
        shape_str(gamma->shape) + ", beta " + shape_str(beta->shape));
  }
  const int64_t rows = x->numel() / cols;
  auto y = make_out(x->shape, want_grad(g, {x, gamma, beta}));
  auto mean = std::make_shared<std::vector<double>>(rows);
  auto rstd = std::make_shared<std::vector<double>>(rows);
  kernels::layer_norm_rows(x->data.data(), gamma->data.data(),
                           beta->data.data(), rows, cols, eps, y->data.data(),
                           mean->data(), rstd->data());
  if (y->requires_grad) {
    g.record("layer_norm", [x, gamma, beta, y, mean, rstd, rows, cols] {
      std::vector<double> dg_scratch, db_scratch;
      double* dgamma;
      double* dbeta;
      if (gamma->requires_grad) {
        dgamma = gamma->ensure_grad().data();
      } else {
        dg_scratch.assign(static_cast<size_t>(cols), 0.0);
        dgamma = dg_scratch.data();
      }
      if (beta->requires_grad) {
        dbeta = beta->ensure_grad().data();
      } else {
        db_scratch.assign(static_cast<size_t>(cols), 0.0);
        dbeta = db_scratch.data();
      }
      if (x->requires_grad) {
        kernels::layer_norm_rows_dx(x->data.data(), gamma->data.data(),
                                    y->grad.data(), mean->data(), rstd->data(),
                                    rows, cols, x->ensure_grad().data(),
                                    dgamma, dbeta);
      } else {
        std::vector<double> dx_scratch(static_cast<size_t>(rows * cols), 0.0);
        kernels::layer_norm_rows_dx(x->data.data(), gamma->data.data(),
                                    y->grad.data(), mean->data(), rstd->data(),
                                    rows, cols, dx_scratch.data(), dgamma,
                                    dbeta);
      }
    });
  }
  return y;
}

TensorPtr batch_norm(Graph& g, const TensorPtr& x, const TensorPtr& gamma,
                     const TensorPtr& beta, const TensorPtr& running_mean,
                     const TensorPtr& running_var, bool training, double eps,
                     double momentum) {
  const int64_t cols = x->dim(-1);
  if (gamma->numel() != cols || beta->numel() != cols ||
      running_mean->numel() != cols || running_var->numel() != cols) {
    throw std::invalid_argument("batch_norm: channel mismatch: x " +
                                shape_str(x->shape) + " expects " +
                                std::to_string(cols) + " channels");
  }
  const int64_t rows = x->numel() / cols;
  auto y = make_out(x->shape, want_grad(g, {x, gamma, beta}));

  auto mean = std::make_shared<std::vector<double>>(cols);
  auto rstd = std::make_shared<std::vector<double>>(cols);
  if (training) {
    parallel_for(cols, [&](int64_t c) {
      double mu = 0.0;
      for (int64_t r = 0; r < rows; ++r) mu += x->data[r * cols + c];
      mu /= static_cast<double>(rows);
      double var = 0.0;
      for (int64_t r = 0; r < rows; ++r) {
        const double d = x->data[r * cols + c] - mu;
        var += d * d;
      }
      var /= static_cast<double>(rows);
      (*mean)[static_cast<size_t>(c)] = mu;
      (*rstd)[static_cast<size_t>(c)] = 1.0 / std::sqrt(var + eps);
      running_mean->data[c] = (1.0 - momentum) * running_mean->data[c] +
                              momentum * mu;
      running_var->data[c] = (1.0 - momentum) * running_var->data[c] +
                             momentum * var;
    });
  } else {
    parallel_for(cols, [&](int64_t c) {
      (*mean)[static_cast<size_t>(c)] = running_mean->data[c];
      (*rstd)[static_cast<size_t>(c)] =
          1.0 / std::sqrt(running_var->data[c] + eps);
    });
  }
  parallel_for(rows * cols, [&](int64_t i) {
    const int64_t c = i % cols;
    y->data[i] = (x->data[i] - (*mean)[static_cast<size_t>(c)]) *
                     (*rstd)[static_cast<size_t>(c)] * gamma->data[c] +
                 beta->data[c];
  });

  if (y->requires_grad) {
    g.record("batch_norm", [x, gamma, beta, y, mean, rstd, rows, cols,
                            training] {
      const double* dy = y->grad.data();
      if (gamma->requires_grad || beta->requires_grad) {
        auto* dgamma = gamma->requires_grad ? &gamma->ensure_grad() : nullptr;
        auto* dbeta = beta->requires_grad ? &beta->ensure_grad() : nullptr;
        parallel_for(cols, [&](int64_t c) {
          double dg = 0.0, db = 0.0;
          for (int64_t r = 0; r < rows; ++r) {
            const double xhat = (x->data[r * cols + c] -
                                 (*mean)[static_cast<size_t>(c)]) *
                                (*rstd)[static_cast<size_t>(c)];
            dg += dy[r * cols + c] * xhat;
            db += dy[r * cols + c];
          }
          if (dgamma) (*dgamma)[c] += dg;
          if (dbeta) (*dbeta)[c] += db;
        });
      }
      if (x->requires_grad) {
        auto& dx = x->ensure_grad();
        if (!training) {
          // Running statistics are constants.
          parallel_for(rows * cols, [&](int64_t i) {
            const int64_t c = i % cols;
            dx[i] += dy[i] * gamma->data[c] * (*rstd)[static_cast<size_t>(c)];
          });
        } else {
          parallel_for(cols, [&](int64_t c) {
            const double mu = (*mean)[static_cast<size_t>(c)];
            const double rs = (*rstd)[static_cast<size_t>(c)];
            double sum_g = 0.0, sum_gx = 0.0;
            for (int64_t r = 0; r < rows; ++r) {
              const double xhat = (x->data[r * cols + c] - mu) * rs;
              const double gdy = dy[r * cols + c] * gamma->data[c];
              sum_g += gdy;
              sum_gx += gdy * xhat;
            }
            const double inv_n = 1.0 / static_cast<double>(rows);
            for (int64_t r = 0; r < rows; ++r) {
              const double xhat = (x->data[r * cols + c] - mu) * rs;
              const double gdy = dy[r * cols + c] * gamma->data[c];
              dx[r * cols + c] +=
                  rs * (gdy - inv_n * sum_g - xhat * inv_n * sum_gx);
            }
          });
        }
      }
    });
  }
  return y;
}

TensorPtr softmax(Graph& g, const TensorPtr& x) {
  const int64_t cols = x->dim(-1);
  const int64_t rows = x->numel() / cols;
  auto y = make_out(x->shape, want_grad(g, {x}));
  kernels::softmax_rows(x->data.data(), rows, cols, y->data.data());
  if (y->requires_grad) {
    g.record("softmax", [x, y, rows, cols] {
      kernels::softmax_rows_dx(y->data.data(), y->grad.data(), rows, cols,
                               x->ensure_grad().data());
    });
  }
  return y;
}

TensorPtr log_softmax(Graph& g, const TensorPtr& x) {
  const int64_t cols = x->dim(-1);
  const int64_t rows = x->numel() / cols;
  auto y = make_out(x->shape, want_grad(g, {x}));
  parallel_for(rows, [&](int64_t r) {
    const double* xr = x->data.data() + r * cols;
    double* yr = y->data.data() + r * cols;
    double mx = xr[0];
    for (int64_t j = 1; j < cols; ++j) mx = xr[j] > mx ? xr[j] : mx;
    double sum = 0.0;
    for (int64_t j = 0; j < cols; ++j) sum += std::exp(xr[j] - mx);
    const double lse = mx + std::log(sum);
    for (int64_t j = 0; j < cols; ++j) yr[j] = xr[j] - lse;
  });
  if (y->requires_grad) {
    g.record("log_softmax", [x, y, rows, cols] {
      auto& dx = x->ensure_grad();
      parallel_for(rows, [&](int64_t r) {
        const double* yr = y->data.data() + r * cols;
        const double* dyr = y->grad.data() + r * cols;
        double sum = 0.0;
        for (int64_t j = 0; j < cols; ++j) sum += dyr[j];
        for (int64_t j = 0; j < cols; ++j) {
          dx[r * cols + j] += dyr[j] - std::exp(yr[j]) * sum;
        }
      });
    });
  }
  return y;
}

TensorPtr sigmoid(Graph& g, const TensorPtr& x) {
  auto y = make_out(x->shape, want_grad(g, {x}));
  parallel_for(x->numel(),
               [&](int64_t i) { y->data[i] = sigmoid_scalar(x->data[i]); });
  if (y->requires_grad) {
    g.record("sigmoid", [x, y] {
      auto& dx = x->ensure_grad();
      parallel_for(x->numel(), [&](int64_t i) {
        dx[i] += y->grad[i] * y->data[i] * (1.0 - y->data[i]);
      });
    });
  }
  return y;
}

TensorPtr swish(Graph& g, const TensorPtr& x) {
  auto y = make_out(x->shape, want_grad(g, {x}));
  parallel_for(x->numel(), [&](int64_t i) {
    y->data[i] = x->data[i] * sigmoid_scalar(x->data[i]);
  });
  if (y->requires_grad) {
    g.record("swish", [x, y] {
      auto& dx = x->ensure_grad();
      parallel_for(x->numel(), [&](int64_t i) {
        const double s = sigmoid_scalar(x->data[i]);
        dx[i] += y->grad[i] * (s + x->data[i] * s * (1.0 - s));
      });
    });
  }
  return y;
}

TensorPtr relu(Graph& g, const TensorPtr& x) {
  auto y = make_out(x->shape, want_grad(g, {x}));
  parallel_for(x->numel(), [&](int64_t i) {
    y->data[i] = x->data[i] > 0.0 ? x->data[i] : 0.0;
  });
  if (y->requires_grad) {
    g.record("relu", [x, y] {
      auto& dx = x->ensure_grad();
      parallel_for(x->numel(), [&](int64_t i) {
        if (x->data[i] > 0.0) dx[i] += y->grad[i];
      });
    });
  }
  return y;
}

TensorPtr glu(Graph& g, const TensorPtr& x) {
  const int64_t cols = x->dim(-1);
  if (cols % 2 != 0) {
    throw std::invalid_argument("glu: last dimension must be even, got " +
                                shape_str(x->shape));
  }
  const int64_t half = cols / 2;
  const int64_t rows = x->numel() / cols;
  auto shape = x->shape;
  shape.back() = half;
  auto y = make_out(shape, want_grad(g, {x}));
  parallel_for(rows * half, [&](int64_t i) {
    const int64_t r = i / half, j = i % half;
    const double a = x->data[r * cols + j];
    const double b = x->data[r * cols + half + j];
    y->data[i] = a * sigmoid_scalar(b);
  });
  if (y->requires_grad) {
    g.record("glu", [x, y, rows, cols, half] {
      auto& dx = x->ensure_grad();
      parallel_for(rows * half, [&](int64_t i) {
        const int64_t r = i / half, j = i % half;
        const double a = x->data[r * cols + j];
        const double b = x->data[r * cols + half + j];
        const double s = sigmoid_scalar(b);
        dx[r * cols + j] += y->grad[i] * s;
        dx[r * cols + half + j] += y->grad[i] * a * s * (1.0 - s);
      });
    });
  }
  return y;
}

TensorPtr dropout(Graph& g, const TensorPtr& x, double rate, bool training,
                  Rng* rng) {
  if (rate < 0.0 || rate >= 1.0) {
    throw std::invalid_argument("dropout: rate must be in [0, 1), got " +
                                std::to_string(rate));
  }
  if (!training || rate == 0.0) return x;
  if (!rng) {
    throw std::invalid_argument("dropout: training mode needs an rng stream");
  }
  const double keep_scale = 1.0 / (1.0 - rate);
  auto mask = std::make_shared<std::vector<double>>(
      static_cast<size_t>(x->numel()));
  // One serial draw per element keeps the stream layout-independent.
  for (auto& m : *mask) m = rng->uniform() >= rate ? keep_scale : 0.0;
  auto y = make_out(x->shape, want_grad(g, {x}));
  parallel_for(x->numel(), [&](int64_t i) {
    y->data[i] = x->data[i] * (*mask)[static_cast<size_t>(i)];
  });
  if (y->requires_grad) {
    g.record("dropout", [x, y, mask] {
      auto& dx = x->ensure_grad();
      parallel_for(x->numel(), [&](int64_t i) {
        dx[i] += y->grad[i] * (*mask)[static_cast<size_t>(i)];
      });
    });
  }
  return y;
}

TensorPtr reshape(Graph& g, const TensorPtr& x, std::vector<int64_t> shape) {
  if (shape_numel(shape) != x->numel()) {
    throw std::invalid_argument("reshape: cannot view " +
                                shape_str(x->shape) + " as " +
                                shape_str(shape));
  }
  auto y = make_out(std::move(shape), want_grad(g, {x}));
  y->data = x->data;
  if (y->requires_grad) {
    g.record("reshape", [x, y] {
      auto& dx = x->ensure_grad();
      parallel_for(x->numel(), [&](int64_t i) { dx[i] += y->grad[i]; });
    });
  }
  return y;
}

TensorPtr transpose2d(Graph& g, const TensorPtr& x) {
  if (x->ndim() != 2) {
    throw std::invalid_argument("transpose2d: need a matrix, got " +
                                shape_str(x->shape));
  }
  const int64_t r = x->dim(0), c = x->dim(1);
  auto y = make_out({c, r}, want_grad(g, {x}));
  parallel_for(r * c, [&](int64_t i) {
    y->data[(i % c) * r + i / c] = x->data[i];
  });
  if (y->requires_grad) {
    g.record("transpose2d", [x, y, r, c] {
      auto& dx = x->ensure_grad();
      parallel_for(r * c, [&](int64_t i) {
        dx[i] += y->grad[(i % c) * r + i / c];
      });
    });
  }
  return y;
}

TensorPtr split_heads(Graph& g, const TensorPtr& x, int64_t heads) {
  if (x->ndim() != 2 || x->dim(1) % heads != 0) {
    throw std::invalid_argument("split_heads: shape " + shape_str(x->shape) +
                                " not divisible into " +
                                std::to_string(heads) + " heads");
  }
  const int64_t t = x->dim(0), c = x->dim(1), d = c / heads;
  auto y = make_out({heads, t, d}, want_grad(g, {x}));
  parallel_for(heads * t * d, [&](int64_t i) {
    const int64_t h = i / (t * d);
    const int64_t tt = (i / d) % t;
    const int64_t j = i % d;
    y->data[i] = x->data[tt * c + h * d + j];
  });
  if (y->requires_grad) {
    g.record("split_heads", [x, y, heads, t, c, d] {
      auto& dx = x->ensure_grad();
      parallel_for(heads * t * d, [&](int64_t i) {
        const int64_t h = i / (t * d);
        const int64_t tt = (i / d) % t;
        const int64_t j = i % d;
        dx[tt * c + h * d + j] += y->grad[i];
      });
    });
  }
  return y;
}

TensorPtr merge_heads(Graph& g, const TensorPtr& x) {
  if (x->ndim() != 3) {
    throw std::invalid_argument("merge_heads: need [h, T, d], got " +
                                shape_str(x->shape));
  }
  const int64_t heads = x->dim(0), t = x->dim(1), d = x->dim(2);
  const int64_t c = heads * d;
  auto y = make_out({t, c}, want_grad(g, {x}));
  parallel_for(heads * t * d, [&](int64_t i) {
    const int64_t h = i / (t * d);
    const int64_t tt = (i / d) % t;
    const int64_t j = i % d;
    y->data[tt * c + h * d + j] = x->data[i];
  });
  if (y->requires_grad) {
    g.record("merge_heads", [x, y, heads, t, c, d] {
      auto& dx = x->ensure_grad();
      parallel_for(heads * t * d, [&](int64_t i) {
        const int64_t h = i / (t * d);
        const int64_t tt = (i / d) % t;
        const int64_t j = i % d;
        dx[i] += y->grad[tt * c + h * d + j];
      });
    });
  }
  return y;
}

TensorPtr rel_shift(Graph& g, const TensorPtr& x) {
  if (x->ndim() != 3) {
    throw std::invalid_argument("rel_shift: need [h, T, 2T-1], got " +
                                shape_str(x->shape));
  }
  const int64_t heads = x->dim(0), t = x->dim(1), p = x->dim(2);
  if (p != 2 * t - 1) {
    throw std::invalid_argument("rel_shift: last dim of " +
                                shape_str(x->shape) + " must be 2T-1");
  }
  auto y = make_out({heads, t, t}, want_grad(g, {x}));
  parallel_for(heads * t * t, [&](int64_t i) {
    const int64_t h = i / (t * t);
    const int64_t a = (i / t) % t;
    const int64_t b = i % t;
    y->data[i] = x->data[(h * t + a) * p + (t - 1 - a + b)];
  });
  if (y->requires_grad) {
    g.record("rel_shift", [x, y, heads, t, p] {
      auto& dx = x->ensure_grad();
      // Each source slot receives from at most one (a, b) pair per row, so a
      // parallel gather over outputs is safe.
      parallel_for(heads * t * t, [&](int64_t i) {
        const int64_t h = i / (t * t);
        const int64_t a = (i / t) % t;
        const int64_t b = i % t;
        dx[(h * t + a) * p + (t - 1 - a + b)] += y->grad[i];
      });
    });
  }
  return y;
}

TensorPtr repeat2_truncate(Graph& g, const TensorPtr& x, int64_t out_len) {
  if (x->ndim() != 2) {
    throw std::invalid_argument("repeat2_truncate: need [T, C], got " +
                                shape_str(x->shape));
  }
  const int64_t t2 = x->dim(0), c = x->dim(1);
  if (t2 != (out_len + 1) / 2) {
    throw std::invalid_argument(
        "repeat2_truncate: input rows " + std::to_string(t2) +
        " must equal ceil(out_len/2) for out_len " + std::to_string(out_len));
  }
  auto y = make_out({out_len, c}, want_grad(g, {x}));
  parallel_for(out_len * c, [&](int64_t i) {
    const int64_t tt = i / c, j = i % c;
    y->data[i] = x->data[(tt / 2) * c + j];
  });
  if (y->requires_grad) {
    g.record("repeat2_truncate", [x, y, t2, c, out_len] {
      auto& dx = x->ensure_grad();
      parallel_for(t2 * c, [&](int64_t i) {
        const int64_t tt = i / c, j = i % c;
        double acc = 0.0;
        if (2 * tt < out_len) acc += y->grad[(2 * tt) * c + j];
        if (2 * tt + 1 < out_len) acc += y->grad[(2 * tt + 1) * c + j];
        dx[i] += acc;
      });
    });
  }
  return y;
}

TensorPtr embedding(Graph& g, const TensorPtr& table,
                    const std::vector<int64_t>& ids) {
  if (table->ndim() != 2) {
    throw std::invalid_argument("embedding: table must be [V, C], got " +
                                shape_str(table->shape));
  }
  const int64_t v = table->dim(0), c = table->dim(1);
  for (int64_t id : ids) {
    if (id < 0 || id >= v) {
      throw std::invalid_argument("embedding: id " + std::to_string(id) +
                                  " out of range [0, " + std::to_string(v) +
                                  ")");
    }
  }
  const int64_t n = static_cast<int64_t>(ids.size());
  auto y = make_out({n, c}, want_grad(g, {table}));
  parallel_for(n * c, [&](int64_t i) {
    y->data[i] = table->data[ids[static_cast<size_t>(i / c)] * c + i % c];
  });
  if (y->requires_grad) {
    g.record("embedding", [table, y, ids, n, c] {
      auto& dt = table->ensure_grad();
      for (int64_t r = 0; r < n; ++r) {
        for (int64_t j = 0; j < c; ++j) {
          dt[ids[static_cast<size_t>(r)] * c + j] += y->grad[r * c + j];
        }
      }
    });
  }
  return y;
}

TensorPtr one_hot(const std::vector<int64_t>& ids, int64_t depth) {
  const int64_t n = static_cast<int64_t>(ids.size());
  auto y = make_out({n, depth}, false);
  for (int64_t r = 0; r < n; ++r) {
    const int64_t id = ids[static_cast<size_t>(r)];
    if (id < 0 || id >= depth) {
      throw std::invalid_argument("one_hot: id " + std::to_string(id) +
                                  " out of range [0, " +
                                  std::to_string(depth) + ")");
    }
    y->data[r * depth + id] = 1.0;
  }
  return y;
}

TensorPtr sum_all(Graph& g, const TensorPtr& x) {
  auto y = make_out({1}, want_grad(g, {x}));
  double acc = 0.0;
  for (double v : x->data) acc += v;
  y->data[0] = acc;
  if (y->requires_grad) {
    g.record("sum_all", [x, y] {
      auto& dx = x->ensure_grad();
      const double gy = y->grad[0];
      parallel_for(x->numel(), [&](int64_t i) { dx[i] += gy; });
    });
  }
  return y;
}

TensorPtr mean_all(Graph& g, const TensorPtr& x) {
  auto y = make_out({1}, want_grad(g, {x}));
  double acc = 0.0;
  for (double v : x->data) acc += v;
  const double inv = 1.0 / static_cast<double>(x->numel());
  y->data[0] = acc * inv;
  if (y->requires_grad) {
    g.record("mean_all", [x, y, inv] {
      auto& dx = x->ensure_grad();
      const double gy = y->grad[0] * inv;
      parallel_for(x->numel(), [&](int64_t i) { dx[i] += gy; });
    });
  }
  return y;
}

}  // namespace sqz
