#pragma once

#include <cstdint>
#include <vector>

#include "sqz/rng.hpp"
#include "sqz/tensor.hpp"

namespace sqz {

// Differentiable primitive ops. Each op computes the forward value and, when
// the graph is recording and any input requires a gradient, appends a node
// whose closure accumulates adjoints into the inputs' grad slots.
//
// Shape mismatches throw std::invalid_argument naming both shapes.

enum class ConvMode { kFull, kDepthwise, kPointwise };
enum class Padding { kSame, kValid };

// b must be broadcastable to a (numpy-style, right-aligned; each trailing
// dim of b is 1 or equal to a's).
TensorPtr add(Graph& g, const TensorPtr& a, const TensorPtr& b);
TensorPtr mul(Graph& g, const TensorPtr& a, const TensorPtr& b);
// a + r * b with identical shapes (residual connections).
TensorPtr add_scaled(Graph& g, const TensorPtr& a, const TensorPtr& b, double r);
TensorPtr scale(Graph& g, const TensorPtr& x, double c);

// 2-D matrix product with optional transposes: op(a)[m,k] * op(b)[k,n].
TensorPtr matmul(Graph& g, const TensorPtr& a, const TensorPtr& b,
                 bool trans_a = false, bool trans_b = false);
// Batched variant over the leading dim: [B,m,k] x [B,k,n] -> [B,m,n].
TensorPtr bmm(Graph& g, const TensorPtr& a, const TensorPtr& b,
              bool trans_a = false, bool trans_b = false);

// x: [T, c_in]. kFull: w [c_out, k, c_in]; kDepthwise: w [c, k] (c_out = c);
// kPointwise: w [c_in, c_out] with k = 1. bias may be null.
// Same padding pads symmetrically with the extra zero on the right, so
// t_out = ceil(T / stride) always holds.
TensorPtr conv1d(Graph& g, const TensorPtr& x, const TensorPtr& w,
                 const TensorPtr& bias, int64_t stride, ConvMode mode,
                 Padding padding);

// x: [T, F, c_in], w: [c_out, kt, kf, c_in] (or [c, kt, kf] depthwise).
TensorPtr conv2d(Graph& g, const TensorPtr& x, const TensorPtr& w,
                 const TensorPtr& bias, int64_t stride_t, int64_t stride_f,
                 Padding padding, bool depthwise = false);

// Normalizes the last axis to zero mean / unit population variance, then
// applies the per-channel affine gamma/beta.
TensorPtr layer_norm(Graph& g, const TensorPtr& x, const TensorPtr& gamma,
                     const TensorPtr& beta, double eps = 1e-5);

// Per-channel statistics over all leading positions of x [.., C]. Training
// mode normalizes with the batch statistics and updates the running buffers
// in place; eval mode normalizes with the running statistics.
TensorPtr batch_norm(Graph& g, const TensorPtr& x, const TensorPtr& gamma,
                     const TensorPtr& beta, const TensorPtr& running_mean,
                     const TensorPtr& running_var, bool training,
                     double eps = 1e-5, double momentum = 0.1);

TensorPtr softmax(Graph& g, const TensorPtr& x);      // last axis, max-subtracted
TensorPtr log_softmax(Graph& g, const TensorPtr& x);  // last axis
TensorPtr sigmoid(Graph& g, const TensorPtr& x);
TensorPtr swish(Graph& g, const TensorPtr& x);  // x * sigmoid(x)
TensorPtr relu(Graph& g, const TensorPtr& x);
// Splits the last (even) axis into halves a, b and returns a * sigmoid(b).
TensorPtr glu(Graph& g, const TensorPtr& x);

// Inverted dropout: training mode zeroes entries with probability rate and
// scales survivors by 1/(1-rate); eval mode is the identity. The mask is
// drawn from the caller's rng stream, one draw per element. rng may be null
// whenever the call is an identity (eval mode or rate 0).
TensorPtr dropout(Graph& g, const TensorPtr& x, double rate, bool training,
                  Rng* rng);

TensorPtr reshape(Graph& g, const TensorPtr& x, std::vector<int64_t> shape);
TensorPtr transpose2d(Graph& g, const TensorPtr& x);

// [T, C] -> [h, T, C/h] and back.
TensorPtr split_heads(Graph& g, const TensorPtr& x, int64_t heads);
TensorPtr merge_heads(Graph& g, const TensorPtr& x);

// Relative-position gather: in [h, T, 2T-1] -> out [h, i, j] =
// in[h, i, (T-1) - i + j], so out(i, j) carries relative offset i - j.
TensorPtr rel_shift(Graph& g, const TensorPtr& x);

// Nearest-neighbor x2 upsampling along rows followed by truncation to
// out_len. Requires rows == ceil(out_len / 2).
TensorPtr repeat2_truncate(Graph& g, const TensorPtr& x, int64_t out_len);

// Row lookup into table [V, C]; gradient scatter-adds into the table.
TensorPtr embedding(Graph& g, const TensorPtr& table,
                    const std::vector<int64_t>& ids);
// One-hot rows [ids.size(), depth]; constant (no gradient).
TensorPtr one_hot(const std::vector<int64_t>& ids, int64_t depth);

TensorPtr sum_all(Graph& g, const TensorPtr& x);
TensorPtr mean_all(Graph& g, const TensorPtr& x);

// Same-padding helper: total left pad for t_out = ceil(t / stride).
int64_t same_pad_left(int64_t t, int64_t k, int64_t stride);
int64_t conv_out_len(int64_t t, int64_t k, int64_t stride, Padding padding);

}  // namespace sqz
