#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sqz/ops.hpp"
#include "sqz/rng.hpp"
#include "sqz/tensor.hpp"

namespace sqz {

// Forward-pass context: the tape, the train/eval switch, and the dropout
// stream. rng may be null when nothing stochastic runs (eval, or rates 0).
struct Ctx {
  Graph& g;
  bool training = false;
  Rng* rng = nullptr;
};

enum class NormScheme { kPrePost, kScaledPost, kPostOnly };
enum class BlockStructure { kMacaronFmcf, kMfCf };
enum class ConvActivation { kGlu, kSwish, kNone };
enum class PositionalScheme { kRelative, kAbsolute };
enum class SubsamplingKind { kVanilla, kDepthwiseSeparable };

// y = x * w + b, w: [in, out].
struct Linear {
  TensorPtr w;
  TensorPtr b;  // null when bias-free
};
Linear make_linear(int64_t in, int64_t out, Rng& rng, bool bias = true);
TensorPtr linear_forward(Graph& g, const Linear& m, const TensorPtr& x);

// Learnable per-channel affine gamma * x + beta; starts as the identity.
struct ScalingLayer {
  TensorPtr gamma;
  TensorPtr beta;
};
ScalingLayer make_scaling(int64_t dim);
TensorPtr scaling_forward(Graph& g, const ScalingLayer& s, const TensorPtr& x);

// Folds a scaling layer into the following linear layer:
//   w' = diag(gamma) * w,  b' = beta * w + b,
// so w' x + b' == w (gamma x + beta) + b for every x.
Linear merge_scaling(const ScalingLayer& s, const Linear& linear);

struct LayerNormLayer {
  TensorPtr gamma;
  TensorPtr beta;
  double eps = 1e-5;
};
LayerNormLayer make_layer_norm(int64_t dim, double eps = 1e-5);
TensorPtr layer_norm_forward(Graph& g, const LayerNormLayer& m,
                             const TensorPtr& x);

// Per-channel statistics over the time axis; running buffers are used in
// eval mode and updated only by the (single) training thread.
struct BatchStatNorm {
  TensorPtr gamma;
  TensorPtr beta;
  TensorPtr running_mean;
  TensorPtr running_var;
  double eps = 1e-5;
  double momentum = 0.1;
};
BatchStatNorm make_batch_norm(int64_t dim, double eps = 1e-5);
TensorPtr batch_norm_forward(Ctx& ctx, const BatchStatNorm& m,
                             const TensorPtr& x);

// Residual body: Drop(W2 * Drop(Swish(W1 * x))). The enclosing wrapper owns
// the norm placement and the residual weight.
struct FeedForwardModule {
  Linear lin1;
  Linear lin2;
  double dropout = 0.0;
};
FeedForwardModule make_ffn(int64_t dim, int64_t expansion, double dropout,
                           Rng& rng);
TensorPtr ffn_body(Ctx& ctx, const FeedForwardModule& m, const TensorPtr& x);

// Multi-head self-attention with either Transformer-XL-style relative
// positions (content/position biases u, v plus a position projection) or an
// absolute sinusoidal fallback.
struct MhaModule {
  int64_t heads = 4;
  Linear q, k, v, out;
  Linear pos;            // relative scheme only, bias-free
  TensorPtr pos_bias_u;  // [heads, head_dim]
  TensorPtr pos_bias_v;
  PositionalScheme scheme = PositionalScheme::kRelative;
  double dropout = 0.0;
  double attn_dropout = 0.0;
};
MhaModule make_mha(int64_t dim, int64_t heads, PositionalScheme scheme,
                   double dropout, double attn_dropout, Rng& rng);
TensorPtr mha_body(Ctx& ctx, const MhaModule& m, const TensorPtr& x);

// Pointwise expansion (x2) -> gate activation -> depthwise conv -> batch-stat
// norm -> Swish -> pointwise projection -> dropout. The GLU gate halves the
// expanded channels back to C; the Swish and None variants keep the expanded
// width through the depthwise conv (the expansion rate is kept), so their
// depthwise/projection layers run at 2C.
struct ConvModule {
  Linear pw1;  // C -> 2C
  ConvActivation activation = ConvActivation::kSwish;
  TensorPtr dw_w;  // [inner, kernel]
  TensorPtr dw_b;
  BatchStatNorm norm;
  Linear pw2;  // inner -> C
  int64_t kernel = 31;
  double dropout = 0.0;
};
ConvModule make_conv_module(int64_t dim, int64_t kernel, ConvActivation act,
                            double dropout, Rng& rng);
TensorPtr conv_module_body(Ctx& ctx, const ConvModule& m, const TensorPtr& x);

// Norm placement around one residual module:
//   kPrePost:    y = x + r * body(preLN(x))        (block adds a final LN)
//   kScaledPost: y = postLN(x + r * body(scaling(x)))
//   kPostOnly:   y = postLN(x + r * body(x))
struct ResidualWrapper {
  NormScheme scheme = NormScheme::kScaledPost;
  double residual_weight = 1.0;
  LayerNormLayer pre_norm;   // kPrePost
  ScalingLayer scaling;      // kScaledPost
  LayerNormLayer post_norm;  // kScaledPost, kPostOnly
};
ResidualWrapper make_wrapper(int64_t dim, NormScheme scheme,
                             double residual_weight);

template <class Body>
TensorPtr wrapped_forward(Ctx& ctx, const ResidualWrapper& w,
                          const TensorPtr& x, Body&& body) {
  switch (w.scheme) {
    case NormScheme::kPrePost: {
      auto h = layer_norm_forward(ctx.g, w.pre_norm, x);
      return add_scaled(ctx.g, x, body(h), w.residual_weight);
    }
    case NormScheme::kScaledPost: {
      auto h = scaling_forward(ctx.g, w.scaling, x);
      auto sum = add_scaled(ctx.g, x, body(h), w.residual_weight);
      return layer_norm_forward(ctx.g, w.post_norm, sum);
    }
    case NormScheme::kPostOnly: {
      auto sum = add_scaled(ctx.g, x, body(x), w.residual_weight);
      return layer_norm_forward(ctx.g, w.post_norm, sum);
    }
  }
  return x;  // unreachable
}

// One encoder block: ffn1 / mha / conv / ffn2 plus their wrappers.
// kMacaronFmcf runs [ffn1, mha, conv, ffn2] with half-step FFN residuals;
// kMfCf runs [mha, ffn1, conv, ffn2] with full residuals.
struct EncoderBlock {
  BlockStructure structure = BlockStructure::kMfCf;
  NormScheme scheme = NormScheme::kScaledPost;
  FeedForwardModule ffn1, ffn2;
  MhaModule mha;
  ConvModule conv;
  ResidualWrapper wrap_ffn1, wrap_mha, wrap_conv, wrap_ffn2;
  LayerNormLayer final_norm;  // kPrePost only
};
TensorPtr block_forward(Ctx& ctx, const EncoderBlock& b, const TensorPtr& x);

// Two stride-2 3x3 convolutions over (time, freq) followed by a linear
// projection to the model dim; maps T to ceil(ceil(T/2)/2) (10ms -> 40ms).
struct SubsamplingBlock {
  SubsamplingKind kind = SubsamplingKind::kVanilla;
  int64_t input_dim = 80;
  int64_t model_dim = 0;
  TensorPtr conv1_w;  // [C, 3, 3, 1]
  TensorPtr conv1_b;
  TensorPtr conv2_w;    // vanilla: [C, 3, 3, C]
  TensorPtr conv2_b;
  TensorPtr conv2_dw_w;  // depthwise-separable: [C, 3, 3]
  TensorPtr conv2_dw_b;
  Linear conv2_pw;
  Linear proj;  // C * ceil(ceil(F/2)/2) -> C
};
SubsamplingBlock make_subsampling(int64_t input_dim, int64_t model_dim,
                                  SubsamplingKind kind, Rng& rng);
TensorPtr subsampling_forward(Ctx& ctx, const SubsamplingBlock& m,
                              const TensorPtr& features);

// Temporal U-Net resampling pair. downsample halves the rate with a
// depthwise-separable stride-2 conv and hands back the pre-downsample
// activations for the skip; upsample repeats each frame twice, truncates to
// the skip length, applies a pointwise projection and adds the skip.
struct TemporalResampler {
  TensorPtr down_dw_w;  // [C, 3]
  TensorPtr down_dw_b;
  Linear down_pw;
  Linear up_proj;
};
TemporalResampler make_resampler(int64_t dim, Rng& rng);
std::pair<TensorPtr, TensorPtr> downsample(Ctx& ctx,
                                           const TemporalResampler& r,
                                           const TensorPtr& x);
TensorPtr upsample(Ctx& ctx, const TemporalResampler& r, const TensorPtr& y,
                   const TensorPtr& skip);

// Sinusoidal position tables (constant, no gradient).
TensorPtr sinusoid_relative(int64_t t, int64_t dim);  // [2T-1, dim]
TensorPtr sinusoid_absolute(int64_t t, int64_t dim);  // [T, dim]

// Parameter registration helper shared by the model and checkpoint code.
struct ParamList {
  std::vector<std::pair<std::string, TensorPtr>> params;
  std::vector<std::pair<std::string, TensorPtr>> buffers;
  void add(const std::string& name, const TensorPtr& t) {
    if (t) params.emplace_back(name, t);
  }
  void add_buffer(const std::string& name, const TensorPtr& t) {
    if (t) buffers.emplace_back(name, t);
  }
};
void collect_params(const std::string& prefix, const Linear& m, ParamList& out);
void collect_params(const std::string& prefix, const EncoderBlock& b,
                    ParamList& out);
void collect_params(const std::string& prefix, const SubsamplingBlock& m,
                    ParamList& out);
void collect_params(const std::string& prefix, const TemporalResampler& m,
                    ParamList& out);

}  // namespace sqz
