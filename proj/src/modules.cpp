#include "sqz/modules.hpp"

#include <cmath>
#include <stdexcept>

namespace sqz {

namespace {

TensorPtr trunc_normal_tensor(std::vector<int64_t> shape, int64_t fan_in,
                              Rng& rng) {
  const double stddev = 1.0 / std::sqrt(static_cast<double>(fan_in));
  auto t = zeros(std::move(shape), true);
  for (auto& v : t->data) v = rng.truncated_normal(stddev);
  return t;
}

}  // namespace

Linear make_linear(int64_t in, int64_t out, Rng& rng, bool bias) {
  Linear m;
  m.w = trunc_normal_tensor({in, out}, in, rng);
  if (bias) m.b = zeros({out}, true);
  return m;
}

TensorPtr linear_forward(Graph& g, const Linear& m, const TensorPtr& x) {
  TensorPtr y;
  if (x->ndim() == 2) {
    y = matmul(g, x, m.w);
  } else {
    // Flatten leading dims, multiply, restore.
    auto shape = x->shape;
    const int64_t cols = shape.back();
    auto flat = reshape(g, x, {x->numel() / cols, cols});
    y = matmul(g, flat, m.w);
    shape.back() = m.w->dim(1);
    y = reshape(g, y, shape);
  }
  if (m.b) y = add(g, y, m.b);
  return y;
}

ScalingLayer make_scaling(int64_t dim) {
  return ScalingLayer{full({dim}, 1.0, true), zeros({dim}, true)};
}

TensorPtr scaling_forward(Graph& g, const ScalingLayer& s, const TensorPtr& x) {
  return add(g, mul(g, x, s.gamma), s.beta);
}

Linear merge_scaling(const ScalingLayer& s, const Linear& linear) {
  const int64_t in = linear.w->dim(0);
  const int64_t out = linear.w->dim(1);
  if (s.gamma->numel() != in) {
    throw std::invalid_argument("merge_scaling: scaling dim " +
                                shape_str(s.gamma->shape) +
                                " does not match linear input " +
                                shape_str(linear.w->shape));
  }
  Linear merged;
  merged.w = zeros({in, out}, false);
  for (int64_t i = 0; i < in; ++i) {
    for (int64_t j = 0; j < out; ++j) {
      merged.w->data[i * out + j] = s.gamma->data[i] * linear.w->data[i * out + j];
    }
  }
  merged.b = zeros({out}, false);
  for (int64_t j = 0; j < out; ++j) {
    double acc = linear.b ? linear.b->data[j] : 0.0;
    for (int64_t i = 0; i < in; ++i) {
      acc += s.beta->data[i] * linear.w->data[i * out + j];
    }
    merged.b->data[j] = acc;
  }
  return merged;
}

LayerNormLayer make_layer_norm(int64_t dim, double eps) {
  return LayerNormLayer{full({dim}, 1.0, true), zeros({dim}, true), eps};
}

TensorPtr layer_norm_forward(Graph& g, const LayerNormLayer& m,
                             const TensorPtr& x) {
  return layer_norm(g, x, m.gamma, m.beta, m.eps);
}

BatchStatNorm make_batch_norm(int64_t dim, double eps) {
  BatchStatNorm m;
  m.gamma = full({dim}, 1.0, true);
  m.beta = zeros({dim}, true);
  m.running_mean = zeros({dim}, false);
  m.running_var = full({dim}, 1.0, false);
  m.eps = eps;
  return m;
}

TensorPtr batch_norm_forward(Ctx& ctx, const BatchStatNorm& m,
                             const TensorPtr& x) {
  return batch_norm(ctx.g, x, m.gamma, m.beta, m.running_mean, m.running_var,
                    ctx.training, m.eps, m.momentum);
}

FeedForwardModule make_ffn(int64_t dim, int64_t expansion, double dropout,
                           Rng& rng) {
  FeedForwardModule m;
  m.lin1 = make_linear(dim, dim * expansion, rng);
  m.lin2 = make_linear(dim * expansion, dim, rng);
  m.dropout = dropout;
  return m;
}

TensorPtr ffn_body(Ctx& ctx, const FeedForwardModule& m, const TensorPtr& x) {
  auto h = linear_forward(ctx.g, m.lin1, x);
  h = swish(ctx.g, h);
  h = dropout(ctx.g, h, m.dropout, ctx.training, ctx.rng);
  h = linear_forward(ctx.g, m.lin2, h);
  return dropout(ctx.g, h, m.dropout, ctx.training, ctx.rng);
}

MhaModule make_mha(int64_t dim, int64_t heads, PositionalScheme scheme,
                   double dropout, double attn_dropout, Rng& rng) {
  if (dim % heads != 0) {
    throw std::invalid_argument("mha: dim " + std::to_string(dim) +
                                " not divisible by heads " +
                                std::to_string(heads));
  }
  MhaModule m;
  m.heads = heads;
  m.q = make_linear(dim, dim, rng);
  m.k = make_linear(dim, dim, rng);
  m.v = make_linear(dim, dim, rng);
  m.out = make_linear(dim, dim, rng);
  m.scheme = scheme;
  if (scheme == PositionalScheme::kRelative) {
    m.pos = make_linear(dim, dim, rng, /*bias=*/false);
    const int64_t d = dim / heads;
    m.pos_bias_u = trunc_normal_tensor({heads, d}, d, rng);
    m.pos_bias_v = trunc_normal_tensor({heads, d}, d, rng);
  }
  m.dropout = dropout;
  m.attn_dropout = attn_dropout;
  return m;
}

TensorPtr sinusoid_relative(int64_t t, int64_t dim) {
  // Row p encodes relative offset (t - 1 - p), from far past to far future.
  auto pe = zeros({2 * t - 1, dim}, false);
  for (int64_t p = 0; p < 2 * t - 1; ++p) {
    const double pos = static_cast<double>(t - 1 - p);
    for (int64_t i = 0; i < dim; i += 2) {
      const double freq =
          std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(dim));
      pe->data[p * dim + i] = std::sin(pos * freq);
      if (i + 1 < dim) pe->data[p * dim + i + 1] = std::cos(pos * freq);
    }
  }
  return pe;
}

TensorPtr sinusoid_absolute(int64_t t, int64_t dim) {
  auto pe = zeros({t, dim}, false);
  for (int64_t p = 0; p < t; ++p) {
    for (int64_t i = 0; i < dim; i += 2) {
      const double freq =
          std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(dim));
      pe->data[p * dim + i] = std::sin(static_cast<double>(p) * freq);
      if (i + 1 < dim) pe->data[p * dim + i + 1] = std::cos(static_cast<double>(p) * freq);
    }
  }
  return pe;
}

TensorPtr mha_body(Ctx& ctx, const MhaModule& m, const TensorPtr& x) {
  Graph& g = ctx.g;
  const int64_t t = x->dim(0);
  const int64_t dim = x->dim(1);
  const int64_t d = dim / m.heads;
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));

  TensorPtr scores;
  TensorPtr v3;
  if (m.scheme == PositionalScheme::kRelative) {
    auto q3 = split_heads(g, linear_forward(g, m.q, x), m.heads);
    auto k3 = split_heads(g, linear_forward(g, m.k, x), m.heads);
    v3 = split_heads(g, linear_forward(g, m.v, x), m.heads);
    auto p3 = split_heads(
        g, linear_forward(g, m.pos, sinusoid_relative(t, dim)), m.heads);

    auto bias_u = reshape(g, m.pos_bias_u, {m.heads, 1, d});
    auto bias_v = reshape(g, m.pos_bias_v, {m.heads, 1, d});
    auto content = bmm(g, add(g, q3, bias_u), k3, false, true);  // [h,T,T]
    auto positional =
        rel_shift(g, bmm(g, add(g, q3, bias_v), p3, false, true));
    scores = scale(g, add(g, content, positional), inv_sqrt_d);
  } else {
    auto xp = add(g, x, sinusoid_absolute(t, dim));
    auto q3 = split_heads(g, linear_forward(g, m.q, xp), m.heads);
    auto k3 = split_heads(g, linear_forward(g, m.k, xp), m.heads);
    v3 = split_heads(g, linear_forward(g, m.v, xp), m.heads);
    scores = scale(g, bmm(g, q3, k3, false, true), inv_sqrt_d);
  }

  auto attn = softmax(g, scores);
  attn = dropout(g, attn, m.attn_dropout, ctx.training, ctx.rng);
  auto y = merge_heads(g, bmm(g, attn, v3));
  y = linear_forward(g, m.out, y);
  return dropout(g, y, m.dropout, ctx.training, ctx.rng);
}

ConvModule make_conv_module(int64_t dim, int64_t kernel, ConvActivation act,
                            double dropout, Rng& rng) {
  if (kernel % 2 == 0) {
    throw std::invalid_argument("conv module: kernel must be odd, got " +
                                std::to_string(kernel));
  }
  ConvModule m;
  m.activation = act;
  m.kernel = kernel;
  m.pw1 = make_linear(dim, 2 * dim, rng);
  const int64_t inner = act == ConvActivation::kGlu ? dim : 2 * dim;
  m.dw_w = trunc_normal_tensor({inner, kernel}, kernel, rng);
  m.dw_b = zeros({inner}, true);
  m.norm = make_batch_norm(inner);
  m.pw2 = make_linear(inner, dim, rng);
  m.dropout = dropout;
  return m;
}

TensorPtr conv_module_body(Ctx& ctx, const ConvModule& m, const TensorPtr& x) {
  Graph& g = ctx.g;
  auto h = linear_forward(g, m.pw1, x);
  switch (m.activation) {
    case ConvActivation::kGlu:
      h = glu(g, h);
      break;
    case ConvActivation::kSwish:
      h = swish(g, h);
      break;
    case ConvActivation::kNone:
      break;
  }
  h = conv1d(g, h, m.dw_w, m.dw_b, /*stride=*/1, ConvMode::kDepthwise,
             Padding::kSame);
  h = batch_norm_forward(ctx, m.norm, h);
  h = swish(g, h);
  h = linear_forward(g, m.pw2, h);
  return dropout(g, h, m.dropout, ctx.training, ctx.rng);
}

ResidualWrapper make_wrapper(int64_t dim, NormScheme scheme,
                             double residual_weight) {
  ResidualWrapper w;
  w.scheme = scheme;
  w.residual_weight = residual_weight;
  switch (scheme) {
    case NormScheme::kPrePost:
      w.pre_norm = make_layer_norm(dim);
      break;
    case NormScheme::kScaledPost:
      w.scaling = make_scaling(dim);
      w.post_norm = make_layer_norm(dim);
      break;
    case NormScheme::kPostOnly:
      w.post_norm = make_layer_norm(dim);
      break;
  }
  return w;
}

TensorPtr block_forward(Ctx& ctx, const EncoderBlock& b, const TensorPtr& x) {
  auto ffn1 = [&](const TensorPtr& h) { return ffn_body(ctx, b.ffn1, h); };
  auto ffn2 = [&](const TensorPtr& h) { return ffn_body(ctx, b.ffn2, h); };
  auto mha = [&](const TensorPtr& h) { return mha_body(ctx, b.mha, h); };
  auto conv = [&](const TensorPtr& h) {
    return conv_module_body(ctx, b.conv, h);
  };

  TensorPtr h = x;
  if (b.structure == BlockStructure::kMacaronFmcf) {
    h = wrapped_forward(ctx, b.wrap_ffn1, h, ffn1);
    h = wrapped_forward(ctx, b.wrap_mha, h, mha);
    h = wrapped_forward(ctx, b.wrap_conv, h, conv);
    h = wrapped_forward(ctx, b.wrap_ffn2, h, ffn2);
  } else {
    h = wrapped_forward(ctx, b.wrap_mha, h, mha);
    h = wrapped_forward(ctx, b.wrap_ffn1, h, ffn1);
    h = wrapped_forward(ctx, b.wrap_conv, h, conv);
    h = wrapped_forward(ctx, b.wrap_ffn2, h, ffn2);
  }
  if (b.scheme == NormScheme::kPrePost) {
    h = layer_norm_forward(ctx.g, b.final_norm, h);
  }
  return h;
}

SubsamplingBlock make_subsampling(int64_t input_dim, int64_t model_dim,
                                  SubsamplingKind kind, Rng& rng) {
  SubsamplingBlock m;
  m.kind = kind;
  m.input_dim = input_dim;
  m.model_dim = model_dim;
  m.conv1_w = trunc_normal_tensor({model_dim, 3, 3, 1}, 9, rng);
  m.conv1_b = zeros({model_dim}, true);
  if (kind == SubsamplingKind::kVanilla) {
    m.conv2_w = trunc_normal_tensor({model_dim, 3, 3, model_dim},
                                    9 * model_dim, rng);
    m.conv2_b = zeros({model_dim}, true);
  } else {
    m.conv2_dw_w = trunc_normal_tensor({model_dim, 3, 3}, 9, rng);
    m.conv2_dw_b = zeros({model_dim}, true);
    m.conv2_pw = make_linear(model_dim, model_dim, rng);
  }
  const int64_t f_out = (((input_dim + 1) / 2) + 1) / 2;
  m.proj = make_linear(model_dim * f_out, model_dim, rng);
  return m;
}

TensorPtr subsampling_forward(Ctx& ctx, const SubsamplingBlock& m,
                              const TensorPtr& features) {
  Graph& g = ctx.g;
  if (features->ndim() != 2 || features->dim(1) != m.input_dim) {
    throw std::invalid_argument(
        "subsampling: expected [T, " + std::to_string(m.input_dim) +
        "] features, got " + shape_str(features->shape));
  }
  const int64_t t = features->dim(0);
  auto h = reshape(g, features, {t, m.input_dim, 1});
  h = conv2d(g, h, m.conv1_w, m.conv1_b, 2, 2, Padding::kSame);
  h = relu(g, h);
  if (m.kind == SubsamplingKind::kVanilla) {
    h = conv2d(g, h, m.conv2_w, m.conv2_b, 2, 2, Padding::kSame);
  } else {
    h = conv2d(g, h, m.conv2_dw_w, m.conv2_dw_b, 2, 2, Padding::kSame,
               /*depthwise=*/true);
    h = linear_forward(g, m.conv2_pw, h);
  }
  h = relu(g, h);
  const int64_t t_out = h->dim(0);
  h = reshape(g, h, {t_out, h->dim(1) * h->dim(2)});
  return linear_forward(g, m.proj, h);
}

TemporalResampler make_resampler(int64_t dim, Rng& rng) {
  TemporalResampler r;
  r.down_dw_w = trunc_normal_tensor({dim, 3}, 3, rng);
  r.down_dw_b = zeros({dim}, true);
  r.down_pw = make_linear(dim, dim, rng);
  r.up_proj = make_linear(dim, dim, rng);
  return r;
}

std::pair<TensorPtr, TensorPtr> downsample(Ctx& ctx,
                                           const TemporalResampler& r,
                                           const TensorPtr& x) {
  auto h = conv1d(ctx.g, x, r.down_dw_w, r.down_dw_b, /*stride=*/2,
                  ConvMode::kDepthwise, Padding::kSame);
  h = linear_forward(ctx.g, r.down_pw, h);
  return {h, x};
}

TensorPtr upsample(Ctx& ctx, const TemporalResampler& r, const TensorPtr& y,
                   const TensorPtr& skip) {
  const int64_t t1 = skip->dim(0);
  if (y->dim(0) != (t1 + 1) / 2) {
    throw std::invalid_argument("upsample: rows " + shape_str(y->shape) +
                                " must be ceil(skip/2) of " +
                                shape_str(skip->shape));
  }
  auto h = repeat2_truncate(ctx.g, y, t1);
  h = linear_forward(ctx.g, r.up_proj, h);
  return add(ctx.g, h, skip);
}

void collect_params(const std::string& prefix, const Linear& m,
                    ParamList& out) {
  out.add(prefix + ".w", m.w);
  out.add(prefix + ".b", m.b);
}

namespace {

void collect_wrapper(const std::string& prefix, const ResidualWrapper& w,
                     ParamList& out) {
  switch (w.scheme) {
    case NormScheme::kPrePost:
      out.add(prefix + ".pre_norm.gamma", w.pre_norm.gamma);
      out.add(prefix + ".pre_norm.beta", w.pre_norm.beta);
      break;
    case NormScheme::kScaledPost:
      out.add(prefix + ".scaling.gamma", w.scaling.gamma);
      out.add(prefix + ".scaling.beta", w.scaling.beta);
      out.add(prefix + ".post_norm.gamma", w.post_norm.gamma);
      out.add(prefix + ".post_norm.beta", w.post_norm.beta);
      break;
    case NormScheme::kPostOnly:
      out.add(prefix + ".post_norm.gamma", w.post_norm.gamma);
      out.add(prefix + ".post_norm.beta", w.post_norm.beta);
      break;
  }
}

void collect_batch_norm(const std::string& prefix, const BatchStatNorm& m,
                        ParamList& out) {
  out.add(prefix + ".gamma", m.gamma);
  out.add(prefix + ".beta", m.beta);
  out.add_buffer(prefix + ".running_mean", m.running_mean);
  out.add_buffer(prefix + ".running_var", m.running_var);
}

}  // namespace

void collect_params(const std::string& prefix, const EncoderBlock& b,
                    ParamList& out) {
  collect_wrapper(prefix + ".wrap_ffn1", b.wrap_ffn1, out);
  collect_wrapper(prefix + ".wrap_mha", b.wrap_mha, out);
  collect_wrapper(prefix + ".wrap_conv", b.wrap_conv, out);
  collect_wrapper(prefix + ".wrap_ffn2", b.wrap_ffn2, out);
  collect_params(prefix + ".ffn1.lin1", b.ffn1.lin1, out);
  collect_params(prefix + ".ffn1.lin2", b.ffn1.lin2, out);
  collect_params(prefix + ".mha.q", b.mha.q, out);
  collect_params(prefix + ".mha.k", b.mha.k, out);
  collect_params(prefix + ".mha.v", b.mha.v, out);
  collect_params(prefix + ".mha.out", b.mha.out, out);
  if (b.mha.scheme == PositionalScheme::kRelative) {
    collect_params(prefix + ".mha.pos", b.mha.pos, out);
    out.add(prefix + ".mha.pos_bias_u", b.mha.pos_bias_u);
    out.add(prefix + ".mha.pos_bias_v", b.mha.pos_bias_v);
  }
  collect_params(prefix + ".conv.pw1", b.conv.pw1, out);
  out.add(prefix + ".conv.dw.w", b.conv.dw_w);
  out.add(prefix + ".conv.dw.b", b.conv.dw_b);
  collect_batch_norm(prefix + ".conv.norm", b.conv.norm, out);
  collect_params(prefix + ".conv.pw2", b.conv.pw2, out);
  collect_params(prefix + ".ffn2.lin1", b.ffn2.lin1, out);
  collect_params(prefix + ".ffn2.lin2", b.ffn2.lin2, out);
  if (b.scheme == NormScheme::kPrePost) {
    out.add(prefix + ".final_norm.gamma", b.final_norm.gamma);
    out.add(prefix + ".final_norm.beta", b.final_norm.beta);
  }
}

void collect_params(const std::string& prefix, const SubsamplingBlock& m,
                    ParamList& out) {
  out.add(prefix + ".conv1.w", m.conv1_w);
  out.add(prefix + ".conv1.b", m.conv1_b);
  if (m.kind == SubsamplingKind::kVanilla) {
    out.add(prefix + ".conv2.w", m.conv2_w);
    out.add(prefix + ".conv2.b", m.conv2_b);
  } else {
    out.add(prefix + ".conv2.dw.w", m.conv2_dw_w);
    out.add(prefix + ".conv2.dw.b", m.conv2_dw_b);
    collect_params(prefix + ".conv2.pw", m.conv2_pw, out);
  }
  collect_params(prefix + ".proj", m.proj, out);
}

void collect_params(const std::string& prefix, const TemporalResampler& m,
                    ParamList& out) {
  out.add(prefix + ".down.dw.w", m.down_dw_w);
  out.add(prefix + ".down.dw.b", m.down_dw_b);
  collect_params(prefix + ".down.pw", m.down_pw, out);
  collect_params(prefix + ".up.proj", m.up_proj, out);
}

}  // namespace sqz
