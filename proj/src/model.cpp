#include "sqz/model.hpp"

#include <stdexcept>

namespace sqz {

namespace {

EncoderBlock build_block(const ModelConfig& c, Rng& rng) {
  EncoderBlock b;
  b.structure = c.block_structure;
  b.scheme = c.norm_scheme;
  const bool macaron = c.block_structure == BlockStructure::kMacaronFmcf;
  const double ffn_r = macaron ? 0.5 : 1.0;
  b.ffn1 = make_ffn(c.dim, c.ffn_expansion, c.dropout_rate, rng);
  b.ffn2 = make_ffn(c.dim, c.ffn_expansion, c.dropout_rate, rng);
  b.mha = make_mha(c.dim, c.heads, c.positional, c.dropout_rate,
                   c.attention_dropout_rate, rng);
  b.conv = make_conv_module(c.dim, c.conv_kernel, c.conv_activation,
                            c.dropout_rate, rng);
  b.wrap_ffn1 = make_wrapper(c.dim, c.norm_scheme, ffn_r);
  b.wrap_mha = make_wrapper(c.dim, c.norm_scheme, 1.0);
  b.wrap_conv = make_wrapper(c.dim, c.norm_scheme, 1.0);
  b.wrap_ffn2 = make_wrapper(c.dim, c.norm_scheme, ffn_r);
  if (c.norm_scheme == NormScheme::kPrePost) {
    b.final_norm = make_layer_norm(c.dim);
  }
  return b;
}

}  // namespace

EncoderModel build(const ModelConfig& config, uint64_t seed) {
  validate(config);
  Rng rng(seed);
  EncoderModel m;
  m.config = config;
  m.downsample_block = config.unet ? resolve_downsample_block(config) : 0;
  m.subsample = make_subsampling(config.input_feature_dim, config.dim,
                                 config.subsampling, rng);
  m.blocks.reserve(static_cast<size_t>(config.num_blocks));
  for (int64_t i = 0; i < config.num_blocks; ++i) {
    m.blocks.push_back(build_block(config, rng));
  }
  if (config.unet) m.resampler = make_resampler(config.dim, rng);
  m.ctc_proj = make_linear(config.dim, config.vocab_size + 1, rng);
  return m;
}

TensorPtr EncoderModel::forward(Ctx& ctx, const TensorPtr& features,
                                std::vector<TensorPtr>* block_taps) const {
  auto x = subsampling_forward(ctx, subsample, features);
  TensorPtr skip;
  const int64_t n = static_cast<int64_t>(blocks.size());
  for (int64_t i = 0; i < n; ++i) {
    // Halve the rate after block D; restore it before the final block.
    if (downsample_block > 0 && i == downsample_block) {
      auto ds = downsample(ctx, resampler, x);
      x = ds.first;
      skip = ds.second;
    }
    if (downsample_block > 0 && i == n - 1) {
      x = upsample(ctx, resampler, x, skip);
    }
    x = block_forward(ctx, blocks[static_cast<size_t>(i)], x);
    if (block_taps) block_taps->push_back(x);
  }
  return linear_forward(ctx.g, ctc_proj, x);
}

int64_t EncoderModel::block_rate_ms(int64_t block_index) const {
  const int64_t n = static_cast<int64_t>(blocks.size());
  const bool reduced = downsample_block > 0 && block_index >= downsample_block &&
                       block_index < n - 1;
  return reduced ? 80 : 40;
}

std::vector<std::pair<std::string, TensorPtr>> EncoderModel::named_parameters()
    const {
  ParamList out;
  collect_params("subsample", subsample, out);
  for (size_t i = 0; i < blocks.size(); ++i) {
    collect_params("blocks." + std::to_string(i), blocks[i], out);
  }
  if (downsample_block > 0) collect_params("resampler", resampler, out);
  collect_params("ctc", ctc_proj, out);
  return std::move(out.params);
}

std::vector<std::pair<std::string, TensorPtr>> EncoderModel::named_buffers()
    const {
  ParamList out;
  collect_params("subsample", subsample, out);
  for (size_t i = 0; i < blocks.size(); ++i) {
    collect_params("blocks." + std::to_string(i), blocks[i], out);
  }
  if (downsample_block > 0) collect_params("resampler", resampler, out);
  collect_params("ctc", ctc_proj, out);
  return std::move(out.buffers);
}

int64_t EncoderModel::num_params() const {
  int64_t total = 0;
  for (const auto& [name, t] : named_parameters()) total += t->numel();
  return total;
}

namespace {

int64_t linear_params(int64_t in, int64_t out, bool bias = true) {
  return in * out + (bias ? out : 0);
}

int64_t wrapper_params(NormScheme scheme, int64_t dim) {
  switch (scheme) {
    case NormScheme::kPrePost: return 2 * dim;        // preLN
    case NormScheme::kScaledPost: return 4 * dim;     // scaling + postLN
    case NormScheme::kPostOnly: return 2 * dim;       // postLN
  }
  return 0;
}

}  // namespace

ParamBreakdown count_params(const ModelConfig& c) {
  validate(c);
  ParamBreakdown out;
  const int64_t dim = c.dim;
  const int64_t f_out = (((c.input_feature_dim + 1) / 2) + 1) / 2;

  int64_t sub = 9 * dim + dim;  // conv1 [C,3,3,1] + bias
  if (c.subsampling == SubsamplingKind::kVanilla) {
    sub += 9 * dim * dim + dim;
  } else {
    sub += 9 * dim + dim + linear_params(dim, dim);
  }
  sub += linear_params(dim * f_out, dim);
  out.entries.emplace_back("subsample", sub);

  const int64_t ffn_params =
      linear_params(dim, dim * c.ffn_expansion) +
      linear_params(dim * c.ffn_expansion, dim);

  int64_t mha = 4 * linear_params(dim, dim);
  if (c.positional == PositionalScheme::kRelative) {
    mha += linear_params(dim, dim, /*bias=*/false) + 2 * dim;  // pos, u, v
  }

  const int64_t inner = c.conv_activation == ConvActivation::kGlu ? dim
                                                                  : 2 * dim;
  int64_t conv = linear_params(dim, 2 * dim);          // pw1
  conv += inner * c.conv_kernel + inner;               // depthwise
  conv += 2 * inner;                                   // batch-stat norm
  conv += linear_params(inner, dim);                   // pw2

  int64_t wrappers = wrapper_params(c.norm_scheme, dim) * 4;
  if (c.norm_scheme == NormScheme::kPrePost) wrappers += 2 * dim;  // final LN

  const int64_t block = 2 * ffn_params + mha + conv + wrappers;
  out.entries.emplace_back("blocks (" + std::to_string(c.num_blocks) + " x " +
                               std::to_string(block) + ")",
                           c.num_blocks * block);

  if (c.unet) {
    const int64_t resampler = (3 * dim + dim) + linear_params(dim, dim) +
                              linear_params(dim, dim);
    out.entries.emplace_back("resampler", resampler);
  }
  out.entries.emplace_back("ctc", linear_params(dim, c.vocab_size + 1));

  for (const auto& [name, n] : out.entries) out.total += n;
  return out;
}

std::vector<int64_t> ctc_greedy_decode(const Tensor& logits) {
  if (logits.ndim() != 2) {
    throw std::invalid_argument("ctc_greedy_decode: logits must be [T, V+1]");
  }
  const int64_t t = logits.dim(0);
  const int64_t cols = logits.dim(1);
  const int64_t blank = cols - 1;
  std::vector<int64_t> out;
  int64_t prev = blank;
  for (int64_t i = 0; i < t; ++i) {
    const double* row = logits.data.data() + i * cols;
    int64_t best = 0;
    for (int64_t j = 1; j < cols; ++j) {
      if (row[j] > row[best]) best = j;
    }
    if (best != blank && best != prev) out.push_back(best);
    prev = best;
  }
  return out;
}

int64_t subsampled_len(int64_t t) { return ((t + 1) / 2 + 1) / 2; }

}  // namespace sqz
