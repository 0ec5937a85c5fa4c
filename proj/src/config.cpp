#include "sqz/config.hpp"

#include <algorithm>
#include <cmath>

namespace sqz {

void validate(const ModelConfig& c) {
  if (c.num_blocks < 1) throw ConfigError("num_blocks: must be >= 1");
  if (c.dim < 1) throw ConfigError("dim: must be >= 1");
  if (c.heads < 1) throw ConfigError("heads: must be >= 1");
  if (c.dim % c.heads != 0) {
    throw ConfigError("heads: dim " + std::to_string(c.dim) +
                      " not divisible by heads " + std::to_string(c.heads));
  }
  if (c.conv_kernel < 1 || c.conv_kernel % 2 == 0) {
    throw ConfigError("conv_kernel: must be odd and >= 1, got " +
                      std::to_string(c.conv_kernel));
  }
  if (c.ffn_expansion < 1) throw ConfigError("ffn_expansion: must be >= 1");
  if (c.unet) {
    const int64_t d = c.downsample_after_block;
    if (d != 0 && (d < 1 || d >= c.num_blocks)) {
      throw ConfigError(
          "downsample_after_block: must satisfy 1 <= D < num_blocks, got " +
          std::to_string(d) + " with num_blocks " +
          std::to_string(c.num_blocks));
    }
    if (d == 0 && c.num_blocks < 2) {
      throw ConfigError("unet: needs num_blocks >= 2");
    }
  }
  if (c.input_feature_dim < 1) {
    throw ConfigError("input_feature_dim: must be >= 1");
  }
  if (c.vocab_size < 1) throw ConfigError("vocab_size: must be >= 1");
  if (c.dropout_rate < 0.0 || c.dropout_rate >= 1.0) {
    throw ConfigError("dropout_rate: must be in [0, 1)");
  }
  if (c.attention_dropout_rate < 0.0 || c.attention_dropout_rate >= 1.0) {
    throw ConfigError("attention_dropout_rate: must be in [0, 1)");
  }
}

int64_t resolve_downsample_block(const ModelConfig& c) {
  if (c.downsample_after_block != 0) return c.downsample_after_block;
  const int64_t d = static_cast<int64_t>(
      std::llround(7.0 * static_cast<double>(c.num_blocks) / 16.0));
  return std::clamp<int64_t>(d, 1, c.num_blocks - 1);
}

namespace {

ModelConfig conformer_base(int64_t blocks, int64_t dim, int64_t heads) {
  ModelConfig c;
  c.num_blocks = blocks;
  c.dim = dim;
  c.heads = heads;
  return c;
}

ModelConfig squeezeformer_base(int64_t blocks, int64_t dim, int64_t heads) {
  ModelConfig c;
  c.num_blocks = blocks;
  c.dim = dim;
  c.heads = heads;
  c.block_structure = BlockStructure::kMfCf;
  c.norm_scheme = NormScheme::kScaledPost;
  c.conv_activation = ConvActivation::kSwish;
  c.unet = true;
  // All published sizes keep the downsampling point at block 7; only depth
  // grows, so the extra blocks run at the reduced rate.
  c.downsample_after_block = 7;
  c.subsampling = SubsamplingKind::kDepthwiseSeparable;
  return c;
}

}  // namespace

ModelConfig preset(const std::string& name) {
  if (name == "conformer-ctc-s") return conformer_base(16, 144, 4);
  if (name == "conformer-ctc-m") return conformer_base(16, 256, 4);
  if (name == "conformer-ctc-l") return conformer_base(18, 512, 8);
  if (name == "squeezeformer-xs") return squeezeformer_base(16, 144, 4);
  if (name == "squeezeformer-s") return squeezeformer_base(18, 196, 4);
  if (name == "squeezeformer-sm") return squeezeformer_base(16, 256, 4);
  if (name == "squeezeformer-m") return squeezeformer_base(20, 324, 4);
  if (name == "squeezeformer-ml") return squeezeformer_base(18, 512, 8);
  if (name == "squeezeformer-l") return squeezeformer_base(22, 640, 8);
  if (name == "tiny") {
    ModelConfig c = squeezeformer_base(2, 32, 4);
    c.conv_kernel = 7;
    c.downsample_after_block = 1;
    c.input_feature_dim = 16;
    c.vocab_size = 8;
    c.dropout_rate = 0.0;
    c.attention_dropout_rate = 0.0;
    return c;
  }
  if (name == "tiny-conformer") {
    ModelConfig c = conformer_base(2, 32, 4);
    c.conv_kernel = 7;
    c.input_feature_dim = 16;
    c.vocab_size = 8;
    c.dropout_rate = 0.0;
    c.attention_dropout_rate = 0.0;
    return c;
  }
  throw ConfigError("unknown preset: " + name);
}

std::vector<std::string> preset_names() {
  return {"conformer-ctc-s", "conformer-ctc-m", "conformer-ctc-l",
          "squeezeformer-xs", "squeezeformer-s", "squeezeformer-sm",
          "squeezeformer-m", "squeezeformer-ml", "squeezeformer-l",
          "tiny", "tiny-conformer"};
}

std::vector<std::pair<std::string, ModelConfig>> ablation_ladder(
    const ModelConfig& base) {
  std::vector<std::pair<std::string, ModelConfig>> out;
  ModelConfig c = base;
  out.emplace_back("baseline", c);
  c.unet = true;
  c.downsample_after_block = std::min<int64_t>(7, c.num_blocks - 1);
  out.emplace_back("+temporal-unet", c);
  c.block_structure = BlockStructure::kMfCf;
  out.emplace_back("+transformer-style", c);
  c.conv_activation = ConvActivation::kSwish;
  out.emplace_back("+unified-swish", c);
  c.norm_scheme = NormScheme::kScaledPost;
  out.emplace_back("+scaled-postln", c);
  c.subsampling = SubsamplingKind::kDepthwiseSeparable;
  out.emplace_back("+dw-subsampling", c);
  return out;
}

std::string to_string(BlockStructure v) {
  return v == BlockStructure::kMacaronFmcf ? "fmcf-macaron" : "mf-cf";
}
std::string to_string(NormScheme v) {
  switch (v) {
    case NormScheme::kPrePost: return "pre+post";
    case NormScheme::kScaledPost: return "scaled-post";
    case NormScheme::kPostOnly: return "post-only";
  }
  return "?";
}
std::string to_string(ConvActivation v) {
  switch (v) {
    case ConvActivation::kGlu: return "glu";
    case ConvActivation::kSwish: return "swish";
    case ConvActivation::kNone: return "none";
  }
  return "?";
}
std::string to_string(PositionalScheme v) {
  return v == PositionalScheme::kRelative ? "relative" : "absolute";
}
std::string to_string(SubsamplingKind v) {
  return v == SubsamplingKind::kVanilla ? "vanilla" : "depthwise-separable";
}

BlockStructure block_structure_from_string(const std::string& s) {
  if (s == "fmcf-macaron") return BlockStructure::kMacaronFmcf;
  if (s == "mf-cf") return BlockStructure::kMfCf;
  throw ConfigError("block_structure: unknown value '" + s + "'");
}
NormScheme norm_scheme_from_string(const std::string& s) {
  if (s == "pre+post") return NormScheme::kPrePost;
  if (s == "scaled-post") return NormScheme::kScaledPost;
  if (s == "post-only") return NormScheme::kPostOnly;
  throw ConfigError("norm_scheme: unknown value '" + s + "'");
}
ConvActivation conv_activation_from_string(const std::string& s) {
  if (s == "glu") return ConvActivation::kGlu;
  if (s == "swish") return ConvActivation::kSwish;
  if (s == "none") return ConvActivation::kNone;
  throw ConfigError("conv_activation: unknown value '" + s + "'");
}
PositionalScheme positional_from_string(const std::string& s) {
  if (s == "relative") return PositionalScheme::kRelative;
  if (s == "absolute") return PositionalScheme::kAbsolute;
  throw ConfigError("positional: unknown value '" + s + "'");
}
SubsamplingKind subsampling_from_string(const std::string& s) {
  if (s == "vanilla") return SubsamplingKind::kVanilla;
  if (s == "depthwise-separable") return SubsamplingKind::kDepthwiseSeparable;
  throw ConfigError("subsampling: unknown value '" + s + "'");
}

}  // namespace sqz
