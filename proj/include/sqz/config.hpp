#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "sqz/modules.hpp"

namespace sqz {

// Raised for invalid model configurations; the message names the offending
// field.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Full architectural genotype. The Conformer baseline is the all-default
// toggle set (macaron FMCF blocks, pre+post norms, GLU conv gate, no U-Net,
// vanilla subsampling); flipping the five toggles one by one walks the same
// ladder as the Conformer -> Squeezeformer redesign.
struct ModelConfig {
  int64_t num_blocks = 16;
  int64_t dim = 256;
  int64_t heads = 4;
  int64_t conv_kernel = 31;
  int64_t ffn_expansion = 4;
  BlockStructure block_structure = BlockStructure::kMacaronFmcf;
  NormScheme norm_scheme = NormScheme::kPrePost;
  ConvActivation conv_activation = ConvActivation::kGlu;
  PositionalScheme positional = PositionalScheme::kRelative;
  bool unet = false;
  // Downsample after this many blocks (1-based); 0 picks the default rule
  // round(7 * num_blocks / 16) clamped to [1, num_blocks - 1].
  int64_t downsample_after_block = 0;
  SubsamplingKind subsampling = SubsamplingKind::kVanilla;
  int64_t input_feature_dim = 80;
  int64_t vocab_size = 128;
  double dropout_rate = 0.1;
  double attention_dropout_rate = 0.1;
};

// Throws ConfigError when an invariant is violated.
void validate(const ModelConfig& config);

// Effective downsample position (resolves the 0 = auto rule).
int64_t resolve_downsample_block(const ModelConfig& config);

// Named configurations: conformer-ctc-{s,m,l}, squeezeformer-{xs,s,sm,m,ml,l}
// plus the desk-scale presets tiny and tiny-conformer. Unknown names throw
// ConfigError.
ModelConfig preset(const std::string& name);
std::vector<std::string> preset_names();

// The six-step redesign ladder starting from a Conformer-style base config:
// baseline, +temporal U-Net, +transformer-style block, +unified Swish,
// +scaled postLN, +depthwise-separable subsampling. Each step flips exactly
// one toggle of the previous one.
std::vector<std::pair<std::string, ModelConfig>> ablation_ladder(
    const ModelConfig& base);

std::string to_string(BlockStructure v);
std::string to_string(NormScheme v);
std::string to_string(ConvActivation v);
std::string to_string(PositionalScheme v);
std::string to_string(SubsamplingKind v);

BlockStructure block_structure_from_string(const std::string& s);
NormScheme norm_scheme_from_string(const std::string& s);
ConvActivation conv_activation_from_string(const std::string& s);
PositionalScheme positional_from_string(const std::string& s);
SubsamplingKind subsampling_from_string(const std::string& s);

}  // namespace sqz
