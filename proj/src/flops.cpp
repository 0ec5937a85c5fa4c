#include "sqz/flops.hpp"

#include <cmath>
#include <sstream>

#include <json.hpp>

namespace sqz {

namespace {

constexpr double kRelu = 1.0;
constexpr double kScaling = 2.0;
constexpr double kBatchNorm = 4.0;
constexpr double kSwish = 5.0;
constexpr double kGlu = 5.0;
constexpr double kSoftmax = 5.0;
constexpr double kLayerNorm = 8.0;

struct Counter {
  std::vector<FlopsEntry>* entries;

  void linear(const std::string& path, double n, double in, double out,
              bool bias = true) {
    const double macs = n * in * out;
    entries->push_back({path, macs, 2.0 * macs + (bias ? n * out : 0.0)});
  }
  void conv2d(const std::string& path, double positions, double k2, double in,
              double out) {
    const double macs = positions * k2 * in * out;
    entries->push_back({path, macs, 2.0 * macs + positions * out});
  }
  void depthwise(const std::string& path, double positions, double k,
                 double c) {
    const double macs = positions * k * c;
    entries->push_back({path, macs, 2.0 * macs + positions * c});
  }
  void elementwise(const std::string& path, double elems, double per_elem) {
    entries->push_back({path, 0.0, elems * per_elem});
  }
};

}  // namespace

double FlopsReport::total_macs() const {
  double s = 0.0;
  for (const auto& e : entries) s += e.macs;
  return s;
}

double FlopsReport::total_flops() const {
  double s = 0.0;
  for (const auto& e : entries) s += e.flops;
  return s;
}

double FlopsReport::flops_matching(const std::string& prefix) const {
  double s = 0.0;
  for (const auto& e : entries) {
    if (e.path.rfind(prefix, 0) == 0) s += e.flops;
  }
  return s;
}

std::string FlopsReport::to_text() const {
  std::ostringstream os;
  os.precision(17);
  for (const auto& e : entries) {
    os << e.path << "\t" << e.macs << "\t" << e.flops << "\n";
  }
  os << "total\t" << total_macs() << "\t" << total_flops() << "\n";
  return os.str();
}

std::string FlopsReport::to_json() const {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["seconds"] = seconds;
  j["frame_ms"] = frame_ms;
  j["frames"] = {{"input", input_frames},
                 {"conv1", conv1_frames},
                 {"blocks", block_frames},
                 {"reduced", reduced_frames}};
  j["entries"] = nlohmann::json::array();
  for (const auto& e : entries) {
    j["entries"].push_back(
        {{"path", e.path}, {"macs", e.macs}, {"flops", e.flops}});
  }
  j["total_macs"] = total_macs();
  j["total_flops"] = total_flops();
  return j.dump(2);
}

FlopsReport count_flops(const ModelConfig& c, double input_seconds,
                        double frame_ms) {
  validate(c);
  if (input_seconds <= 0.0) {
    throw ConfigError("input_seconds: must be positive, got " +
                      std::to_string(input_seconds));
  }
  if (frame_ms <= 0.0) {
    throw ConfigError("frame_ms: must be positive");
  }

  FlopsReport r;
  r.seconds = input_seconds;
  r.frame_ms = frame_ms;

  const int64_t t0 =
      static_cast<int64_t>(std::llround(input_seconds * 1000.0 / frame_ms));
  const int64_t t1 = (t0 + 1) / 2;
  const int64_t t2 = (t1 + 1) / 2;
  const int64_t t_half = (t2 + 1) / 2;
  r.input_frames = t0;
  r.conv1_frames = t1;
  r.block_frames = t2;

  Counter cnt{&r.entries};
  const double dim = static_cast<double>(c.dim);
  const double f1 = static_cast<double>((c.input_feature_dim + 1) / 2);
  const double f2 = static_cast<double>((((c.input_feature_dim + 1) / 2) + 1) / 2);

  // Subsampling front end.
  cnt.conv2d("subsample.conv1", static_cast<double>(t1) * f1, 9.0, 1.0, dim);
  cnt.elementwise("subsample.act1", static_cast<double>(t1) * f1 * dim, kRelu);
  if (c.subsampling == SubsamplingKind::kVanilla) {
    cnt.conv2d("subsample.conv2", static_cast<double>(t2) * f2, 9.0, dim, dim);
  } else {
    cnt.depthwise("subsample.conv2.dw", static_cast<double>(t2) * f2, 9.0, dim);
    cnt.linear("subsample.conv2.pw", static_cast<double>(t2) * f2, dim, dim);
  }
  cnt.elementwise("subsample.act2", static_cast<double>(t2) * f2 * dim, kRelu);
  cnt.linear("subsample.proj", static_cast<double>(t2), dim * f2, dim);

  // Block stack; the U-Net halves the rate for blocks D..n-2 (0-based).
  const int64_t d_block = c.unet ? resolve_downsample_block(c) : 0;
  if (c.unet) r.reduced_frames = t_half;
  const double inner =
      c.conv_activation == ConvActivation::kGlu ? dim : 2.0 * dim;

  for (int64_t i = 0; i < c.num_blocks; ++i) {
    const bool reduced = c.unet && i >= d_block && i < c.num_blocks - 1;
    const double t = static_cast<double>(reduced ? t_half : t2);
    const std::string p = "blocks." + std::to_string(i) + ".";

    // Two feed-forward modules.
    for (const char* f : {"ffn1.", "ffn2."}) {
      cnt.linear(p + f + "lin1", t, dim, dim * static_cast<double>(c.ffn_expansion));
      cnt.elementwise(p + f + "act", t * dim * static_cast<double>(c.ffn_expansion),
                      kSwish);
      cnt.linear(p + f + "lin2", t, dim * static_cast<double>(c.ffn_expansion), dim);
    }

    // Attention module.
    cnt.linear(p + "mha.q", t, dim, dim);
    cnt.linear(p + "mha.k", t, dim, dim);
    cnt.linear(p + "mha.v", t, dim, dim);
    cnt.linear(p + "mha.out", t, dim, dim);
    if (c.positional == PositionalScheme::kRelative) {
      cnt.linear(p + "mha.pos_proj", 2.0 * t - 1.0, dim, dim, /*bias=*/false);
    }
    const double pair_macs = t * t * dim;
    r.entries.push_back({p + "mha.pairwise", pair_macs, 2.0 * pair_macs});
    cnt.elementwise(p + "mha.softmax",
                    static_cast<double>(c.heads) * t * t, kSoftmax);

    // Convolution module.
    cnt.linear(p + "conv.pw1", t, dim, 2.0 * dim);
    if (c.conv_activation == ConvActivation::kGlu) {
      cnt.elementwise(p + "conv.gate", t * dim, kGlu);
    } else if (c.conv_activation == ConvActivation::kSwish) {
      cnt.elementwise(p + "conv.gate", t * 2.0 * dim, kSwish);
    }
    cnt.depthwise(p + "conv.dw", t, static_cast<double>(c.conv_kernel), inner);
    cnt.elementwise(p + "conv.norm", t * inner, kBatchNorm);
    cnt.elementwise(p + "conv.act", t * inner, kSwish);
    cnt.linear(p + "conv.pw2", t, inner, dim);

    // Norms and scalings around the four modules.
    double norm_flops = 0.0;
    switch (c.norm_scheme) {
      case NormScheme::kPrePost:
        norm_flops = t * dim * (4.0 * kLayerNorm + kLayerNorm);  // 4 pre + final
        break;
      case NormScheme::kScaledPost:
        norm_flops = t * dim * 4.0 * (kScaling + kLayerNorm);
        break;
      case NormScheme::kPostOnly:
        norm_flops = t * dim * 4.0 * kLayerNorm;
        break;
    }
    r.entries.push_back({p + "norms", 0.0, norm_flops});
  }

  if (c.unet) {
    cnt.depthwise("resampler.down.dw", static_cast<double>(t_half), 3.0, dim);
    cnt.linear("resampler.down.pw", static_cast<double>(t_half), dim, dim);
    cnt.linear("resampler.up.proj", static_cast<double>(t2), dim, dim);
  }

  cnt.linear("ctc.proj", static_cast<double>(t2), dim,
             static_cast<double>(c.vocab_size + 1));
  return r;
}

}  // namespace sqz
