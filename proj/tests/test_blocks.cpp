#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "grad_check.hpp"
#include "sqz/flops.hpp"
#include "sqz/model.hpp"
#include "sqz/modules.hpp"

using namespace sqz;

namespace {

void randomize(const TensorPtr& t, Rng& rng, double scale = 0.5) {
  for (auto& v : t->data) v = rng.uniform(-scale, scale);
}

TensorPtr random_input(int64_t t, int64_t c, Rng& rng) {
  auto x = zeros({t, c});
  for (auto& v : x->data) v = rng.uniform(-1.0, 1.0);
  return x;
}

std::vector<TensorPtr> module_params(const EncoderBlock& b) {
  ParamList pl;
  collect_params("b", b, pl);
  std::vector<TensorPtr> out;
  for (auto& [n, t] : pl.params) out.push_back(t);
  return out;
}

double sigmoid_ref(double v) { return 1.0 / (1.0 + std::exp(-v)); }

}  // namespace

TEST_CASE("ffn wrapped with zero weights is a passthrough") {
  Rng rng(1);
  auto ffn = make_ffn(6, 4, 0.0, rng);
  std::fill(ffn.lin1.w->data.begin(), ffn.lin1.w->data.end(), 0.0);
  std::fill(ffn.lin2.w->data.begin(), ffn.lin2.w->data.end(), 0.0);
  auto wrap = make_wrapper(6, NormScheme::kPrePost, 0.5);
  Graph g;
  Ctx ctx{g};
  auto x = random_input(5, 6, rng);
  auto y = wrapped_forward(ctx, wrap, x,
                           [&](const TensorPtr& h) { return ffn_body(ctx, ffn, h); });
  CHECK(y->data == x->data);
}

TEST_CASE("half-step residual differs from full step by half the body") {
  Rng rng(2);
  auto ffn = make_ffn(6, 4, 0.0, rng);
  Graph g;
  Ctx ctx{g};
  auto x = random_input(4, 6, rng);
  auto body = [&](const TensorPtr& h) { return ffn_body(ctx, ffn, h); };
  auto whalf = make_wrapper(6, NormScheme::kPrePost, 0.5);
  auto wfull = make_wrapper(6, NormScheme::kPrePost, 1.0);
  // Same pre-norm weights so both see the same body input.
  wfull.pre_norm = whalf.pre_norm;
  auto yh = wrapped_forward(ctx, whalf, x, body);
  auto yf = wrapped_forward(ctx, wfull, x, body);
  // y(1.0) - y(0.5) == y(0.5) - x == 0.5 * body
  for (int64_t i = 0; i < x->numel(); ++i) {
    const double lhs = yf->data[i] - yh->data[i];
    const double rhs = yh->data[i] - x->data[i];
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  }
}

TEST_CASE("ffn gradients match finite differences") {
  Rng rng(3);
  auto ffn = make_ffn(5, 2, 0.0, rng);
  auto wrap = make_wrapper(5, NormScheme::kScaledPost, 0.5);
  auto x = random_input(4, 5, rng);
  std::vector<TensorPtr> params = {ffn.lin1.w,      ffn.lin1.b,
                                   ffn.lin2.w,      ffn.lin2.b,
                                   wrap.scaling.gamma, wrap.scaling.beta,
                                   wrap.post_norm.gamma, wrap.post_norm.beta};
  CHECK(testing::max_grad_discrepancy(params, [&](Graph& g) {
          Ctx ctx{g};
          auto y = wrapped_forward(ctx, wrap, x, [&](const TensorPtr& h) {
            return ffn_body(ctx, ffn, h);
          });
          return mean_all(g, y);
        }) < 1e-4);
}

TEST_CASE("single-position attention reduces to the value path") {
  Rng rng(4);
  auto mha = make_mha(8, 2, PositionalScheme::kRelative, 0.0, 0.0, rng);
  Graph g;
  Ctx ctx{g};
  auto x = random_input(1, 8, rng);
  auto y = mha_body(ctx, mha, x);
  // Attention over one position is exactly 1; output = out(v(x)).
  auto v = linear_forward(g, mha.v, x);
  auto expect = linear_forward(g, mha.out, v);
  for (int64_t i = 0; i < y->numel(); ++i) {
    CHECK(y->data[i] == doctest::Approx(expect->data[i]).epsilon(1e-12));
  }
}

TEST_CASE("uniform value rows give uniform attention outputs") {
  Rng rng(5);
  auto mha = make_mha(8, 2, PositionalScheme::kRelative, 0.0, 0.0, rng);
  std::fill(mha.v.w->data.begin(), mha.v.w->data.end(), 0.0);
  for (int64_t i = 0; i < 8; ++i) mha.v.b->data[i] = 0.1 * static_cast<double>(i);
  Graph g;
  Ctx ctx{g};
  auto x = random_input(7, 8, rng);
  auto y = mha_body(ctx, mha, x);
  for (int64_t t = 1; t < 7; ++t) {
    for (int64_t c = 0; c < 8; ++c) {
      CHECK(y->data[t * 8 + c] == doctest::Approx(y->data[c]).epsilon(1e-10));
    }
  }
}

TEST_CASE("relative attention matches a hand-rolled dense oracle at T=3") {
  Rng rng(6);
  const int64_t T = 3, C = 8, H = 2, D = C / H;
  auto mha = make_mha(C, H, PositionalScheme::kRelative, 0.0, 0.0, rng);
  auto x = random_input(T, C, rng);

  Graph g;
  Ctx ctx{g};
  auto y = mha_body(ctx, mha, x);

  // Oracle: explicit loops over heads, positions and channels.
  auto apply_linear = [&](const Linear& lin, const TensorPtr& in,
                          std::vector<double>& out, int64_t rows) {
    const int64_t cin = lin.w->dim(0), cout = lin.w->dim(1);
    out.assign(static_cast<size_t>(rows * cout), 0.0);
    for (int64_t r = 0; r < rows; ++r)
      for (int64_t o = 0; o < cout; ++o) {
        double acc = lin.b ? lin.b->data[o] : 0.0;
        for (int64_t i = 0; i < cin; ++i)
          acc += in->data[r * cin + i] * lin.w->data[i * cout + o];
        out[r * cout + o] = acc;
      }
  };
  std::vector<double> q, k, v, p;
  apply_linear(mha.q, x, q, T);
  apply_linear(mha.k, x, k, T);
  apply_linear(mha.v, x, v, T);
  auto pos_table = sinusoid_relative(T, C);
  apply_linear(mha.pos, pos_table, p, 2 * T - 1);

  std::vector<double> ctx_rows(static_cast<size_t>(T * C), 0.0);
  for (int64_t h = 0; h < H; ++h) {
    for (int64_t i = 0; i < T; ++i) {
      std::vector<double> score(static_cast<size_t>(T));
      for (int64_t j = 0; j < T; ++j) {
        double ac = 0.0, bd = 0.0;
        for (int64_t d = 0; d < D; ++d) {
          const double qu = q[i * C + h * D + d] + mha.pos_bias_u->data[h * D + d];
          const double qv = q[i * C + h * D + d] + mha.pos_bias_v->data[h * D + d];
          ac += qu * k[j * C + h * D + d];
          bd += qv * p[(T - 1 - i + j) * C + h * D + d];
        }
        score[static_cast<size_t>(j)] =
            (ac + bd) / std::sqrt(static_cast<double>(D));
      }
      double mx = score[0];
      for (double s : score) mx = std::max(mx, s);
      double denom = 0.0;
      for (auto& s : score) {
        s = std::exp(s - mx);
        denom += s;
      }
      for (int64_t j = 0; j < T; ++j) {
        for (int64_t d = 0; d < D; ++d) {
          ctx_rows[i * C + h * D + d] +=
              score[static_cast<size_t>(j)] / denom * v[j * C + h * D + d];
        }
      }
    }
  }
  std::vector<double> expect;
  auto ctx_tensor = tensor({T, C}, ctx_rows);
  apply_linear(mha.out, ctx_tensor, expect, T);
  for (int64_t i = 0; i < y->numel(); ++i) {
    CHECK(std::fabs(y->data[i] - expect[static_cast<size_t>(i)]) < 1e-10);
  }
}

TEST_CASE("attention outputs stay in the convex hull of values") {
  Rng rng(7);
  auto mha = make_mha(4, 1, PositionalScheme::kRelative, 0.0, 0.0, rng);
  // Identity value and output projections expose the raw attention mix.
  std::fill(mha.v.w->data.begin(), mha.v.w->data.end(), 0.0);
  std::fill(mha.out.w->data.begin(), mha.out.w->data.end(), 0.0);
  for (int64_t i = 0; i < 4; ++i) {
    mha.v.w->data[i * 4 + i] = 1.0;
    mha.out.w->data[i * 4 + i] = 1.0;
  }
  Graph g;
  Ctx ctx{g};
  auto x = random_input(9, 4, rng);
  auto y = mha_body(ctx, mha, x);
  for (int64_t c = 0; c < 4; ++c) {
    double lo = x->data[c], hi = x->data[c];
    for (int64_t t = 0; t < 9; ++t) {
      lo = std::min(lo, x->data[t * 4 + c]);
      hi = std::max(hi, x->data[t * 4 + c]);
    }
    for (int64_t t = 0; t < 9; ++t) {
      CHECK(y->data[t * 4 + c] >= lo - 1e-9);
      CHECK(y->data[t * 4 + c] <= hi + 1e-9);
    }
  }
}

TEST_CASE("mha gradients match finite differences (both positional schemes)") {
  Rng rng(8);
  for (auto scheme : {PositionalScheme::kRelative, PositionalScheme::kAbsolute}) {
    auto mha = make_mha(6, 2, scheme, 0.0, 0.0, rng);
    auto x = random_input(4, 6, rng);
    std::vector<TensorPtr> params = {mha.q.w, mha.k.w, mha.v.w, mha.out.w,
                                     mha.q.b, mha.out.b};
    if (scheme == PositionalScheme::kRelative) {
      params.push_back(mha.pos.w);
      params.push_back(mha.pos_bias_u);
      params.push_back(mha.pos_bias_v);
    }
    CHECK(testing::max_grad_discrepancy(params, [&](Graph& g) {
            Ctx ctx{g};
            return mean_all(g, mha_body(ctx, mha, x));
          }) < 1e-4);
  }
}

TEST_CASE("single-head attention with odd width gradient-checks") {
  Rng rng(64);
  auto mha = make_mha(5, 1, PositionalScheme::kRelative, 0.0, 0.0, rng);
  auto x = random_input(4, 5, rng);
  CHECK(testing::max_grad_discrepancy(
            {mha.q.w, mha.k.w, mha.v.w, mha.out.w, mha.pos.w, mha.pos_bias_u,
             mha.pos_bias_v},
            [&](Graph& g) {
              Ctx ctx{g};
              return mean_all(g, mha_body(ctx, mha, x));
            }) < 1e-4);
}

TEST_CASE("conv module with delta kernel reduces to its activations") {
  Rng rng(9);
  const int64_t C = 2;
  auto m = make_conv_module(C, 3, ConvActivation::kSwish, 0.0, rng);
  // pw1 duplicates the input into both halves of the expansion.
  std::fill(m.pw1.w->data.begin(), m.pw1.w->data.end(), 0.0);
  for (int64_t i = 0; i < C; ++i) {
    m.pw1.w->data[i * 2 * C + i] = 1.0;
    m.pw1.w->data[i * 2 * C + C + i] = 1.0;
  }
  std::fill(m.pw1.b->data.begin(), m.pw1.b->data.end(), 0.0);
  // Centered delta depthwise kernel: the conv is the identity.
  std::fill(m.dw_w->data.begin(), m.dw_w->data.end(), 0.0);
  for (int64_t ch = 0; ch < 2 * C; ++ch) m.dw_w->data[ch * 3 + 1] = 1.0;
  std::fill(m.dw_b->data.begin(), m.dw_b->data.end(), 0.0);
  // pw2 picks the first half.
  std::fill(m.pw2.w->data.begin(), m.pw2.w->data.end(), 0.0);
  for (int64_t i = 0; i < C; ++i) m.pw2.w->data[i * C + i] = 1.0;
  std::fill(m.pw2.b->data.begin(), m.pw2.b->data.end(), 0.0);

  Graph g;
  Ctx ctx{g, /*training=*/false};  // batch norm uses running stats (0, 1)
  auto x = tensor({4, 2}, {0.5, -0.25, 1.0, 0.0, -1.5, 2.0, 0.75, -0.5});
  auto y = conv_module_body(ctx, m, x);
  const double bn_scale = 1.0 / std::sqrt(1.0 + 1e-5);
  for (int64_t i = 0; i < x->numel(); ++i) {
    const double a = x->data[i] * sigmoid_ref(x->data[i]);  // gate swish
    const double b = a * bn_scale;                          // norm, eval stats
    const double expect = b * sigmoid_ref(b);               // second swish
    CHECK(y->data[i] == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("glu and swish conv variants share shapes, differ by the param formula") {
  Rng rng(10);
  const int64_t C = 6, K = 5;
  auto glu_mod = make_conv_module(C, K, ConvActivation::kGlu, 0.0, rng);
  auto swish_mod = make_conv_module(C, K, ConvActivation::kSwish, 0.0, rng);
  Graph g;
  Ctx ctx{g};
  auto x = random_input(7, C, rng);
  CHECK(conv_module_body(ctx, glu_mod, x)->shape == x->shape);
  CHECK(conv_module_body(ctx, swish_mod, x)->shape == x->shape);

  auto count = [](const ConvModule& m) {
    int64_t n = m.pw1.w->numel() + m.pw1.b->numel() + m.dw_w->numel() +
                m.dw_b->numel() + m.norm.gamma->numel() +
                m.norm.beta->numel() + m.pw2.w->numel() + m.pw2.b->numel();
    return n;
  };
  // Swish keeps the expanded width: + C^2 + kC + 3C parameters.
  CHECK(count(swish_mod) - count(glu_mod) == C * C + K * C + 3 * C);
}

TEST_CASE("conv module gradients match finite differences") {
  Rng rng(11);
  for (auto act : {ConvActivation::kGlu, ConvActivation::kSwish,
                   ConvActivation::kNone}) {
    auto m = make_conv_module(4, 3, act, 0.0, rng);
    auto x = random_input(5, 4, rng);
    std::vector<TensorPtr> params = {m.pw1.w, m.pw1.b, m.dw_w, m.dw_b,
                                     m.norm.gamma, m.norm.beta, m.pw2.w,
                                     m.pw2.b};
    CHECK(testing::max_grad_discrepancy(params, [&](Graph& g) {
            Ctx ctx{g, /*training=*/true};
            return mean_all(g, conv_module_body(ctx, m, x));
          }) < 1e-4);
  }
}

TEST_CASE("scaled-post wrapper oracles") {
  Rng rng(12);
  auto wrap = make_wrapper(5, NormScheme::kScaledPost, 1.0);
  auto x = random_input(4, 5, rng);
  Graph g;
  Ctx ctx{g};
  // Zero body: y = LN(x).
  auto zero_body = [&](const TensorPtr& h) {
    return scale(ctx.g, h, 0.0);
  };
  auto y = wrapped_forward(ctx, wrap, x, zero_body);
  auto expect = layer_norm_forward(g, wrap.post_norm, x);
  CHECK(y->data == expect->data);

  // gamma = 0: the body input is the constant beta, independent of x.
  std::fill(wrap.scaling.gamma->data.begin(), wrap.scaling.gamma->data.end(),
            0.0);
  for (int64_t i = 0; i < 5; ++i) wrap.scaling.beta->data[i] = 0.1 * static_cast<double>(i + 1);
  TensorPtr seen1, seen2;
  auto capture = [&](const TensorPtr& h) {
    seen1 = h;
    return scale(ctx.g, h, 0.0);
  };
  wrapped_forward(ctx, wrap, x, capture);
  auto x2 = random_input(4, 5, rng);
  auto capture2 = [&](const TensorPtr& h) {
    seen2 = h;
    return scale(ctx.g, h, 0.0);
  };
  wrapped_forward(ctx, wrap, x2, capture2);
  CHECK(seen1->data == seen2->data);  // gate closed: no signal from x
  for (int64_t t = 0; t < 4; ++t)
    for (int64_t c = 0; c < 5; ++c)
      CHECK(seen1->data[t * 5 + c] == wrap.scaling.beta->data[c]);
}

TEST_CASE("pre+post and scaled-post wrappers differ but both gradient-check") {
  Rng rng(13);
  auto ffn = make_ffn(4, 2, 0.0, rng);
  auto x = random_input(3, 4, rng);
  auto wp = make_wrapper(4, NormScheme::kPrePost, 1.0);
  auto ws = make_wrapper(4, NormScheme::kScaledPost, 1.0);
  Graph g;
  Ctx ctx{g};
  auto body = [&](const TensorPtr& h) { return ffn_body(ctx, ffn, h); };
  auto yp = wrapped_forward(ctx, wp, x, body);
  auto ys = wrapped_forward(ctx, ws, x, body);
  double max_diff = 0.0;
  for (int64_t i = 0; i < yp->numel(); ++i) {
    max_diff = std::max(max_diff, std::fabs(yp->data[i] - ys->data[i]));
  }
  CHECK(max_diff > 1e-6);  // genuinely different schemes

  for (auto scheme : {NormScheme::kPrePost, NormScheme::kScaledPost}) {
    auto w = make_wrapper(4, scheme, 1.0);
    std::vector<TensorPtr> params = {ffn.lin1.w, ffn.lin2.w};
    if (scheme == NormScheme::kPrePost) {
      params.push_back(w.pre_norm.gamma);
      params.push_back(w.pre_norm.beta);
    } else {
      params.push_back(w.scaling.gamma);
      params.push_back(w.scaling.beta);
    }
    CHECK(testing::max_grad_discrepancy(params, [&](Graph& g2) {
            Ctx c2{g2};
            return mean_all(g2, wrapped_forward(c2, w, x, [&](const TensorPtr& h) {
                              return ffn_body(c2, ffn, h);
                            }));
          }) < 1e-4);
  }
}

TEST_CASE("merge_scaling oracles") {
  Rng rng(14);
  // Identity merge.
  auto s = make_scaling(4);
  auto lin = make_linear(4, 3, rng);
  auto merged = merge_scaling(s, lin);
  CHECK(merged.w->data == lin.w->data);
  CHECK(merged.b->data == lin.b->data);

  // gamma = 2, W = I: merged weight is 2I.
  ScalingLayer s2{full({3}, 2.0), zeros({3})};
  Linear eye;
  eye.w = zeros({3, 3});
  for (int64_t i = 0; i < 3; ++i) eye.w->data[i * 3 + i] = 1.0;
  eye.b = zeros({3});
  auto m2 = merge_scaling(s2, eye);
  for (int64_t i = 0; i < 3; ++i)
    for (int64_t j = 0; j < 3; ++j)
      CHECK(m2.w->data[i * 3 + j] == (i == j ? 2.0 : 0.0));

  // 100 random instances: merged and unmerged forwards agree to 1e-12.
  for (int trial = 0; trial < 100; ++trial) {
    const int64_t in = 1 + static_cast<int64_t>(rng.uniform_int(1, 8));
    const int64_t out = 1 + static_cast<int64_t>(rng.uniform_int(1, 8));
    auto sc = make_scaling(in);
    randomize(sc.gamma, rng, 2.0);
    randomize(sc.beta, rng, 2.0);
    auto l = make_linear(in, out, rng);
    randomize(l.w, rng);
    randomize(l.b, rng);
    auto mg = merge_scaling(sc, l);
    auto x = random_input(3, in, rng);
    Graph g;
    auto y1 = linear_forward(g, l, scaling_forward(g, sc, x));
    auto y2 = linear_forward(g, mg, x);
    for (int64_t i = 0; i < y1->numel(); ++i) {
      CHECK(std::fabs(y1->data[i] - y2->data[i]) < 1e-12);
    }
  }

  ScalingLayer bad{full({5}, 1.0), zeros({5})};
  CHECK_THROWS_AS(merge_scaling(bad, lin), std::invalid_argument);
}

TEST_CASE("subsampling output lengths and projection dim") {
  Rng rng(15);
  auto sub = make_subsampling(80, 8, SubsamplingKind::kVanilla, rng);
  Graph g;
  Ctx ctx{g};
  auto x = random_input(3000, 80, rng);
  auto y = subsampling_forward(ctx, sub, x);
  CHECK(y->shape == std::vector<int64_t>{750, 8});

  auto x1 = random_input(1, 80, rng);
  CHECK(subsampling_forward(ctx, sub, x1)->shape == std::vector<int64_t>{1, 8});

  auto bad = random_input(10, 40, rng);
  CHECK_THROWS_AS(subsampling_forward(ctx, sub, bad), std::invalid_argument);
}

TEST_CASE("depthwise-separable subsampling saves the analytic MAC ratio") {
  ModelConfig c = preset("conformer-ctc-m");
  auto vanilla = count_flops(c, 30.0);
  c.subsampling = SubsamplingKind::kDepthwiseSeparable;
  auto dws = count_flops(c, 30.0);
  double van_macs = 0.0, dws_macs = 0.0;
  for (const auto& e : vanilla.entries) {
    if (e.path == "subsample.conv2") van_macs = e.macs;
  }
  for (const auto& e : dws.entries) {
    if (e.path.rfind("subsample.conv2", 0) == 0) dws_macs += e.macs;
  }
  // Per position: depthwise 9C + pointwise C^2 vs dense 9C^2.
  const double C = static_cast<double>(c.dim);
  const double expect = (9.0 * C + C * C) / (9.0 * C * C);
  CHECK(dws_macs / van_macs == doctest::Approx(expect).epsilon(1e-9));
}

TEST_CASE("temporal resampler lengths") {
  Rng rng(16);
  auto r = make_resampler(4, rng);
  Graph g;
  Ctx ctx{g};
  auto x750 = random_input(750, 4, rng);
  CHECK(downsample(ctx, r, x750).first->dim(0) == 375);
  auto x751 = random_input(751, 4, rng);
  CHECK(downsample(ctx, r, x751).first->dim(0) == 376);
}

TEST_CASE("downsample with delta kernel and identity pointwise selects strided frames") {
  Rng rng(17);
  auto r = make_resampler(3, rng);
  std::fill(r.down_dw_w->data.begin(), r.down_dw_w->data.end(), 0.0);
  for (int64_t ch = 0; ch < 3; ++ch) r.down_dw_w->data[ch * 3 + 0] = 1.0;
  std::fill(r.down_dw_b->data.begin(), r.down_dw_b->data.end(), 0.0);
  std::fill(r.down_pw.w->data.begin(), r.down_pw.w->data.end(), 0.0);
  for (int64_t i = 0; i < 3; ++i) r.down_pw.w->data[i * 3 + i] = 1.0;
  std::fill(r.down_pw.b->data.begin(), r.down_pw.b->data.end(), 0.0);

  Graph g;
  Ctx ctx{g};
  auto x = random_input(8, 3, rng);  // even length: no left pad, tap 0 hits 2t
  auto [y, skip] = downsample(ctx, r, x);
  CHECK(skip.get() == x.get());
  REQUIRE(y->dim(0) == 4);
  for (int64_t t = 0; t < 4; ++t)
    for (int64_t c = 0; c < 3; ++c)
      CHECK(y->data[t * 3 + c] == doctest::Approx(x->data[2 * t * 3 + c]).epsilon(1e-12));
}

TEST_CASE("upsample oracles") {
  Rng rng(18);
  auto r = make_resampler(3, rng);
  Graph g;
  Ctx ctx{g};

  // Zero low-rate input: output equals the skip exactly.
  auto skip = random_input(5, 3, rng);
  auto y0 = zeros({3, 3});
  auto up = upsample(ctx, r, y0, skip);
  REQUIRE(up->shape == skip->shape);
  for (int64_t i = 0; i < up->numel(); ++i) {
    const double bias_part = r.up_proj.b->data[i % 3];
    CHECK(up->data[i] == doctest::Approx(skip->data[i] + bias_part).epsilon(1e-12));
  }

  // Identity projection, zero skip: frames are duplicated (and truncated).
  std::fill(r.up_proj.w->data.begin(), r.up_proj.w->data.end(), 0.0);
  for (int64_t i = 0; i < 3; ++i) r.up_proj.w->data[i * 3 + i] = 1.0;
  std::fill(r.up_proj.b->data.begin(), r.up_proj.b->data.end(), 0.0);
  auto y = random_input(3, 3, rng);
  auto zero_skip = zeros({5, 3});
  auto up2 = upsample(ctx, r, y, zero_skip);
  for (int64_t t = 0; t < 5; ++t)
    for (int64_t c = 0; c < 3; ++c)
      CHECK(up2->data[t * 3 + c] == doctest::Approx(y->data[(t / 2) * 3 + c]).epsilon(1e-12));

  // Length precondition.
  auto y_bad = random_input(4, 3, rng);
  CHECK_THROWS_AS(upsample(ctx, r, y_bad, skip), std::invalid_argument);
}

TEST_CASE("upsample(downsample(x)) restores the temporal length for T=1..64") {
  Rng rng(19);
  auto r = make_resampler(2, rng);
  for (int64_t t = 1; t <= 64; ++t) {
    Graph g(false);
    Ctx ctx{g};
    auto x = random_input(t, 2, rng);
    auto [y, skip] = downsample(ctx, r, x);
    auto up = upsample(ctx, r, y, skip);
    CHECK(up->dim(0) == t);
  }
}

TEST_CASE("module shape preservation across sequence lengths") {
  Rng rng(20);
  const int64_t C = 8;
  auto ffn = make_ffn(C, 2, 0.0, rng);
  auto mha = make_mha(C, 2, PositionalScheme::kRelative, 0.0, 0.0, rng);
  auto conv = make_conv_module(C, 3, ConvActivation::kSwish, 0.0, rng);
  auto wrap = make_wrapper(C, NormScheme::kScaledPost, 1.0);
  for (int64_t t : {1, 2, 5, 31, 100}) {
    Graph g(false);
    Ctx ctx{g};
    auto x = random_input(t, C, rng);
    CHECK(wrapped_forward(ctx, wrap, x, [&](const TensorPtr& h) {
            return ffn_body(ctx, ffn, h);
          })->shape == x->shape);
    CHECK(wrapped_forward(ctx, wrap, x, [&](const TensorPtr& h) {
            return mha_body(ctx, mha, h);
          })->shape == x->shape);
    CHECK(wrapped_forward(ctx, wrap, x, [&](const TensorPtr& h) {
            return conv_module_body(ctx, conv, h);
          })->shape == x->shape);
  }
}

TEST_CASE("block gradients match finite differences (both structures)") {
  Rng rng(21);
  ModelConfig cfg;
  cfg.num_blocks = 1;
  cfg.dim = 6;
  cfg.heads = 2;
  cfg.conv_kernel = 3;
  cfg.ffn_expansion = 2;
  cfg.dropout_rate = 0.0;
  cfg.attention_dropout_rate = 0.0;
  for (auto structure : {BlockStructure::kMacaronFmcf, BlockStructure::kMfCf}) {
    cfg.block_structure = structure;
    cfg.norm_scheme = structure == BlockStructure::kMacaronFmcf
                          ? NormScheme::kPrePost
                          : NormScheme::kScaledPost;
    auto model = build(cfg, 77);
    auto& block = model.blocks[0];
    auto x = random_input(5, 6, rng);
    CHECK(testing::max_grad_discrepancy(
              module_params(block),
              [&](Graph& g) {
                Ctx ctx{g, /*training=*/true};
                return mean_all(g, block_forward(ctx, block, x));
              },
              /*indices_per_tensor=*/12) < 1e-4);
  }
}

TEST_CASE("identity scaling makes scaled-post bit-identical to post-only") {
  Rng rng(22);
  auto ffn = make_ffn(5, 2, 0.0, rng);
  auto x = random_input(4, 5, rng);
  auto ws = make_wrapper(5, NormScheme::kScaledPost, 1.0);
  auto wp = make_wrapper(5, NormScheme::kPostOnly, 1.0);
  wp.post_norm = ws.post_norm;
  Graph g;
  Ctx ctx{g};
  auto body = [&](const TensorPtr& h) { return ffn_body(ctx, ffn, h); };
  auto ys = wrapped_forward(ctx, ws, x, body);
  auto yp = wrapped_forward(ctx, wp, x, body);
  CHECK(ys->data == yp->data);
}
