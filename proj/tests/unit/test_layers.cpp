// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "core/error.hpp"
#include "layers/attention.hpp"
#include "layers/contextnet.hpp"
#include "layers/recurrent.hpp"
#include "layers/subsample.hpp"
#include "support/testing.hpp"

using namespace phonebench;
using phonebench::testing::grad_check;
using phonebench::testing::max_abs_diff;
using phonebench::testing::random_projection_loss;
using phonebench::testing::random_tensor;

namespace {

void fill(Tensor t, double v) {
  for (auto& x : t.mutable_values()) x = v;
}

std::vector<Tensor> params_of(ParamCollector& c) {
  std::vector<Tensor> out;
  for (auto& p : c.parameters) out.push_back(p.tensor);
  return out;
}

template <typename F>
void expect_gradients(F forward, ParamCollector& col, Tensor input, std::uint64_t seed) {
  auto inputs = params_of(col);
  input.set_requires_grad(true);
  inputs.push_back(input);
  auto res = grad_check([&] { return random_projection_loss(forward(input), seed); }, inputs, 100, seed);
  EXPECT_LT(res.max_rel_error, 1e-4);
  EXPECT_GE(res.probes, 100u);
}

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }
double swish(double v) { return v * sigmoid(v); }

}  // namespace

TEST(DSConv, DeltaIdentityPreActivation) {
  Rng rng(1);
  DSConvLayer layer(4, 4, 5, rng);
  fill(layer.depthwise, 0.0);
  for (std::size_t c = 0; c < 4; ++c) layer.depthwise.mutable_values()[c * 5 + 2] = 1.0;
  fill(layer.pointwise, 0.0);
  for (std::size_t c = 0; c < 4; ++c) layer.pointwise.mutable_values()[c * 4 + c] = 1.0;
  fill(layer.pointwise_bias, 0.0);
  Tensor x = random_tensor({4, 9}, rng);
  ForwardContext ctx;
  // Running stats (0, 1) with eps -> 0 make BatchNorm the identity.
  layer.norm.eps = 0.0;
  EXPECT_LT(max_abs_diff(layer.pre_activation(x, ctx).values(), x.values()), 1e-15);
}

TEST(DSConv, MatchesComposedConvOracle) {
  Rng rng(2);
  const std::size_t d = 8, k = 5, len = 12;
  DSConvLayer layer(d, d, k, rng);
  Tensor x = random_tensor({d, len}, rng);
  ForwardContext ctx;
  Tensor y = layer.forward(x, ctx);
  Tensor dw = ops::conv1d(x, layer.depthwise, 1, 2, d);
  std::vector<double> pw(layer.pointwise.values().begin(), layer.pointwise.values().end());
  Tensor pt = ops::conv1d(dw, Tensor::from({d, d, 1}, pw), 1, 0, 1);
  const double inv = 1.0 / std::sqrt(1.0 + layer.norm.eps);
  for (std::size_t c = 0; c < d; ++c)
    for (std::size_t t = 0; t < len; ++t)
      EXPECT_NEAR(y[c * len + t], swish((pt[c * len + t] + layer.pointwise_bias[c]) * inv), 1e-12);
}

TEST(DSConv, KernelOneIsPointwise) {
  Rng rng(3);
  DSConvLayer layer(3, 3, 1, rng);
  Tensor x = random_tensor({3, 4}, rng);
  Tensor h = ops::add_channel_bias(ops::matmul(layer.pointwise, ops::scale_channels(x, ops::reshape(layer.depthwise, {3}))),
                                   layer.pointwise_bias);
  Tensor y = layer.pre_activation(x, {});
  const double inv = 1.0 / std::sqrt(1.0 + layer.norm.eps);
  for (std::size_t i = 0; i < y.numel(); ++i) EXPECT_NEAR(y[i], h[i] * inv, 1e-12);
}

TEST(DSConv, EvenKernelRejected) {
  Rng rng(4);
  EXPECT_THROW(DSConvLayer(4, 4, 4, rng), Error);
  EXPECT_THROW(ConformerLayer(8, 2, AttentionRange::unlimited(), 4, rng), Error);
}

TEST(SE, ZeroExciteHalves) {
  Rng rng(5);
  SEModule se(8, 4, rng);
  fill(se.excite.weight, 0.0);
  fill(se.excite.bias, 0.0);
  Tensor x = random_tensor({8, 6}, rng);
  Tensor y = se.forward(x, {});
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_DOUBLE_EQ(y[i], 0.5 * x[i]);
}

TEST(SE, MatchesExplicitFormula) {
  Rng rng(6);
  const std::size_t d = 8, len = 5, b = 2;
  SEModule se(d, 4, rng);
  Tensor x = random_tensor({d, len}, rng);
  Tensor y = se.forward(x, {});
  std::vector<double> m(d, 0.0), z(b), s(d);
  for (std::size_t c = 0; c < d; ++c) {
    for (std::size_t t = 0; t < len; ++t) m[c] += x[c * len + t];
    m[c] /= len;
  }
  for (std::size_t j = 0; j < b; ++j) {
    double acc = se.squeeze.bias[j];
    for (std::size_t c = 0; c < d; ++c) acc += m[c] * se.squeeze.weight[c * b + j];
    z[j] = swish(acc);
  }
  for (std::size_t c = 0; c < d; ++c) {
    double acc = se.excite.bias[c];
    for (std::size_t j = 0; j < b; ++j) acc += z[j] * se.excite.weight[j * d + c];
    s[c] = sigmoid(acc);
  }
  for (std::size_t c = 0; c < d; ++c)
    for (std::size_t t = 0; t < len; ++t) EXPECT_NEAR(y[c * len + t], s[c] * x[c * len + t], 1e-12);
}

TEST(SE, ConstantInputMatchesSingleFrame) {
  Rng rng(7);
  SEModule se(8, 8, rng);
  Tensor frame = random_tensor({8, 1}, rng);
  std::vector<double> wide(8 * 5);
  for (std::size_t c = 0; c < 8; ++c)
    for (std::size_t t = 0; t < 5; ++t) wide[c * 5 + t] = frame[c];
  Tensor a = se.forward(frame, {});
  Tensor b = se.forward(Tensor::from({8, 5}, wide), {});
  for (std::size_t c = 0; c < 8; ++c)
    for (std::size_t t = 0; t < 5; ++t) EXPECT_NEAR(b[c * 5 + t], a[c], 1e-14);
}

TEST(ContextNetBlock, ZeroConvIsResidualOnly) {
  Rng rng(8);
  ContextNetBlockOptions opt{6, 6, 3, true, false, 8};
  ContextNetBlock block(opt, rng);
  for (auto& l : block.ds_layers) {
    fill(l->pointwise, 0.0);
    fill(l->pointwise_bias, 0.0);
    fill(l->norm.beta, 0.0);
  }
  Tensor x = random_tensor({6, 7}, rng);
  Tensor y = block.forward(x, {});
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_NEAR(y[i], swish(x[i]), 1e-14);
}

TEST(ContextNetBlock, LocalityWithoutSE) {
  Rng rng(9);
  for (std::size_t k : {3, 5}) {
    ContextNetBlock block({4, 4, k, true, false, 8}, rng);
    const std::size_t len = 24;
    Tensor x = random_tensor({4, len}, rng);
    std::vector<double> p(x.values().begin(), x.values().end());
    for (std::size_t c = 0; c < 4; ++c) p[c * len] += 1.0;
    Tensor a = block.forward(x, {}), b = block.forward(Tensor::from({4, len}, p), {});
    const std::size_t reach = 4 * k - 4;
    for (std::size_t t = 0; t < len; ++t) {
      double diff = 0.0;
      for (std::size_t c = 0; c < 4; ++c) diff = std::max(diff, std::abs(a[c * len + t] - b[c * len + t]));
      if (t > 2 * (k - 1)) {
        EXPECT_EQ(diff, 0.0) << "k=" << k << " t=" << t;
      } else {
        EXPECT_GT(diff, 1e-9) << "k=" << k << " t=" << t;
      }
    }
    (void)reach;
  }
}

TEST(ContextNetBlock, SEMakesEveryFrameReachable) {
  Rng rng(10);
  ContextNetBlock block({4, 4, 3, true, true, 2}, rng);
  const std::size_t len = 30;
  Tensor x = random_tensor({4, len}, rng);
  std::vector<double> p(x.values().begin(), x.values().end());
  for (std::size_t c = 0; c < 4; ++c) p[c * len] += 1.0;
  Tensor a = block.forward(x, {}), b = block.forward(Tensor::from({4, len}, p), {});
  for (std::size_t t = 0; t < len; ++t) {
    double diff = 0.0;
    for (std::size_t c = 0; c < 4; ++c) diff = std::max(diff, std::abs(a[c * len + t] - b[c * len + t]));
    EXPECT_GT(diff, 1e-12) << t;
  }
}

TEST(ContextNetBlock, WidthChangeUsesProjection) {
  Rng rng(11);
  ContextNetBlock block({4, 6, 3, true, true, 2}, rng);
  EXPECT_TRUE(block.residual.defined());
  EXPECT_EQ(block.forward(random_tensor({4, 5}, rng), {}).shape(), (Shape{6, 5}));
}

TEST(BiLSTM, SingleFrameDirectionsAgreeWhenWeightsShared) {
  Rng rng(12);
  BiLSTMLayer layer(3, 4, rng);
  layer.bwd.input.weight = layer.fwd.input.weight;
  layer.bwd.input.bias = layer.fwd.input.bias;
  layer.bwd.recurrent = layer.fwd.recurrent;
  Tensor y = layer.forward(random_tensor({1, 3}, rng), {});
  EXPECT_EQ(y[0], y[2]);
  EXPECT_EQ(y[1], y[3]);
}

TEST(BiLSTM, ZeroWeightsZeroOutput) {
  Rng rng(13);
  BiLSTMLayer layer(3, 4, rng);
  for (LstmDirection* d : {&layer.fwd, &layer.bwd}) {
    fill(d->input.weight, 0.0);
    fill(d->input.bias, 0.0);
    fill(d->recurrent, 0.0);
  }
  Tensor y = layer.forward(random_tensor({5, 3}, rng), {});
  for (double v : y.values()) EXPECT_EQ(v, 0.0);
}

TEST(BiLSTM, ReversedInputSwapsDirections) {
  Rng rng(14);
  BiLSTMLayer layer(3, 4, rng);
  layer.bwd.input.weight = layer.fwd.input.weight;
  layer.bwd.input.bias = layer.fwd.input.bias;
  layer.bwd.recurrent = layer.fwd.recurrent;
  const std::size_t len = 6;
  Tensor x = random_tensor({len, 3}, rng);
  std::vector<double> rev(x.numel());
  for (std::size_t t = 0; t < len; ++t)
    for (std::size_t c = 0; c < 3; ++c) rev[t * 3 + c] = x[(len - 1 - t) * 3 + c];
  Tensor a = layer.forward_direction(x, {}, false);
  Tensor b = layer.forward_direction(Tensor::from({len, 3}, rev), {}, true);
  for (std::size_t t = 0; t < len; ++t)
    for (std::size_t c = 0; c < 2; ++c) EXPECT_NEAR(a[t * 2 + c], b[(len - 1 - t) * 2 + c], 1e-14);
}

TEST(BiLSTM, MatchesUnrolledRecurrence) {
  Rng rng(15);
  const std::size_t din = 2, d = 4, h = 2, len = 3;
  BiLSTMLayer layer(din, d, rng);
  Tensor x = random_tensor({len, din}, rng);
  Tensor y = layer.forward(x, {});
  for (int dir = 0; dir < 2; ++dir) {
    const LstmDirection& p = dir == 0 ? layer.fwd : layer.bwd;
    double hs[2] = {0, 0}, cs[2] = {0, 0};
    for (std::size_t step = 0; step < len; ++step) {
      const std::size_t t = dir == 0 ? step : len - 1 - step;
      double z[8];
      for (std::size_t j = 0; j < 4 * h; ++j) {
        z[j] = p.input.bias[j];
        for (std::size_t i = 0; i < din; ++i) z[j] += x[t * din + i] * p.input.weight[i * 4 * h + j];
        for (std::size_t i = 0; i < h; ++i) z[j] += hs[i] * p.recurrent[i * 4 * h + j];
      }
      for (std::size_t c = 0; c < h; ++c) {
        cs[c] = sigmoid(z[h + c]) * cs[c] + sigmoid(z[c]) * std::tanh(z[2 * h + c]);
        hs[c] = sigmoid(z[3 * h + c]) * std::tanh(cs[c]);
        EXPECT_NEAR(y[t * d + dir * h + c], hs[c], 1e-12);
      }
    }
  }
}

TEST(MHSA, HandComputedTwoFrames) {
  Rng rng(16);
  MHSALayer layer(2, 1, AttentionRange::unlimited(), rng);
  for (Linear* l : {&layer.query, &layer.key, &layer.value, &layer.output}) {
    fill(l->weight, 0.0);
    fill(l->bias, 0.0);
    l->weight.mutable_values()[0] = 1.0;
    l->weight.mutable_values()[3] = 1.0;
  }
  Tensor x = Tensor::from({2, 2}, {1.0, 0.0, 0.5, 2.0});
  Tensor y = layer.forward(x, {});
  const double s = 1.0 / std::sqrt(2.0);
  for (std::size_t i = 0; i < 2; ++i) {
    double sc[2];
    for (std::size_t j = 0; j < 2; ++j) sc[j] = s * (x[i * 2] * x[j * 2] + x[i * 2 + 1] * x[j * 2 + 1]);
    const double m = std::max(sc[0], sc[1]);
    const double e0 = std::exp(sc[0] - m), e1 = std::exp(sc[1] - m);
    const double p0 = e0 / (e0 + e1), p1 = e1 / (e0 + e1);
    for (std::size_t c = 0; c < 2; ++c) EXPECT_NEAR(y[i * 2 + c], p0 * x[c] + p1 * x[2 + c], 1e-12);
  }
}

TEST(MHSA, ZeroRangeIsFrameLocal) {
  Rng rng(17);
  MHSALayer layer(8, 2, AttentionRange::frames(0), rng);
  Tensor x = random_tensor({6, 8}, rng);
  std::vector<double> p(x.values().begin(), x.values().end());
  for (std::size_t c = 0; c < 8; ++c) p[3 * 8 + c] += 1.0;
  Tensor a = layer.forward(x, {}), b = layer.forward(Tensor::from({6, 8}, p), {});
  for (std::size_t t = 0; t < 6; ++t)
    for (std::size_t c = 0; c < 8; ++c) {
      if (t != 3) {
        EXPECT_EQ(a[t * 8 + c], b[t * 8 + c]);
      }
    }
}

TEST(MHSA, UnlimitedEqualsSaturatedBandAndOverride) {
  Rng rng(18);
  MHSALayer layer(8, 4, AttentionRange::unlimited(), rng);
  Tensor x = random_tensor({7, 8}, rng);
  ForwardContext sat;
  sat.range_override = AttentionRange::frames(6);
  EXPECT_EQ(max_abs_diff(layer.forward(x, {}).values(), layer.forward(x, sat).values()), 0.0);
  ForwardContext narrow;
  narrow.range_override = AttentionRange::frames(1);
  EXPECT_GT(max_abs_diff(layer.forward(x, {}).values(), layer.forward(x, narrow).values()), 1e-6);
}

TEST(Transformer, ZeroSubmodulesAreIdentity) {
  Rng rng(19);
  TransformerLayer layer(8, 2, AttentionRange::unlimited(), rng);
  for (Linear* l : {&layer.attn.output, &layer.ff.down}) {
    fill(l->weight, 0.0);
    fill(l->bias, 0.0);
  }
  Tensor x = random_tensor({5, 8}, rng);
  EXPECT_EQ(max_abs_diff(layer.forward(x, {}).values(), x.values()), 0.0);
}

TEST(Transformer, MatchesPrimitiveComposition) {
  Rng rng(20);
  TransformerLayer layer(8, 2, AttentionRange::frames(1), rng);
  Tensor x = random_tensor({4, 8}, rng);
  Tensor y = layer.forward(x, {});
  Tensor a = ops::add(x, layer.attn.forward(layer.attn_norm.forward(x), {}));
  Tensor hidden = ops::relu(ops::linear(layer.ff_norm.forward(a), layer.ff.up.weight, layer.ff.up.bias));
  Tensor ref = ops::add(a, ops::linear(hidden, layer.ff.down.weight, layer.ff.down.bias));
  EXPECT_LT(max_abs_diff(y.values(), ref.values()), 1e-12);
  EXPECT_EQ(y.shape(), x.shape());
}

TEST(Conformer, ZeroSubmodulesGiveFinalNorm) {
  Rng rng(21);
  ConformerLayer layer(8, 2, AttentionRange::unlimited(), 3, rng);
  for (Linear* l : {&layer.ff1.down, &layer.attn.output, &layer.conv.pointwise_out, &layer.ff2.down}) {
    fill(l->weight, 0.0);
    fill(l->bias, 0.0);
  }
  Tensor x = random_tensor({5, 8}, rng);
  EXPECT_LT(max_abs_diff(layer.forward(x, {}).values(), layer.final_norm.forward(x).values()), 1e-15);
}

TEST(Conformer, PerLayerReach) {
  Rng rng(22);
  struct Case {
    std::size_t r, k;
  };
  for (const Case& c : {Case{0, 1}, Case{1, 3}, Case{2, 5}, Case{0, 5}}) {
    ConformerLayer layer(8, 2, AttentionRange::frames(c.r), c.k, rng);
    const std::size_t len = 24, j = 11;
    Tensor x = random_tensor({len, 8}, rng);
    std::vector<double> p(x.values().begin(), x.values().end());
    // Non-constant across channels: every norm here is shift invariant.
    for (std::size_t ch = 0; ch < 8; ++ch) p[j * 8 + ch] += ch % 2 ? 1.0 : -0.5;
    Tensor a = layer.forward(x, {}), b = layer.forward(Tensor::from({len, 8}, p), {});
    const std::size_t radius = c.r + (c.k - 1) / 2;
    for (std::size_t t = 0; t < len; ++t) {
      double diff = 0.0;
      for (std::size_t ch = 0; ch < 8; ++ch) diff = std::max(diff, std::abs(a[t * 8 + ch] - b[t * 8 + ch]));
      const std::size_t dist = t > j ? t - j : j - t;
      if (dist > radius) {
        EXPECT_EQ(diff, 0.0);
      } else {
        EXPECT_GT(diff, 1e-9);
      }
    }
  }
}

TEST(Subsample, OutputLengths) {
  EXPECT_EQ(SubsampleFrontend::output_length(100), 25u);
  EXPECT_EQ(SubsampleFrontend::output_length(101), 26u);
  EXPECT_EQ(SubsampleFrontend::output_length(7), 2u);
  Rng rng(23);
  SubsampleFrontend front(80, 4, 16, rng);
  EXPECT_EQ(front.forward(random_tensor({80, 101}, rng), {}).shape(), (Shape{26, 16}));
  try {
    front.forward(random_tensor({80, 6}, rng), {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TooShort);
  }
}

TEST(Subsample, MatchesConvOracle) {
  Rng rng(24);
  const std::size_t mels = 8, ch = 3, d = 5, len = 11;
  SubsampleFrontend front(mels, ch, d, rng);
  Tensor x = random_tensor({mels, len}, rng);
  Tensor y = front.forward(x, {});
  auto conv = [](const std::vector<double>& in, std::size_t cin, std::size_t fh, std::size_t tw, const Tensor& w,
                 const Tensor& b, std::size_t cout, std::size_t& oh, std::size_t& ow) {
    oh = (fh - 1) / 2 + 1;
    ow = (tw - 1) / 2 + 1;
    std::vector<double> out(cout * oh * ow);
    for (std::size_t o = 0; o < cout; ++o)
      for (std::size_t f = 0; f < oh; ++f)
        for (std::size_t t = 0; t < ow; ++t) {
          double acc = b[o];
          for (std::size_t c = 0; c < cin; ++c)
            for (std::size_t i = 0; i < 3; ++i)
              for (std::size_t j = 0; j < 3; ++j) {
                const long sf = static_cast<long>(2 * f + i) - 1, st = static_cast<long>(2 * t + j) - 1;
                if (sf < 0 || st < 0 || sf >= static_cast<long>(fh) || st >= static_cast<long>(tw)) continue;
                acc += w[((o * cin + c) * 3 + i) * 3 + j] * in[(c * fh + sf) * tw + st];
              }
          out[(o * oh + f) * ow + t] = std::max(acc, 0.0);
        }
    return out;
  };
  std::size_t h1, w1, h2, w2;
  auto a = conv({x.values().begin(), x.values().end()}, 1, mels, len, front.conv1, front.bias1, ch, h1, w1);
  auto b = conv(a, ch, h1, w1, front.conv2, front.bias2, ch, h2, w2);
  ASSERT_EQ(y.dim(0), w2);
  for (std::size_t t = 0; t < w2; ++t)
    for (std::size_t o = 0; o < d; ++o) {
      double acc = front.project.bias[o];
      for (std::size_t c = 0; c < ch; ++c)
        for (std::size_t f = 0; f < h2; ++f) acc += b[(c * h2 + f) * w2 + t] * front.project.weight[(c * h2 + f) * d + o];
      EXPECT_NEAR(y[t * d + o], acc, 1e-12);
    }
}

TEST(Subsample, PaddingIsNeutral) {
  Rng rng(25);
  SubsampleFrontend front(8, 3, 4, rng);
  Tensor x = random_tensor({8, 21}, rng);
  std::vector<double> padded(8 * 28, 0.0);
  for (std::size_t m = 0; m < 8; ++m)
    for (std::size_t t = 0; t < 28; ++t) padded[m * 28 + t] = t < 21 ? x[m * 21 + t] : rng.uniform(-5, 5);
  ForwardContext ctx;
  ctx.valid = 21;
  Tensor a = front.forward(x, {}), b = front.forward(Tensor::from({8, 28}, padded), ctx);
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
}

TEST(LayerGradients, AllLayers) {
  Rng rng(26);
  ForwardContext train;
  train.training = true;
  {
    DSConvLayer l(6, 6, 3, rng);
    ParamCollector c;
    l.collect("l", c);
    expect_gradients([&](const Tensor& x) { return l.forward(x, train); }, c, random_tensor({6, 9}, rng), 1);
  }
  {
    SEModule l(8, 4, rng);
    ParamCollector c;
    l.collect("l", c);
    expect_gradients([&](const Tensor& x) { return l.forward(x, {}); }, c, random_tensor({8, 10}, rng), 2);
  }
  for (bool ds : {true, false}) {
    ContextNetBlock l({4, 6, 3, ds, true, 2}, rng);
    ParamCollector c;
    l.collect("l", c);
    expect_gradients([&](const Tensor& x) { return l.forward(x, train); }, c, random_tensor({4, 8}, rng), 3);
  }
  {
    BiLSTMLayer l(3, 4, rng);
    ParamCollector c;
    l.collect("l", c);
    expect_gradients([&](const Tensor& x) { return l.forward(x, {}); }, c, random_tensor({6, 3}, rng), 4);
  }
  {
    TransformerLayer l(8, 2, AttentionRange::frames(1), rng);
    ParamCollector c;
    l.collect("l", c);
    expect_gradients([&](const Tensor& x) { return l.forward(x, {}); }, c, random_tensor({5, 8}, rng), 5);
  }
  {
    ConformerLayer l(8, 2, AttentionRange::unlimited(), 3, rng);
    ParamCollector c;
    l.collect("l", c);
    expect_gradients([&](const Tensor& x) { return l.forward(x, train); }, c, random_tensor({5, 8}, rng), 6);
  }
  {
    SubsampleFrontend l(8, 2, 4, rng);
    ParamCollector c;
    l.collect("l", c);
    expect_gradients([&](const Tensor& x) { return l.forward(x, {}); }, c, random_tensor({8, 9}, rng), 7);
  }
}
