// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "core/error.hpp"
#include "models/model.hpp"
#include "rf/receptive_field.hpp"

using namespace phonebench;

namespace {

ArchConfig cfg(Arch arch, std::size_t depth, std::size_t kernel, AttentionRange range, bool se = false) {
  ArchConfig c;
  c.arch = arch;
  c.depth = depth;
  c.kernel = kernel;
  c.range = range;
  c.use_se = se;
  c.width = 8;
  c.heads = 2;
  c.subsample_channels = 2;
  return c;
}

}  // namespace

TEST(LayerRadius, PerKind) {
  EXPECT_EQ(*layer_rf_radius(LayerKind::Conv, 9, AttentionRange::unlimited()), 4u);
  EXPECT_EQ(*layer_rf_radius(LayerKind::Conv, 1, AttentionRange::unlimited()), 0u);
  EXPECT_EQ(*layer_rf_radius(LayerKind::Attention, 1, AttentionRange::frames(7)), 7u);
  EXPECT_EQ(*layer_rf_radius(LayerKind::Conformer, 9, AttentionRange::frames(4)), 8u);
  EXPECT_FALSE(layer_rf_radius(LayerKind::Lstm, 1, AttentionRange::unlimited()));
  EXPECT_FALSE(layer_rf_radius(LayerKind::Attention, 1, AttentionRange::unlimited()));
  // Four stacked k=9 convolutions: 33 frames.
  EXPECT_EQ(4 * *layer_rf_radius(LayerKind::Conv, 9, AttentionRange::unlimited()) * 2 + 1, 4u * 9 - 3);
}

TEST(ModelRF, PublishedSeconds) {
  EXPECT_EQ(model_receptive_field(cfg(Arch::Transformer, 4, 5, AttentionRange::frames(8))).seconds(), "2.60");
  EXPECT_EQ(model_receptive_field(cfg(Arch::ContextNet, 4, 3, AttentionRange::unlimited())).seconds(), "1.32");
  EXPECT_EQ(model_receptive_field(cfg(Arch::Conformer, 4, 9, AttentionRange::frames(60))).seconds(), "20.52");
  const auto se = model_receptive_field(cfg(Arch::ContextNet, 4, 5, AttentionRange::unlimited(), true));
  EXPECT_FALSE(se.bounded);
  EXPECT_EQ(se.seconds(), "2.60");
  const auto lstm = model_receptive_field(cfg(Arch::Lstm, 2, 5, AttentionRange::unlimited()));
  EXPECT_FALSE(lstm.bounded);
  EXPECT_FALSE(lstm.radius);
}

TEST(ModelRF, ExactSpanAddsFrontendHalo) {
  const auto rf = model_receptive_field(cfg(Arch::Transformer, 4, 5, AttentionRange::frames(8)));
  // 65 output frames -> 263 input frames -> 2.630 s + 15 ms.
  EXPECT_EQ(rf.exact_seconds(), "2.645");
}

TEST(KernelMatching, RoundTrip) {
  EXPECT_EQ(attention_range_for_kernel(9, 4), 16u);
  EXPECT_EQ(attention_range_for_kernel(1, 4), 0u);
  for (std::size_t k : {3, 5, 9, 17, 33}) {
    for (std::size_t l : {1, 4, 8}) {
      const auto conv = model_receptive_field(cfg(Arch::ContextNet, l, k, AttentionRange::unlimited()));
      const auto att = model_receptive_field(
          cfg(Arch::Transformer, l, k, AttentionRange::frames(attention_range_for_kernel(k, 4))));
      EXPECT_EQ(*conv.radius, *att.radius);
    }
  }
}

TEST(BandMask, Patterns) {
  BandMask eye = build_band_mask(5, AttentionRange::frames(0));
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j) EXPECT_EQ(eye.admissible(i, j), i == j);
  EXPECT_EQ(build_band_mask(3, AttentionRange::frames(5)).admissible_count(), 9u);
  std::size_t count = 0;
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 10; ++j) count += std::abs(i - j) <= 2;
  EXPECT_EQ(count, 44u);
  EXPECT_EQ(build_band_mask(10, AttentionRange::frames(2)).admissible_count(), count);
}

TEST(EmpiricalRF, TransformerBandStack) {
  auto m = build_model(cfg(Arch::Transformer, 4, 5, AttentionRange::frames(2)), 3);
  const auto rf = empirical_receptive_field(*m, 128, 1);
  EXPECT_TRUE(rf.bounded);
  EXPECT_EQ(rf.radius, 8u);
}

TEST(EmpiricalRF, ContextNetWithoutSE) {
  auto m = build_model(cfg(Arch::ContextNet, 1, 3, AttentionRange::unlimited()), 4);
  const auto rf = empirical_receptive_field(*m, 64, 1);
  EXPECT_TRUE(rf.bounded);
  EXPECT_EQ(rf.radius, 4u);
}

TEST(EmpiricalRF, GlobalStagesAreUnbounded) {
  auto lstm = build_model(cfg(Arch::Lstm, 1, 3, AttentionRange::unlimited()), 5);
  EXPECT_FALSE(empirical_receptive_field(*lstm, 64, 1).bounded);
  auto se = build_model(cfg(Arch::ContextNet, 1, 3, AttentionRange::unlimited(), true), 6);
  // At init the gate path of a tiny block moves distant frames by ~1e-9, so probe below that.
  EXPECT_FALSE(empirical_receptive_field(*se, 64, 1, 1e-13).bounded);
}

TEST(EmpiricalRF, TooShortIsInconclusive) {
  auto m = build_model(cfg(Arch::Transformer, 1, 5, AttentionRange::frames(1)), 3);
  try {
    empirical_receptive_field(*m, 8, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Inconclusive);
  }
}
