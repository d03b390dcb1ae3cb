// Copyright 2026 The regioncap Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include <nlohmann/json.hpp>

#include "fixtures.hpp"
#include "reference.hpp"
#include "regioncap/encoders.hpp"
#include "regioncap/errors.hpp"

namespace regioncap::encoders {
namespace {

struct Built {
  ParamStore store;
  EncoderConfig cfg;
  VisionEncoders enc;
};

std::unique_ptr<Built> build(EncoderConfig cfg, std::uint64_t seed = 3) {
  auto b = std::make_unique<Built>();
  b->cfg = cfg;
  std::mt19937_64 rng(seed);
  b->enc = build_encoders(b->store, cfg, rng);
  return b;
}

void fill(ad::Parameter* p, double v) { p->value.fill(v); }

std::vector<double> flat(const FeatureMap& f) { return f.features.values(); }

void randomize(ParamStore& store, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  for (std::size_t i = 0; i < store.size(); ++i)
    for (double& v : store.at(i).value.values()) v += u(rng);
}

EncoderConfig unit_patch_config() {
  EncoderConfig c;
  c.lr_size = 4;
  c.patch_size = 2;
  c.lr_channels = 2;
  c.heads = 1;
  c.depth = 0;
  c.hr_size = 8;
  c.hr_grid = 2;
  c.hr1_stem_stride = 2;
  c.sam_pool = 1;
  c.sam_window = 2;
  return c;
}

Image plane(const geometry::BinaryMask& m) { return mask_plane(m); }

TEST(EncoderGeometry, FullSizeTokenCounts) {
  EncoderConfig c;
  EXPECT_EQ(c.lr_grid(), 24);
  EXPECT_EQ(c.num_patches(), 576);
  EXPECT_EQ(c.hr_tokens(), 1024);
  EXPECT_EQ(c.sam_grid() % c.sam_window, 0);
  EXPECT_NO_THROW(validate(c));
}

TEST(EncoderGeometry, InvalidConfigsRejected) {
  EncoderConfig c;
  c.patch_size = 15;
  EXPECT_THROW(validate(c), ConfigError);
  c = {};
  c.hr_grid = 33;
  EXPECT_THROW(validate(c), ConfigError);
  c = {};
  c.hr2_channels = 0;
  EXPECT_THROW(validate(c), ConfigError);
}

TEST(EncoderConfigJson, RoundTrip) {
  EncoderConfig c = testing::toy_model_config().encoders;
  nlohmann::json j = c;
  EXPECT_EQ(j.at("lr_size"), 16);
  const EncoderConfig back = j.get<EncoderConfig>();
  EXPECT_EQ(nlohmann::json(back), j);
}

TEST(EmbedPatches, UnitWeightsSumPatchPixels) {
  auto b = build(unit_patch_config());
  fill(b->enc.mask_aware.rgb_patch.weight, 1.0);
  fill(b->enc.mask_aware.rgb_patch.bias, 0.0);
  const auto out = embed_patches({Image(4, 4, 3, 1.0)}, b->enc.mask_aware, b->cfg);
  EXPECT_EQ(out.grid_h, 2);
  EXPECT_EQ(out.tokens(), 4u);
  for (double v : out.features.values()) EXPECT_DOUBLE_EQ(v, 12.0);
  fill(b->enc.mask_aware.rgb_patch.weight, 0.0);
  for (double v : flat(embed_patches({Image(4, 4, 3, 0.7)}, b->enc.mask_aware, b->cfg)))
    EXPECT_EQ(v, 0.0);
  EXPECT_THROW(embed_patches({Image(6, 6, 3)}, b->enc.mask_aware, b->cfg), ConfigError);
}

TEST(EmbedMask, ZeroInitAndUnitWeights) {
  auto b = build(unit_patch_config());
  const auto ones = geometry::BinaryMask::ones(4, 4);
  for (double v : flat(embed_mask(ones, b->enc.mask_aware, b->cfg))) EXPECT_EQ(v, 0.0);
  fill(b->enc.mask_aware.alpha_patch.weight, 1.0);
  for (double v : flat(embed_mask(ones, b->enc.mask_aware, b->cfg))) EXPECT_DOUBLE_EQ(v, 4.0);
  for (double v : flat(embed_mask(geometry::BinaryMask(4, 4), b->enc.mask_aware, b->cfg)))
    EXPECT_EQ(v, 0.0);
  EXPECT_THROW(embed_mask(geometry::BinaryMask(3, 4), b->enc.mask_aware, b->cfg), ConfigError);
}

TEST(EmbedMask, LinearInRealValuedPlanes) {
  auto b = build(testing::toy_model_config().encoders);
  randomize(b->store, 9);
  fill(b->enc.mask_aware.alpha_patch.bias, 0.0);
  std::mt19937_64 rng(5);
  const Image m1 = testing::random_image(rng, 16, 16, 1), m2 = testing::random_image(rng, 16, 16, 1);
  const double a = 0.7, c = -1.3;
  Image mix(16, 16, 1);
  for (std::size_t i = 0; i < mix.data.size(); ++i) mix.data[i] = a * m1.data[i] + c * m2.data[i];
  const auto e1 = embed_mask_plane(m1, b->enc.mask_aware, b->cfg).features;
  const auto e2 = embed_mask_plane(m2, b->enc.mask_aware, b->cfg).features;
  const auto em = embed_mask_plane(mix, b->enc.mask_aware, b->cfg).features;
  for (std::size_t i = 0; i < em.size(); ++i) EXPECT_NEAR(em.values()[i], a * e1.values()[i] + c * e2.values()[i], 1e-12);
}

TEST(CombineAndFlatten, ElementwiseSumRowMajor) {
  FeatureMap p{2, 2, Matrix(4, 1, {1, 2, 3, 4})};
  FeatureMap m{2, 2, Matrix(4, 1, {10, 20, 30, 40})};
  const auto seq = combine_and_flatten(p, m);
  EXPECT_EQ(seq.tokens, Matrix(4, 1, {11, 22, 33, 44}));
  EXPECT_FALSE(seq.has_class_token);
  EXPECT_EQ(combine_and_flatten(p, {2, 2, Matrix(4, 1)}).tokens, p.features);
  EXPECT_THROW(combine_and_flatten(p, {1, 4, Matrix(4, 1)}), ShapeError);
  EXPECT_THROW(combine_and_flatten(p, {2, 2, Matrix(4, 2)}), ShapeError);
}

TEST(ClassAndPositional, IndexWiseSums) {
  EmbeddingSequence seq{Matrix(4, 1, {1, 2, 3, 4}), false};
  const Matrix cls(1, 1, {100});
  const Matrix pos(5, 1, {10, 20, 30, 40, 50});
  const auto out = add_class_and_positional(seq, cls, pos);
  EXPECT_TRUE(out.has_class_token);
  EXPECT_EQ(out.tokens, Matrix(5, 1, {110, 21, 32, 43, 54}));
  EXPECT_EQ(add_class_and_positional({Matrix(4, 1), false}, Matrix(1, 1), pos).tokens, pos);
  EXPECT_THROW(add_class_and_positional(seq, cls, Matrix(4, 1)), ShapeError);
}

TEST(MaskAware, MatchesReferenceForward) {
  for (int patch : {4, 8}) {
    EncoderConfig cfg = testing::toy_model_config().encoders;
    cfg.patch_size = patch;
    auto b = build(cfg, 21);
    randomize(b->store, 22);
    std::mt19937_64 rng(6);
    const Image img = testing::random_image(rng, 16, 16);
    const auto mask = testing::random_nonempty_mask(rng, 16, 16);
    const auto out = encode_mask_aware({img}, mask, b->enc.mask_aware, cfg);
    EXPECT_EQ(out.tokens.rows(), static_cast<std::size_t>(cfg.num_patches() + 1));
    EXPECT_LT(max_abs_diff(out.tokens, reference::mask_aware(b->store, cfg, img, plane(mask))), 1e-9);
  }
}

TEST(MaskAware, ZeroAlphaIgnoresMask) {
  const EncoderConfig cfg = testing::toy_model_config().encoders;
  auto b = build(cfg);
  std::mt19937_64 rng(7);
  for (int i = 0; i < 10; ++i) {
    const Image img = testing::random_image(rng, 16, 16);
    const auto a = encode_mask_aware({img}, testing::random_mask(rng, 16, 16), b->enc.mask_aware, cfg);
    const auto c = encode_mask_aware({img}, testing::random_mask(rng, 16, 16), b->enc.mask_aware, cfg);
    EXPECT_EQ(a.tokens, c.tokens);
  }
}

TEST(MaskAware, DeterministicForSeed) {
  const EncoderConfig cfg = testing::toy_model_config().encoders;
  auto a = build(cfg, 99), c = build(cfg, 99);
  EXPECT_EQ(a->store.checksum(), c->store.checksum());
  std::mt19937_64 rng(1);
  const Image img = testing::random_image(rng, 16, 16);
  const auto m = testing::random_mask(rng, 16, 16);
  EXPECT_EQ(encode_mask_aware({img}, m, a->enc.mask_aware, cfg).tokens,
            encode_mask_aware({img}, m, c->enc.mask_aware, cfg).tokens);
}

TEST(HighRes, ConvMatchesReferenceAndGrid) {
  EncoderConfig cfg = testing::toy_model_config().encoders;
  cfg.hr_size = 64;
  cfg.hr_grid = 4;
  cfg.sam_window = 8;
  auto b = build(cfg, 4);
  randomize(b->store, 5);
  std::mt19937_64 rng(8);
  const Image img = testing::random_image(rng, 64, 64);
  const auto f = encode_hr_conv({img}, b->enc.hr_conv, cfg);
  EXPECT_EQ(f.grid_h, 4);
  EXPECT_EQ(f.tokens(), 16u);
  EXPECT_EQ(f.channels(), static_cast<std::size_t>(cfg.hr1_channels));
  EXPECT_LT(max_abs_diff(f.features, reference::hr_conv(b->store, cfg, img)), 1e-10);
}

TEST(HighRes, SamMatchesReferenceWindowedAndGlobal) {
  for (int window : {4, 8}) {
    EncoderConfig cfg = testing::toy_model_config().encoders;
    cfg.sam_window = window;
    auto b = build(cfg, 11);
    randomize(b->store, 12);
    std::mt19937_64 rng(9);
    const Image img = testing::random_image(rng, 32, 32);
    const auto f = encode_hr_sam({img}, b->enc.hr_sam, cfg);
    EXPECT_EQ(f.grid_h, cfg.hr_grid);
    EXPECT_EQ(f.tokens(), encode_hr_conv({img}, b->enc.hr_conv, cfg).tokens());
    EXPECT_LT(max_abs_diff(f.features, reference::hr_sam(b->store, cfg, img)), 1e-9);
  }
}

TEST(HighRes, ZeroWeightsGiveZeroFeatures) {
  const EncoderConfig cfg = testing::toy_model_config().encoders;
  auto b = build(cfg);
  fill(b->enc.hr_conv.stage.weight, 0.0);
  fill(b->enc.hr_sam.neck.weight, 0.0);
  std::mt19937_64 rng(2);
  const Image img = testing::random_image(rng, 32, 32);
  for (double v : flat(encode_hr_conv({img}, b->enc.hr_conv, cfg))) EXPECT_EQ(v, 0.0);
  for (double v : flat(encode_hr_sam({img}, b->enc.hr_sam, cfg))) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(encode_hr_conv({Image(16, 16, 3)}, b->enc.hr_conv, cfg), ConfigError);
}

TEST(HighRes, WindowOrderIsAPermutation) {
  const auto order = window_order(8, 4);
  std::vector<std::size_t> sorted = order;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) EXPECT_EQ(sorted[i], i);
  EXPECT_EQ(order[4], 8u);
  EXPECT_EQ(order[16], 4u);
}

TEST(Referral, MaskIsIdentity) {
  std::mt19937_64 rng(1);
  const Image img = testing::random_image(rng, 8, 8);
  const auto m = testing::random_nonempty_mask(rng, 8, 8);
  const auto [out_img, out_mask] = render_referral(m, ReferralFormat::mask, img);
  EXPECT_EQ(out_img, img);
  EXPECT_EQ(out_mask, m);
}

TEST(Referral, BboxOfRectangleIsUnchanged) {
  const auto rect = geometry::rasterize_box({1, 2, 5, 6}, 8, 8);
  const Image img(8, 8, 3, 0.5);
  EXPECT_EQ(render_referral(rect, ReferralFormat::bbox, img).second, rect);
  geometry::BinaryMask l(8, 8);
  l.set(1, 1, true);
  l.set(4, 6, true);
  EXPECT_EQ(render_referral(l, ReferralFormat::bbox, img).second, geometry::rasterize_box({1, 1, 7, 5}, 8, 8));
}

TEST(Referral, ContourChangesExactlyTheBoundary) {
  std::mt19937_64 rng(13);
  const Image img(12, 12, 3, 0.25);
  const auto m = testing::random_nonempty_mask(rng, 12, 12);
  const auto [out, mask] = render_referral(m, ReferralFormat::contour, img);
  EXPECT_EQ(mask, geometry::BinaryMask::ones(12, 12));
  const auto edge = geometry::boundary(m);
  for (int y = 0; y < 12; ++y)
    for (int x = 0; x < 12; ++x) {
      const bool changed = out.at(y, x, 0) != img.at(y, x, 0) || out.at(y, x, 1) != img.at(y, x, 1) ||
                           out.at(y, x, 2) != img.at(y, x, 2);
      EXPECT_EQ(changed, edge.at(y, x) == 1);
    }
  EXPECT_THROW(render_referral(geometry::BinaryMask(4, 4), ReferralFormat::contour, Image(4, 4, 3)),
               EmptyRegionError);
}

TEST(Referral, NamesRoundTrip) {
  for (auto f : {ReferralFormat::mask, ReferralFormat::bbox, ReferralFormat::contour})
    EXPECT_EQ(referral_from_string(to_string(f)), f);
  EXPECT_THROW(referral_from_string("polygon"), ConfigError);
}

}  // namespace
}  // namespace regioncap::encoders
