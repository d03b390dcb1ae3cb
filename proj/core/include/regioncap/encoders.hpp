// Copyright 2026 The regioncap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "regioncap/geometry.hpp"
#include "regioncap/image.hpp"
#include "regioncap/layers.hpp"
#include "regioncap/params.hpp"
#include "regioncap/tensor.hpp"

namespace regioncap::encoders {

struct ImageNormalization {
  std::array<double, 3> mean{0.0, 0.0, 0.0};
  std::array<double, 3> stddev{1.0, 1.0, 1.0};
};

/// Geometry and widths of the three vision encoders. The defaults give the
/// full-size token layout (24x24 low-resolution patches, a 32x32 shared
/// high-resolution grid); tests shrink everything.
struct EncoderConfig {
  int lr_size = 336;
  int hr_size = 1024;
  int patch_size = 14;
  int lr_channels = 64;
  int hr1_channels = 64;
  int hr2_channels = 64;
  int hr_grid = 32;
  int depth = 2;
  int heads = 4;
  std::uint64_t seed = 0;

  int mlp_ratio = 4;
  // Convolutional stand-in: stem of stride hr1_stem_stride, then one more
  // strided stage down to hr_grid.
  int hr1_stem_stride = 4;
  int hr1_stem_channels = 16;
  // Windowed patch-transformer stand-in running on an hr_grid * sam_pool
  // grid, mean-pooled back to hr_grid.
  int sam_pool = 2;
  int sam_window = 8;
  int sam_depth = 1;
  int sam_heads = 2;

  ImageNormalization normalization;

  int lr_grid() const { return lr_size / patch_size; }
  int num_patches() const { return lr_grid() * lr_grid(); }
  int hr_tokens() const { return hr_grid * hr_grid; }
  int hr_stride() const { return hr_size / hr_grid; }
  int sam_grid() const { return hr_grid * sam_pool; }
  int sam_patch() const { return hr_stride() / sam_pool; }
};

/// Throws ConfigError on inconsistent geometry.
void validate(const EncoderConfig& cfg);
void to_json(nlohmann::json& j, const EncoderConfig& cfg);
void from_json(const nlohmann::json& j, EncoderConfig& cfg);

struct LowResImage {
  Image pixels;
};
struct HighResImage {
  Image pixels;
};

/// Spatial features; row t of `features` is grid cell (t / grid_w, t % grid_w).
struct FeatureMap {
  int grid_h = 0;
  int grid_w = 0;
  Matrix features;

  std::size_t tokens() const { return features.rows(); }
  std::size_t channels() const { return features.cols(); }
};

struct EmbeddingSequence {
  Matrix tokens;
  bool has_class_token = false;
};

enum class ReferralFormat { mask, bbox, contour };

ReferralFormat referral_from_string(const std::string& name);
std::string to_string(ReferralFormat f);

// ------------------------------------------------------------------ params

struct MaskAwareEncoder {
  layers::Linear rgb_patch;    // lr_encoder_trunk
  layers::Linear alpha_patch;  // alpha_conv, zero-initialised
  ad::Parameter* class_embedding = nullptr;
  ad::Parameter* positional = nullptr;
  layers::LayerNorm pre_norm;
  std::vector<layers::TransformerBlock> blocks;
};

struct ConvEncoder {
  layers::Linear stem;
  layers::Linear stage;
};

struct SamEncoder {
  layers::Linear patch;
  ad::Parameter* positional = nullptr;
  std::vector<layers::TransformerBlock> blocks;
  layers::Linear neck;
};

struct VisionEncoders {
  MaskAwareEncoder mask_aware;
  ConvEncoder hr_conv;
  SamEncoder hr_sam;
};

VisionEncoders build_encoders(ParamStore& store, const EncoderConfig& cfg,
                              std::mt19937_64& rng);

// ------------------------------------------------------------------ graph API

/// Flat source indices that turn a (grid_h*grid_w) x channels row-major
/// feature matrix into non-overlapping kernel x kernel patches; patch columns
/// are ordered (dy, dx, channel).
std::vector<std::int64_t> patchify_indices(int grid_h, int grid_w, int channels,
                                           int kernel);
Matrix patchify(const Image& img, int patch);
Image normalize(const Image& img, const ImageNormalization& norm);

/// Returns the (N+1) x C_M sequence F_M.
ad::Var mask_aware_forward(ad::Graph& g, const MaskAwareEncoder& enc,
                           const EncoderConfig& cfg, const Image& lr_image,
                           const Image& mask_plane);
ad::Var conv_forward(ad::Graph& g, const ConvEncoder& enc,
                     const EncoderConfig& cfg, const Image& hr_image);
ad::Var sam_forward(ad::Graph& g, const SamEncoder& enc,
                    const EncoderConfig& cfg, const Image& hr_image);

/// Constant matrix averaging pool x pool blocks of a grid x grid map.
Matrix mean_pool_matrix(int grid, int pool);
/// Row permutation visiting window x window blocks in row-major block order.
std::vector<std::size_t> window_order(int grid, int window);
ad::Var gather_rows(ad::Var x, const std::vector<std::size_t>& rows);

// ------------------------------------------------------------------ value API

FeatureMap embed_patches(const LowResImage& img, const MaskAwareEncoder& enc,
                         const EncoderConfig& cfg);
/// Same patch geometry with a single input channel.
FeatureMap embed_mask(const geometry::BinaryMask& mask,
                      const MaskAwareEncoder& enc, const EncoderConfig& cfg);
/// Real-valued mask plane variant (used for linearity checks).
FeatureMap embed_mask_plane(const Image& plane, const MaskAwareEncoder& enc,
                            const EncoderConfig& cfg);
EmbeddingSequence combine_and_flatten(const FeatureMap& patch_embeddings,
                                      const FeatureMap& mask_embeddings);
EmbeddingSequence add_class_and_positional(const EmbeddingSequence& seq,
                                           const Matrix& class_embedding,
                                           const Matrix& positional);
EmbeddingSequence encode_mask_aware(const LowResImage& img,
                                    const geometry::BinaryMask& mask,
                                    const MaskAwareEncoder& enc,
                                    const EncoderConfig& cfg);
FeatureMap encode_hr_conv(const HighResImage& img, const ConvEncoder& enc,
                          const EncoderConfig& cfg);
FeatureMap encode_hr_sam(const HighResImage& img, const SamEncoder& enc,
                         const EncoderConfig& cfg);

/// mask: unchanged. bbox: mask replaced by its filled bounding box.
/// contour: boundary pixels painted `contour_color` on the image, mask
/// replaced by all ones. Throws EmptyRegionError on an empty mask.
std::pair<Image, geometry::BinaryMask> render_referral(
    const geometry::BinaryMask& mask, ReferralFormat format, const Image& img,
    std::array<double, 3> contour_color = {1.0, 0.0, 0.0});

}  // namespace regioncap::encoders
