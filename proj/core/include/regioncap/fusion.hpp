// Copyright 2026 The regioncap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <random>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "regioncap/encoders.hpp"
#include "regioncap/layers.hpp"
#include "regioncap/params.hpp"
#include "regioncap/tensor.hpp"

namespace regioncap::fusion {

enum class Variant { channel, self_attention, sequence_append };

Variant variant_from_string(const std::string& name);
std::string to_string(Variant v);

struct FusionConfig {
  Variant variant = Variant::channel;
  // Common width the sources are projected to by the self_attention and
  // sequence_append variants.
  int fusion_width = 64;
  int adapter_hidden = 64;
  ad::Activation adapter_activation = ad::Activation::gelu;
};

void validate(const FusionConfig& cfg);
void to_json(nlohmann::json& j, const FusionConfig& cfg);
void from_json(const nlohmann::json& j, FusionConfig& cfg);

/// Channel-concatenated features; `widths` holds C_M, C_HR1, C_HR2.
struct FusedFeatures {
  encoders::FeatureMap map;
  std::array<std::size_t, 3> widths{};

  std::size_t channels() const { return map.channels(); }
  /// Columns of source i (0 = mask-aware, 1 = HR1, 2 = HR2).
  Matrix slice(std::size_t i) const;
};

/// Cross-source attention over the three per-token source vectors. Each
/// source is projected to a common width d, attention runs over the three
/// projected vectors of one token, and the three outputs are averaged.
struct SelfAttentionFusion {
  std::array<layers::Linear, 3> project;
  layers::Linear query, key, value;
};

struct Adapter {
  layers::Linear fc1, fc2;
  ad::Activation activation = ad::Activation::gelu;
};

struct FusionParams {
  SelfAttentionFusion attention;           // self_attention only
  std::array<layers::Linear, 3> append{};  // sequence_append only
  Adapter adapter;
};

/// Registers the fusion and adapter parameters under Component::adapter.
FusionParams build_fusion(ParamStore& store, const FusionConfig& cfg,
                          const std::array<std::size_t, 3>& source_widths,
                          std::size_t out_width, std::mt19937_64& rng);

/// Corner-aligned bilinear resampling of a src x src grid to dst x dst as a
/// (dst^2) x (src^2) matrix acting on row-major flattened grids.
Matrix bilinear_matrix(int src, int dst);

// ------------------------------------------------------------------ graph API

/// Drops the class token of an (N+1)-token sequence and resamples the N
/// spatial tokens to target_grid^2. Throws ShapeError when N is not square.
ad::Var project_mask_features(ad::Var f_m, int target_grid);
ad::Var fuse_channels(ad::Var f_m, ad::Var f_hr1, ad::Var f_hr2);
ad::Var fuse_self_attention(ad::Graph& g, ad::Var f_m, ad::Var f_hr1, ad::Var f_hr2,
                            const SelfAttentionFusion& p);
/// Stacks the sources along the token axis; widths must already agree.
ad::Var fuse_sequence_append(ad::Var f_m, ad::Var f_hr1, ad::Var f_hr2);
ad::Var adapt(ad::Graph& g, ad::Var x, const Adapter& a);

/// Projection, fusion and adapter in one call; returns the visual tokens
/// handed to the decoder.
ad::Var fuse_and_adapt(ad::Graph& g, const FusionParams& p, const FusionConfig& cfg,
                       ad::Var f_m, ad::Var f_hr1, ad::Var f_hr2, int hr_grid);

// ------------------------------------------------------------------ value API

encoders::FeatureMap project_mask_features(const encoders::EmbeddingSequence& f_m,
                                           int target_grid);
FusedFeatures fuse_channels(const encoders::FeatureMap& f_m, const encoders::FeatureMap& f_hr1,
                            const encoders::FeatureMap& f_hr2);
encoders::FeatureMap fuse_self_attention(const encoders::FeatureMap& f_m,
                                         const encoders::FeatureMap& f_hr1,
                                         const encoders::FeatureMap& f_hr2,
                                         const SelfAttentionFusion& p);
Matrix fuse_sequence_append(const Matrix& f_m, const Matrix& f_hr1, const Matrix& f_hr2);
Matrix adapt(const Matrix& x, const Adapter& a);

}  // namespace regioncap::fusion
