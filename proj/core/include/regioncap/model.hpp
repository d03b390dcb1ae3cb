// Copyright 2026 The regioncap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "regioncap/decoder.hpp"
#include "regioncap/encoders.hpp"
#include "regioncap/fusion.hpp"
#include "regioncap/geometry.hpp"
#include "regioncap/image.hpp"
#include "regioncap/params.hpp"

namespace regioncap {

struct ModelConfig {
  encoders::EncoderConfig encoders;
  fusion::FusionConfig fusion;
  decoder::DecoderConfig decoder;
  encoders::ReferralFormat referral = encoders::ReferralFormat::mask;
  std::uint64_t seed = 0;
};

void validate(const ModelConfig& cfg);
void to_json(nlohmann::json& j, const ModelConfig& cfg);
/// Keys: "encoders", "fusion" (fusion, fusion_width, adapter_hidden,
/// adapter_activation), "decoder", "referral", "seed".
void from_json(const nlohmann::json& j, ModelConfig& cfg);

/// Images and mask plane at the encoder resolutions, after referral rendering.
struct PreparedInput {
  Image lr;
  Image hr;
  Image mask_plane;
};

/// Full pipeline: three encoders, fusion + adapter, causal decoder.
class CaptionModel {
 public:
  CaptionModel(ModelConfig cfg, decoder::Vocabulary vocab);
  CaptionModel(const CaptionModel&) = delete;
  CaptionModel& operator=(const CaptionModel&) = delete;
  CaptionModel(CaptionModel&&) = default;
  CaptionModel& operator=(CaptionModel&&) = default;

  const ModelConfig& config() const noexcept { return cfg_; }
  const decoder::Vocabulary& vocab() const noexcept { return vocab_; }
  ParamStore& params() noexcept { return store_; }
  const ParamStore& params() const noexcept { return store_; }
  const encoders::VisionEncoders& encoders() const noexcept { return enc_; }
  const fusion::FusionParams& fusion() const noexcept { return fusion_; }
  const decoder::DecoderParams& decoder() const noexcept { return dec_; }

  /// Resizes the image and mask to the encoder resolutions and applies the
  /// configured referral format. The mask may have any size.
  PreparedInput prepare(const Image& image, const geometry::BinaryMask& mask) const;

  /// Adapted visual tokens (N' x D, or 3N' x D for sequence_append).
  ad::Var visual_tokens(ad::Graph& g, const PreparedInput& in) const;
  /// Per-sample NLL summed over caption tokens and the closing <eos>.
  ad::Var loss(ad::Graph& g, const PreparedInput& in, std::span<const int> instruction,
               std::span<const int> caption) const;

  std::string caption(const PreparedInput& in, const std::string& instruction,
                      const decoder::DecodeParams& decode) const;

 private:
  ModelConfig cfg_;
  decoder::Vocabulary vocab_;
  ParamStore store_;
  encoders::VisionEncoders enc_;
  fusion::FusionParams fusion_;
  decoder::DecoderParams dec_;
};

}  // namespace regioncap
