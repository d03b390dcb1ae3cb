// Copyright 2026 The regioncap Authors
// SPDX-License-Identifier: Apache-2.0

#include "regioncap/model.hpp"

#include <random>

#include <nlohmann/json.hpp>

#include "regioncap/errors.hpp"

namespace regioncap {

void validate(const ModelConfig& cfg) {
  encoders::validate(cfg.encoders);
  fusion::validate(cfg.fusion);
  decoder::validate(cfg.decoder);
  const int lr_grid = cfg.encoders.lr_grid();
  const int visual = cfg.encoders.hr_tokens() *
                     (cfg.fusion.variant == fusion::Variant::sequence_append ? 3 : 1);
  if (lr_grid < 1) throw ConfigError("low-resolution grid is empty");
  if (visual >= cfg.decoder.max_positions) {
    throw ConfigError("decoder max_positions " + std::to_string(cfg.decoder.max_positions) +
                      " leaves no room after " + std::to_string(visual) + " visual tokens");
  }
}

void to_json(nlohmann::json& j, const ModelConfig& cfg) {
  j = nlohmann::json{{"encoders", cfg.encoders},
                     {"fusion", cfg.fusion},
                     {"decoder", cfg.decoder},
                     {"referral", encoders::to_string(cfg.referral)},
                     {"seed", cfg.seed}};
}

void from_json(const nlohmann::json& j, ModelConfig& cfg) {
  cfg = ModelConfig{};
  if (j.contains("encoders")) j.at("encoders").get_to(cfg.encoders);
  if (j.contains("fusion")) j.at("fusion").get_to(cfg.fusion);
  if (j.contains("decoder")) j.at("decoder").get_to(cfg.decoder);
  if (j.contains("referral")) cfg.referral = encoders::referral_from_string(j.at("referral").get<std::string>());
  if (j.contains("seed")) j.at("seed").get_to(cfg.seed);
  validate(cfg);
}

CaptionModel::CaptionModel(ModelConfig cfg, decoder::Vocabulary vocab)
    : cfg_(std::move(cfg)), vocab_(std::move(vocab)) {
  validate(cfg_);
  std::mt19937_64 rng(cfg_.seed);
  enc_ = encoders::build_encoders(store_, cfg_.encoders, rng);
  const auto& e = cfg_.encoders;
  fusion_ = fusion::build_fusion(
      store_, cfg_.fusion,
      {static_cast<std::size_t>(e.lr_channels), static_cast<std::size_t>(e.hr1_channels),
       static_cast<std::size_t>(e.hr2_channels)},
      static_cast<std::size_t>(cfg_.decoder.width), rng);
  dec_ = decoder::build_decoder(store_, cfg_.decoder, vocab_.size(), rng);
}

PreparedInput CaptionModel::prepare(const Image& image, const geometry::BinaryMask& mask) const {
  const auto& e = cfg_.encoders;
  if (image.channels != 3) throw ShapeError("model input must be an RGB image");
  Image lr = resize_bilinear(image, e.lr_size, e.lr_size);
  Image hr = resize_bilinear(image, e.hr_size, e.hr_size);
  auto [lr_rendered, lr_mask] = encoders::render_referral(
      geometry::resize_mask(mask, e.lr_size, e.lr_size), cfg_.referral, lr);
  return {std::move(lr_rendered), std::move(hr), mask_plane(lr_mask)};
}

ad::Var CaptionModel::visual_tokens(ad::Graph& g, const PreparedInput& in) const {
  ad::Var f_m = encoders::mask_aware_forward(g, enc_.mask_aware, cfg_.encoders, in.lr, in.mask_plane);
  ad::Var f_hr1 = encoders::conv_forward(g, enc_.hr_conv, cfg_.encoders, in.hr);
  ad::Var f_hr2 = encoders::sam_forward(g, enc_.hr_sam, cfg_.encoders, in.hr);
  return fusion::fuse_and_adapt(g, fusion_, cfg_.fusion, f_m, f_hr1, f_hr2, cfg_.encoders.hr_grid);
}

ad::Var CaptionModel::loss(ad::Graph& g, const PreparedInput& in, std::span<const int> instruction,
                           std::span<const int> caption) const {
  std::vector<int> targets(caption.begin(), caption.end());
  targets.push_back(decoder::Vocabulary::kEos);
  ad::Var lp = decoder::forward_teacher_forcing(g, dec_, cfg_.decoder, visual_tokens(g, in),
                                                instruction, targets);
  return decoder::nll_loss(lp, targets);
}

std::string CaptionModel::caption(const PreparedInput& in, const std::string& instruction,
                                  const decoder::DecodeParams& decode) const {
  ad::Graph g(false);
  const Matrix visual = visual_tokens(g, in).value();
  const auto ids = decoder::generate(visual, vocab_.encode(instruction), dec_, cfg_.decoder, decode);
  return vocab_.decode(ids);
}

}  // namespace regioncap
