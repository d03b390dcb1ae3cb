// Copyright 2026 The regioncap Authors
// SPDX-License-Identifier: Apache-2.0

#include "regioncap/encoders.hpp"

#include <nlohmann/json.hpp>

#include "regioncap/errors.hpp"

namespace regioncap::encoders {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError("encoder config: " + what);
}

void check_image(const Image& img, int size, int channels, const char* what) {
  if (img.height != size || img.width != size || img.channels != channels) {
    throw ConfigError(std::string(what) + " must be " + std::to_string(size) + "x" +
                      std::to_string(size) + "x" + std::to_string(channels) + ", got " +
                      std::to_string(img.height) + "x" + std::to_string(img.width) +
                      "x" + std::to_string(img.channels));
  }
}

FeatureMap to_feature_map(ad::Var v, int grid) { return FeatureMap{grid, grid, v.value()}; }

}  // namespace

void validate(const EncoderConfig& c) {
  require(c.lr_size >= 1 && c.hr_size >= 1 && c.patch_size >= 1, "sizes must be >= 1");
  require(c.lr_size % c.patch_size == 0, "lr_size must be divisible by patch_size");
  require(c.hr_grid >= 1 && c.hr_size % c.hr_grid == 0,
          "hr_size must be divisible by hr_size / hr_grid");
  require(c.lr_channels >= 1 && c.hr1_channels >= 1 && c.hr2_channels >= 1,
          "channel counts must be >= 1");
  require(c.depth >= 0 && c.sam_depth >= 0, "depth must be >= 0");
  require(c.heads >= 1 && c.lr_channels % c.heads == 0,
          "lr_channels must be divisible by heads");
  require(c.sam_heads >= 1 && c.hr2_channels % c.sam_heads == 0,
          "hr2_channels must be divisible by sam_heads");
  require(c.mlp_ratio >= 1, "mlp_ratio must be >= 1");
  require(c.hr1_stem_stride >= 1 && c.hr_stride() % c.hr1_stem_stride == 0,
          "hr1_stem_stride must divide hr_size / hr_grid");
  require(c.hr1_stem_channels >= 1, "hr1_stem_channels must be >= 1");
  require(c.sam_pool >= 1 && c.hr_stride() % c.sam_pool == 0,
          "sam_pool must divide hr_size / hr_grid");
  require(c.sam_window >= 1 && c.sam_grid() % c.sam_window == 0,
          "sam_window must divide hr_grid * sam_pool");
  for (double s : c.normalization.stddev) require(s > 0.0, "normalization stddev must be > 0");
}

void to_json(nlohmann::json& j, const EncoderConfig& c) {
  j = nlohmann::json{{"lr_size", c.lr_size},
                     {"hr_size", c.hr_size},
                     {"patch_size", c.patch_size},
                     {"lr_channels", c.lr_channels},
                     {"hr1_channels", c.hr1_channels},
                     {"hr2_channels", c.hr2_channels},
                     {"hr_grid", c.hr_grid},
                     {"depth", c.depth},
                     {"heads", c.heads},
                     {"seed", c.seed},
                     {"mlp_ratio", c.mlp_ratio},
                     {"hr1_stem_stride", c.hr1_stem_stride},
                     {"hr1_stem_channels", c.hr1_stem_channels},
                     {"sam_pool", c.sam_pool},
                     {"sam_window", c.sam_window},
                     {"sam_depth", c.sam_depth},
                     {"sam_heads", c.sam_heads},
                     {"normalization",
                      {{"mean", c.normalization.mean}, {"std", c.normalization.stddev}}}};
}

void from_json(const nlohmann::json& j, EncoderConfig& c) {
  c = EncoderConfig{};
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  get("lr_size", c.lr_size);
  get("hr_size", c.hr_size);
  get("patch_size", c.patch_size);
  get("lr_channels", c.lr_channels);
  get("hr1_channels", c.hr1_channels);
  get("hr2_channels", c.hr2_channels);
  get("hr_grid", c.hr_grid);
  get("depth", c.depth);
  get("heads", c.heads);
  get("seed", c.seed);
  get("mlp_ratio", c.mlp_ratio);
  get("hr1_stem_stride", c.hr1_stem_stride);
  get("hr1_stem_channels", c.hr1_stem_channels);
  get("sam_pool", c.sam_pool);
  get("sam_window", c.sam_window);
  get("sam_depth", c.sam_depth);
  get("sam_heads", c.sam_heads);
  if (j.contains("normalization")) {
    const auto& n = j.at("normalization");
    if (n.contains("mean")) n.at("mean").get_to(c.normalization.mean);
    if (n.contains("std")) n.at("std").get_to(c.normalization.stddev);
  }
  validate(c);
}

ReferralFormat referral_from_string(const std::string& name) {
  if (name == "mask") return ReferralFormat::mask;
  if (name == "bbox") return ReferralFormat::bbox;
  if (name == "contour") return ReferralFormat::contour;
  throw ConfigError("unknown referral format '" + name + "'");
}

std::string to_string(ReferralFormat f) {
  switch (f) {
    case ReferralFormat::mask: return "mask";
    case ReferralFormat::bbox: return "bbox";
    case ReferralFormat::contour: return "contour";
  }
  return "mask";
}

VisionEncoders build_encoders(ParamStore& store, const EncoderConfig& cfg,
                              std::mt19937_64& rng) {
  validate(cfg);
  VisionEncoders v;
  const std::size_t p = static_cast<std::size_t>(cfg.patch_size);
  const std::size_t cm = static_cast<std::size_t>(cfg.lr_channels);
  const std::size_t n = static_cast<std::size_t>(cfg.num_patches());
  const std::size_t ratio = static_cast<std::size_t>(cfg.mlp_ratio);

  auto& m = v.mask_aware;
  m.rgb_patch = layers::make_linear(store, Component::lr_encoder_trunk, "lr.patch_embed",
                                    p * p * 3, cm, rng);
  m.alpha_patch = layers::make_linear(store, Component::alpha_conv, "lr.alpha_embed",
                                      p * p, cm, rng, /*zero_init=*/true);
  m.class_embedding = &store.add(Component::lr_encoder_trunk, "lr.class_embedding",
                                 normal_matrix(1, cm, 0.02, rng));
  m.positional = &store.add(Component::lr_encoder_trunk, "lr.positional",
                            normal_matrix(n + 1, cm, 0.02, rng));
  m.pre_norm = layers::make_layer_norm(store, Component::lr_encoder_trunk, "lr.pre_norm", cm);
  for (int i = 0; i < cfg.depth; ++i) {
    m.blocks.push_back(layers::make_block(store, Component::lr_encoder_trunk,
                                          "lr.block" + std::to_string(i), cm, ratio, rng));
  }

  const std::size_t s1 = static_cast<std::size_t>(cfg.hr1_stem_stride);
  const std::size_t s2 = static_cast<std::size_t>(cfg.hr_stride() / cfg.hr1_stem_stride);
  const std::size_t cs = static_cast<std::size_t>(cfg.hr1_stem_channels);
  v.hr_conv.stem = layers::make_linear(store, Component::hr_encoder_1, "hr1.stem",
                                       s1 * s1 * 3, cs, rng);
  v.hr_conv.stage = layers::make_linear(store, Component::hr_encoder_1, "hr1.stage",
                                        s2 * s2 * cs, static_cast<std::size_t>(cfg.hr1_channels), rng);

  const std::size_t sp = static_cast<std::size_t>(cfg.sam_patch());
  const std::size_t c2 = static_cast<std::size_t>(cfg.hr2_channels);
  const std::size_t sg = static_cast<std::size_t>(cfg.sam_grid());
  v.hr_sam.patch = layers::make_linear(store, Component::hr_encoder_2, "hr2.patch_embed",
                                       sp * sp * 3, c2, rng);
  v.hr_sam.positional = &store.add(Component::hr_encoder_2, "hr2.positional",
                                   normal_matrix(sg * sg, c2, 0.02, rng));
  for (int i = 0; i < cfg.sam_depth; ++i) {
    v.hr_sam.blocks.push_back(layers::make_block(store, Component::hr_encoder_2,
                                                 "hr2.block" + std::to_string(i), c2, ratio, rng));
  }
  v.hr_sam.neck = layers::make_linear(store, Component::hr_encoder_2, "hr2.neck", c2, c2, rng);
  return v;
}

std::vector<std::int64_t> patchify_indices(int grid_h, int grid_w, int channels,
                                           int kernel) {
  if (kernel < 1 || grid_h % kernel != 0 || grid_w % kernel != 0) {
    throw ShapeError("patchify: grid " + std::to_string(grid_h) + "x" +
                     std::to_string(grid_w) + " not divisible by kernel " +
                     std::to_string(kernel));
  }
  const int out_h = grid_h / kernel, out_w = grid_w / kernel;
  std::vector<std::int64_t> idx;
  idx.reserve(static_cast<std::size_t>(grid_h) * grid_w * channels);
  for (int oy = 0; oy < out_h; ++oy) {
    for (int ox = 0; ox < out_w; ++ox) {
      for (int dy = 0; dy < kernel; ++dy) {
        for (int dx = 0; dx < kernel; ++dx) {
          const std::int64_t pixel =
              static_cast<std::int64_t>(oy * kernel + dy) * grid_w + (ox * kernel + dx);
          for (int c = 0; c < channels; ++c) idx.push_back(pixel * channels + c);
        }
      }
    }
  }
  return idx;
}

Matrix patchify(const Image& img, int patch) {
  const auto idx = patchify_indices(img.height, img.width, img.channels, patch);
  const std::size_t cols = static_cast<std::size_t>(patch) * patch * img.channels;
  Matrix out(idx.size() / cols, cols);
  for (std::size_t k = 0; k < idx.size(); ++k) {
    out.values()[k] = img.data[static_cast<std::size_t>(idx[k])];
  }
  return out;
}

Image normalize(const Image& img, const ImageNormalization& norm) {
  Image out = img;
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    const std::size_t c = i % static_cast<std::size_t>(img.channels);
    out.data[i] = (out.data[i] - norm.mean[c]) / norm.stddev[c];
  }
  return out;
}

ad::Var mask_aware_forward(ad::Graph& g, const MaskAwareEncoder& enc,
                           const EncoderConfig& cfg, const Image& lr_image,
                           const Image& mask_plane) {
  check_image(lr_image, cfg.lr_size, 3, "low-resolution image");
  check_image(mask_plane, cfg.lr_size, 1, "mask");
  ad::Var patches = g.constant(patchify(normalize(lr_image, cfg.normalization), cfg.patch_size));
  ad::Var mask_patches = g.constant(patchify(mask_plane, cfg.patch_size));
  ad::Var e_patch = layers::linear(g, patches, enc.rgb_patch);
  ad::Var e_mask = layers::linear(g, mask_patches, enc.alpha_patch);
  ad::Var seq = ad::add(e_patch, e_mask);
  const ad::Var parts[] = {g.parameter(*enc.class_embedding), seq};
  ad::Var x = ad::add(ad::concat_rows(parts), g.parameter(*enc.positional));
  x = layers::layer_norm(g, x, enc.pre_norm);
  for (const auto& b : enc.blocks) {
    x = layers::block(g, x, b, static_cast<std::size_t>(cfg.heads), false);
  }
  return x;
}

ad::Var conv_forward(ad::Graph& g, const ConvEncoder& enc,
                     const EncoderConfig& cfg, const Image& hr_image) {
  check_image(hr_image, cfg.hr_size, 3, "high-resolution image");
  ad::Var patches =
      g.constant(patchify(normalize(hr_image, cfg.normalization), cfg.hr1_stem_stride));
  ad::Var stem = ad::gelu(layers::linear(g, patches, enc.stem));
  const int stem_grid = cfg.hr_size / cfg.hr1_stem_stride;
  const int k2 = cfg.hr_stride() / cfg.hr1_stem_stride;
  const std::size_t cols =
      static_cast<std::size_t>(k2) * k2 * static_cast<std::size_t>(cfg.hr1_stem_channels);
  ad::Var stage_in =
      ad::gather(stem, static_cast<std::size_t>(cfg.hr_tokens()), cols,
                 patchify_indices(stem_grid, stem_grid, cfg.hr1_stem_channels, k2));
  return layers::linear(g, stage_in, enc.stage);
}

Matrix mean_pool_matrix(int grid, int pool) {
  const int out = grid / pool;
  Matrix p(static_cast<std::size_t>(out) * out, static_cast<std::size_t>(grid) * grid);
  const double w = 1.0 / (pool * pool);
  for (int oy = 0; oy < out; ++oy)
    for (int ox = 0; ox < out; ++ox)
      for (int dy = 0; dy < pool; ++dy)
        for (int dx = 0; dx < pool; ++dx)
          p(static_cast<std::size_t>(oy) * out + ox,
            static_cast<std::size_t>(oy * pool + dy) * grid + (ox * pool + dx)) = w;
  return p;
}

std::vector<std::size_t> window_order(int grid, int window) {
  std::vector<std::size_t> order;
  order.reserve(static_cast<std::size_t>(grid) * grid);
  for (int wy = 0; wy < grid / window; ++wy)
    for (int wx = 0; wx < grid / window; ++wx)
      for (int dy = 0; dy < window; ++dy)
        for (int dx = 0; dx < window; ++dx)
          order.push_back(static_cast<std::size_t>(wy * window + dy) * grid + (wx * window + dx));
  return order;
}

ad::Var gather_rows(ad::Var x, const std::vector<std::size_t>& rows) {
  const std::size_t cols = x.cols();
  std::vector<std::int64_t> idx;
  idx.reserve(rows.size() * cols);
  for (std::size_t r : rows)
    for (std::size_t c = 0; c < cols; ++c) idx.push_back(static_cast<std::int64_t>(r * cols + c));
  return ad::gather(x, rows.size(), cols, std::move(idx));
}

ad::Var sam_forward(ad::Graph& g, const SamEncoder& enc, const EncoderConfig& cfg,
                    const Image& hr_image) {
  check_image(hr_image, cfg.hr_size, 3, "high-resolution image");
  ad::Var patches =
      g.constant(patchify(normalize(hr_image, cfg.normalization), cfg.sam_patch()));
  ad::Var x = ad::add(layers::linear(g, patches, enc.patch), g.parameter(*enc.positional));
  const int grid = cfg.sam_grid();
  const auto heads = static_cast<std::size_t>(cfg.sam_heads);
  if (!enc.blocks.empty()) {
    if (cfg.sam_window == grid) {
      for (const auto& b : enc.blocks) x = layers::block(g, x, b, heads, false);
    } else {
      const auto order = window_order(grid, cfg.sam_window);
      std::vector<std::size_t> inverse(order.size());
      for (std::size_t i = 0; i < order.size(); ++i) inverse[order[i]] = i;
      const std::size_t per_window = static_cast<std::size_t>(cfg.sam_window) * cfg.sam_window;
      ad::Var w = gather_rows(x, order);
      for (const auto& b : enc.blocks) {
        std::vector<ad::Var> outs;
        for (std::size_t start = 0; start < order.size(); start += per_window) {
          outs.push_back(layers::block(g, ad::slice_rows(w, start, per_window), b, heads, false));
        }
        w = ad::concat_rows(outs);
      }
      x = gather_rows(w, inverse);
    }
  }
  if (cfg.sam_pool > 1) x = ad::matmul(g.constant(mean_pool_matrix(grid, cfg.sam_pool)), x);
  return layers::linear(g, x, enc.neck);
}

FeatureMap embed_patches(const LowResImage& img, const MaskAwareEncoder& enc,
                         const EncoderConfig& cfg) {
  check_image(img.pixels, cfg.lr_size, 3, "low-resolution image");
  ad::Graph g(false);
  ad::Var out = layers::linear(
      g, g.constant(patchify(normalize(img.pixels, cfg.normalization), cfg.patch_size)),
      enc.rgb_patch);
  return to_feature_map(out, cfg.lr_grid());
}

FeatureMap embed_mask_plane(const Image& plane, const MaskAwareEncoder& enc,
                            const EncoderConfig& cfg) {
  check_image(plane, cfg.lr_size, 1, "mask");
  ad::Graph g(false);
  ad::Var out =
      layers::linear(g, g.constant(patchify(plane, cfg.patch_size)), enc.alpha_patch);
  return to_feature_map(out, cfg.lr_grid());
}

FeatureMap embed_mask(const geometry::BinaryMask& mask, const MaskAwareEncoder& enc,
                      const EncoderConfig& cfg) {
  return embed_mask_plane(mask_plane(mask), enc, cfg);
}

EmbeddingSequence combine_and_flatten(const FeatureMap& patch_embeddings,
                                      const FeatureMap& mask_embeddings) {
  if (patch_embeddings.grid_h != mask_embeddings.grid_h ||
      patch_embeddings.grid_w != mask_embeddings.grid_w ||
      patch_embeddings.channels() != mask_embeddings.channels() ||
      patch_embeddings.tokens() != mask_embeddings.tokens()) {
    throw ShapeError("patch and mask embeddings differ in shape");
  }
  EmbeddingSequence seq{patch_embeddings.features, false};
  for (std::size_t i = 0; i < seq.tokens.size(); ++i) {
    seq.tokens.values()[i] += mask_embeddings.features.values()[i];
  }
  return seq;
}

EmbeddingSequence add_class_and_positional(const EmbeddingSequence& seq,
                                           const Matrix& class_embedding,
                                           const Matrix& positional) {
  const std::size_t n = seq.tokens.rows(), c = seq.tokens.cols();
  if (class_embedding.rows() != 1 || class_embedding.cols() != c) {
    throw ShapeError("class embedding must be 1x" + std::to_string(c));
  }
  if (positional.rows() != n + 1 || positional.cols() != c) {
    throw ShapeError("positional embedding must be " + std::to_string(n + 1) + "x" +
                     std::to_string(c));
  }
  EmbeddingSequence out{Matrix(n + 1, c), true};
  for (std::size_t j = 0; j < c; ++j) out.tokens(0, j) = class_embedding(0, j) + positional(0, j);
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t j = 0; j < c; ++j)
      out.tokens(i, j) = seq.tokens(i - 1, j) + positional(i, j);
  return out;
}

EmbeddingSequence encode_mask_aware(const LowResImage& img, const geometry::BinaryMask& mask,
                                    const MaskAwareEncoder& enc, const EncoderConfig& cfg) {
  ad::Graph g(false);
  ad::Var out = mask_aware_forward(g, enc, cfg, img.pixels, mask_plane(mask));
  return EmbeddingSequence{out.value(), true};
}

FeatureMap encode_hr_conv(const HighResImage& img, const ConvEncoder& enc,
                          const EncoderConfig& cfg) {
  ad::Graph g(false);
  return to_feature_map(conv_forward(g, enc, cfg, img.pixels), cfg.hr_grid);
}

FeatureMap encode_hr_sam(const HighResImage& img, const SamEncoder& enc,
                         const EncoderConfig& cfg) {
  ad::Graph g(false);
  return to_feature_map(sam_forward(g, enc, cfg, img.pixels), cfg.hr_grid);
}

std::pair<Image, geometry::BinaryMask> render_referral(const geometry::BinaryMask& mask,
                                                       ReferralFormat format, const Image& img,
                                                       std::array<double, 3> contour_color) {
  if (mask.empty_region()) throw EmptyRegionError("referral mask has no set pixels");
  switch (format) {
    case ReferralFormat::mask:
      return {img, mask};
    case ReferralFormat::bbox:
      return {img, geometry::rasterize_box(geometry::mask_to_bbox(mask), mask.height(),
                                           mask.width())};
    case ReferralFormat::contour: {
      if (img.height != mask.height() || img.width != mask.width()) {
        throw ShapeError("contour referral needs image and mask of equal size");
      }
      const geometry::BinaryMask edge = geometry::boundary(mask);
      Image out = img;
      for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
          if (edge.at(y, x))
            for (int c = 0; c < img.channels && c < 3; ++c) out.at(y, x, c) = contour_color[c];
      return {out, geometry::BinaryMask::ones(mask.height(), mask.width())};
    }
  }
  return {img, mask};
}

}  // namespace regioncap::encoders
