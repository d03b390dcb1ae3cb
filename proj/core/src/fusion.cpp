// Copyright 2026 The regioncap Authors
// SPDX-License-Identifier: Apache-2.0

#include "regioncap/fusion.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "regioncap/errors.hpp"

namespace regioncap::fusion {

namespace {

void same_tokens(std::size_t a, std::size_t b, std::size_t c) {
  if (a != b || a != c) {
    throw ShapeError("fusion sources disagree in token count: " + std::to_string(a) + ", " +
                     std::to_string(b) + ", " + std::to_string(c));
  }
}

// Sample positions and weights of one axis for corner-aligned resampling.
struct Tap {
  int lo, hi;
  double w_hi;
};

std::vector<Tap> axis_taps(int src, int dst) {
  std::vector<Tap> taps(static_cast<std::size_t>(dst));
  for (int i = 0; i < dst; ++i) {
    const double pos = dst == 1 ? 0.0 : static_cast<double>(i) * (src - 1) / (dst - 1);
    int lo = static_cast<int>(std::floor(pos));
    if (lo > src - 1) lo = src - 1;
    const int hi = lo + 1 < src ? lo + 1 : lo;
    taps[static_cast<std::size_t>(i)] = {lo, hi, pos - lo};
  }
  return taps;
}

}  // namespace

Variant variant_from_string(const std::string& name) {
  if (name == "channel") return Variant::channel;
  if (name == "self_attention") return Variant::self_attention;
  if (name == "sequence_append") return Variant::sequence_append;
  throw ConfigError("unknown fusion variant '" + name + "'");
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::channel: return "channel";
    case Variant::self_attention: return "self_attention";
    case Variant::sequence_append: return "sequence_append";
  }
  return "channel";
}

void validate(const FusionConfig& cfg) {
  if (cfg.fusion_width < 1) throw ConfigError("fusion_width must be >= 1");
  if (cfg.adapter_hidden < 1) throw ConfigError("adapter_hidden must be >= 1");
}

void to_json(nlohmann::json& j, const FusionConfig& cfg) {
  j = nlohmann::json{{"fusion", to_string(cfg.variant)},
                     {"fusion_width", cfg.fusion_width},
                     {"adapter_hidden", cfg.adapter_hidden},
                     {"adapter_activation", ad::to_string(cfg.adapter_activation)}};
}

void from_json(const nlohmann::json& j, FusionConfig& cfg) {
  cfg = FusionConfig{};
  if (j.contains("fusion")) cfg.variant = variant_from_string(j.at("fusion").get<std::string>());
  if (j.contains("fusion_width")) j.at("fusion_width").get_to(cfg.fusion_width);
  if (j.contains("adapter_hidden")) j.at("adapter_hidden").get_to(cfg.adapter_hidden);
  if (j.contains("adapter_activation")) {
    cfg.adapter_activation = ad::activation_from_string(j.at("adapter_activation").get<std::string>());
  }
  validate(cfg);
}

Matrix FusedFeatures::slice(std::size_t i) const {
  std::size_t start = 0;
  for (std::size_t k = 0; k < i; ++k) start += widths[k];
  Matrix out(map.tokens(), widths[i]);
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) = map.features(r, start + c);
  return out;
}

FusionParams build_fusion(ParamStore& store, const FusionConfig& cfg,
                          const std::array<std::size_t, 3>& source_widths,
                          std::size_t out_width, std::mt19937_64& rng) {
  validate(cfg);
  const auto d = static_cast<std::size_t>(cfg.fusion_width);
  static constexpr const char* kSource[] = {"mask", "hr1", "hr2"};
  FusionParams p;
  std::size_t adapter_in = 0;
  switch (cfg.variant) {
    case Variant::channel:
      adapter_in = source_widths[0] + source_widths[1] + source_widths[2];
      break;
    case Variant::self_attention:
      for (std::size_t s = 0; s < 3; ++s) {
        p.attention.project[s] = layers::make_linear(
            store, Component::adapter, std::string("fusion.attn.project_") + kSource[s],
            source_widths[s], d, rng);
      }
      p.attention.query = layers::make_linear(store, Component::adapter, "fusion.attn.query", d, d, rng);
      p.attention.key = layers::make_linear(store, Component::adapter, "fusion.attn.key", d, d, rng);
      p.attention.value = layers::make_linear(store, Component::adapter, "fusion.attn.value", d, d, rng);
      adapter_in = d;
      break;
    case Variant::sequence_append:
      for (std::size_t s = 0; s < 3; ++s) {
        p.append[s] = layers::make_linear(store, Component::adapter,
                                          std::string("fusion.append.project_") + kSource[s],
                                          source_widths[s], d, rng);
      }
      adapter_in = d;
      break;
  }
  const auto hidden = static_cast<std::size_t>(cfg.adapter_hidden);
  p.adapter.fc1 = layers::make_linear(store, Component::adapter, "adapter.fc1", adapter_in, hidden, rng);
  p.adapter.fc2 = layers::make_linear(store, Component::adapter, "adapter.fc2", hidden, out_width, rng);
  p.adapter.activation = cfg.adapter_activation;
  return p;
}

Matrix bilinear_matrix(int src, int dst) {
  if (src < 1 || dst < 1) throw ShapeError("bilinear grid sizes must be >= 1");
  const auto taps = axis_taps(src, dst);
  const auto s = static_cast<std::size_t>(src);
  Matrix b(static_cast<std::size_t>(dst) * dst, s * s);
  for (int y = 0; y < dst; ++y) {
    const Tap ty = taps[static_cast<std::size_t>(y)];
    for (int x = 0; x < dst; ++x) {
      const Tap tx = taps[static_cast<std::size_t>(x)];
      const std::size_t row = static_cast<std::size_t>(y) * dst + x;
      auto put = [&](int sy, int sx, double w) {
        b(row, static_cast<std::size_t>(sy) * s + static_cast<std::size_t>(sx)) += w;
      };
      put(ty.lo, tx.lo, (1 - ty.w_hi) * (1 - tx.w_hi));
      put(ty.lo, tx.hi, (1 - ty.w_hi) * tx.w_hi);
      put(ty.hi, tx.lo, ty.w_hi * (1 - tx.w_hi));
      put(ty.hi, tx.hi, ty.w_hi * tx.w_hi);
    }
  }
  return b;
}

ad::Var project_mask_features(ad::Var f_m, int target_grid) {
  if (f_m.rows() < 2) throw ShapeError("mask features need a class token and >= 1 patch");
  const std::size_t n = f_m.rows() - 1;
  const auto side = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(n))));
  if (side * side != n) {
    throw ShapeError("mask feature count " + std::to_string(n) + " is not a square grid");
  }
  ad::Var spatial = ad::slice_rows(f_m, 1, n);
  if (static_cast<int>(side) == target_grid) return spatial;
  return ad::matmul(f_m.graph().constant(bilinear_matrix(static_cast<int>(side), target_grid)),
                    spatial);
}

ad::Var fuse_channels(ad::Var f_m, ad::Var f_hr1, ad::Var f_hr2) {
  same_tokens(f_m.rows(), f_hr1.rows(), f_hr2.rows());
  const ad::Var parts[] = {f_m, f_hr1, f_hr2};
  return ad::concat_cols(parts);
}

ad::Var fuse_self_attention(ad::Graph& g, ad::Var f_m, ad::Var f_hr1, ad::Var f_hr2,
                            const SelfAttentionFusion& p) {
  same_tokens(f_m.rows(), f_hr1.rows(), f_hr2.rows());
  const ad::Var src[] = {f_m, f_hr1, f_hr2};
  std::array<ad::Var, 3> q, k, v;
  for (std::size_t s = 0; s < 3; ++s) {
    ad::Var proj = layers::linear(g, src[s], p.project[s]);
    q[s] = layers::linear(g, proj, p.query);
    k[s] = layers::linear(g, proj, p.key);
    v[s] = layers::linear(g, proj, p.value);
  }
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(q[0].cols()));
  std::vector<ad::Var> outs;
  for (std::size_t s = 0; s < 3; ++s) {
    const ad::Var scores[] = {ad::row_dot(q[s], k[0]), ad::row_dot(q[s], k[1]),
                              ad::row_dot(q[s], k[2])};
    ad::Var w = ad::softmax_rows(ad::scale(ad::concat_cols(scores), inv_sqrt));
    ad::Var o = ad::scale_rows(v[0], ad::slice_cols(w, 0, 1));
    o = ad::add(o, ad::scale_rows(v[1], ad::slice_cols(w, 1, 1)));
    o = ad::add(o, ad::scale_rows(v[2], ad::slice_cols(w, 2, 1)));
    outs.push_back(o);
  }
  return ad::scale(ad::add(ad::add(outs[0], outs[1]), outs[2]), 1.0 / 3.0);
}

ad::Var fuse_sequence_append(ad::Var f_m, ad::Var f_hr1, ad::Var f_hr2) {
  if (f_m.cols() != f_hr1.cols() || f_m.cols() != f_hr2.cols()) {
    throw ShapeError("sequence append needs a common width, got " + std::to_string(f_m.cols()) +
                     ", " + std::to_string(f_hr1.cols()) + ", " + std::to_string(f_hr2.cols()));
  }
  const ad::Var parts[] = {f_m, f_hr1, f_hr2};
  return ad::concat_rows(parts);
}

ad::Var adapt(ad::Graph& g, ad::Var x, const Adapter& a) {
  if (x.cols() != a.fc1.in()) {
    throw ShapeError("adapter expects width " + std::to_string(a.fc1.in()) + ", got " +
                     std::to_string(x.cols()));
  }
  return layers::linear(g, ad::activate(layers::linear(g, x, a.fc1), a.activation), a.fc2);
}

ad::Var fuse_and_adapt(ad::Graph& g, const FusionParams& p, const FusionConfig& cfg,
                       ad::Var f_m, ad::Var f_hr1, ad::Var f_hr2, int hr_grid) {
  ad::Var m = project_mask_features(f_m, hr_grid);
  ad::Var fused;
  switch (cfg.variant) {
    case Variant::channel:
      fused = fuse_channels(m, f_hr1, f_hr2);
      break;
    case Variant::self_attention:
      fused = fuse_self_attention(g, m, f_hr1, f_hr2, p.attention);
      break;
    case Variant::sequence_append:
      fused = fuse_sequence_append(layers::linear(g, m, p.append[0]),
                                   layers::linear(g, f_hr1, p.append[1]),
                                   layers::linear(g, f_hr2, p.append[2]));
      break;
  }
  return adapt(g, fused, p.adapter);
}

encoders::FeatureMap project_mask_features(const encoders::EmbeddingSequence& f_m,
                                           int target_grid) {
  if (!f_m.has_class_token) throw ShapeError("mask features must carry a class token");
  ad::Graph g(false);
  ad::Var out = project_mask_features(g.constant(f_m.tokens), target_grid);
  return {target_grid, target_grid, out.value()};
}

FusedFeatures fuse_channels(const encoders::FeatureMap& f_m, const encoders::FeatureMap& f_hr1,
                            const encoders::FeatureMap& f_hr2) {
  ad::Graph g(false);
  ad::Var out = fuse_channels(g.constant(f_m.features), g.constant(f_hr1.features),
                              g.constant(f_hr2.features));
  return {{f_hr1.grid_h, f_hr1.grid_w, out.value()},
          {f_m.channels(), f_hr1.channels(), f_hr2.channels()}};
}

encoders::FeatureMap fuse_self_attention(const encoders::FeatureMap& f_m,
                                         const encoders::FeatureMap& f_hr1,
                                         const encoders::FeatureMap& f_hr2,
                                         const SelfAttentionFusion& p) {
  ad::Graph g(false);
  ad::Var out = fuse_self_attention(g, g.constant(f_m.features), g.constant(f_hr1.features),
                                    g.constant(f_hr2.features), p);
  return {f_hr1.grid_h, f_hr1.grid_w, out.value()};
}

Matrix fuse_sequence_append(const Matrix& f_m, const Matrix& f_hr1, const Matrix& f_hr2) {
  ad::Graph g(false);
  return fuse_sequence_append(g.constant(f_m), g.constant(f_hr1), g.constant(f_hr2)).value();
}

Matrix adapt(const Matrix& x, const Adapter& a) {
  ad::Graph g(false);
  return adapt(g, g.constant(x), a).value();
}

}  // namespace regioncap::fusion
