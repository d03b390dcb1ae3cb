// Copyright 2026 The regioncap Authors
// SPDX-License-Identifier: Apache-2.0

#include "regioncap/layers.hpp"

#include <cmath>

#include "regioncap/errors.hpp"

namespace regioncap::layers {

Linear make_linear(ParamStore& store, Component c, const std::string& name,
                   std::size_t in, std::size_t out, std::mt19937_64& rng,
                   bool zero_init) {
  Matrix w = zero_init ? Matrix(in, out)
                       : normal_matrix(in, out, 1.0 / std::sqrt(static_cast<double>(in)), rng);
  Linear l;
  l.weight = &store.add(c, name + ".weight", std::move(w));
  l.bias = &store.add(c, name + ".bias", Matrix(1, out));
  return l;
}

LayerNorm make_layer_norm(ParamStore& store, Component c,
                          const std::string& name, std::size_t width) {
  return LayerNorm{&store.add(c, name + ".gain", Matrix(1, width, 1.0)),
                   &store.add(c, name + ".bias", Matrix(1, width))};
}

TransformerBlock make_block(ParamStore& store, Component c,
                            const std::string& name, std::size_t width,
                            std::size_t mlp_ratio, std::mt19937_64& rng) {
  TransformerBlock b;
  b.norm1 = make_layer_norm(store, c, name + ".norm1", width);
  b.attention.query = make_linear(store, c, name + ".attn.query", width, width, rng);
  b.attention.key = make_linear(store, c, name + ".attn.key", width, width, rng);
  b.attention.value = make_linear(store, c, name + ".attn.value", width, width, rng);
  b.attention.output = make_linear(store, c, name + ".attn.output", width, width, rng);
  b.norm2 = make_layer_norm(store, c, name + ".norm2", width);
  b.fc1 = make_linear(store, c, name + ".mlp.fc1", width, width * mlp_ratio, rng);
  b.fc2 = make_linear(store, c, name + ".mlp.fc2", width * mlp_ratio, width, rng);
  return b;
}

ad::Var linear(ad::Graph& g, ad::Var x, const Linear& l) {
  return ad::add_row(ad::matmul(x, g.parameter(*l.weight)), g.parameter(*l.bias));
}

ad::Var layer_norm(ad::Graph& g, ad::Var x, const LayerNorm& ln) {
  return ad::layer_norm(x, g.parameter(*ln.gain), g.parameter(*ln.bias));
}

ad::Var attention(ad::Graph& g, ad::Var x, const Attention& a,
                  std::size_t heads, bool causal) {
  const std::size_t width = x.cols();
  if (heads == 0 || width % heads != 0) {
    throw ConfigError("width " + std::to_string(width) +
                      " not divisible by head count " + std::to_string(heads));
  }
  const std::size_t head_dim = width / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
  ad::Var q = linear(g, x, a.query);
  ad::Var k = linear(g, x, a.key);
  ad::Var v = linear(g, x, a.value);
  std::vector<ad::Var> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    ad::Var qh = heads == 1 ? q : ad::slice_cols(q, h * head_dim, head_dim);
    ad::Var kh = heads == 1 ? k : ad::slice_cols(k, h * head_dim, head_dim);
    ad::Var vh = heads == 1 ? v : ad::slice_cols(v, h * head_dim, head_dim);
    ad::Var weights = ad::softmax_rows(ad::scale(ad::matmul_nt(qh, kh), inv_sqrt), causal);
    outs.push_back(ad::matmul(weights, vh));
  }
  ad::Var merged = heads == 1 ? outs[0] : ad::concat_cols(outs);
  return linear(g, merged, a.output);
}

ad::Var block(ad::Graph& g, ad::Var x, const TransformerBlock& b,
              std::size_t heads, bool causal) {
  ad::Var h = ad::add(x, attention(g, layer_norm(g, x, b.norm1), b.attention, heads, causal));
  ad::Var m = linear(g, ad::gelu(linear(g, layer_norm(g, h, b.norm2), b.fc1)), b.fc2);
  return ad::add(h, m);
}

}  // namespace regioncap::layers
