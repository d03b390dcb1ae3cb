// Copyright 2026 The regioncap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <random>
#include <string>
#include <vector>

#include "regioncap/params.hpp"
#include "regioncap/tensor.hpp"

namespace regioncap::layers {

/// y = x W + b, with W stored as in x out.
struct Linear {
  ad::Parameter* weight = nullptr;
  ad::Parameter* bias = nullptr;

  std::size_t in() const { return weight->value.rows(); }
  std::size_t out() const { return weight->value.cols(); }
};

struct LayerNorm {
  ad::Parameter* gain = nullptr;
  ad::Parameter* bias = nullptr;
};

struct Attention {
  Linear query, key, value, output;
};

/// Pre-norm block: x + Attn(LN(x)), then x + MLP(LN(x)) with a GELU MLP.
struct TransformerBlock {
  LayerNorm norm1;
  Attention attention;
  LayerNorm norm2;
  Linear fc1, fc2;
};

/// Weights ~ N(0, 1/fan_in) unless zero_init, biases zero.
Linear make_linear(ParamStore& store, Component c, const std::string& name,
                   std::size_t in, std::size_t out, std::mt19937_64& rng,
                   bool zero_init = false);
LayerNorm make_layer_norm(ParamStore& store, Component c,
                          const std::string& name, std::size_t width);
TransformerBlock make_block(ParamStore& store, Component c,
                            const std::string& name, std::size_t width,
                            std::size_t mlp_ratio, std::mt19937_64& rng);

ad::Var linear(ad::Graph& g, ad::Var x, const Linear& l);
ad::Var layer_norm(ad::Graph& g, ad::Var x, const LayerNorm& ln);

/// Multi-head scaled dot-product self-attention over the rows of x.
ad::Var attention(ad::Graph& g, ad::Var x, const Attention& a,
                  std::size_t heads, bool causal);
ad::Var block(ad::Graph& g, ad::Var x, const TransformerBlock& b,
              std::size_t heads, bool causal);

}  // namespace regioncap::layers
