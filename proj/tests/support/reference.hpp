// Copyright 2026 The regioncap Authors
// SPDX-License-Identifier: Apache-2.0

// Loop-level forward passes that read weights by parameter name. They share
// no code with the graph implementation and serve as a second opinion.

#pragma once

#include <span>
#include <string>

#include "regioncap/encoders.hpp"
#include "regioncap/model.hpp"
#include "regioncap/params.hpp"

namespace regioncap::reference {

Matrix linear(const Matrix& x, const ParamStore& store, const std::string& name);
Matrix layer_norm(const Matrix& x, const ParamStore& store, const std::string& name);
Matrix block(const Matrix& x, const ParamStore& store, const std::string& name, int heads, bool causal);

Matrix mask_aware(const ParamStore& store, const encoders::EncoderConfig& cfg, const Image& lr,
                  const Image& mask_plane);
Matrix hr_conv(const ParamStore& store, const encoders::EncoderConfig& cfg, const Image& hr);
Matrix hr_sam(const ParamStore& store, const encoders::EncoderConfig& cfg, const Image& hr);

/// Corner-aligned bilinear resampling of a src x src grid of row vectors.
Matrix bilinear(const Matrix& grid_rows, int src, int dst);
Matrix self_attention_fusion(const ParamStore& store, const Matrix& m, const Matrix& h1, const Matrix& h2);

Matrix decoder(const ParamStore& store, const decoder::DecoderConfig& cfg, const Matrix& visual,
               std::span<const int> instruction, std::span<const int> targets);

/// Full model: log-probabilities for caption + <eos>.
Matrix model_logprobs(const CaptionModel& model, const PreparedInput& in, std::span<const int> instruction,
                      std::span<const int> caption);

}  // namespace regioncap::reference
