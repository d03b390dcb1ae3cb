// Copyright 2026 The regioncap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "regioncap/geometry.hpp"

namespace regioncap {

/// Interleaved (HWC) image of real values, nominally in [0, 1].
struct Image {
  int height = 0;
  int width = 0;
  int channels = 3;
  std::vector<double> data;

  Image() = default;
  Image(int h, int w, int c, double fill = 0.0);

  double& at(int y, int x, int c) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  double at(int y, int x, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }

  friend bool operator==(const Image&, const Image&) = default;
};

/// Single-channel plane holding the 0/1 values of a mask.
Image mask_plane(const geometry::BinaryMask& mask);

/// Bilinear resampling (half-pixel centres).
Image resize_bilinear(const Image& img, int out_h, int out_w);

/// Decodes PNG or JPEG into RGB values in [0, 1]. Throws Error on failure.
Image load_image(const std::filesystem::path& path);
void save_image_png(const Image& img, const std::filesystem::path& path);
std::vector<std::uint8_t> encode_png(const Image& img);

/// Single-channel PNG masks use 0 / 255; any non-zero pixel counts as set.
geometry::BinaryMask load_mask_png(const std::filesystem::path& path);
void save_mask_png(const geometry::BinaryMask& mask,
                   const std::filesystem::path& path);

/// Blends `color` into the masked pixels with the given opacity.
Image overlay_mask(const Image& img, const geometry::BinaryMask& mask,
                   std::array<double, 3> color = {1.0, 0.0, 0.0},
                   double opacity = 0.5);

}  // namespace regioncap
