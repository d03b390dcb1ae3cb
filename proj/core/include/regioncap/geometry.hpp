// Copyright 2026 The regioncap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace regioncap::geometry {

/// Row-major binary mask; every element is 0 or 1.
class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(int height, int width, std::uint8_t fill = 0);
  BinaryMask(int height, int width, std::vector<std::uint8_t> bits);

  static BinaryMask ones(int height, int width) { return {height, width, 1}; }

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::size_t size() const noexcept { return bits_.size(); }

  std::uint8_t at(int y, int x) const { return bits_[index(y, x)]; }
  void set(int y, int x, bool on) { bits_[index(y, x)] = on ? 1 : 0; }

  std::span<const std::uint8_t> bits() const noexcept { return bits_; }
  std::size_t count() const noexcept;
  bool empty_region() const noexcept { return count() == 0; }

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

 private:
  std::size_t index(int y, int x) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(x);
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> bits_;
};

/// Half-open pixel rectangle [x_min, x_max) x [y_min, y_max).
struct Box {
  int x_min = 0;
  int y_min = 0;
  int x_max = 0;
  int y_max = 0;

  long long area() const noexcept {
    return static_cast<long long>(x_max - x_min) * (y_max - y_min);
  }
  bool degenerate() const noexcept { return area() == 0; }

  friend bool operator==(const Box&, const Box&) = default;
};

/// Throws ShapeError when the corners are inverted.
Box make_box(int x_min, int y_min, int x_max, int y_max);

/// Row-major runs, alternating 0,1,0,...; the first run counts zeros and may
/// be empty.
struct RunLengthEncoding {
  int height = 0;
  int width = 0;
  std::vector<std::uint32_t> counts;

  friend bool operator==(const RunLengthEncoding&,
                         const RunLengthEncoding&) = default;
};

RunLengthEncoding encode_rle(const BinaryMask& mask);

/// Throws MalformedEncodingError when the runs do not cover height*width
/// exactly or contain an interior empty run.
BinaryMask decode_rle(const RunLengthEncoding& rle);

/// Tightest box around the set bits. Throws EmptyRegionError on an empty mask.
Box mask_to_bbox(const BinaryMask& mask);

/// Throws UndefinedIouError when both boxes have zero area.
double iou_boxes(const Box& a, const Box& b);

/// IoU between a mask and a box rasterized on the mask grid (the box is
/// clipped to the grid). Throws EmptyRegionError on an empty mask.
double iou_mask_box(const BinaryMask& mask, const Box& box);

double mask_area_ratio(const BinaryMask& mask);

/// Nearest-neighbour resampling: output pixel (y, x) reads source pixel
/// (floor(y * h / out_h), floor(x * w / out_w)).
BinaryMask resize_mask(const BinaryMask& mask, int out_h, int out_w);

/// Fills the box (clipped to the grid) on an otherwise empty mask.
BinaryMask rasterize_box(const Box& box, int height, int width);

/// Set pixels with at least one 4-neighbour outside the mask; pixels on the
/// grid border count as touching the outside.
BinaryMask boundary(const BinaryMask& mask);

}  // namespace regioncap::geometry
