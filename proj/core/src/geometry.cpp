// Copyright 2026 The regioncap Authors
// SPDX-License-Identifier: Apache-2.0

#include "regioncap/geometry.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "regioncap/errors.hpp"

namespace regioncap::geometry {

namespace {

void check_dims(int height, int width) {
  if (height < 1 || width < 1) {
    throw ShapeError("mask dimensions must be >= 1, got " +
                     std::to_string(height) + "x" + std::to_string(width));
  }
}

}  // namespace

BinaryMask::BinaryMask(int height, int width, std::uint8_t fill)
    : height_(height), width_(width) {
  check_dims(height, width);
  if (fill > 1) throw ShapeError("mask values must be 0 or 1");
  bits_.assign(static_cast<std::size_t>(height) * width, fill);
}

BinaryMask::BinaryMask(int height, int width, std::vector<std::uint8_t> bits)
    : height_(height), width_(width), bits_(std::move(bits)) {
  check_dims(height, width);
  if (bits_.size() != static_cast<std::size_t>(height) * width) {
    throw ShapeError("mask has " + std::to_string(bits_.size()) +
                     " values, expected " +
                     std::to_string(static_cast<std::size_t>(height) * width));
  }
  if (std::any_of(bits_.begin(), bits_.end(), [](auto b) { return b > 1; })) {
    throw ShapeError("mask values must be 0 or 1");
  }
}

std::size_t BinaryMask::count() const noexcept {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), 1));
}

Box make_box(int x_min, int y_min, int x_max, int y_max) {
  if (x_max < x_min || y_max < y_min) {
    throw ShapeError("box corners inverted");
  }
  return Box{x_min, y_min, x_max, y_max};
}

RunLengthEncoding encode_rle(const BinaryMask& mask) {
  RunLengthEncoding rle{mask.height(), mask.width(), {}};
  std::uint8_t current = 0;
  std::uint32_t run = 0;
  for (std::uint8_t bit : mask.bits()) {
    if (bit != current) {
      rle.counts.push_back(run);
      run = 0;
      current = bit;
    }
    ++run;
  }
  rle.counts.push_back(run);
  return rle;
}

BinaryMask decode_rle(const RunLengthEncoding& rle) {
  if (rle.height < 1 || rle.width < 1) {
    throw MalformedEncodingError("encoding dimensions must be >= 1");
  }
  const std::size_t total = static_cast<std::size_t>(rle.height) * rle.width;
  const std::size_t sum = std::accumulate(rle.counts.begin(), rle.counts.end(),
                                          std::size_t{0});
  if (sum != total) {
    throw MalformedEncodingError("run counts sum to " + std::to_string(sum) +
                                 ", expected " + std::to_string(total));
  }
  for (std::size_t i = 1; i < rle.counts.size(); ++i) {
    if (rle.counts[i] == 0) {
      throw MalformedEncodingError("empty run at position " +
                                   std::to_string(i));
    }
  }
  std::vector<std::uint8_t> bits;
  bits.reserve(total);
  std::uint8_t value = 0;
  for (std::uint32_t run : rle.counts) {
    bits.insert(bits.end(), run, value);
    value ^= 1;
  }
  return BinaryMask(rle.height, rle.width, std::move(bits));
}

Box mask_to_bbox(const BinaryMask& mask) {
  int x_min = mask.width(), y_min = mask.height(), x_max = -1, y_max = -1;
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask.at(y, x)) continue;
      x_min = std::min(x_min, x);
      y_min = std::min(y_min, y);
      x_max = std::max(x_max, x);
      y_max = std::max(y_max, y);
    }
  }
  if (x_max < 0) throw EmptyRegionError("mask has no set pixels");
  return Box{x_min, y_min, x_max + 1, y_max + 1};
}

double iou_boxes(const Box& a, const Box& b) {
  if (a.degenerate() && b.degenerate()) {
    throw UndefinedIouError("IoU undefined for two zero-area boxes");
  }
  const long long iw =
      std::max(0, std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min));
  const long long ih =
      std::max(0, std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min));
  const long long inter = iw * ih;
  const long long uni = a.area() + b.area() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

BinaryMask rasterize_box(const Box& box, int height, int width) {
  BinaryMask out(height, width);
  const int x0 = std::clamp(box.x_min, 0, width);
  const int x1 = std::clamp(box.x_max, 0, width);
  const int y0 = std::clamp(box.y_min, 0, height);
  const int y1 = std::clamp(box.y_max, 0, height);
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) out.set(y, x, true);
  }
  return out;
}

double iou_mask_box(const BinaryMask& mask, const Box& box) {
  const std::size_t area = mask.count();
  if (area == 0) throw EmptyRegionError("mask has no set pixels");
  const int x0 = std::clamp(box.x_min, 0, mask.width());
  const int x1 = std::clamp(box.x_max, 0, mask.width());
  const int y0 = std::clamp(box.y_min, 0, mask.height());
  const int y1 = std::clamp(box.y_max, 0, mask.height());
  std::size_t inter = 0;
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) inter += mask.at(y, x);
  }
  const std::size_t box_area =
      static_cast<std::size_t>(x1 - x0) * static_cast<std::size_t>(y1 - y0);
  return static_cast<double>(inter) /
         static_cast<double>(area + box_area - inter);
}

double mask_area_ratio(const BinaryMask& mask) {
  return static_cast<double>(mask.count()) / static_cast<double>(mask.size());
}

BinaryMask resize_mask(const BinaryMask& mask, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) {
    throw ShapeError("resize target must be >= 1x1");
  }
  if (out_h == mask.height() && out_w == mask.width()) return mask;
  std::vector<std::uint8_t> bits(static_cast<std::size_t>(out_h) * out_w);
  for (int y = 0; y < out_h; ++y) {
    const int sy = static_cast<int>(static_cast<long long>(y) * mask.height() /
                                    out_h);
    for (int x = 0; x < out_w; ++x) {
      const int sx = static_cast<int>(static_cast<long long>(x) *
                                      mask.width() / out_w);
      bits[static_cast<std::size_t>(y) * out_w + x] = mask.at(sy, sx);
    }
  }
  return BinaryMask(out_h, out_w, std::move(bits));
}

BinaryMask boundary(const BinaryMask& mask) {
  BinaryMask out(mask.height(), mask.width());
  auto inside = [&](int y, int x) {
    return y >= 0 && x >= 0 && y < mask.height() && x < mask.width() &&
           mask.at(y, x);
  };
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask.at(y, x)) continue;
      if (!inside(y - 1, x) || !inside(y + 1, x) || !inside(y, x - 1) ||
          !inside(y, x + 1)) {
        out.set(y, x, true);
      }
    }
  }
  return out;
}

}  // namespace regioncap::geometry
