// Copyright 2026 The regioncap Authors
// SPDX-License-Identifier: Apache-2.0

#include "regioncap/image.hpp"

#include <algorithm>
#include <cmath>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "regioncap/errors.hpp"

namespace regioncap {

namespace {

cv::Mat to_mat8(const Image& img) {
  const int type = img.channels == 1 ? CV_8UC1 : CV_8UC3;
  cv::Mat out(img.height, img.width, type);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < img.channels; ++c) {
        const double v = std::clamp(img.at(y, x, c), 0.0, 1.0);
        // OpenCV stores colour images as BGR.
        const int dst_c = img.channels == 3 ? 2 - c : c;
        out.ptr<std::uint8_t>(y)[x * img.channels + dst_c] =
            static_cast<std::uint8_t>(std::lround(v * 255.0));
      }
    }
  }
  return out;
}

}  // namespace

Image::Image(int h, int w, int c, double fill)
    : height(h), width(w), channels(c),
      data(static_cast<std::size_t>(h) * w * c, fill) {
  if (h < 1 || w < 1 || c < 1) throw ShapeError("image dimensions must be >= 1");
}

Image mask_plane(const geometry::BinaryMask& mask) {
  Image out(mask.height(), mask.width(), 1);
  const auto bits = mask.bits();
  for (std::size_t i = 0; i < bits.size(); ++i) out.data[i] = bits[i];
  return out;
}

Image resize_bilinear(const Image& img, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw ShapeError("resize target must be >= 1x1");
  if (out_h == img.height && out_w == img.width) return img;
  cv::Mat src(img.height, img.width, CV_64FC(img.channels),
              const_cast<double*>(img.data.data()));
  cv::Mat dst;
  cv::resize(src, dst, cv::Size(out_w, out_h), 0, 0, cv::INTER_LINEAR);
  Image out(out_h, out_w, img.channels);
  for (int y = 0; y < out_h; ++y) {
    const double* row = dst.ptr<double>(y);
    std::copy(row, row + static_cast<std::size_t>(out_w) * img.channels,
              out.data.begin() + static_cast<std::ptrdiff_t>(y) * out_w * img.channels);
  }
  return out;
}

Image load_image(const std::filesystem::path& path) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw Error("cannot decode image '" + path.string() + "'");
  Image out(bgr.rows, bgr.cols, 3);
  for (int y = 0; y < bgr.rows; ++y) {
    const auto* row = bgr.ptr<std::uint8_t>(y);
    for (int x = 0; x < bgr.cols; ++x) {
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = row[x * 3 + (2 - c)] / 255.0;
    }
  }
  return out;
}

std::vector<std::uint8_t> encode_png(const Image& img) {
  std::vector<std::uint8_t> buf;
  if (!cv::imencode(".png", to_mat8(img), buf)) throw Error("PNG encoding failed");
  return buf;
}

void save_image_png(const Image& img, const std::filesystem::path& path) {
  if (!cv::imwrite(path.string(), to_mat8(img))) {
    throw Error("cannot write '" + path.string() + "'");
  }
}

geometry::BinaryMask load_mask_png(const std::filesystem::path& path) {
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
  if (m.empty()) throw Error("cannot decode mask '" + path.string() + "'");
  std::vector<std::uint8_t> bits(static_cast<std::size_t>(m.rows) * m.cols);
  for (int y = 0; y < m.rows; ++y) {
    const auto* row = m.ptr<std::uint8_t>(y);
    for (int x = 0; x < m.cols; ++x) {
      bits[static_cast<std::size_t>(y) * m.cols + x] = row[x] != 0 ? 1 : 0;
    }
  }
  return geometry::BinaryMask(m.rows, m.cols, std::move(bits));
}

void save_mask_png(const geometry::BinaryMask& mask,
                   const std::filesystem::path& path) {
  cv::Mat m(mask.height(), mask.width(), CV_8UC1);
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      m.ptr<std::uint8_t>(y)[x] = mask.at(y, x) ? 255 : 0;
    }
  }
  if (!cv::imwrite(path.string(), m)) throw Error("cannot write '" + path.string() + "'");
}

Image overlay_mask(const Image& img, const geometry::BinaryMask& mask,
                   std::array<double, 3> color, double opacity) {
  if (img.channels != 3) throw ShapeError("overlay needs an RGB image");
  const geometry::BinaryMask m =
      (mask.height() == img.height && mask.width() == img.width)
          ? mask
          : geometry::resize_mask(mask, img.height, img.width);
  Image out = img;
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      if (!m.at(y, x)) continue;
      for (int c = 0; c < 3; ++c) {
        out.at(y, x, c) = (1.0 - opacity) * img.at(y, x, c) + opacity * color[c];
      }
    }
  }
  return out;
}

}  // namespace regioncap
