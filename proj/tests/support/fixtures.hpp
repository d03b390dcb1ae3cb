// Copyright 2026 The regioncap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "regioncap/dataset.hpp"
#include "regioncap/geometry.hpp"
#include "regioncap/image.hpp"
#include "regioncap/model.hpp"
#include "regioncap/training.hpp"

namespace regioncap::testing {

geometry::BinaryMask random_mask(std::mt19937_64& rng, int height, int width, double density = 0.5);
/// Random mask with at least one set pixel.
geometry::BinaryMask random_nonempty_mask(std::mt19937_64& rng, int height, int width);
Image random_image(std::mt19937_64& rng, int height, int width, int channels = 3);
Matrix random_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols, double scale = 1.0);

/// Small model: 16 px / patch 4 low-resolution input, 32 px high-resolution
/// input on a 4x4 shared grid, 32-wide decoder.
ModelConfig toy_model_config(std::uint64_t seed = 7);

/// Region captioning corpus on 32x32 images: each image holds two coloured
/// blocks and the mask picks one. Source names follow toy_stage_sources().
struct CompositionFixture {
  dataset::Registry registry;
  training::MemoryImageSource images;
  std::map<std::string, Image> pixels;  // image_path -> image
  std::vector<dataset::RegionCaptionSample> region_samples;  // the stage-3 corpus
};

CompositionFixture make_composition_fixture(std::size_t count = 16, std::uint64_t seed = 11);
dataset::StageSources toy_stage_sources();
/// Every caption of the fixture plus the instruction strings it uses.
decoder::Vocabulary fixture_vocabulary(const CompositionFixture& f);
/// Writes images and one JSONL file per source below `dir`; returns the
/// JSONL path per source name.
std::map<std::string, std::filesystem::path> write_fixture(const CompositionFixture& f,
                                                           const std::filesystem::path& dir);

/// Synthetic statistics corpus with counts kept independently of the
/// library's statistics code.
struct StatsFixture {
  std::vector<dataset::RegionCaptionSample> samples;
  std::size_t images = 0;
  std::size_t entities = 0;
  std::size_t captions = 0;
  std::map<std::string, std::size_t> captions_per_task;
  std::map<std::string, std::size_t> captions_per_split;
  std::map<std::string, std::size_t> entities_per_split;
  std::map<int, std::size_t> captions_per_attribute;
  std::map<int, std::size_t> entities_per_attribute;
  std::vector<std::size_t> resolution_counts;  // default resolution edges
  std::vector<std::size_t> mask_ratio_counts;  // 20 uniform bins
};

StatsFixture make_stats_fixture(std::size_t records = 100, std::uint64_t seed = 5);

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& prefix);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace regioncap::testing
