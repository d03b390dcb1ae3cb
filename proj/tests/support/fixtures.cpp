// Copyright 2026 The regioncap Authors
// SPDX-License-Identifier: Apache-2.0

#include "fixtures.hpp"

#include <atomic>
#include <fstream>
#include <set>
#include <tuple>

namespace regioncap::testing {

namespace fs = std::filesystem;
using dataset::RegionCaptionSample;
using dataset::Split;
using dataset::TaskKind;

geometry::BinaryMask random_mask(std::mt19937_64& rng, int height, int width, double density) {
  std::bernoulli_distribution bit(density);
  geometry::BinaryMask m(height, width);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) m.set(y, x, bit(rng));
  return m;
}

geometry::BinaryMask random_nonempty_mask(std::mt19937_64& rng, int height, int width) {
  std::uniform_real_distribution<double> density(0.05, 0.95);
  auto m = random_mask(rng, height, width, density(rng));
  if (m.empty_region()) m.set(height / 2, width / 2, true);
  return m;
}

Image random_image(std::mt19937_64& rng, int height, int width, int channels) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Image img(height, width, channels);
  for (double& v : img.data) v = u(rng);
  return img;
}

Matrix random_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = u(rng);
  return m;
}

ModelConfig toy_model_config(std::uint64_t seed) {
  ModelConfig cfg;
  auto& e = cfg.encoders;
  e.lr_size = 16;
  e.patch_size = 4;
  e.hr_size = 32;
  e.hr_grid = 4;
  e.lr_channels = 16;
  e.hr1_channels = 16;
  e.hr2_channels = 16;
  e.depth = 1;
  e.heads = 2;
  e.mlp_ratio = 2;
  e.hr1_stem_stride = 4;
  e.hr1_stem_channels = 8;
  e.sam_pool = 2;
  e.sam_window = 4;
  e.sam_depth = 1;
  e.sam_heads = 2;
  e.normalization.mean = {0.5, 0.5, 0.5};
  e.normalization.stddev = {0.25, 0.25, 0.25};
  cfg.fusion.fusion_width = 32;
  cfg.fusion.adapter_hidden = 32;
  cfg.decoder.width = 32;
  cfg.decoder.depth = 2;
  cfg.decoder.heads = 4;
  cfg.decoder.mlp_ratio = 2;
  cfg.decoder.max_positions = 96;
  cfg.seed = seed;
  return cfg;
}

namespace {

constexpr std::array<const char*, 4> kColorNames = {"red", "green", "blue", "yellow"};
constexpr std::array<std::array<double, 3>, 4> kColors = {
    std::array<double, 3>{0.9, 0.1, 0.1}, {0.1, 0.8, 0.2}, {0.15, 0.2, 0.9}, {0.95, 0.9, 0.1}};
constexpr std::array<const char*, 4> kPlaces = {"top left", "top right", "bottom right", "bottom left"};

constexpr int kSide = 32;
constexpr int kBlock = 12;

std::pair<int, int> quadrant_origin(int q) {
  const int lo = 2, hi = kSide / 2 + 2;
  switch (q) {
    case 0: return {lo, lo};
    case 1: return {lo, hi};
    case 2: return {hi, hi};
    default: return {hi, lo};
  }
}

void paint_block(Image& img, geometry::BinaryMask* mask, int q, const std::array<double, 3>& color) {
  const auto [y0, x0] = quadrant_origin(q);
  for (int y = y0; y < y0 + kBlock; ++y) {
    for (int x = x0; x < x0 + kBlock; ++x) {
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = color[c];
      if (mask) mask->set(y, x, true);
    }
  }
}

RegionCaptionSample base_sample(const std::string& id, const std::string& image, const std::string& entity,
                                TaskKind task, std::string caption) {
  RegionCaptionSample s;
  s.id = id;
  s.image_path = image;
  s.image_width = kSide;
  s.image_height = kSide;
  s.entity_id = entity;
  s.task = task;
  s.caption = std::move(caption);
  s.split = Split::train;
  return s;
}

}  // namespace

dataset::StageSources toy_stage_sources() {
  dataset::StageSources s;
  s.stage1 = {"pretrain"};
  s.stage2 = {"compositioncap", "refer"};
  s.stage3 = {"compositioncap"};
  return s;
}

CompositionFixture make_composition_fixture(std::size_t count, std::uint64_t seed) {
  CompositionFixture f;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.03);
  auto& pretrain = f.registry["pretrain"];
  auto& region = f.registry["compositioncap"];
  auto& refer = f.registry["refer"];
  for (std::size_t i = 0; i < count; ++i) {
    const int q = static_cast<int>(i % 4);
    const int c = static_cast<int>((i / 4) % 4);
    const int other_q = (q + 2) % 4;
    const int other_c = (c + 1 + static_cast<int>(i / 16)) % 4;
    Image img(kSide, kSide, 3);
    for (double& v : img.data) v = 0.3 + noise(rng);
    geometry::BinaryMask mask(kSide, kSide);
    paint_block(img, &mask, q, kColors[c]);
    paint_block(img, nullptr, other_q, kColors[other_c]);

    const std::string image = "img_" + std::to_string(i) + ".png";
    const std::string entity = "e" + std::to_string(i);
    const std::string idx = std::to_string(i);
    f.pixels[image] = img;
    f.images.put(image, img);

    pretrain.push_back(base_sample("pre_" + idx, image, "whole", TaskKind::CGIC,
                                   std::string("a ") + kColorNames[c] + " block and a " + kColorNames[other_c] +
                                       " block"));

    auto r = base_sample("ref_" + idx, image, entity, TaskKind::RDC, std::string("the ") + kColorNames[c] + " block");
    r.mask = geometry::encode_rle(mask);
    refer.push_back(r);

    RegionCaptionSample s;
    if (i % 2 == 0) {
      s = base_sample("cc_" + idx, image, entity, TaskKind::AARC,
                      std::string(kColorNames[c]) + ", on the " + kPlaces[q]);
      s.attribute = dataset::attribute_id("Color");
    } else {
      s = base_sample("cc_" + idx, image, entity, TaskKind::RDC,
                      std::string("a ") + kColorNames[c] + " block in the " + kPlaces[q] + " corner");
    }
    s.mask = geometry::encode_rle(mask);
    region.push_back(s);
    f.region_samples.push_back(s);
  }
  return f;
}

std::map<std::string, fs::path> write_fixture(const CompositionFixture& f, const fs::path& dir) {
  fs::create_directories(dir / "images");
  for (const auto& [path, img] : f.pixels) save_image_png(img, dir / "images" / path);
  std::map<std::string, fs::path> files;
  for (const auto& [name, samples] : f.registry) {
    const fs::path file = dir / (name + ".jsonl");
    dataset::write_samples(samples, file);
    files[name] = file;
  }
  return files;
}

StatsFixture make_stats_fixture(std::size_t records, std::uint64_t seed) {
  // Image sides cycle through values inside each resolution bin; every
  // entity mask covers its first k rows, with k chosen so the area ratio
  // lies strictly inside a known bin.
  static constexpr std::array<std::pair<int, int>, 7> kSizes = {
      std::pair{300, 200}, {640, 480}, {1280, 720}, {1200, 1600}, {2560, 1440}, {3264, 2448}, {6000, 4000}};
  StatsFixture f;
  f.resolution_counts.assign(7, 0);
  f.mask_ratio_counts.assign(20, 0);
  for (const char* t : {"AARC", "RDC", "CGIC"}) f.captions_per_task[t] = 0;
  for (const char* s : {"train", "test"}) {
    f.captions_per_split[s] = 0;
    f.entities_per_split[s] = 0;
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> task_pick(0, 9);
  std::uniform_int_distribution<int> attr_pick(1, dataset::kNumAttributes);
  std::uniform_int_distribution<int> bin_pick(0, 19);
  std::uniform_int_distribution<int> per_image(1, 3);
  std::set<std::pair<std::string, int>> entity_attr;

  std::size_t image_index = 0;
  while (f.samples.size() < records) {
    const auto [w, h] = kSizes[image_index % kSizes.size()];
    const std::string image = "stats/" + std::to_string(image_index) + ".jpg";
    ++f.images;
    ++f.resolution_counts[image_index % kSizes.size()];
    ++image_index;

    const int entities = per_image(rng);
    for (int e = 0; e < entities && f.samples.size() < records; ++e) {
      const std::string entity = "ent" + std::to_string(e);
      const int bin = bin_pick(rng);
      const int rows = static_cast<int>((bin + 0.5) / 20.0 * h);
      geometry::RunLengthEncoding rle{h, w, {0, static_cast<std::uint32_t>(rows * w)}};
      if (rows < h) rle.counts.push_back(static_cast<std::uint32_t>((h - rows) * w));
      const Split split = (image_index % 5 == 0) ? Split::test : Split::train;
      bool entity_seen = false;
      const int captions = per_image(rng);
      for (int k = 0; k < captions && f.samples.size() < records; ++k) {
        RegionCaptionSample s;
        s.id = "s" + std::to_string(f.samples.size());
        s.image_path = image;
        s.image_width = w;
        s.image_height = h;
        s.split = split;
        s.caption = "caption " + s.id;
        const int roll = task_pick(rng);
        if (roll == 0) {
          s.task = TaskKind::CGIC;
          s.entity_id = "image";
        } else {
          s.entity_id = entity;
          s.mask = rle;
          if (roll < 6) {
            s.task = TaskKind::AARC;
            s.attribute = attr_pick(rng);
            ++f.captions_per_attribute[*s.attribute];
            if (entity_attr.emplace(image + "/" + entity, *s.attribute).second) ++f.entities_per_attribute[*s.attribute];
          } else {
            s.task = TaskKind::RDC;
          }
          if (!entity_seen) {
            entity_seen = true;
            ++f.entities;
            ++f.mask_ratio_counts[static_cast<std::size_t>(bin)];
            ++f.entities_per_split[dataset::to_string(split)];
          }
        }
        ++f.captions;
        ++f.captions_per_task[dataset::to_string(s.task)];
        ++f.captions_per_split[dataset::to_string(split)];
        f.samples.push_back(std::move(s));
      }
    }
  }
  return f;
}

TempDir::TempDir(const std::string& prefix) {
  static std::atomic<int> counter{0};
  std::random_device rd;
  path_ = fs::temp_directory_path() /
          (prefix + "_" + std::to_string(rd()) + "_" + std::to_string(counter.fetch_add(1)));
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

decoder::Vocabulary fixture_vocabulary(const CompositionFixture& f) {
  std::vector<std::string> corpus;
  for (const auto& [name, samples] : f.registry)
    for (const auto& s : samples) corpus.push_back(s.caption);
  corpus.push_back(dataset::build_instruction(dataset::TaskKind::RDC, std::nullopt));
  corpus.push_back(dataset::build_instruction(dataset::TaskKind::CGIC, std::nullopt));
  for (int a = 1; a <= dataset::kNumAttributes; ++a)
    corpus.push_back(dataset::build_instruction(dataset::TaskKind::AARC, a));
  return decoder::Vocabulary::from_corpus(corpus);
}

}  // namespace regioncap::testing
