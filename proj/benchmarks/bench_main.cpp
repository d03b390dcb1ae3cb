// Copyright 2026 The regioncap Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include <random>
#include <string>
#include <vector>

#include "regioncap/decoder.hpp"
#include "regioncap/geometry.hpp"
#include "regioncap/metrics.hpp"
#include "regioncap/model.hpp"

namespace rc = regioncap;

namespace {

const std::vector<std::string> kWords = {"a", "red", "car", "parked", "near", "the", "old", "wooden", "fence",
                                         "with", "two", "dogs", "playing", "on", "grass", "blue", "sky"};

std::string sentence(std::mt19937_64& rng, int len) {
  std::uniform_int_distribution<std::size_t> pick(0, kWords.size() - 1);
  std::string s;
  for (int i = 0; i < len; ++i) s += (i ? " " : "") + kWords[pick(rng)];
  return s;
}

std::vector<rc::metrics::EvalPair> make_pairs(std::size_t n) {
  std::mt19937_64 rng(1);
  std::vector<rc::metrics::EvalPair> pairs;
  for (std::size_t i = 0; i < n; ++i)
    pairs.push_back({std::to_string(i), sentence(rng, 12), {sentence(rng, 12), sentence(rng, 10)}});
  return pairs;
}

void BM_Metric(benchmark::State& state, const char* name) {
  const auto pairs = make_pairs(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(rc::metrics::evaluate(name, pairs));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK_CAPTURE(BM_Metric, bleu4, "bleu4")->Arg(1000);
BENCHMARK_CAPTURE(BM_Metric, rouge_l, "rouge_l")->Arg(1000);
BENCHMARK_CAPTURE(BM_Metric, meteor, "meteor")->Arg(1000);
BENCHMARK_CAPTURE(BM_Metric, cider, "cider")->Arg(1000);

rc::geometry::BinaryMask blob(int side) {
  rc::geometry::BinaryMask m(side, side);
  const double c = side / 2.0, r = side / 3.0;
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x)
      if ((y - c) * (y - c) + (x - c) * (x - c) < r * r) m.set(y, x, true);
  return m;
}

void BM_RleEncode(benchmark::State& state) {
  const auto m = blob(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(rc::geometry::encode_rle(m));
}
BENCHMARK(BM_RleEncode)->Arg(256)->Arg(1024);

void BM_RleDecode(benchmark::State& state) {
  const auto rle = rc::geometry::encode_rle(blob(static_cast<int>(state.range(0))));
  for (auto _ : state) benchmark::DoNotOptimize(rc::geometry::decode_rle(rle));
}
BENCHMARK(BM_RleDecode)->Arg(256)->Arg(1024);

rc::ModelConfig small_config() {
  rc::ModelConfig cfg;
  auto& e = cfg.encoders;
  e.lr_size = 16;
  e.patch_size = 4;
  e.hr_size = 32;
  e.hr_grid = 4;
  e.lr_channels = e.hr1_channels = e.hr2_channels = 16;
  e.depth = 1;
  e.heads = 2;
  e.mlp_ratio = 2;
  e.hr1_stem_stride = 4;
  e.hr1_stem_channels = 8;
  e.sam_pool = 2;
  e.sam_window = 4;
  e.sam_depth = 1;
  e.sam_heads = 2;
  cfg.fusion.fusion_width = 32;
  cfg.fusion.adapter_hidden = 32;
  cfg.decoder.width = 32;
  cfg.decoder.depth = 2;
  cfg.decoder.heads = 4;
  cfg.decoder.mlp_ratio = 2;
  cfg.decoder.max_positions = 96;
  return cfg;
}

rc::Image noise_image(int side) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  rc::Image img(side, side, 3);
  for (double& v : img.data) v = u(rng);
  return img;
}

void BM_Prepare(benchmark::State& state) {
  std::vector<std::string> corpus(kWords.begin(), kWords.end());
  rc::CaptionModel model(small_config(), rc::decoder::Vocabulary::from_corpus(corpus));
  const auto img = noise_image(64);
  const auto mask = blob(64);
  for (auto _ : state) benchmark::DoNotOptimize(model.prepare(img, mask));
}
BENCHMARK(BM_Prepare)->Unit(benchmark::kMillisecond);

void BM_GreedyCaption(benchmark::State& state) {
  std::vector<std::string> corpus(kWords.begin(), kWords.end());
  rc::CaptionModel model(small_config(), rc::decoder::Vocabulary::from_corpus(corpus));
  const auto in = model.prepare(noise_image(64), blob(64));
  rc::decoder::DecodeParams params;
  params.max_length = 16;
  for (auto _ : state) benchmark::DoNotOptimize(model.caption(in, "describe the red car", params));
}
BENCHMARK(BM_GreedyCaption)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
