// Copyright 2026 The regioncap Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cli.hpp"
#include "fixtures.hpp"
#include "regioncap/dataset.hpp"

namespace regioncap::cli {
namespace {

using nlohmann::json;

json read_json(const fs::path& p) { return json::parse(std::ifstream(p)); }

void write_jsonl(const fs::path& p, const std::vector<json>& rows) {
  std::ofstream out(p);
  for (const auto& r : rows) out << r.dump() << '\n';
}

struct Streams {
  std::ostringstream out, err;
};

TEST(GitBlobSha1, MatchesGit) {
  testing::TempDir dir("sha");
  std::ofstream(dir.path() / "hello.txt") << "hello\n";
  EXPECT_EQ(git_blob_sha1(dir.path() / "hello.txt"), "ce013625030ba8dba906f756967f9e9ca394464a");
  std::ofstream(dir.path() / "empty.txt");
  EXPECT_EQ(git_blob_sha1(dir.path() / "empty.txt"), "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
}

TEST(BarChart, WritesSvg) {
  testing::TempDir dir("svg");
  write_bar_chart_svg({"t", "x", "y", {"a", "b<c"}, {1.0, 3.0}}, dir.path() / "c.svg");
  std::ifstream in(dir.path() / "c.svg");
  const std::string svg((std::istreambuf_iterator<char>(in)), {});
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_NE(svg.find("b&lt;c"), std::string::npos);
  EXPECT_EQ(svg.find("b<c"), std::string::npos);
}

class Evaluate : public ::testing::Test {
 protected:
  void SetUp() override {
    write_jsonl(dir.path() / "pred.jsonl", {{{"id", "a"}, {"caption", "a red ball"}}, {{"id", "b"}, {"caption", "two dogs"}}});
    write_jsonl(dir.path() / "ref.jsonl", {{{"id", "b"}, {"references", {"two dogs", "a pair of dogs"}}},
                                           {{"id", "a"}, {"caption", "a red ball"}}});
  }
  EvaluateArgs args() const { return {dir.path() / "pred.jsonl", dir.path() / "ref.jsonl", std::nullopt, std::nullopt}; }
  testing::TempDir dir{"eval"};
  Streams s;
};

TEST_F(Evaluate, DefaultMetricsAndManifest) {
  auto a = args();
  a.out = dir.path() / "run";
  ASSERT_EQ(cmd_evaluate(a, s.out, s.err), kExitOk) << s.err.str();
  const json printed = json::parse(s.out.str());
  EXPECT_EQ(printed.at("count"), 2);
  ASSERT_EQ(printed.at("reports").size(), 4u);
  EXPECT_EQ(printed.at("reports").at(1).at("metric"), "rouge_l");
  EXPECT_DOUBLE_EQ(printed.at("reports").at(1).at("score").get<double>(), 1.0);
  EXPECT_EQ(read_json(dir.path() / "run" / "metrics.json"), printed);
  const json m = read_json(dir.path() / "run" / "manifest.json");
  EXPECT_EQ(m.at("command"), "evaluate");
  ASSERT_EQ(m.at("inputs").size(), 2u);
  EXPECT_EQ(m.at("inputs").at(0).at("sha1"), git_blob_sha1(dir.path() / "pred.jsonl"));
  EXPECT_EQ(m.at("outputs").at(0).at("path"), "metrics.json");
  EXPECT_TRUE(m.contains("finished_at"));
}

TEST_F(Evaluate, SelectedMetricsAndUsageErrors) {
  auto a = args();
  a.metrics = "bleu4, cider";
  ASSERT_EQ(cmd_evaluate(a, s.out, s.err), kExitOk);
  EXPECT_EQ(json::parse(s.out.str()).at("reports").size(), 2u);
  a.metrics = "bleu4,spice";
  EXPECT_EQ(cmd_evaluate(a, s.out, s.err), kExitUsage);
  EXPECT_NE(s.err.str().find("spice"), std::string::npos);
  write_jsonl(dir.path() / "ref.jsonl", {{{"id", "a"}, {"caption", "x"}}, {{"id", "zz"}, {"caption", "y"}}});
  Streams t;
  EXPECT_EQ(cmd_evaluate(args(), t.out, t.err), kExitUsage);
  EXPECT_NE(t.err.str().find("zz"), std::string::npos);
  Streams u;
  EXPECT_EQ(cmd_evaluate({dir.path() / "missing.jsonl", dir.path() / "ref.jsonl", {}, {}}, u.out, u.err), kExitUsage);
}

TEST(Stats, FixtureCountsAndPlots) {
  testing::TempDir dir("stats");
  const auto fx = testing::make_stats_fixture(100, 5);
  dataset::write_samples(fx.samples, dir.path() / "data.jsonl");
  Streams s;
  ASSERT_EQ(cmd_stats({dir.path() / "data.jsonl", dir.path() / "out"}, s.out, s.err), kExitOk) << s.err.str();
  const json j = read_json(dir.path() / "out" / "stats.json");
  EXPECT_EQ(j.at("images"), fx.images);
  EXPECT_EQ(j.at("entities"), fx.entities);
  EXPECT_EQ(j.at("captions"), fx.captions);
  EXPECT_EQ(j.at("attributes").size(), 18u);
  EXPECT_EQ(j.at("resolution_histogram").at("counts").get<std::vector<std::size_t>>(), fx.resolution_counts);
  for (const char* svg : {"attribute_proportion.svg", "entities_per_attribute.svg", "resolution_histogram.svg",
                          "mask_ratio_histogram.svg", "manifest.json"})
    EXPECT_TRUE(fs::exists(dir.path() / "out" / svg)) << svg;
  EXPECT_EQ(s.out.str(), "images " + std::to_string(fx.images) + ", entities " + std::to_string(fx.entities) +
                             ", captions " + std::to_string(fx.captions) + "\n");
}

TEST(Stats, InvalidRecordsExitWithUsage) {
  testing::TempDir dir("stats");
  std::ofstream(dir.path() / "bad.jsonl") << "{\"id\": 1}\n";
  Streams s;
  EXPECT_EQ(cmd_stats({dir.path() / "bad.jsonl", dir.path() / "out"}, s.out, s.err), kExitUsage);
  EXPECT_NE(s.err.str().find(":1:"), std::string::npos);
}

class Judge : public ::testing::Test {
 protected:
  void SetUp() override {
    files = testing::write_fixture(fx, dir.path());
    std::vector<json> preds;
    for (const auto& smp : fx.region_samples) preds.push_back({{"id", smp.id}, {"caption", "red"}});
    write_jsonl(dir.path() / "pred.jsonl", preds);
  }
  JudgeArgs args(const json& endpoint) {
    std::ofstream(dir.path() / "endpoint.json") << endpoint.dump();
    JudgeArgs a;
    a.predictions = dir.path() / "pred.jsonl";
    a.dataset = files.at("compositioncap");
    a.endpoint = dir.path() / "endpoint.json";
    a.image_root = dir.path() / "images";
    return a;
  }
  testing::TempDir dir{"judge"};
  testing::CompositionFixture fx = testing::make_composition_fixture(8, 3);
  std::map<std::string, fs::path> files;
  Streams s;
};

TEST_F(Judge, MockScriptDrivesVerdicts) {
  const json ep{{"type", "mock"}, {"script", {{"cc_0", {"No"}}, {"cc_2", {"<error>", "Yes"}}}}, {"fallback", "Yes"}};
  ASSERT_EQ(cmd_judge(args(ep), s.out, s.err), kExitOk) << s.err.str();
  const fs::path out = dir.path() / "pred.judge";
  const json j = read_json(out / "judge.json");
  EXPECT_EQ(j.at("yes"), 3);
  EXPECT_EQ(j.at("no"), 1);
  EXPECT_DOUBLE_EQ(j.at("accuracy").get<double>(), 0.75);
  std::ifstream v(out / "verdicts.jsonl");
  std::vector<json> rows;
  for (std::string line; std::getline(v, line);) rows.push_back(json::parse(line));
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[1].at("id"), "cc_2");
  EXPECT_EQ(rows[1].at("retries"), 1);
  EXPECT_EQ(s.out.str().rfind("accuracy: 0.75", 0), 0u);
}

TEST_F(Judge, UnparsedGivesPartialExit) {
  const json ep{{"type", "mock"}, {"script", {{"cc_4", {"unsure"}}}}};
  EXPECT_EQ(cmd_judge(args(ep), s.out, s.err), kExitPartial);
}

TEST_F(Judge, UnknownPredictionIdsAreRejected) {
  write_jsonl(dir.path() / "pred.jsonl", {{{"id", "ghost"}, {"caption", "x"}}});
  EXPECT_EQ(cmd_judge(args({{"type", "mock"}}), s.out, s.err), kExitUsage);
  EXPECT_NE(s.err.str().find("ghost"), std::string::npos);
}

TEST(TrainChain, StagesCaptionAndErrors) {
  testing::TempDir dir("train");
  const auto fx = testing::make_composition_fixture(4, 3);
  const auto files = testing::write_fixture(fx, dir.path());
  json sources;
  for (const auto& [name, f] : files) sources[name] = f.filename().string();
  const json cfg{{"model", testing::toy_model_config()},
                 {"sources", sources},
                 {"image_root", "images"},
                 {"out", "runs"},
                 {"stages", {{"1", {{"steps", 1}, {"batch_size", 2}}}, {"3", {{"steps", 2}, {"batch_size", 2}}}}},
                 {"stage_sources", {{"1", {"pretrain"}}, {"2", {"compositioncap", "refer"}}, {"3", {"compositioncap"}}}}};
  std::ofstream(dir.path() / "train.json") << cfg.dump(2);

  Streams early;
  EXPECT_EQ(cmd_train({dir.path() / "train.json", 2, {}, {}, {}}, early.out, early.err), kExitUsage);
  EXPECT_NE(early.err.str().find("stage 1"), std::string::npos);

  for (int stage = 1; stage <= 3; ++stage) {
    Streams s;
    ASSERT_EQ(cmd_train({dir.path() / "train.json", stage, {}, {}, 5}, s.out, s.err), kExitOk) << s.err.str();
    const fs::path out = dir.path() / "runs" / ("stage" + std::to_string(stage));
    for (const char* f : {"checkpoint.bin", "vocab.txt", "report.json", "manifest.json"})
      EXPECT_TRUE(fs::exists(out / f)) << stage << " " << f;
    EXPECT_EQ(read_json(out / "manifest.json").at("seed"), 5);
  }
  EXPECT_EQ(read_json(dir.path() / "runs" / "stage2" / "report.json").at("losses").size(), 0u);
  EXPECT_EQ(read_json(dir.path() / "runs" / "stage3" / "report.json").at("losses").size(), 2u);

  const auto& smp = fx.region_samples.front();
  save_mask_png(geometry::decode_rle(*smp.mask), dir.path() / "mask.png");
  CaptionArgs c;
  c.checkpoint = dir.path() / "runs" / "stage3" / "checkpoint.bin";
  c.image = dir.path() / "images" / smp.image_path;
  c.mask = dir.path() / "mask.png";
  c.task = "AARC";
  c.attribute = "Color";
  c.max_length = 4;
  c.out = dir.path() / "cap";
  Streams s1, s2;
  ASSERT_EQ(cmd_caption(c, s1.out, s1.err), kExitOk) << s1.err.str();
  c.attribute = "9";
  c.out.reset();
  ASSERT_EQ(cmd_caption(c, s2.out, s2.err), kExitOk);
  EXPECT_EQ(s1.out.str(), s2.out.str());
  EXPECT_TRUE(fs::exists(dir.path() / "cap" / "caption.txt"));

  Streams bad;
  c.mask.reset();
  EXPECT_EQ(cmd_caption(c, bad.out, bad.err), kExitUsage);
  c.mask = dir.path() / "mask.png";
  c.attribute = "Colour";
  EXPECT_EQ(cmd_caption(c, bad.out, bad.err), kExitUsage);
  c.task = "CGIC";
  c.attribute.reset();
  c.mask.reset();
  EXPECT_EQ(cmd_caption(c, bad.out, bad.err), kExitOk);
}

}  // namespace
}  // namespace regioncap::cli
