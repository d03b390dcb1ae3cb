// Copyright 2026 The regioncap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace regioncap::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitPartial = 1;
inline constexpr int kExitUsage = 2;

namespace fs = std::filesystem;

struct TrainArgs {
  fs::path config;
  int stage = 1;
  std::optional<fs::path> checkpoint;  // prior-stage checkpoint override
  std::optional<fs::path> out;
  std::optional<std::uint64_t> seed;
};

struct CaptionArgs {
  fs::path checkpoint;
  fs::path image;
  std::optional<fs::path> mask;
  std::string task;
  std::optional<std::string> attribute;  // id 1..18 or exact name
  std::optional<std::uint64_t> seed;
  std::optional<fs::path> out;
  int max_length = 32;
};

struct EvaluateArgs {
  fs::path predictions;
  fs::path references;
  std::optional<std::string> metrics;  // comma separated; empty selects none
  std::optional<fs::path> out;
};

struct StatsArgs {
  fs::path dataset;
  fs::path out;
};

struct JudgeArgs {
  fs::path predictions;
  fs::path dataset;
  fs::path endpoint;
  std::optional<fs::path> out;
  std::optional<fs::path> image_root;
  std::size_t concurrency = 4;
  std::size_t retries = 3;
};

int cmd_train(const TrainArgs& args, std::ostream& out, std::ostream& err);
int cmd_caption(const CaptionArgs& args, std::ostream& out, std::ostream& err);
int cmd_evaluate(const EvaluateArgs& args, std::ostream& out, std::ostream& err);
int cmd_stats(const StatsArgs& args, std::ostream& out, std::ostream& err);
int cmd_judge(const JudgeArgs& args, std::ostream& out, std::ostream& err);

/// SHA-1 of "blob <size>\0<content>", as git computes object ids.
std::string git_blob_sha1(const fs::path& file);

/// Run manifest written into `dir` before any other output.
class Manifest {
 public:
  Manifest(fs::path dir, std::string command, nlohmann::json args);

  void set_config(const fs::path& config);
  void set_seed(std::uint64_t seed);
  void add_input(const fs::path& file);
  void add_output(const fs::path& file);
  /// Writes manifest.json; called once at start and again on finish.
  void write();
  void finish(double wall_seconds);

  const fs::path& dir() const { return dir_; }
  std::string relative(const fs::path& p) const;

 private:
  fs::path dir_;
  nlohmann::json doc_;
};

struct BarChart {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<std::string> labels;
  std::vector<double> values;
};

/// Static SVG bar chart.
void write_bar_chart_svg(const BarChart& chart, const fs::path& file);

}  // namespace regioncap::cli
