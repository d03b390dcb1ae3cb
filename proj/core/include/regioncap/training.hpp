// Copyright 2026 The regioncap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "regioncap/dataset.hpp"
#include "regioncap/image.hpp"
#include "regioncap/model.hpp"
#include "regioncap/params.hpp"

namespace regioncap::training {

using TrainabilityMap = std::map<Component, bool>;

/// Stage 1: adapter only. Stage 2: alpha_conv and lr_encoder_trunk.
/// Stage 3: everything. ConfigError for any other stage.
TrainabilityMap freeze_plan(int stage);

struct OptimizerConfig {
  double learning_rate = 1e-3;
  int steps = 0;
  int batch_size = 1;
  std::uint64_t seed = 0;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct StageConfig {
  int stage = 1;
  dataset::DatasetSpec data;
  TrainabilityMap trainable;
  OptimizerConfig optimizer;
};

/// Stage config with the stage's freeze plan filled in.
StageConfig make_stage_config(int stage, dataset::DatasetSpec data, OptimizerConfig optimizer);
/// Throws ConfigError when the trainability map differs from freeze_plan or
/// the optimizer settings are out of range.
void validate(const StageConfig& cfg);

void to_json(nlohmann::json& j, const OptimizerConfig& c);
void from_json(const nlohmann::json& j, OptimizerConfig& c);

/// Decoupled weight decay with bias-corrected moments.
class AdamW {
 public:
  explicit AdamW(OptimizerConfig cfg) : cfg_(cfg) {}
  /// Updates every parameter with requires_grad set, using its grad.
  void step(ParamStore& store);
  std::int64_t steps_taken() const noexcept { return t_; }

 private:
  OptimizerConfig cfg_;
  std::int64_t t_ = 0;
  std::map<std::string, std::pair<Matrix, Matrix>> moments_;
};

/// Where training and captioning read pixels from.
class ImageSource {
 public:
  virtual ~ImageSource() = default;
  virtual Image load(const std::string& path) = 0;
};

/// Reads files relative to a root directory and caches decoded images.
class FileImageSource : public ImageSource {
 public:
  explicit FileImageSource(std::filesystem::path root) : root_(std::move(root)) {}
  Image load(const std::string& path) override;

 private:
  std::filesystem::path root_;
  std::map<std::string, Image> cache_;
};

class MemoryImageSource : public ImageSource {
 public:
  void put(const std::string& path, Image img) { images_[path] = std::move(img); }
  Image load(const std::string& path) override;

 private:
  std::map<std::string, Image> images_;
};

struct TrainingReport {
  int stage = 0;
  std::vector<double> losses;
  double wall_seconds = 0.0;
  std::uint64_t checksum = 0;
  std::map<std::string, std::uint64_t> component_checksums;
};

/// Wall time is left out so that identical runs give identical reports.
nlohmann::json report_to_json(const TrainingReport& r);

struct RunOptions {
  dataset::InstructionTemplates templates;
  std::function<void(int step, double loss)> on_step;
};

/// Runs config.optimizer.steps AdamW steps on batches drawn from the stage
/// mixture. Only components marked trainable change. Throws TrainingError
/// with the step index when the loss stops being finite.
TrainingReport run_stage(CaptionModel& model, const StageConfig& config,
                         const dataset::Registry& registry, ImageSource& images,
                         const RunOptions& options = {});

// ---------------------------------------------------------------- gradients

struct GradCheckOptions {
  double epsilon = 1e-5;
  std::size_t entries_per_component = 10;
  std::uint64_t seed = 0;
  /// Runs between back-propagation and the comparison; used to corrupt
  /// gradients deliberately.
  std::function<void(ParamStore&)> gradient_hook;
};

struct GradCheckEntry {
  std::string parameter;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double relative_error = 0.0;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::map<std::string, double> per_component;
  std::vector<GradCheckEntry> entries;
};

/// |a - n| / max(|a|, |n|, 1e-6)
double relative_error(double analytic, double numeric);

/// Central differences on randomly chosen scalar entries, at least
/// entries_per_component of them (or all, when fewer exist) for each
/// component that owns parameters.
GradCheckResult grad_check(ParamStore& store, const std::function<ad::Var(ad::Graph&)>& loss,
                           const GradCheckOptions& options = {});
/// Same, on the model's per-sample loss.
GradCheckResult grad_check(CaptionModel& model, const PreparedInput& input,
                           const std::vector<int>& instruction, const std::vector<int>& caption,
                           const GradCheckOptions& options = {});

// ---------------------------------------------------------------- checkpoints

/// Binary archive: magic, JSON header (model config, vocabulary, parameter
/// names and shapes, caller metadata), then the raw little-endian doubles.
void save_checkpoint(const std::filesystem::path& file, const CaptionModel& model,
                     const nlohmann::json& metadata = nlohmann::json::object());

struct LoadedCheckpoint {
  std::unique_ptr<CaptionModel> model;
  nlohmann::json metadata;
};

/// Throws Error on a truncated or foreign file.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& file);

}  // namespace regioncap::training
