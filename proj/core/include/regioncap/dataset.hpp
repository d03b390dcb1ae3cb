// Copyright 2026 The regioncap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "regioncap/geometry.hpp"

namespace regioncap::dataset {

enum class TaskKind { AARC, RDC, CGIC };
enum class Split { train, test };

std::string to_string(TaskKind t);
std::string to_string(Split s);
TaskKind task_from_string(std::string_view name);
Split split_from_string(std::string_view name);

inline constexpr int kNumAttributes = 18;
inline constexpr std::array<std::string_view, kNumAttributes> kAttributeNames = {
    "Category Name",
    "Body Shape",
    "Skin Texture and Color",
    "Clothing, Shoes, Accessories",
    "Interaction with Other Objects",
    "Body Pose/Gesture",
    "Other Attributes",
    "Relative Location with Other Objects",
    "Color",
    "Materials/Texture",
    "Camera Viewpoint",
    "Associative Visual Effect",
    "Shape",
    "Facial Expression",
    "Hair",
    "Age Range",
    "Object Pose for Deformable Objects",
    "Style",
};

/// Name of attribute 1..18; ConfigError otherwise.
std::string_view attribute_name(int id);
/// Inverse of attribute_name; ConfigError for unknown names.
int attribute_id(std::string_view name);

struct RegionCaptionSample {
  std::string id;
  std::string image_path;
  int image_width = 0;
  int image_height = 0;
  std::string entity_id;
  std::optional<geometry::RunLengthEncoding> mask;
  TaskKind task = TaskKind::RDC;
  std::optional<int> attribute;
  std::string caption;
  Split split = Split::train;

  friend bool operator==(const RegionCaptionSample&, const RegionCaptionSample&) = default;
};

/// Throws IngestionError(source, line, ...) when a field is missing, has the
/// wrong type, or breaks a sample invariant. `line` doubles as the default id.
RegionCaptionSample sample_from_json(const nlohmann::json& j, const std::string& source,
                                     std::size_t line);
nlohmann::json sample_to_json(const RegionCaptionSample& s);

struct LocatedError {
  std::string source;
  std::size_t line = 0;
  std::string message;
};

struct LoadResult {
  std::vector<RegionCaptionSample> samples;
  std::vector<LocatedError> errors;
};

/// Newline-delimited JSON. Blank lines are skipped; invalid records are
/// reported with their 1-based line number and never abort the load.
LoadResult parse_samples(std::istream& in, const std::string& source);
LoadResult load_samples(const std::filesystem::path& path);
void write_samples(const std::vector<RegionCaptionSample>& samples,
                   const std::filesystem::path& path);

/// Instruction templates; "{attribute}" in `aarc` is replaced by the
/// attribute name.
struct InstructionTemplates {
  std::string aarc = "Describe the {attribute} of the masked region.";
  std::string rdc = "Provide a detailed description of the masked region.";
  std::string cgic = "Provide a comprehensive description of the entire image.";
};

/// Throws TemplateError unless an attribute is given exactly when task is AARC.
std::string build_instruction(TaskKind task, std::optional<int> attribute,
                              const InstructionTemplates& templates = {});
/// Instruction for a stored sample; attributes carried by non-AARC samples
/// are ignored.
std::string instruction_for(const RegionCaptionSample& s,
                            const InstructionTemplates& templates = {});

/// CGIC samples and full_mask sources give an all-ones mask; otherwise the
/// decoded RLE resized (nearest) to size x size. Decode failures surface as
/// IngestionError.
geometry::BinaryMask effective_mask(const RegionCaptionSample& s, int size,
                                    bool full_mask = false);

struct Histogram {
  std::vector<double> edges;  // bins [e_i, e_{i+1}); the last bin is closed
  std::vector<std::size_t> counts;

  static Histogram with_edges(std::vector<double> edges);
  static Histogram uniform(double lo, double hi, std::size_t bins);
  void add(double v);
  std::size_t total() const;
};

struct StatsOptions {
  std::vector<double> resolution_edges = {0, 512, 1024, 1536, 2048, 3072, 4096, 8192};
  std::size_t mask_ratio_bins = 20;
};

struct StatsReport {
  std::size_t images = 0;
  std::size_t entities = 0;
  std::size_t captions = 0;
  std::map<std::string, std::size_t> captions_per_attribute;  // all 18 names
  std::map<std::string, std::size_t> entities_per_attribute;
  std::map<std::string, std::size_t> captions_per_task;
  std::map<std::string, std::size_t> captions_per_split;
  std::map<std::string, std::size_t> entities_per_split;
  Histogram resolution;  // long image side, one entry per distinct image
  Histogram mask_ratio;  // one entry per distinct masked entity
};

/// Entities are distinct (image, entity) pairs. Order of samples does not
/// affect the result.
StatsReport dataset_stats(const std::vector<RegionCaptionSample>& samples,
                          const StatsOptions& options = {});
nlohmann::json stats_to_json(const StatsReport& r);

// ------------------------------------------------------------------ mixtures

struct SourceSpec {
  std::string name;
  double weight = 1.0;
  std::optional<Split> split;
  bool full_mask = false;
};

/// Weights are normalized to sum to one.
struct DatasetSpec {
  std::vector<SourceSpec> sources;
};

void to_json(nlohmann::json& j, const DatasetSpec& spec);
void from_json(const nlohmann::json& j, DatasetSpec& spec);
/// Throws ConfigError on an empty list or non-positive weight.
DatasetSpec normalized(DatasetSpec spec);

using Registry = std::map<std::string, std::vector<RegionCaptionSample>>;

/// Source names used by stage_mixture.
struct StageSources {
  std::vector<std::string> stage1 = {"llava_pretrain"};
  std::vector<std::string> stage2 = {"compositioncap", "grand", "refcoco", "refcoco+", "refcocog"};
  std::vector<std::string> stage3 = {"compositioncap"};
};

/// Stage 1: pretraining captions with full masks; stage 2: the region
/// sources at equal weight; stage 3: the training split of the region
/// caption corpus. Throws ConfigError for a bad stage or a source missing
/// from the registry.
DatasetSpec stage_mixture(int stage, const Registry& registry, const StageSources& names = {});

struct Draw {
  const RegionCaptionSample* sample = nullptr;
  std::size_t source = 0;
  bool full_mask = false;
};

/// Picks a source by weight, then walks that source in a per-epoch shuffled
/// order. Deterministic for a given seed.
class MixtureSampler {
 public:
  MixtureSampler(DatasetSpec spec, const Registry& registry, std::uint64_t seed);

  Draw next();
  std::vector<Draw> batch(std::size_t n);
  const DatasetSpec& spec() const noexcept { return spec_; }

 private:
  struct Pool {
    std::vector<const RegionCaptionSample*> samples;
    std::vector<std::size_t> order;
    std::size_t cursor = 0;
  };

  DatasetSpec spec_;
  std::vector<Pool> pools_;
  std::mt19937_64 rng_;
  std::discrete_distribution<std::size_t> pick_;
};

}  // namespace regioncap::dataset
