// Copyright 2026 The regioncap Authors
// SPDX-License-Identifier: Apache-2.0

#include "regioncap/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>

#include <nlohmann/json.hpp>

#include "regioncap/errors.hpp"

namespace regioncap::dataset {

using nlohmann::json;

std::string to_string(TaskKind t) {
  switch (t) {
    case TaskKind::AARC: return "AARC";
    case TaskKind::RDC: return "RDC";
    case TaskKind::CGIC: return "CGIC";
  }
  return "RDC";
}

std::string to_string(Split s) { return s == Split::train ? "train" : "test"; }

TaskKind task_from_string(std::string_view name) {
  if (name == "AARC") return TaskKind::AARC;
  if (name == "RDC") return TaskKind::RDC;
  if (name == "CGIC") return TaskKind::CGIC;
  throw ConfigError("unknown task '" + std::string(name) + "' (expected AARC, RDC or CGIC)");
}

Split split_from_string(std::string_view name) {
  if (name == "train") return Split::train;
  if (name == "test") return Split::test;
  throw ConfigError("unknown split '" + std::string(name) + "'");
}

std::string_view attribute_name(int id) {
  if (id < 1 || id > kNumAttributes) {
    throw ConfigError("attribute id " + std::to_string(id) + " outside 1..18");
  }
  return kAttributeNames[static_cast<std::size_t>(id - 1)];
}

int attribute_id(std::string_view name) {
  for (int i = 0; i < kNumAttributes; ++i) {
    if (kAttributeNames[static_cast<std::size_t>(i)] == name) return i + 1;
  }
  throw ConfigError("unknown attribute '" + std::string(name) + "'");
}

namespace {

template <typename T>
T field(const json& j, const char* key, const std::string& source, std::size_t line) {
  if (!j.contains(key)) throw IngestionError(source, line, std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw IngestionError(source, line, std::string("field '") + key + "' has the wrong type");
  }
}

void check_rle(const geometry::RunLengthEncoding& rle, const std::string& source, std::size_t line) {
  const std::uint64_t total =
      std::accumulate(rle.counts.begin(), rle.counts.end(), std::uint64_t{0});
  if (total != static_cast<std::uint64_t>(rle.height) * static_cast<std::uint64_t>(rle.width)) {
    throw IngestionError(source, line, "mask run lengths sum to " + std::to_string(total) +
                                           ", expected " + std::to_string(rle.height) + "x" +
                                           std::to_string(rle.width));
  }
  for (std::size_t i = 1; i < rle.counts.size(); ++i) {
    if (rle.counts[i] == 0) throw IngestionError(source, line, "mask has an interior empty run");
  }
}

double rle_ratio(const geometry::RunLengthEncoding& rle) {
  std::uint64_t ones = 0;
  for (std::size_t i = 1; i < rle.counts.size(); i += 2) ones += rle.counts[i];
  const double area = static_cast<double>(rle.height) * rle.width;
  return area > 0 ? static_cast<double>(ones) / area : 0.0;
}

}  // namespace

RegionCaptionSample sample_from_json(const json& j, const std::string& source, std::size_t line) {
  if (!j.is_object()) throw IngestionError(source, line, "record is not a JSON object");
  RegionCaptionSample s;
  s.id = j.contains("id") ? field<std::string>(j, "id", source, line) : std::to_string(line);
  s.image_path = field<std::string>(j, "image", source, line);
  s.image_width = field<int>(j, "w", source, line);
  s.image_height = field<int>(j, "h", source, line);
  s.entity_id = field<std::string>(j, "entity", source, line);
  s.caption = field<std::string>(j, "caption", source, line);
  if (s.image_path.empty()) throw IngestionError(source, line, "empty image path");
  if (s.image_width < 1 || s.image_height < 1) throw IngestionError(source, line, "image size must be >= 1");
  try {
    s.task = task_from_string(field<std::string>(j, "task", source, line));
    s.split = split_from_string(field<std::string>(j, "split", source, line));
    if (j.contains("attribute") && !j.at("attribute").is_null()) {
      const int a = field<int>(j, "attribute", source, line);
      attribute_name(a);
      s.attribute = a;
    }
  } catch (const ConfigError& e) {
    throw IngestionError(source, line, e.what());
  }
  if (!j.contains("mask")) throw IngestionError(source, line, "missing field 'mask'");
  if (!j.at("mask").is_null()) {
    const json& m = j.at("mask");
    if (!m.is_object()) throw IngestionError(source, line, "mask must be an object or null");
    geometry::RunLengthEncoding rle;
    rle.height = field<int>(m, "h", source, line);
    rle.width = field<int>(m, "w", source, line);
    rle.counts = field<std::vector<std::uint32_t>>(m, "counts", source, line);
    if (rle.height != s.image_height || rle.width != s.image_width) {
      throw IngestionError(source, line, "mask size does not match image size");
    }
    check_rle(rle, source, line);
    s.mask = std::move(rle);
  }
  if (s.task == TaskKind::AARC && !s.attribute) {
    throw IngestionError(source, line, "AARC record without attribute");
  }
  if (s.task == TaskKind::CGIC && s.mask) throw IngestionError(source, line, "CGIC record must not carry a mask");
  if (s.task != TaskKind::CGIC && !s.mask) {
    throw IngestionError(source, line, to_string(s.task) + " record without mask");
  }
  return s;
}

json sample_to_json(const RegionCaptionSample& s) {
  json j{{"id", s.id},
         {"image", s.image_path},
         {"w", s.image_width},
         {"h", s.image_height},
         {"entity", s.entity_id},
         {"task", to_string(s.task)},
         {"caption", s.caption},
         {"split", to_string(s.split)}};
  j["mask"] = s.mask ? json{{"h", s.mask->height}, {"w", s.mask->width}, {"counts", s.mask->counts}}
                     : json(nullptr);
  j["attribute"] = s.attribute ? json(*s.attribute) : json(nullptr);
  return j;
}

LoadResult parse_samples(std::istream& in, const std::string& source) {
  LoadResult out;
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      json j;
      try {
        j = json::parse(line);
      } catch (const json::parse_error& e) {
        throw IngestionError(source, line_no, std::string("malformed JSON: ") + e.what());
      }
      out.samples.push_back(sample_from_json(j, source, line_no));
    } catch (const IngestionError& e) {
      out.errors.push_back({e.source(), e.line(), e.what()});
    }
  }
  return out;
}

LoadResult load_samples(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError(path.string(), 0, "cannot open file");
  return parse_samples(in, path.string());
}

void write_samples(const std::vector<RegionCaptionSample>& samples, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& s : samples) out << sample_to_json(s).dump() << '\n';
}

std::string build_instruction(TaskKind task, std::optional<int> attribute,
                              const InstructionTemplates& t) {
  if ((task == TaskKind::AARC) != attribute.has_value()) {
    throw TemplateError(task == TaskKind::AARC ? "AARC instruction needs an attribute"
                                               : to_string(task) + " instruction takes no attribute");
  }
  switch (task) {
    case TaskKind::AARC: {
      std::string name;
      try {
        name = attribute_name(*attribute);
      } catch (const ConfigError& e) {
        throw TemplateError(e.what());
      }
      std::string out = t.aarc;
      const std::string key = "{attribute}";
      for (auto pos = out.find(key); pos != std::string::npos; pos = out.find(key, pos + name.size())) {
        out.replace(pos, key.size(), name);
      }
      return out;
    }
    case TaskKind::RDC: return t.rdc;
    case TaskKind::CGIC: return t.cgic;
  }
  return t.rdc;
}

std::string instruction_for(const RegionCaptionSample& s, const InstructionTemplates& t) {
  return build_instruction(s.task, s.task == TaskKind::AARC ? s.attribute : std::nullopt, t);
}

geometry::BinaryMask effective_mask(const RegionCaptionSample& s, int size, bool full_mask) {
  if (full_mask || s.task == TaskKind::CGIC || !s.mask) return geometry::BinaryMask::ones(size, size);
  try {
    return geometry::resize_mask(geometry::decode_rle(*s.mask), size, size);
  } catch (const MalformedEncodingError& e) {
    throw IngestionError(s.id, 0, e.what());
  }
}

Histogram Histogram::with_edges(std::vector<double> edges) {
  if (edges.size() < 2 || !std::is_sorted(edges.begin(), edges.end())) {
    throw ConfigError("histogram needs at least two ascending edges");
  }
  Histogram h;
  h.counts.assign(edges.size() - 1, 0);
  h.edges = std::move(edges);
  return h;
}

Histogram Histogram::uniform(double lo, double hi, std::size_t bins) {
  if (bins == 0 || !(hi > lo)) throw ConfigError("uniform histogram needs bins >= 1 and hi > lo");
  std::vector<double> edges(bins + 1);
  for (std::size_t i = 0; i <= bins; ++i) edges[i] = lo + (hi - lo) * static_cast<double>(i) / bins;
  edges.back() = hi;
  return with_edges(std::move(edges));
}

void Histogram::add(double v) {
  // Values outside the edges land in the first or last bin.
  auto it = std::upper_bound(edges.begin(), edges.end(), v);
  std::size_t bin = it == edges.begin() ? 0 : static_cast<std::size_t>(it - edges.begin()) - 1;
  bin = std::min(bin, counts.size() - 1);
  ++counts[bin];
}

std::size_t Histogram::total() const { return std::accumulate(counts.begin(), counts.end(), std::size_t{0}); }

StatsReport dataset_stats(const std::vector<RegionCaptionSample>& samples, const StatsOptions& options) {
  StatsReport r;
  r.resolution = Histogram::with_edges(options.resolution_edges);
  r.mask_ratio = Histogram::uniform(0.0, 1.0, options.mask_ratio_bins);
  for (auto name : kAttributeNames) {
    r.captions_per_attribute[std::string(name)] = 0;
    r.entities_per_attribute[std::string(name)] = 0;
  }
  for (auto t : {TaskKind::AARC, TaskKind::RDC, TaskKind::CGIC}) r.captions_per_task[to_string(t)] = 0;
  for (auto s : {Split::train, Split::test}) {
    r.captions_per_split[to_string(s)] = 0;
    r.entities_per_split[to_string(s)] = 0;
  }

  // Ordered containers keep the result independent of sample order; the
  // mask ratio of an entity comes from its lexicographically smallest id.
  std::map<std::string, int> image_side;
  std::map<std::pair<std::string, std::string>, std::pair<std::string, double>> entity_ratio;
  std::set<std::tuple<std::string, std::string, std::string>> entity_split;
  std::set<std::tuple<std::string, std::string, int>> entity_attr;
  for (const auto& s : samples) {
    ++r.captions;
    ++r.captions_per_task[to_string(s.task)];
    ++r.captions_per_split[to_string(s.split)];
    image_side[s.image_path] = std::max(s.image_width, s.image_height);
    if (s.task == TaskKind::AARC && s.attribute) {
      ++r.captions_per_attribute[std::string(attribute_name(*s.attribute))];
      entity_attr.emplace(s.image_path, s.entity_id, *s.attribute);
    }
    if (s.task == TaskKind::CGIC || !s.mask) continue;
    const auto key = std::make_pair(s.image_path, s.entity_id);
    const double ratio = rle_ratio(*s.mask);
    auto [it, inserted] = entity_ratio.emplace(key, std::make_pair(s.id, ratio));
    if (!inserted && s.id < it->second.first) it->second = {s.id, ratio};
    entity_split.emplace(s.image_path, s.entity_id, to_string(s.split));
  }
  r.images = image_side.size();
  r.entities = entity_ratio.size();
  for (const auto& [path, side] : image_side) r.resolution.add(side);
  for (const auto& [key, v] : entity_ratio) r.mask_ratio.add(v.second);
  for (const auto& [img, ent, split] : entity_split) ++r.entities_per_split[split];
  for (const auto& [img, ent, attr] : entity_attr) ++r.entities_per_attribute[std::string(attribute_name(attr))];
  return r;
}

json stats_to_json(const StatsReport& r) {
  auto hist = [](const Histogram& h) { return json{{"edges", h.edges}, {"counts", h.counts}}; };
  json attrs = json::array();
  for (int i = 1; i <= kNumAttributes; ++i) {
    const std::string name(attribute_name(i));
    const std::size_t n = r.captions_per_attribute.at(name);
    std::size_t aarc = 0;
    if (auto it = r.captions_per_task.find("AARC"); it != r.captions_per_task.end()) aarc = it->second;
    attrs.push_back({{"id", i},
                     {"name", name},
                     {"captions", n},
                     {"entities", r.entities_per_attribute.at(name)},
                     {"proportion", aarc ? static_cast<double>(n) / static_cast<double>(aarc) : 0.0}});
  }
  return json{{"images", r.images},
              {"entities", r.entities},
              {"captions", r.captions},
              {"attributes", attrs},
              {"captions_per_task", r.captions_per_task},
              {"captions_per_split", r.captions_per_split},
              {"entities_per_split", r.entities_per_split},
              {"resolution_histogram", hist(r.resolution)},
              {"mask_ratio_histogram", hist(r.mask_ratio)}};
}

void to_json(json& j, const DatasetSpec& spec) {
  j = json::array();
  for (const auto& s : spec.sources) {
    json e{{"name", s.name}, {"weight", s.weight}, {"full_mask", s.full_mask}};
    e["split"] = s.split ? json(to_string(*s.split)) : json(nullptr);
    j.push_back(std::move(e));
  }
}

void from_json(const json& j, DatasetSpec& spec) {
  spec.sources.clear();
  for (const auto& e : j) {
    SourceSpec s;
    e.at("name").get_to(s.name);
    if (e.contains("weight")) e.at("weight").get_to(s.weight);
    if (e.contains("full_mask")) e.at("full_mask").get_to(s.full_mask);
    if (e.contains("split") && !e.at("split").is_null()) s.split = split_from_string(e.at("split").get<std::string>());
    spec.sources.push_back(std::move(s));
  }
  spec = normalized(std::move(spec));
}

DatasetSpec normalized(DatasetSpec spec) {
  if (spec.sources.empty()) throw ConfigError("dataset spec has no sources");
  double total = 0.0;
  for (const auto& s : spec.sources) {
    if (!(s.weight > 0.0)) throw ConfigError("source '" + s.name + "' has a non-positive weight");
    total += s.weight;
  }
  for (auto& s : spec.sources) s.weight /= total;
  return spec;
}

DatasetSpec stage_mixture(int stage, const Registry& registry, const StageSources& names) {
  const std::vector<std::string>* list = nullptr;
  switch (stage) {
    case 1: list = &names.stage1; break;
    case 2: list = &names.stage2; break;
    case 3: list = &names.stage3; break;
    default: throw ConfigError("stage must be 1, 2 or 3, got " + std::to_string(stage));
  }
  DatasetSpec spec;
  for (const auto& name : *list) {
    if (!registry.contains(name)) {
      throw ConfigError("stage " + std::to_string(stage) + " needs data source '" + name +
                        "', which is not registered");
    }
    SourceSpec s{name, 1.0, std::nullopt, stage == 1};
    if (stage == 3) s.split = Split::train;
    spec.sources.push_back(std::move(s));
  }
  return normalized(std::move(spec));
}

MixtureSampler::MixtureSampler(DatasetSpec spec, const Registry& registry, std::uint64_t seed)
    : spec_(normalized(std::move(spec))), rng_(seed) {
  std::vector<double> weights;
  for (const auto& src : spec_.sources) {
    auto it = registry.find(src.name);
    if (it == registry.end()) throw ConfigError("data source '" + src.name + "' is not registered");
    Pool pool;
    for (const auto& s : it->second) {
      if (!src.split || s.split == *src.split) pool.samples.push_back(&s);
    }
    if (pool.samples.empty()) throw ConfigError("data source '" + src.name + "' has no usable samples");
    pool.order.resize(pool.samples.size());
    pools_.push_back(std::move(pool));
    weights.push_back(src.weight);
  }
  pick_ = std::discrete_distribution<std::size_t>(weights.begin(), weights.end());
}

Draw MixtureSampler::next() {
  const std::size_t src = pools_.size() == 1 ? 0 : pick_(rng_);
  Pool& p = pools_[src];
  if (p.cursor == 0) {
    std::iota(p.order.begin(), p.order.end(), std::size_t{0});
    std::shuffle(p.order.begin(), p.order.end(), rng_);
  }
  const RegionCaptionSample* s = p.samples[p.order[p.cursor]];
  p.cursor = (p.cursor + 1) % p.samples.size();
  return {s, src, spec_.sources[src].full_mask};
}

std::vector<Draw> MixtureSampler::batch(std::size_t n) {
  std::vector<Draw> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(next());
  return out;
}

}  // namespace regioncap::dataset
