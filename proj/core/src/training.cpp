// Copyright 2026 The regioncap Authors
// SPDX-License-Identifier: Apache-2.0

#include "regioncap/training.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <set>

#include "regioncap/errors.hpp"

namespace regioncap::training {

using nlohmann::json;

TrainabilityMap freeze_plan(int stage) {
  TrainabilityMap m;
  for (Component c : kAllComponents) m[c] = false;
  switch (stage) {
    case 1:
      m[Component::adapter] = true;
      break;
    case 2:
      m[Component::alpha_conv] = true;
      m[Component::lr_encoder_trunk] = true;
      break;
    case 3:
      for (Component c : kAllComponents) m[c] = true;
      break;
    default:
      throw ConfigError("stage must be 1, 2 or 3, got " + std::to_string(stage));
  }
  return m;
}

StageConfig make_stage_config(int stage, dataset::DatasetSpec data, OptimizerConfig optimizer) {
  StageConfig cfg{stage, std::move(data), freeze_plan(stage), optimizer};
  validate(cfg);
  return cfg;
}

void validate(const StageConfig& cfg) {
  const TrainabilityMap plan = freeze_plan(cfg.stage);
  for (Component c : kAllComponents) {
    auto it = cfg.trainable.find(c);
    const bool set = it != cfg.trainable.end() && it->second;
    if (set != plan.at(c)) {
      throw ConfigError("stage " + std::to_string(cfg.stage) + " must " +
                        (plan.at(c) ? "train " : "freeze ") + std::string(to_string(c)));
    }
  }
  const auto& o = cfg.optimizer;
  if (o.steps < 0) throw ConfigError("steps must be >= 0");
  if (o.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(o.learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (o.weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
  if (!(o.beta1 >= 0.0 && o.beta1 < 1.0 && o.beta2 >= 0.0 && o.beta2 < 1.0)) {
    throw ConfigError("betas must lie in [0, 1)");
  }
  if (!(o.epsilon > 0.0)) throw ConfigError("epsilon must be > 0");
}

void to_json(json& j, const OptimizerConfig& c) {
  j = json{{"learning_rate", c.learning_rate}, {"steps", c.steps},
           {"batch_size", c.batch_size},       {"seed", c.seed},
           {"weight_decay", c.weight_decay},   {"beta1", c.beta1},
           {"beta2", c.beta2},                 {"epsilon", c.epsilon}};
}

void from_json(const json& j, OptimizerConfig& c) {
  c = OptimizerConfig{};
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  get("learning_rate", c.learning_rate);
  get("steps", c.steps);
  get("batch_size", c.batch_size);
  get("seed", c.seed);
  get("weight_decay", c.weight_decay);
  get("beta1", c.beta1);
  get("beta2", c.beta2);
  get("epsilon", c.epsilon);
}

void AdamW::step(ParamStore& store) {
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < store.size(); ++i) {
    ad::Parameter& p = store.at(i);
    if (!p.requires_grad || p.grad.size() != p.value.size()) continue;
    auto [it, fresh] = moments_.try_emplace(p.name);
    auto& [m, v] = it->second;
    if (fresh) {
      m = Matrix(p.value.rows(), p.value.cols());
      v = Matrix(p.value.rows(), p.value.cols());
    }
    auto& w = p.value.values();
    const auto& g = p.grad.values();
    for (std::size_t k = 0; k < w.size(); ++k) {
      m.values()[k] = cfg_.beta1 * m.values()[k] + (1.0 - cfg_.beta1) * g[k];
      v.values()[k] = cfg_.beta2 * v.values()[k] + (1.0 - cfg_.beta2) * g[k] * g[k];
      const double mh = m.values()[k] / c1;
      const double vh = v.values()[k] / c2;
      w[k] -= cfg_.learning_rate * (mh / (std::sqrt(vh) + cfg_.epsilon) + cfg_.weight_decay * w[k]);
    }
  }
}

Image FileImageSource::load(const std::string& path) {
  if (auto it = cache_.find(path); it != cache_.end()) return it->second;
  std::filesystem::path p(path);
  if (p.is_relative()) p = root_ / p;
  Image img = load_image(p);
  cache_.emplace(path, img);
  return img;
}

Image MemoryImageSource::load(const std::string& path) {
  auto it = images_.find(path);
  if (it == images_.end()) throw Error("no in-memory image registered for '" + path + "'");
  return it->second;
}

json report_to_json(const TrainingReport& r) {
  json comps = json::object();
  for (const auto& [name, sum] : r.component_checksums) comps[name] = hex64(sum);
  return json{{"stage", r.stage},
              {"steps", r.losses.size()},
              {"losses", r.losses},
              {"checksum", hex64(r.checksum)},
              {"component_checksums", comps}};
}

namespace {

struct Prepared {
  PreparedInput input;
  std::vector<int> instruction;
  std::vector<int> caption;
};

void fill_checksums(const ParamStore& store, TrainingReport& r) {
  r.checksum = store.checksum();
  for (Component c : kAllComponents) r.component_checksums[std::string(to_string(c))] = store.checksum(c);
}

}  // namespace

TrainingReport run_stage(CaptionModel& model, const StageConfig& config,
                         const dataset::Registry& registry, ImageSource& images,
                         const RunOptions& options) {
  validate(config);
  const auto start = std::chrono::steady_clock::now();
  ParamStore& store = model.params();
  for (Component c : kAllComponents) store.set_trainable(c, config.trainable.at(c));

  dataset::MixtureSampler sampler(config.data, registry, config.optimizer.seed);
  AdamW adam(config.optimizer);
  std::map<std::pair<const dataset::RegionCaptionSample*, bool>, Prepared> cache;
  auto prepared = [&](const dataset::Draw& d) -> const Prepared& {
    const auto key = std::make_pair(d.sample, d.full_mask);
    if (auto it = cache.find(key); it != cache.end()) return it->second;
    const auto& s = *d.sample;
    const Image img = images.load(s.image_path);
    const auto mask = dataset::effective_mask(s, model.config().encoders.lr_size, d.full_mask);
    Prepared p{model.prepare(img, mask), model.vocab().encode(dataset::instruction_for(s, options.templates)),
               model.vocab().encode(s.caption)};
    return cache.emplace(key, std::move(p)).first->second;
  };

  TrainingReport report;
  report.stage = config.stage;
  const int batch = config.optimizer.batch_size;
  for (int step = 0; step < config.optimizer.steps; ++step) {
    store.zero_grad();
    ad::Graph g(true);
    ad::Var total;
    for (const auto& draw : sampler.batch(static_cast<std::size_t>(batch))) {
      const Prepared& p = prepared(draw);
      ad::Var l = model.loss(g, p.input, p.instruction, p.caption);
      total = total.valid() ? ad::add(total, l) : l;
    }
    total = ad::scale(total, 1.0 / batch);
    const double loss = total.value()(0, 0);
    if (!std::isfinite(loss)) {
      throw TrainingError(static_cast<std::size_t>(step), "loss is not finite");
    }
    g.backward(total);
    adam.step(store);
    report.losses.push_back(loss);
    if (options.on_step) options.on_step(step, loss);
  }
  fill_checksums(store, report);
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / denom;
}

GradCheckResult grad_check(ParamStore& store, const std::function<ad::Var(ad::Graph&)>& loss,
                           const GradCheckOptions& options) {
  std::vector<bool> saved;
  for (std::size_t i = 0; i < store.size(); ++i) {
    saved.push_back(store.at(i).requires_grad);
    store.at(i).requires_grad = true;
  }
  store.zero_grad();
  {
    ad::Graph g(true);
    g.backward(loss(g));
  }
  if (options.gradient_hook) options.gradient_hook(store);

  auto eval = [&] {
    ad::Graph g(false);
    return loss(g).value()(0, 0);
  };

  GradCheckResult result;
  std::mt19937_64 rng(options.seed);
  for (Component c : kAllComponents) {
    std::vector<std::pair<std::size_t, std::size_t>> slots;  // (param, first flat index)
    std::size_t total = 0;
    for (std::size_t i = 0; i < store.size(); ++i) {
      if (store.component_of(i) != c) continue;
      slots.emplace_back(i, total);
      total += store.at(i).value.size();
    }
    if (total == 0) continue;
    const std::size_t want = std::min(options.entries_per_component, total);
    std::set<std::size_t> picked;
    std::uniform_int_distribution<std::size_t> dist(0, total - 1);
    while (picked.size() < want) picked.insert(dist(rng));

    double worst = 0.0;
    for (std::size_t flat : picked) {
      auto it = std::upper_bound(slots.begin(), slots.end(), flat,
                                 [](std::size_t f, const auto& s) { return f < s.second; });
      const auto [pi, first] = *std::prev(it);
      ad::Parameter& p = store.at(pi);
      const std::size_t k = flat - first;
      const double orig = p.value.values()[k];
      p.value.values()[k] = orig + options.epsilon;
      const double up = eval();
      p.value.values()[k] = orig - options.epsilon;
      const double down = eval();
      p.value.values()[k] = orig;
      GradCheckEntry e{p.name, k, p.grad.values()[k], (up - down) / (2.0 * options.epsilon), 0.0};
      e.relative_error = relative_error(e.analytic, e.numeric);
      worst = std::max(worst, e.relative_error);
      result.entries.push_back(std::move(e));
    }
    result.per_component[std::string(to_string(c))] = worst;
    result.max_relative_error = std::max(result.max_relative_error, worst);
  }
  for (std::size_t i = 0; i < store.size(); ++i) store.at(i).requires_grad = saved[i];
  return result;
}

GradCheckResult grad_check(CaptionModel& model, const PreparedInput& input,
                           const std::vector<int>& instruction, const std::vector<int>& caption,
                           const GradCheckOptions& options) {
  return grad_check(
      model.params(),
      [&](ad::Graph& g) { return model.loss(g, input, instruction, caption); }, options);
}

namespace {

constexpr char kMagic[8] = {'R', 'C', 'A', 'P', 'C', 'K', 'P', 'T'};
static_assert(std::endian::native == std::endian::little, "checkpoints assume a little-endian host");

}  // namespace

void save_checkpoint(const std::filesystem::path& file, const CaptionModel& model,
                     const json& metadata) {
  const ParamStore& store = model.params();
  json params = json::array();
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto& p = store.at(i);
    params.push_back({{"name", p.name},
                      {"component", to_string(store.component_of(i))},
                      {"rows", p.value.rows()},
                      {"cols", p.value.cols()}});
  }
  const json header{{"format", 1},
                    {"config", model.config()},
                    {"vocab", model.vocab().tokens()},
                    {"params", params},
                    {"metadata", metadata}};
  const std::string text = header.dump();

  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  const auto tmp = std::filesystem::path(file.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("cannot write checkpoint " + tmp.string());
    out.write(kMagic, sizeof kMagic);
    const std::uint64_t len = text.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (std::size_t i = 0; i < store.size(); ++i) {
      const auto& v = store.at(i).value.values();
      out.write(reinterpret_cast<const char*>(v.data()),
                static_cast<std::streamsize>(v.size() * sizeof(double)));
    }
    if (!out) throw Error("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, file);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + file.string());
  char magic[sizeof kMagic];
  std::uint64_t len = 0;
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw Error(file.string() + " is not a regioncap checkpoint");
  }
  if (!in.read(reinterpret_cast<char*>(&len), sizeof len) || len > (1ULL << 32)) {
    throw Error("checkpoint header of " + file.string() + " is truncated");
  }
  std::string text(len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(len))) {
    throw Error("checkpoint header of " + file.string() + " is truncated");
  }
  json header;
  try {
    header = json::parse(text);
  } catch (const json::exception& e) {
    throw Error("checkpoint header of " + file.string() + " is not valid JSON: " + e.what());
  }
  ModelConfig cfg = header.at("config").get<ModelConfig>();
  auto vocab = decoder::Vocabulary::from_tokens(header.at("vocab").get<std::vector<std::string>>());
  auto model = std::make_unique<CaptionModel>(std::move(cfg), std::move(vocab));
  ParamStore& store = model->params();
  const auto& entries = header.at("params");
  if (entries.size() != store.size()) {
    throw Error("checkpoint holds " + std::to_string(entries.size()) + " arrays, model has " +
                std::to_string(store.size()));
  }
  for (const auto& e : entries) {
    const auto name = e.at("name").get<std::string>();
    if (!store.contains(name)) throw Error("checkpoint array '" + name + "' unknown to the model");
    ad::Parameter& p = store.get(name);
    if (e.at("rows").get<std::size_t>() != p.value.rows() ||
        e.at("cols").get<std::size_t>() != p.value.cols()) {
      throw Error("checkpoint array '" + name + "' has the wrong shape");
    }
    auto& v = p.value.values();
    if (!in.read(reinterpret_cast<char*>(v.data()),
                 static_cast<std::streamsize>(v.size() * sizeof(double)))) {
      throw Error("checkpoint " + file.string() + " is truncated");
    }
  }
  return {std::move(model), header.value("metadata", json::object())};
}

}  // namespace regioncap::training
