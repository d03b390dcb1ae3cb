// Copyright 2026 The regioncap Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cctype>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <openssl/evp.h>

#include "regioncap/dataset.hpp"
#include "regioncap/errors.hpp"
#include "regioncap/image.hpp"
#include "regioncap/judge.hpp"
#include "regioncap/metrics.hpp"
#include "regioncap/model.hpp"
#include "regioncap/training.hpp"

namespace regioncap::cli {

using nlohmann::json;

namespace {

class UsageError : public Error {
 public:
  using Error::Error;
};

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw UsageError("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json(const fs::path& p) {
  try {
    return json::parse(read_file(p));
  } catch (const json::parse_error& e) {
    throw UsageError(p.string() + ": invalid JSON: " + e.what());
  }
}

void write_json(const fs::path& p, const json& j) {
  std::ofstream out(p);
  if (!out) throw Error("cannot write " + p.string());
  out << j.dump(2) << '\n';
}

std::vector<json> read_jsonl(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw UsageError("cannot read " + p.string());
  std::vector<json> rows;
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      rows.push_back(json::parse(line));
    } catch (const json::parse_error& e) {
      throw UsageError(p.string() + ":" + std::to_string(line_no) + ": malformed JSON");
    }
  }
  return rows;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Runs a subcommand body and maps exceptions to exit codes.
template <typename F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const IngestionError& e) {
    err << "ingestion error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const TemplateError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const AlignmentError& e) {
    err << "alignment error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const json::exception& e) {
    err << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitPartial;
  }
}

fs::path resolve(const fs::path& base, const fs::path& p) { return p.is_absolute() ? p : base / p; }

struct TrainConfig {
  ModelConfig model;
  std::map<std::string, fs::path> sources;
  fs::path image_root;
  std::map<int, training::OptimizerConfig> stages;
  dataset::StageSources names;
  fs::path out;
};

TrainConfig load_train_config(const fs::path& path) {
  const json j = read_json(path);
  const fs::path base = path.parent_path();
  TrainConfig c;
  if (j.contains("model")) j.at("model").get_to(c.model);
  validate(c.model);
  for (const auto& [name, file] : j.at("sources").items()) c.sources[name] = resolve(base, file.get<std::string>());
  c.image_root = resolve(base, j.value("image_root", std::string(".")));
  c.out = resolve(base, j.value("out", std::string("runs")));
  if (j.contains("stages")) {
    for (const auto& [key, value] : j.at("stages").items()) c.stages[std::stoi(key)] = value.get<training::OptimizerConfig>();
  }
  if (j.contains("stage_sources")) {
    const auto& s = j.at("stage_sources");
    if (s.contains("1")) s.at("1").get_to(c.names.stage1);
    if (s.contains("2")) s.at("2").get_to(c.names.stage2);
    if (s.contains("3")) s.at("3").get_to(c.names.stage3);
  }
  return c;
}

int parse_attribute(const std::string& s) {
  if (!s.empty() && std::all_of(s.begin(), s.end(), [](char ch) { return std::isdigit(static_cast<unsigned char>(ch)); })) {
    const int id = std::stoi(s);
    dataset::attribute_name(id);
    return id;
  }
  return dataset::attribute_id(s);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, ',')) {
    cur.erase(0, cur.find_first_not_of(" \t"));
    cur.erase(cur.find_last_not_of(" \t") + 1);
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

std::string svg_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string edge_label(double lo, double hi, int precision) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(precision) << lo << "-" << hi;
  return ss.str();
}

}  // namespace

// ---------------------------------------------------------------- manifest

std::string git_blob_sha1(const fs::path& file) {
  const std::string content = read_file(file);
  const std::string header = "blob " + std::to_string(content.size()) + std::string(1, '\0');
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr);
  EVP_DigestUpdate(ctx, header.data(), header.size());
  EVP_DigestUpdate(ctx, content.data(), content.size());
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  return hex.str();
}

Manifest::Manifest(fs::path dir, std::string command, json args) : dir_(std::move(dir)) {
  fs::create_directories(dir_);
  doc_ = json{{"command", std::move(command)},
              {"args", std::move(args)},
              {"config", nullptr},
              {"seed", nullptr},
              {"inputs", json::array()},
              {"outputs", json::array()},
              {"started_at", utc_now()},
              {"finished_at", nullptr}};
}

std::string Manifest::relative(const fs::path& p) const {
  return fs::weakly_canonical(p).lexically_relative(fs::weakly_canonical(dir_)).generic_string();
}

void Manifest::set_config(const fs::path& config) {
  doc_["config"] = {{"path", relative(config)}, {"sha1", git_blob_sha1(config)}};
}

void Manifest::set_seed(std::uint64_t seed) { doc_["seed"] = seed; }

void Manifest::add_input(const fs::path& file) {
  doc_["inputs"].push_back({{"path", relative(file)}, {"sha1", git_blob_sha1(file)}});
}

void Manifest::add_output(const fs::path& file) {
  doc_["outputs"].push_back({{"path", relative(file)}, {"sha1", git_blob_sha1(file)}});
}

void Manifest::write() { write_json(dir_ / "manifest.json", doc_); }

void Manifest::finish(double wall_seconds) {
  doc_["finished_at"] = utc_now();
  doc_["wall_seconds"] = wall_seconds;
  write();
}

// ---------------------------------------------------------------- plots

void write_bar_chart_svg(const BarChart& c, const fs::path& file) {
  const double bar = 28.0, gap = 8.0, left = 70.0, top = 50.0, height = 260.0, bottom = 150.0;
  const double width = left + 30.0 + static_cast<double>(c.values.size()) * (bar + gap);
  double vmax = 0.0;
  for (double v : c.values) vmax = std::max(vmax, v);
  std::ofstream out(file);
  if (!out) throw Error("cannot write " + file.string());
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << std::max(width, 320.0) << "\" height=\""
      << top + height + bottom << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << left << "\" y=\"24\" font-size=\"14\">" << svg_escape(c.title) << "</text>\n";
  out << "<line x1=\"" << left << "\" y1=\"" << top + height << "\" x2=\"" << width << "\" y2=\"" << top + height
      << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + height
      << "\" stroke=\"black\"/>\n";
  out << "<text x=\"" << left - 6 << "\" y=\"" << top << "\" text-anchor=\"end\">" << vmax << "</text>\n";
  out << "<text x=\"" << left - 6 << "\" y=\"" << top + height << "\" text-anchor=\"end\">0</text>\n";
  out << "<text transform=\"translate(16," << top + height / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
      << svg_escape(c.y_label) << "</text>\n";
  for (std::size_t i = 0; i < c.values.size(); ++i) {
    const double h = vmax > 0 ? c.values[i] / vmax * height : 0.0;
    const double x = left + gap + static_cast<double>(i) * (bar + gap);
    out << "<rect x=\"" << x << "\" y=\"" << top + height - h << "\" width=\"" << bar << "\" height=\"" << h
        << "\" fill=\"#4878a8\"><title>" << svg_escape(c.labels[i]) << ": " << c.values[i] << "</title></rect>\n";
    out << "<text transform=\"translate(" << x + bar / 2 << "," << top + height + 10
        << ") rotate(60)\" text-anchor=\"start\">" << svg_escape(c.labels[i]) << "</text>\n";
  }
  out << "<text x=\"" << (left + width) / 2 << "\" y=\"" << top + height + bottom - 8 << "\" text-anchor=\"middle\">"
      << svg_escape(c.x_label) << "</text>\n";
  out << "</svg>\n";
}

// ---------------------------------------------------------------- train

int cmd_train(const TrainArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto t0 = std::chrono::steady_clock::now();
    training::freeze_plan(args.stage);
    const TrainConfig cfg = load_train_config(args.config);
    const fs::path root = args.out.value_or(cfg.out);
    const fs::path dir = root / ("stage" + std::to_string(args.stage));

    fs::path prior;
    if (args.stage > 1) {
      prior = args.checkpoint.value_or(root / ("stage" + std::to_string(args.stage - 1)) / "checkpoint.bin");
      if (!fs::exists(prior)) {
        err << "error: stage " << args.stage << " needs the stage " << args.stage - 1 << " checkpoint at "
            << prior.string() << '\n';
        return kExitUsage;
      }
    }

    training::OptimizerConfig opt;
    if (auto it = cfg.stages.find(args.stage); it != cfg.stages.end()) opt = it->second;
    if (args.seed) opt.seed = *args.seed;

    json margs{{"stage", args.stage}};
    Manifest manifest(dir, "train", margs);
    manifest.set_config(args.config);
    manifest.set_seed(opt.seed);
    if (!prior.empty()) manifest.add_input(prior);
    for (const auto& [name, file] : cfg.sources) manifest.add_input(file);
    manifest.write();

    dataset::Registry registry;
    for (const auto& [name, file] : cfg.sources) {
      auto loaded = dataset::load_samples(file);
      if (!loaded.errors.empty()) {
        for (const auto& e : loaded.errors) err << e.source << ":" << e.line << ": " << e.message << '\n';
        return kExitUsage;
      }
      registry[name] = std::move(loaded.samples);
    }

    std::unique_ptr<CaptionModel> model;
    if (args.stage == 1) {
      std::vector<std::string> corpus;
      for (const auto& [name, samples] : registry)
        for (const auto& s : samples) corpus.push_back(s.caption);
      corpus.push_back(dataset::build_instruction(dataset::TaskKind::RDC, std::nullopt));
      corpus.push_back(dataset::build_instruction(dataset::TaskKind::CGIC, std::nullopt));
      for (int a = 1; a <= dataset::kNumAttributes; ++a) {
        corpus.push_back(dataset::build_instruction(dataset::TaskKind::AARC, a));
      }
      model = std::make_unique<CaptionModel>(cfg.model, decoder::Vocabulary::from_corpus(corpus));
    } else {
      model = training::load_checkpoint(prior).model;
    }

    const auto stage_cfg = training::make_stage_config(
        args.stage, dataset::stage_mixture(args.stage, registry, cfg.names), opt);
    training::FileImageSource images(cfg.image_root);
    const auto report = training::run_stage(*model, stage_cfg, registry, images);

    training::save_checkpoint(dir / "checkpoint.bin", *model,
                              {{"stage", args.stage},
                               {"optimizer", opt},
                               {"sampler_seed", opt.seed},
                               {"checksum", hex64(report.checksum)}});
    model->vocab().save(dir / "vocab.txt");
    write_json(dir / "report.json", training::report_to_json(report));
    manifest.add_output(dir / "checkpoint.bin");
    manifest.add_output(dir / "vocab.txt");
    manifest.add_output(dir / "report.json");
    manifest.finish(seconds_since(t0));
    out << "stage " << args.stage << ": " << report.losses.size() << " steps";
    if (!report.losses.empty()) out << ", final loss " << report.losses.back();
    out << ", checkpoint " << (dir / "checkpoint.bin").string() << '\n';
    return kExitOk;
  });
}

// ---------------------------------------------------------------- caption

int cmd_caption(const CaptionArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto t0 = std::chrono::steady_clock::now();
    const auto task = dataset::task_from_string(args.task);
    std::optional<int> attribute;
    if (args.attribute) attribute = parse_attribute(*args.attribute);
    const std::string instruction = dataset::build_instruction(task, attribute);
    if (task != dataset::TaskKind::CGIC && !args.mask) {
      throw UsageError(args.task + " captioning needs --mask");
    }
    if (!fs::exists(args.checkpoint)) throw UsageError("checkpoint " + args.checkpoint.string() + " not found");
    if (!fs::exists(args.image)) throw UsageError("image " + args.image.string() + " not found");

    std::optional<Manifest> manifest;
    if (args.out) {
      manifest.emplace(*args.out, "caption", json{{"task", args.task}, {"attribute", args.attribute.value_or("")}});
      manifest->add_input(args.checkpoint);
      manifest->add_input(args.image);
      if (args.mask) manifest->add_input(*args.mask);
      manifest->set_seed(args.seed.value_or(0));
      manifest->write();
    }

    auto loaded = training::load_checkpoint(args.checkpoint);
    const Image img = load_image(args.image);
    geometry::BinaryMask mask = task == dataset::TaskKind::CGIC
                                    ? geometry::BinaryMask::ones(img.height, img.width)
                                    : load_mask_png(*args.mask);
    decoder::DecodeParams decode;
    decode.max_length = args.max_length;
    decode.seed = args.seed.value_or(0);
    const std::string caption = loaded.model->caption(loaded.model->prepare(img, mask), instruction, decode);
    out << caption << '\n';
    if (manifest) {
      std::ofstream(*args.out / "caption.txt") << caption << '\n';
      manifest->add_output(*args.out / "caption.txt");
      manifest->finish(seconds_since(t0));
    }
    return kExitOk;
  });
}

// ---------------------------------------------------------------- evaluate

int cmd_evaluate(const EvaluateArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::string> names =
        args.metrics ? split_list(*args.metrics) : std::vector<std::string>{"bleu4", "rouge_l", "meteor", "cider"};
    const auto known = metrics::metric_names();
    for (const auto& n : names) {
      if (std::find(known.begin(), known.end(), n) == known.end()) throw UsageError("unknown metric '" + n + "'");
    }

    std::optional<Manifest> manifest;
    if (args.out) {
      manifest.emplace(*args.out, "evaluate", json{{"metrics", names}});
      manifest->add_input(args.predictions);
      manifest->add_input(args.references);
      manifest->write();
    }

    std::vector<std::pair<std::string, std::string>> preds;
    for (const auto& row : read_jsonl(args.predictions)) {
      const std::string id = row.at("id").get<std::string>();
      preds.emplace_back(id, row.contains("candidate") ? row.at("candidate").get<std::string>()
                                                       : row.at("caption").get<std::string>());
    }
    std::map<std::string, std::vector<std::string>> refs;
    for (const auto& row : read_jsonl(args.references)) {
      const std::string id = row.at("id").get<std::string>();
      auto& list = refs[id];
      if (row.contains("references")) {
        for (const auto& r : row.at("references")) list.push_back(r.get<std::string>());
      } else {
        list.push_back(row.at("caption").get<std::string>());
      }
    }
    std::vector<std::string> missing, extra;
    std::set<std::string> pred_ids;
    for (const auto& [id, c] : preds) {
      pred_ids.insert(id);
      if (!refs.contains(id)) missing.push_back(id);
    }
    for (const auto& [id, r] : refs)
      if (!pred_ids.contains(id)) extra.push_back(id);
    if (!missing.empty() || !extra.empty()) {
      err << "alignment error: prediction and reference ids differ\n";
      for (const auto& id : missing) err << "  no reference for prediction '" << id << "'\n";
      for (const auto& id : extra) err << "  no prediction for reference '" << id << "'\n";
      return kExitUsage;
    }

    std::vector<metrics::EvalPair> pairs;
    for (const auto& [id, c] : preds) pairs.push_back({id, c, refs.at(id)});
    json reports = json::array();
    for (const auto& n : names) reports.push_back(metrics::evaluate(n, pairs));
    const json doc{{"count", pairs.size()}, {"reports", reports}};
    out << doc.dump(2) << '\n';
    if (manifest) {
      write_json(*args.out / "metrics.json", doc);
      manifest->add_output(*args.out / "metrics.json");
      manifest->finish(seconds_since(t0));
    }
    return kExitOk;
  });
}

// ---------------------------------------------------------------- stats

int cmd_stats(const StatsArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto t0 = std::chrono::steady_clock::now();
    if (!fs::exists(args.dataset)) throw UsageError("dataset " + args.dataset.string() + " not found");
    Manifest manifest(args.out, "stats", json::object());
    manifest.add_input(args.dataset);
    manifest.write();

    auto loaded = dataset::load_samples(args.dataset);
    if (!loaded.errors.empty()) {
      for (const auto& e : loaded.errors) err << e.source << ":" << e.line << ": " << e.message << '\n';
      return kExitUsage;
    }
    const auto report = dataset::dataset_stats(loaded.samples);
    const json doc = dataset::stats_to_json(report);
    write_json(args.out / "stats.json", doc);
    manifest.add_output(args.out / "stats.json");

    BarChart attrs{"Attribute proportion", "attribute", "share of attribute captions", {}, {}};
    BarChart entities{"Entities per attribute", "attribute", "entities", {}, {}};
    for (const auto& a : doc.at("attributes")) {
      attrs.labels.push_back(a.at("name").get<std::string>());
      attrs.values.push_back(a.at("proportion").get<double>());
      entities.labels.push_back(a.at("name").get<std::string>());
      entities.values.push_back(a.at("entities").get<double>());
    }
    BarChart resolution{"Image resolution (long side)", "pixels", "images", {}, {}};
    for (std::size_t i = 0; i < report.resolution.counts.size(); ++i) {
      resolution.labels.push_back(edge_label(report.resolution.edges[i], report.resolution.edges[i + 1], 0));
      resolution.values.push_back(static_cast<double>(report.resolution.counts[i]));
    }
    BarChart ratio{"Mask area ratio", "mask area / image area", "entities", {}, {}};
    for (std::size_t i = 0; i < report.mask_ratio.counts.size(); ++i) {
      ratio.labels.push_back(edge_label(report.mask_ratio.edges[i], report.mask_ratio.edges[i + 1], 2));
      ratio.values.push_back(static_cast<double>(report.mask_ratio.counts[i]));
    }
    const std::pair<const BarChart*, const char*> plots[] = {{&attrs, "attribute_proportion.svg"},
                                                             {&entities, "entities_per_attribute.svg"},
                                                             {&resolution, "resolution_histogram.svg"},
                                                             {&ratio, "mask_ratio_histogram.svg"}};
    for (const auto& [chart, name] : plots) {
      write_bar_chart_svg(*chart, args.out / name);
      manifest.add_output(args.out / name);
    }
    manifest.finish(seconds_since(t0));
    out << "images " << report.images << ", entities " << report.entities << ", captions " << report.captions
        << '\n';
    return kExitOk;
  });
}

// ---------------------------------------------------------------- judge

int cmd_judge(const JudgeArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto t0 = std::chrono::steady_clock::now();
    const json endpoint = read_json(args.endpoint);
    const fs::path dir = args.out.value_or(args.predictions.parent_path() /
                                           (args.predictions.stem().string() + ".judge"));
    Manifest manifest(dir, "judge", json{{"concurrency", args.concurrency}, {"retries", args.retries}});
    manifest.set_config(args.endpoint);
    manifest.add_input(args.predictions);
    manifest.add_input(args.dataset);
    manifest.write();

    auto loaded = dataset::load_samples(args.dataset);
    if (!loaded.errors.empty()) {
      for (const auto& e : loaded.errors) err << e.source << ":" << e.line << ": " << e.message << '\n';
      return kExitUsage;
    }
    std::map<std::string, std::string> preds;
    for (const auto& row : read_jsonl(args.predictions)) {
      preds[row.at("id").get<std::string>()] =
          row.contains("candidate") ? row.at("candidate").get<std::string>() : row.at("caption").get<std::string>();
    }
    std::set<std::string> known;
    for (const auto& s : loaded.samples) known.insert(s.id);
    std::vector<std::string> unknown;
    for (const auto& [id, c] : preds)
      if (!known.contains(id)) unknown.push_back(id);
    if (!unknown.empty()) {
      err << "alignment error: predictions without a dataset record:";
      for (const auto& id : unknown) err << ' ' << id;
      err << '\n';
      return kExitUsage;
    }

    const fs::path root = args.image_root.value_or(args.dataset.parent_path());
    std::vector<judge::JudgeRequest> requests;
    std::map<std::string, std::size_t> index_of;
    for (const auto& s : loaded.samples) {
      if (s.task != dataset::TaskKind::AARC || !preds.contains(s.id)) continue;
      const Image img = load_image(resolve(root, s.image_path));
      const auto mask = geometry::decode_rle(*s.mask);
      index_of[s.id] = requests.size();
      requests.push_back({s.id, s.image_path, judge::render_judge_image(img, mask), preds.at(s.id), s.caption,
                          std::string(dataset::attribute_name(*s.attribute))});
    }

    std::unique_ptr<judge::ChatClient> client;
    const std::string type = endpoint.value("type", std::string("https"));
    if (type == "mock") {
      std::map<std::size_t, std::vector<std::string>> script;
      if (endpoint.contains("script")) {
        for (const auto& [id, replies] : endpoint.at("script").items()) {
          if (auto it = index_of.find(id); it != index_of.end()) script[it->second] = replies.get<std::vector<std::string>>();
        }
      }
      client = std::make_unique<judge::MockChatClient>(std::move(script), endpoint.value("fallback", std::string("Yes")));
    } else if (type == "https") {
      judge::EndpointConfig ec;
      ec.url = endpoint.at("url").get<std::string>();
      ec.model = endpoint.at("model").get<std::string>();
      ec.api_key_env = endpoint.value("api_key_env", ec.api_key_env);
      ec.timeout_seconds = endpoint.value("timeout_seconds", ec.timeout_seconds);
      client = std::make_unique<judge::HttpsChatClient>(ec);
    } else {
      throw UsageError("endpoint type must be 'https' or 'mock', got '" + type + "'");
    }

    judge::JudgeOptions options;
    options.concurrency = args.concurrency;
    options.retries = args.retries;
    options.backoff = std::chrono::milliseconds(endpoint.value("backoff_ms", type == "mock" ? 0 : 500));
    const auto summary = judge::judge_run(requests, *client, options);

    {
      std::ofstream v(dir / "verdicts.jsonl");
      for (const auto& verdict : summary.verdicts) v << judge::verdict_to_json(verdict).dump() << '\n';
    }
    const json doc = judge::summary_to_json(summary);
    write_json(dir / "judge.json", doc);
    manifest.add_output(dir / "verdicts.jsonl");
    manifest.add_output(dir / "judge.json");
    manifest.finish(seconds_since(t0));

    out << "accuracy: " << (summary.accuracy ? std::to_string(*summary.accuracy) : std::string("null")) << " ("
        << summary.yes << " yes / " << summary.yes + summary.no << " parsed, " << summary.unparsed << " unparsed, "
        << summary.failed << " failed)\n";
    for (const auto& v : summary.verdicts) {
      if (v.status != judge::VerdictStatus::parsed) err << "sample " << v.id << ": " << v.error << '\n';
    }
    return summary.unparsed + summary.failed > 0 ? kExitPartial : kExitOk;
  });
}

}  // namespace regioncap::cli
