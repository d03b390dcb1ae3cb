// Copyright 2026 The regioncap Authors
// SPDX-License-Identifier: Apache-2.0

#include "regioncap/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "regioncap/errors.hpp"
#include "regioncap/text.hpp"

namespace regioncap::decoder {

namespace {

const std::vector<std::string> kReserved = {"<pad>", "<bos>", "<eos>", "<image>", "<unk>"};

}  // namespace

Vocabulary::Vocabulary() {
  for (const auto& t : kReserved) add(t);
}

Vocabulary Vocabulary::from_corpus(std::span<const std::string> texts) {
  std::set<std::string> words;
  for (const auto& t : texts)
    for (auto& w : text::split_words(t)) words.insert(std::move(w));
  Vocabulary v;
  for (const auto& w : words)
    if (!v.contains(w)) v.add(w);
  return v;
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  if (tokens.size() < kReserved.size() ||
      !std::equal(kReserved.begin(), kReserved.end(), tokens.begin())) {
    throw VocabError("vocabulary must start with <pad> <bos> <eos> <image> <unk>");
  }
  Vocabulary v;
  for (std::size_t i = kReserved.size(); i < tokens.size(); ++i) {
    if (v.contains(tokens[i])) throw VocabError("duplicate vocabulary token '" + tokens[i] + "'");
    v.add(tokens[i]);
  }
  return v;
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw VocabError("cannot open vocabulary " + path.string());
  std::vector<std::string> tokens;
  for (std::string line; std::getline(in, line);) tokens.push_back(line);
  return from_tokens(std::move(tokens));
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write vocabulary " + path.string());
  for (const auto& t : tokens_) out << t << '\n';
}

int Vocabulary::add(const std::string& token) {
  if (auto it = index_.find(token); it != index_.end()) return it->second;
  const int id = static_cast<int>(tokens_.size());
  tokens_.push_back(token);
  index_.emplace(token, id);
  return id;
}

int Vocabulary::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw VocabError("token id " + std::to_string(id) + " outside vocabulary of size " +
                     std::to_string(tokens_.size()));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::encode(std::string_view s) const {
  std::vector<int> ids;
  for (const auto& w : text::split_words(s)) ids.push_back(id(w));
  return ids;
}

std::string Vocabulary::decode(std::span<const int> ids) const {
  std::vector<std::string> words;
  for (int i : ids) {
    if (i >= 0 && i < static_cast<int>(kReserved.size())) continue;
    words.push_back(token(i));
  }
  return text::detokenize(words);
}

void validate(const DecoderConfig& c) {
  if (c.width < 1 || c.depth < 0 || c.heads < 1 || c.mlp_ratio < 1 || c.max_positions < 1) {
    throw ConfigError("decoder config: width, heads, mlp_ratio, max_positions must be >= 1");
  }
  if (c.width % c.heads != 0) throw ConfigError("decoder width must be divisible by heads");
}

void to_json(nlohmann::json& j, const DecoderConfig& c) {
  j = nlohmann::json{{"width", c.width},
                     {"depth", c.depth},
                     {"heads", c.heads},
                     {"mlp_ratio", c.mlp_ratio},
                     {"max_positions", c.max_positions}};
}

void from_json(const nlohmann::json& j, DecoderConfig& c) {
  c = DecoderConfig{};
  if (j.contains("width")) j.at("width").get_to(c.width);
  if (j.contains("depth")) j.at("depth").get_to(c.depth);
  if (j.contains("heads")) j.at("heads").get_to(c.heads);
  if (j.contains("mlp_ratio")) j.at("mlp_ratio").get_to(c.mlp_ratio);
  if (j.contains("max_positions")) j.at("max_positions").get_to(c.max_positions);
  validate(c);
}

DecoderParams build_decoder(ParamStore& store, const DecoderConfig& cfg,
                            std::size_t vocab_size, std::mt19937_64& rng) {
  validate(cfg);
  const auto d = static_cast<std::size_t>(cfg.width);
  DecoderParams p;
  p.token_embedding = &store.add(Component::decoder, "dec.token_embedding",
                                 normal_matrix(vocab_size, d, 0.02, rng));
  p.positional = &store.add(Component::decoder, "dec.positional",
                            normal_matrix(static_cast<std::size_t>(cfg.max_positions), d, 0.02, rng));
  for (int i = 0; i < cfg.depth; ++i) {
    p.blocks.push_back(layers::make_block(store, Component::decoder, "dec.block" + std::to_string(i),
                                          d, static_cast<std::size_t>(cfg.mlp_ratio), rng));
  }
  p.final_norm = layers::make_layer_norm(store, Component::decoder, "dec.final_norm", d);
  p.lm_head = layers::make_linear(store, Component::decoder, "dec.lm_head", d, vocab_size, rng);
  return p;
}

ad::Var forward_teacher_forcing(ad::Graph& g, const DecoderParams& p, const DecoderConfig& cfg,
                                ad::Var visual, std::span<const int> instruction,
                                std::span<const int> targets) {
  const std::size_t d = static_cast<std::size_t>(cfg.width);
  const std::size_t vocab = p.token_embedding->value.rows();
  if (visual.cols() != d) {
    throw ShapeError("visual tokens have width " + std::to_string(visual.cols()) +
                     ", decoder expects " + std::to_string(d));
  }
  if (targets.empty()) throw EmptyTargetError("decoder input has no target positions");

  std::vector<int> ids(instruction.begin(), instruction.end());
  ids.push_back(Vocabulary::kBos);
  ids.insert(ids.end(), targets.begin(), targets.end() - 1);

  const std::size_t nv = visual.rows();
  const std::size_t total = nv + ids.size();
  if (total > static_cast<std::size_t>(cfg.max_positions)) {
    throw ShapeError("sequence of " + std::to_string(total) + " positions exceeds max_positions " +
                     std::to_string(cfg.max_positions));
  }
  auto check_id = [&](int id) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
      throw VocabError("token id " + std::to_string(id) + " outside vocabulary of size " +
                       std::to_string(vocab));
    }
  };
  std::vector<std::int64_t> idx;
  idx.reserve(ids.size() * d);
  for (int id : ids) {
    check_id(id);
    for (std::size_t c = 0; c < d; ++c) idx.push_back(static_cast<std::int64_t>(id) * d + c);
  }
  for (int t : targets) check_id(t);

  ad::Var text_emb = ad::gather(g.parameter(*p.token_embedding), ids.size(), d, std::move(idx));
  const ad::Var parts[] = {visual, text_emb};
  ad::Var x = ad::concat_rows(parts);
  x = ad::add(x, ad::slice_rows(g.parameter(*p.positional), 0, total));
  for (const auto& b : p.blocks) x = layers::block(g, x, b, static_cast<std::size_t>(cfg.heads), true);
  // The position holding <bos> predicts targets[0].
  const std::size_t first = nv + instruction.size();
  ad::Var h = ad::slice_rows(x, first, targets.size());
  h = layers::layer_norm(g, h, p.final_norm);
  return ad::log_softmax_rows(layers::linear(g, h, p.lm_head));
}

Matrix forward_teacher_forcing(const DecoderInput& input, const DecoderParams& p,
                               const DecoderConfig& cfg) {
  ad::Graph g(false);
  return forward_teacher_forcing(g, p, cfg, g.constant(input.visual), input.instruction,
                                 input.targets)
      .value();
}

double nll_loss(const Matrix& logprobs, std::span<const int> targets, int pad) {
  ad::Graph g(false);
  return nll_loss(g.constant(logprobs), targets, pad).value()(0, 0);
}

ad::Var nll_loss(ad::Var logprobs, std::span<const int> targets, int pad) {
  if (std::all_of(targets.begin(), targets.end(), [pad](int t) { return t == pad; })) {
    throw EmptyTargetError("every target position is padding");
  }
  if (logprobs.rows() != targets.size()) {
    throw ShapeError("log-probabilities have " + std::to_string(logprobs.rows()) +
                     " rows for " + std::to_string(targets.size()) + " targets");
  }
  return ad::nll_sum(logprobs, targets, pad);
}

std::vector<int> generate(const Matrix& visual, std::span<const int> instruction,
                          const DecoderParams& p, const DecoderConfig& cfg,
                          const DecodeParams& decode) {
  if (decode.max_length < 1) throw ConfigError("max_length must be >= 1");
  if (decode.temperature < 0.0) throw ConfigError("temperature must be >= 0");
  std::mt19937_64 rng(decode.seed);
  std::vector<int> out;
  // Each step re-runs the full causal pass; the last row predicts the next
  // token. The placeholder target only fixes the row count.
  std::vector<int> targets;
  for (int step = 0; step < decode.max_length; ++step) {
    targets = out;
    targets.push_back(Vocabulary::kPad);
    ad::Graph g(false);
    ad::Var lp = forward_teacher_forcing(g, p, cfg, g.constant(visual), instruction, targets);
    const auto row = lp.value().row(lp.rows() - 1);
    int next = 0;
    if (decode.temperature == 0.0) {
      next = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    } else {
      std::vector<double> w(row.size());
      const double top = *std::max_element(row.begin(), row.end());
      for (std::size_t i = 0; i < row.size(); ++i) w[i] = std::exp((row[i] - top) / decode.temperature);
      std::discrete_distribution<int> pick(w.begin(), w.end());
      next = pick(rng);
    }
    if (next == Vocabulary::kEos) break;
    out.push_back(next);
  }
  return out;
}

}  // namespace regioncap::decoder
