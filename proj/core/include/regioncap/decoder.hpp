// Copyright 2026 The regioncap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "regioncap/layers.hpp"
#include "regioncap/params.hpp"
#include "regioncap/tensor.hpp"

namespace regioncap::decoder {

/// Token strings <-> ids. Ids 0..4 are reserved for the special tokens below.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kImage = 3;
  static constexpr int kUnk = 4;

  Vocabulary();

  /// Reserved tokens followed by every distinct word of `texts` in sorted
  /// order.
  static Vocabulary from_corpus(std::span<const std::string> texts);
  /// One token per line, line number = id. Throws VocabError when the
  /// reserved prefix is wrong or a token repeats.
  static Vocabulary load(const std::filesystem::path& path);
  static Vocabulary from_tokens(std::vector<std::string> tokens);
  void save(const std::filesystem::path& path) const;

  int add(const std::string& token);
  /// Unknown words map to kUnk.
  int id(const std::string& token) const;
  bool contains(const std::string& token) const { return index_.contains(token); }
  /// Throws VocabError for an out-of-range id.
  const std::string& token(int id) const;
  std::size_t size() const noexcept { return tokens_.size(); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  std::vector<int> encode(std::string_view text) const;
  /// Skips reserved ids.
  std::string decode(std::span<const int> ids) const;

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.tokens_ == b.tokens_;
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

struct DecoderConfig {
  int width = 64;
  int depth = 2;
  int heads = 4;
  int mlp_ratio = 4;
  int max_positions = 4096;
};

void validate(const DecoderConfig& cfg);
void to_json(nlohmann::json& j, const DecoderConfig& cfg);
void from_json(const nlohmann::json& j, DecoderConfig& cfg);

struct DecoderParams {
  ad::Parameter* token_embedding = nullptr;  // V x D
  ad::Parameter* positional = nullptr;       // max_positions x D
  std::vector<layers::TransformerBlock> blocks;
  layers::LayerNorm final_norm;
  layers::Linear lm_head;
};

DecoderParams build_decoder(ParamStore& store, const DecoderConfig& cfg,
                            std::size_t vocab_size, std::mt19937_64& rng);

/// Visual tokens are placed first, then the instruction, then <bos> and the
/// targets shifted one step right.
struct DecoderInput {
  Matrix visual;
  std::vector<int> instruction;
  std::vector<int> targets;
};

/// Log-probabilities for each target position (targets.size() x V). Row i
/// conditions on the visual tokens, the instruction and targets[0..i).
ad::Var forward_teacher_forcing(ad::Graph& g, const DecoderParams& p, const DecoderConfig& cfg,
                                ad::Var visual, std::span<const int> instruction,
                                std::span<const int> targets);
Matrix forward_teacher_forcing(const DecoderInput& input, const DecoderParams& p,
                               const DecoderConfig& cfg);

/// Sum of -log p over positions whose target is not `pad`. Throws
/// EmptyTargetError when every position is padding.
double nll_loss(const Matrix& logprobs, std::span<const int> targets,
                int pad = Vocabulary::kPad);
ad::Var nll_loss(ad::Var logprobs, std::span<const int> targets, int pad = Vocabulary::kPad);

struct DecodeParams {
  int max_length = 32;
  /// 0 selects greedy decoding; ties go to the lowest id.
  double temperature = 0.0;
  std::uint64_t seed = 0;
};

/// Emitted ids without the terminating <eos>. Throws ConfigError when
/// max_length < 1.
std::vector<int> generate(const Matrix& visual, std::span<const int> instruction,
                          const DecoderParams& p, const DecoderConfig& cfg,
                          const DecodeParams& decode);

}  // namespace regioncap::decoder
