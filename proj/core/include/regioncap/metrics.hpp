// Copyright 2026 The regioncap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "regioncap/geometry.hpp"

namespace regioncap::metrics {

struct EvalPair {
  std::string id;
  std::string candidate;
  std::vector<std::string> references;
};

/// Scores are on the metric's natural scale; `reported` in the JSON form is
/// score x 100. A skipped metric has no score.
struct MetricReport {
  std::string name;
  std::optional<double> score;
  std::vector<double> per_sample;
  std::size_t count = 0;
  bool skipped = false;
  std::string reason;
};

void to_json(nlohmann::json& j, const MetricReport& r);

using Tokens = std::vector<std::string>;
using NgramCounts = std::map<Tokens, std::size_t>;

NgramCounts ngram_counts(const Tokens& tokens, std::size_t n);

/// Corpus BLEU-4: clipped n-gram precisions summed over the corpus, uniform
/// geometric mean, brevity penalty against the closest reference length
/// (shorter wins ties). No smoothing. per_sample holds sentence BLEU-4.
/// Throws EmptyEvalError on no pairs or a pair without references.
MetricReport bleu4(const std::vector<EvalPair>& pairs);

std::size_t lcs_length(const Tokens& a, const Tokens& b);
/// LCS F-measure with beta = 1.2, maximized over references; corpus score is
/// the sample mean.
MetricReport rouge_l(const std::vector<EvalPair>& pairs);

struct MeteorParams {
  double alpha = 0.9;
  double beta = 3.0;
  double gamma = 0.5;
  /// Node limit of the chunk-minimizing search; the best alignment found so
  /// far is used when it runs out.
  std::size_t search_budget = 2'000'000;
};

/// Porter (1980) suffix stripping.
std::string porter_stem(const std::string& word);

struct MeteorAlignment {
  std::size_t exact = 0;
  std::size_t matches = 0;
  std::size_t chunks = 0;
  /// (candidate index, reference index), ordered by candidate index.
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  bool exhaustive = true;
};

/// Exact-match edges first, then Porter-stem edges between remaining words;
/// the alignment maximizes exact matches, then total matches, then
/// minimizes chunks.
MeteorAlignment meteor_align(const Tokens& candidate, const Tokens& reference,
                             const MeteorParams& params = {});
double meteor_score(const Tokens& candidate, const Tokens& reference,
                    const MeteorParams& params = {});
/// Max over references per sample; corpus score is the sample mean.
MetricReport meteor(const std::vector<EvalPair>& pairs, const MeteorParams& params = {});

/// Document frequencies for CIDEr-D: one document per reference set.
struct DocumentFrequency {
  std::map<Tokens, double> df;
  double log_documents = 0.0;
  std::size_t documents = 0;
};

DocumentFrequency document_frequency(const std::vector<std::vector<std::string>>& reference_sets);

/// CIDEr-D with sigma = 6, n = 1..4, clipped TF-IDF, x10. Without a corpus
/// the pairs' own references provide the document frequencies. Throws
/// ConfigError on an empty corpus.
MetricReport cider(const std::vector<EvalPair>& pairs,
                   const std::optional<DocumentFrequency>& corpus = std::nullopt);

/// External token-embedding provider for BERTScore.
class TokenEmbedder {
 public:
  virtual ~TokenEmbedder() = default;
  virtual std::vector<std::vector<double>> embed(const Tokens& tokens) const = 0;
};

double bert_score_f1(const Tokens& candidate, const Tokens& reference,
                     const TokenEmbedder& embedder);
/// Greedy cosine-matching F1, maximized over references. A null embedder
/// produces a skipped report.
MetricReport bert_score(const std::vector<EvalPair>& pairs, const TokenEmbedder* embedder);

/// Fraction of index-aligned pairs with IoU >= threshold. A pair of two
/// zero-area boxes counts as a miss. Throws AlignmentError on a length
/// mismatch and EmptyEvalError on empty input.
double grounding_acc(const std::vector<geometry::Box>& pred,
                     const std::vector<geometry::Box>& gold, double threshold = 0.5);

/// Seam for an external region grounder (caption -> box).
class BoxPredictor {
 public:
  virtual ~BoxPredictor() = default;
  virtual geometry::Box predict(const std::string& image_path, int width, int height,
                                const std::string& caption) const = 0;
};

/// Names accepted by evaluate(): bleu4, rouge_l, meteor, cider, bert_score.
std::vector<std::string> metric_names();
MetricReport evaluate(const std::string& name, const std::vector<EvalPair>& pairs,
                      const TokenEmbedder* embedder = nullptr);

}  // namespace regioncap::metrics
