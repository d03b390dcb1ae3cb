// Copyright 2026 The regioncap Authors
// SPDX-License-Identifier: Apache-2.0

// Slow, direct reimplementations used to cross-check the library.

#pragma once

#include <random>
#include <string>
#include <vector>

#include "regioncap/geometry.hpp"
#include "regioncap/metrics.hpp"

namespace regioncap::oracle {

using Tokens = std::vector<std::string>;

/// Corpus BLEU-4 from linear-scan n-gram counting.
double bleu4(const std::vector<metrics::EvalPair>& pairs);
double sentence_bleu4(const Tokens& candidate, const std::vector<Tokens>& references);

/// LCS by enumerating every subsequence of the shorter sentence.
std::size_t lcs_by_enumeration(const Tokens& a, const Tokens& b);
double rouge_l(const std::vector<metrics::EvalPair>& pairs);

struct Alignment {
  std::size_t exact = 0;
  std::size_t matches = 0;
  std::size_t chunks = 0;
};

/// Enumerates every one-to-one matching over exact and stem edges.
Alignment best_alignment(const Tokens& candidate, const Tokens& reference);
double meteor(const std::vector<metrics::EvalPair>& pairs);

/// CIDEr-D written out term by term, document frequencies from the pairs.
double cider(const std::vector<metrics::EvalPair>& pairs);

/// IoU by visiting every pixel of the joint bounding grid.
double iou_by_pixels(const geometry::Box& a, const geometry::Box& b);

/// Random sentence pairs over a small vocabulary that includes stem
/// variants, so exact, stem and chunk cases all occur.
std::vector<metrics::EvalPair> random_pairs(std::mt19937_64& rng, std::size_t count, std::size_t max_len = 7,
                                            std::size_t max_refs = 3);

}  // namespace regioncap::oracle
