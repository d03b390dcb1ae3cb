// Copyright 2026 The regioncap Authors
// SPDX-License-Identifier: Apache-2.0

#include "regioncap/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <set>

#include <nlohmann/json.hpp>

#include "regioncap/errors.hpp"
#include "regioncap/text.hpp"

namespace regioncap::metrics {

using nlohmann::json;

void to_json(json& j, const MetricReport& r) {
  j = json{{"metric", r.name},
           {"count", r.count},
           {"per_sample", r.per_sample},
           {"skipped", r.skipped}};
  j["score"] = r.score ? json(*r.score) : json(nullptr);
  j["reported"] = r.score ? json(*r.score * 100.0) : json(nullptr);
  if (!r.reason.empty()) j["reason"] = r.reason;
}

namespace {

void check_pairs(const std::vector<EvalPair>& pairs) {
  if (pairs.empty()) throw EmptyEvalError("no candidate/reference pairs to score");
  for (const auto& p : pairs) {
    if (p.references.empty()) throw EmptyEvalError("sample '" + p.id + "' has no references");
  }
}

struct Tokenized {
  Tokens candidate;
  std::vector<Tokens> references;
};

std::vector<Tokenized> tokenize_pairs(const std::vector<EvalPair>& pairs) {
  std::vector<Tokenized> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    Tokenized t{text::tokenize(p.candidate), {}};
    for (const auto& r : p.references) t.references.push_back(text::tokenize(r));
    out.push_back(std::move(t));
  }
  return out;
}

MetricReport finish(std::string name, std::vector<double> per_sample) {
  MetricReport r;
  r.name = std::move(name);
  r.count = per_sample.size();
  r.score = per_sample.empty()
                ? 0.0
                : std::accumulate(per_sample.begin(), per_sample.end(), 0.0) /
                      static_cast<double>(per_sample.size());
  r.per_sample = std::move(per_sample);
  return r;
}

// BLEU sufficient statistics of one pair.
struct BleuStats {
  std::array<double, 4> matched{};
  std::array<double, 4> total{};
  double cand_len = 0.0;
  double ref_len = 0.0;
};

BleuStats bleu_stats(const Tokenized& t) {
  BleuStats s;
  s.cand_len = static_cast<double>(t.candidate.size());
  double best_diff = std::numeric_limits<double>::infinity();
  for (const auto& r : t.references) {
    const double len = static_cast<double>(r.size());
    const double diff = std::abs(len - s.cand_len);
    if (diff < best_diff || (diff == best_diff && len < s.ref_len)) {
      best_diff = diff;
      s.ref_len = len;
    }
  }
  for (std::size_t n = 1; n <= 4; ++n) {
    const NgramCounts cand = ngram_counts(t.candidate, n);
    NgramCounts max_ref;
    for (const auto& r : t.references)
      for (const auto& [g, c] : ngram_counts(r, n)) max_ref[g] = std::max(max_ref[g], c);
    for (const auto& [g, c] : cand) {
      auto it = max_ref.find(g);
      s.matched[n - 1] += static_cast<double>(std::min(c, it == max_ref.end() ? 0 : it->second));
      s.total[n - 1] += static_cast<double>(c);
    }
  }
  return s;
}

double bleu_from(const BleuStats& s) {
  if (s.cand_len == 0.0) return 0.0;
  double log_sum = 0.0;
  for (std::size_t n = 0; n < 4; ++n) {
    if (s.matched[n] == 0.0 || s.total[n] == 0.0) return 0.0;
    log_sum += 0.25 * std::log(s.matched[n] / s.total[n]);
  }
  const double bp = s.cand_len < s.ref_len ? std::exp(1.0 - s.ref_len / s.cand_len) : 1.0;
  return bp * std::exp(log_sum);
}

}  // namespace

NgramCounts ngram_counts(const Tokens& tokens, std::size_t n) {
  NgramCounts out;
  if (n == 0 || tokens.size() < n) return out;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    ++out[Tokens(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                 tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return out;
}

MetricReport bleu4(const std::vector<EvalPair>& pairs) {
  check_pairs(pairs);
  BleuStats corpus;
  std::vector<double> per_sample;
  for (const auto& t : tokenize_pairs(pairs)) {
    const BleuStats s = bleu_stats(t);
    per_sample.push_back(bleu_from(s));
    for (std::size_t n = 0; n < 4; ++n) {
      corpus.matched[n] += s.matched[n];
      corpus.total[n] += s.total[n];
    }
    corpus.cand_len += s.cand_len;
    corpus.ref_len += s.ref_len;
  }
  MetricReport r = finish("bleu4", std::move(per_sample));
  r.score = bleu_from(corpus);
  return r;
}

std::size_t lcs_length(const Tokens& a, const Tokens& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

MetricReport rouge_l(const std::vector<EvalPair>& pairs) {
  check_pairs(pairs);
  constexpr double beta2 = 1.2 * 1.2;
  std::vector<double> per_sample;
  for (const auto& t : tokenize_pairs(pairs)) {
    double best = 0.0;
    for (const auto& ref : t.references) {
      if (t.candidate.empty() || ref.empty()) continue;
      const double l = static_cast<double>(lcs_length(t.candidate, ref));
      if (l == 0.0) continue;
      const double p = l / static_cast<double>(t.candidate.size());
      const double rec = l / static_cast<double>(ref.size());
      best = std::max(best, (1.0 + beta2) * p * rec / (rec + beta2 * p));
    }
    per_sample.push_back(best);
  }
  return finish("rouge_l", std::move(per_sample));
}

// ---------------------------------------------------------------- METEOR

namespace {

std::size_t count_chunks(const std::vector<std::pair<std::size_t, std::size_t>>& pairs) {
  std::size_t chunks = 0;
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const bool extends = k > 0 && pairs[k].first == pairs[k - 1].first + 1 &&
                         pairs[k].second == pairs[k - 1].second + 1;
    if (!extends) ++chunks;
  }
  return chunks;
}

class AlignmentSearch {
 public:
  AlignmentSearch(const Tokens& c, const Tokens& r, std::size_t budget) : c_(c), r_(r), budget_(budget) {
    for (const auto& w : c) c_stem_.push_back(porter_stem(w));
    for (const auto& w : r) r_stem_.push_back(porter_stem(w));
    used_.assign(r.size(), false);
    for (const auto& w : c) ++c_word_[w], ++c_class_[porter_stem(w)];
    for (std::size_t j = 0; j < r.size(); ++j) ++r_word_[r[j]], ++r_class_[r_stem_[j]];
    for (const auto& [w, n] : c_word_) target_exact_ += std::min(n, lookup(r_word_, w));
    for (const auto& [s, n] : c_class_) target_total_ += std::min(n, lookup(r_class_, s));
  }

  MeteorAlignment run() {
    dfs(0, 0, 0, 0);
    MeteorAlignment a;
    a.exact = target_exact_;
    a.matches = target_total_;
    a.pairs = best_pairs_;
    a.chunks = count_chunks(best_pairs_);
    a.exhaustive = nodes_ <= budget_;
    return a;
  }

 private:
  static std::size_t lookup(const std::map<std::string, std::size_t>& m, const std::string& k) {
    auto it = m.find(k);
    return it == m.end() ? 0 : it->second;
  }

  // Upper bounds on exact and total matches still reachable from position
  // i onward; both are attainable together (see meteor_align).
  bool feasible(std::size_t exact, std::size_t total) const {
    std::size_t ex = 0, tot = 0;
    for (const auto& [w, n] : c_word_) ex += std::min(n, lookup(r_word_, w));
    for (const auto& [s, n] : c_class_) tot += std::min(n, lookup(r_class_, s));
    return exact + ex >= target_exact_ && total + tot >= target_total_;
  }

  void use(std::size_t j) {
    used_[j] = true;
    --r_word_[r_[j]];
    --r_class_[r_stem_[j]];
  }

  void release(std::size_t j) {
    used_[j] = false;
    ++r_word_[r_[j]];
    ++r_class_[r_stem_[j]];
  }

  void dfs(std::size_t i, std::size_t exact, std::size_t total, std::size_t chunks) {
    ++nodes_;
    // Chunks never decrease along a branch.
    if (found_ && (nodes_ > budget_ || chunks >= best_chunks_)) return;
    if (i == c_.size()) {
      if (exact == target_exact_ && total == target_total_ && (!found_ || chunks < best_chunks_)) {
        found_ = true;
        best_chunks_ = chunks;
        best_pairs_ = cur_;
      }
      return;
    }
    // Candidate word i leaves the unassigned pool.
    --c_word_[c_[i]];
    --c_class_[c_stem_[i]];

    std::vector<std::size_t> options;
    for (std::size_t j = 0; j < r_.size(); ++j) {
      if (!used_[j] && c_stem_[i] == r_stem_[j]) options.push_back(j);
    }
    // Continuing the current chunk first finds good alignments early.
    if (!cur_.empty() && cur_.back().first + 1 == i) {
      const std::size_t next = cur_.back().second + 1;
      std::stable_partition(options.begin(), options.end(), [next](std::size_t j) { return j == next; });
    }
    for (std::size_t j : options) {
      const bool is_exact = c_[i] == r_[j];
      const bool extends = !cur_.empty() && cur_.back().first + 1 == i && cur_.back().second + 1 == j;
      const std::size_t nchunks = chunks + (extends ? 0 : 1);
      if (found_ && nchunks >= best_chunks_) continue;
      use(j);
      cur_.emplace_back(i, j);
      if (feasible(exact + (is_exact ? 1 : 0), total + 1)) {
        dfs(i + 1, exact + (is_exact ? 1 : 0), total + 1, nchunks);
      }
      cur_.pop_back();
      release(j);
    }
    if (feasible(exact, total)) dfs(i + 1, exact, total, chunks);

    ++c_word_[c_[i]];
    ++c_class_[c_stem_[i]];
  }

  const Tokens& c_;
  const Tokens& r_;
  std::vector<std::string> c_stem_, r_stem_;
  std::vector<bool> used_;
  // Counts over unassigned candidate words and unused reference words.
  std::map<std::string, std::size_t> c_word_, c_class_, r_word_, r_class_;
  std::size_t target_exact_ = 0, target_total_ = 0;
  std::vector<std::pair<std::size_t, std::size_t>> cur_, best_pairs_;
  std::size_t best_chunks_ = 0;
  bool found_ = false;
  std::size_t nodes_ = 0;
  std::size_t budget_;
};

}  // namespace

MeteorAlignment meteor_align(const Tokens& candidate, const Tokens& reference,
                             const MeteorParams& params) {
  // Within one stem class every candidate word can pair with every
  // reference word, so the per-word exact maximum and the per-class total
  // maximum are reachable together; the search only has to order chunks.
  return AlignmentSearch(candidate, reference, params.search_budget).run();
}

double meteor_score(const Tokens& candidate, const Tokens& reference, const MeteorParams& params) {
  if (candidate.empty() || reference.empty()) return 0.0;
  const MeteorAlignment a = meteor_align(candidate, reference, params);
  if (a.matches == 0) return 0.0;
  const double m = static_cast<double>(a.matches);
  const double p = m / static_cast<double>(candidate.size());
  const double r = m / static_cast<double>(reference.size());
  const double fmean = p * r / (params.alpha * p + (1.0 - params.alpha) * r);
  const double penalty = params.gamma * std::pow(static_cast<double>(a.chunks) / m, params.beta);
  return fmean * (1.0 - penalty);
}

MetricReport meteor(const std::vector<EvalPair>& pairs, const MeteorParams& params) {
  check_pairs(pairs);
  std::vector<double> per_sample;
  for (const auto& t : tokenize_pairs(pairs)) {
    double best = 0.0;
    for (const auto& ref : t.references) best = std::max(best, meteor_score(t.candidate, ref, params));
    per_sample.push_back(best);
  }
  return finish("meteor", std::move(per_sample));
}

// ---------------------------------------------------------------- CIDEr-D

namespace {

constexpr double kSigma = 6.0;

struct CiderVec {
  std::array<std::map<Tokens, double>, 4> vec;
  std::array<double, 4> norm{};
  double length = 0.0;
};

CiderVec cider_vec(const Tokens& tokens, const DocumentFrequency& df) {
  CiderVec v;
  for (std::size_t n = 1; n <= 4; ++n) {
    for (const auto& [g, tf] : ngram_counts(tokens, n)) {
      auto it = df.df.find(g);
      const double d = it == df.df.end() ? 0.0 : it->second;
      const double w = static_cast<double>(tf) * (df.log_documents - std::log(std::max(1.0, d)));
      v.vec[n - 1][g] = w;
      v.norm[n - 1] += w * w;
      if (n == 2) v.length += static_cast<double>(tf);
    }
  }
  for (double& x : v.norm) x = std::sqrt(x);
  return v;
}

std::array<double, 4> cider_sim(const CiderVec& hyp, const CiderVec& ref) {
  const double delta = hyp.length - ref.length;
  std::array<double, 4> val{};
  for (std::size_t n = 0; n < 4; ++n) {
    for (const auto& [g, w] : hyp.vec[n]) {
      auto it = ref.vec[n].find(g);
      if (it == ref.vec[n].end()) continue;
      val[n] += std::min(w, it->second) * it->second;
    }
    if (hyp.norm[n] != 0.0 && ref.norm[n] != 0.0) val[n] /= hyp.norm[n] * ref.norm[n];
    val[n] *= std::exp(-(delta * delta) / (2.0 * kSigma * kSigma));
  }
  return val;
}

}  // namespace

DocumentFrequency document_frequency(const std::vector<std::vector<std::string>>& reference_sets) {
  DocumentFrequency df;
  for (const auto& refs : reference_sets) {
    std::set<Tokens> seen;
    for (const auto& r : refs) {
      const Tokens t = text::tokenize(r);
      for (std::size_t n = 1; n <= 4; ++n)
        for (const auto& [g, c] : ngram_counts(t, n)) seen.insert(g);
    }
    for (const auto& g : seen) df.df[g] += 1.0;
  }
  df.documents = reference_sets.size();
  df.log_documents = df.documents ? std::log(static_cast<double>(df.documents)) : 0.0;
  return df;
}

MetricReport cider(const std::vector<EvalPair>& pairs, const std::optional<DocumentFrequency>& corpus) {
  check_pairs(pairs);
  DocumentFrequency df;
  if (corpus) {
    df = *corpus;
  } else {
    std::vector<std::vector<std::string>> sets;
    for (const auto& p : pairs) sets.push_back(p.references);
    df = document_frequency(sets);
  }
  if (df.documents == 0) throw ConfigError("CIDEr-D needs a non-empty reference corpus");
  std::vector<double> per_sample;
  for (const auto& t : tokenize_pairs(pairs)) {
    const CiderVec hyp = cider_vec(t.candidate, df);
    std::array<double, 4> acc{};
    for (const auto& ref : t.references) {
      const auto s = cider_sim(hyp, cider_vec(ref, df));
      for (std::size_t n = 0; n < 4; ++n) acc[n] += s[n];
    }
    double mean = std::accumulate(acc.begin(), acc.end(), 0.0) / 4.0;
    mean /= static_cast<double>(t.references.size());
    per_sample.push_back(mean * 10.0);
  }
  return finish("cider", std::move(per_sample));
}

// ---------------------------------------------------------------- BERTScore

double bert_score_f1(const Tokens& candidate, const Tokens& reference, const TokenEmbedder& embedder) {
  if (candidate.empty() || reference.empty()) return 0.0;
  const auto ce = embedder.embed(candidate);
  const auto re = embedder.embed(reference);
  if (ce.size() != candidate.size() || re.size() != reference.size()) {
    throw ShapeError("embedder returned the wrong number of vectors");
  }
  auto cosine = [](const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw ShapeError("embedding widths differ");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      dot += a[i] * b[i];
      na += a[i] * a[i];
      nb += b[i] * b[i];
    }
    return na == 0.0 || nb == 0.0 ? 0.0 : dot / std::sqrt(na * nb);
  };
  double precision = 0.0, recall = 0.0;
  for (const auto& c : ce) {
    double best = -1.0;
    for (const auto& r : re) best = std::max(best, cosine(c, r));
    precision += best;
  }
  for (const auto& r : re) {
    double best = -1.0;
    for (const auto& c : ce) best = std::max(best, cosine(c, r));
    recall += best;
  }
  precision /= static_cast<double>(ce.size());
  recall /= static_cast<double>(re.size());
  return precision + recall == 0.0 ? 0.0 : 2.0 * precision * recall / (precision + recall);
}

MetricReport bert_score(const std::vector<EvalPair>& pairs, const TokenEmbedder* embedder) {
  if (!embedder) {
    MetricReport r;
    r.name = "bert_score";
    r.skipped = true;
    r.reason = "no token embedder configured";
    return r;
  }
  check_pairs(pairs);
  std::vector<double> per_sample;
  for (const auto& t : tokenize_pairs(pairs)) {
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& ref : t.references) best = std::max(best, bert_score_f1(t.candidate, ref, *embedder));
    per_sample.push_back(best);
  }
  return finish("bert_score", std::move(per_sample));
}

double grounding_acc(const std::vector<geometry::Box>& pred, const std::vector<geometry::Box>& gold,
                     double threshold) {
  if (pred.size() != gold.size()) {
    throw AlignmentError("grounding needs aligned lists, got " + std::to_string(pred.size()) +
                         " predictions for " + std::to_string(gold.size()) + " gold boxes");
  }
  if (pred.empty()) throw EmptyEvalError("no boxes to score");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    try {
      if (geometry::iou_boxes(pred[i], gold[i]) >= threshold) ++hits;
    } catch (const UndefinedIouError&) {
    }
  }
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

std::vector<std::string> metric_names() { return {"bleu4", "rouge_l", "meteor", "cider", "bert_score"}; }

MetricReport evaluate(const std::string& name, const std::vector<EvalPair>& pairs,
                      const TokenEmbedder* embedder) {
  if (name == "bleu4") return bleu4(pairs);
  if (name == "rouge_l") return rouge_l(pairs);
  if (name == "meteor") return meteor(pairs);
  if (name == "cider") return cider(pairs);
  if (name == "bert_score") return bert_score(pairs, embedder);
  throw ConfigError("unknown metric '" + name + "'");
}

}  // namespace regioncap::metrics
