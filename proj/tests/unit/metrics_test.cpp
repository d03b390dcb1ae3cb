// Copyright 2026 The regioncap Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include <nlohmann/json.hpp>

#include "oracles.hpp"
#include "regioncap/errors.hpp"
#include "regioncap/metrics.hpp"
#include "regioncap/text.hpp"

namespace regioncap::metrics {
namespace {

std::vector<EvalPair> one(const std::string& cand, std::vector<std::string> refs) {
  return {{"0", cand, std::move(refs)}};
}

class MapEmbedder : public TokenEmbedder {
 public:
  explicit MapEmbedder(std::map<std::string, std::vector<double>> table) : table_(std::move(table)) {}
  std::vector<std::vector<double>> embed(const Tokens& tokens) const override {
    std::vector<std::vector<double>> out;
    for (const auto& t : tokens) out.push_back(table_.at(t));
    return out;
  }

 private:
  std::map<std::string, std::vector<double>> table_;
};

/// One-hot vector per distinct token, assigned on first use.
class OneHotEmbedder : public TokenEmbedder {
 public:
  std::vector<std::vector<double>> embed(const Tokens& tokens) const override {
    std::vector<std::vector<double>> out;
    for (const auto& t : tokens) {
      std::vector<double> v(64, 0.0);
      v[std::hash<std::string>{}(t) % 64] = 1.0;
      out.push_back(v);
    }
    return out;
  }
};

TEST(Bleu, IdentityAndNoOverlap) {
  EXPECT_DOUBLE_EQ(*bleu4(one("a man rides a red bike", {"a man rides a red bike"})).score, 1.0);
  EXPECT_EQ(*bleu4(one("a b c d", {"a b c e"})).score, 0.0);
  EXPECT_THROW(bleu4({}), EmptyEvalError);
  EXPECT_THROW(bleu4(one("a", {})), EmptyEvalError);
}

TEST(Bleu, MatchesOracle) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 10; ++trial) {
    const auto pairs = oracle::random_pairs(rng, 20);
    const auto r = bleu4(pairs);
    EXPECT_NEAR(*r.score, oracle::bleu4(pairs), 1e-9);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      std::vector<Tokens> refs;
      for (const auto& s : pairs[i].references) refs.push_back(text::tokenize(s));
      EXPECT_NEAR(r.per_sample[i], oracle::sentence_bleu4(text::tokenize(pairs[i].candidate), refs), 1e-9);
    }
  }
}

TEST(Bleu, BrevityPenaltyByHand) {
  const double bp = std::exp(1.0 - 6.0 / 5.0);
  EXPECT_NEAR(*bleu4(one("a b c d e", {"a b c d e f"})).score, bp, 1e-12);
}

TEST(RougeL, ExamplesAndOracle) {
  EXPECT_DOUBLE_EQ(*rouge_l(one("the red car", {"the red car"})).score, 1.0);
  EXPECT_EQ(*rouge_l(one("a b", {"c d"})).score, 0.0);
  const Tokens a = text::tokenize("the cat sat on the mat"), b = text::tokenize("the cat lay on the mat");
  EXPECT_EQ(lcs_length(a, b), 5u);
  const double p = 5.0 / 6, r = 5.0 / 6, beta2 = 1.2 * 1.2;
  EXPECT_NEAR(*rouge_l(one("the cat sat on the mat", {"the cat lay on the mat"})).score,
              (1 + beta2) * p * r / (r + beta2 * p), 1e-12);
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    const auto pairs = oracle::random_pairs(rng, 20);
    EXPECT_NEAR(*rouge_l(pairs).score, oracle::rouge_l(pairs), 1e-9);
    for (const auto& pr : pairs) {
      const Tokens c = text::tokenize(pr.candidate), ref = text::tokenize(pr.references[0]);
      EXPECT_EQ(lcs_length(c, ref), oracle::lcs_by_enumeration(c, ref));
    }
  }
}

TEST(Porter, KnownWords) {
  const std::map<std::string, std::string> cases = {
      {"caresses", "caress"}, {"ponies", "poni"},       {"ties", "ti"},          {"caress", "caress"},
      {"cats", "cat"},        {"feed", "feed"},         {"agreed", "agre"},      {"plastered", "plaster"},
      {"motoring", "motor"},  {"sing", "sing"},         {"conflated", "conflat"}, {"troubled", "troubl"},
      {"sized", "size"},      {"hopping", "hop"},       {"tanned", "tan"},       {"falling", "fall"},
      {"hissing", "hiss"},    {"fizzed", "fizz"},       {"failing", "fail"},     {"filing", "file"},
      {"happy", "happi"},     {"sky", "sky"},           {"relational", "relat"}, {"conditional", "condit"},
      {"rational", "ration"}, {"generalization", "gener"}, {"hopeful", "hope"},  {"goodness", "good"},
      {"running", "run"},     {"a", "a"},               {"is", "is"}};
  for (const auto& [word, stem] : cases) EXPECT_EQ(porter_stem(word), stem) << word;
}

TEST(Meteor, IdentityZeroAndHandValue) {
  const Tokens five = text::tokenize("the dog runs very fast");
  EXPECT_NEAR(meteor_score(five, five), 1.0 - 0.5 * std::pow(1.0 / 5.0, 3.0), 1e-12);
  EXPECT_EQ(meteor_score(text::tokenize("a b"), text::tokenize("c d")), 0.0);
  const Tokens cand = text::tokenize("dogs running fast the dog");
  const Tokens ref = text::tokenize("the dog runs very fast");
  const auto al = meteor_align(cand, ref);
  const auto want = oracle::best_alignment(cand, ref);
  EXPECT_EQ(al.exact, want.exact);
  EXPECT_EQ(al.matches, want.matches);
  EXPECT_EQ(al.chunks, want.chunks);
  EXPECT_TRUE(al.exhaustive);
  const double m = static_cast<double>(want.matches);
  const double p = m / 5, r = m / 5;
  const double fmean = p * r / (0.9 * p + 0.1 * r);
  EXPECT_NEAR(meteor_score(cand, ref), fmean * (1 - 0.5 * std::pow(want.chunks / m, 3.0)), 1e-12);
}

TEST(Meteor, MatchesOracle) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const auto pairs = oracle::random_pairs(rng, 20);
    EXPECT_NEAR(*meteor(pairs).score, oracle::meteor(pairs), 1e-9);
  }
}

TEST(Meteor, BudgetExhaustionFallsBackToFoundAlignment) {
  Tokens a, b;
  for (int i = 0; i < 12; ++i) {
    a.push_back(i % 2 ? "x" : "y");
    b.push_back(i % 3 ? "y" : "x");
  }
  MeteorParams tiny;
  tiny.search_budget = 3;
  const auto al = meteor_align(a, b, tiny);
  EXPECT_FALSE(al.exhaustive);
  EXPECT_LE(al.matches, meteor_align(a, b).matches);
  EXPECT_TRUE(meteor_align(a, b).exhaustive);
}

TEST(Cider, SelfSimilarityAndZeroOverlap) {
  const auto single = one("a red ball on grass", {"a red ball on grass"});
  EXPECT_EQ(*cider(single).score, 0.0);
  const std::vector<EvalPair> corpus = {{"0", "a red ball on grass", {"a red ball on grass"}},
                                        {"1", "two dogs play outside", {"two dogs play outside"}},
                                        {"2", "the sky is blue", {"the sky is blue"}}};
  const auto r = cider(corpus);
  for (double s : r.per_sample) EXPECT_NEAR(s, 10.0, 1e-9);
  EXPECT_EQ(cider({{"0", "zebra", {"a red ball"}}, {"1", "two dogs play", {"two dogs play"}}}).per_sample[0], 0.0);
  EXPECT_THROW(cider(corpus, DocumentFrequency{}), ConfigError);
}

TEST(Cider, MatchesOracle) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const auto pairs = oracle::random_pairs(rng, 20);
    EXPECT_NEAR(*cider(pairs).score, oracle::cider(pairs), 1e-9);
  }
}

TEST(BertScore, ToyEmbedders) {
  OneHotEmbedder hot;
  EXPECT_NEAR(bert_score_f1(text::tokenize("a red ball"), text::tokenize("a red ball"), hot), 1.0, 1e-12);
  const MapEmbedder toy({{"a", {1, 0}}, {"b", {0, 1}}, {"c", {1, 1}}, {"d", {0, 3}}});
  EXPECT_EQ(bert_score_f1({"a"}, {"b"}, toy), 0.0);
  const double c = 1 / std::sqrt(2.0);
  const double p = (0 + c) / 2, r = c;
  EXPECT_NEAR(bert_score_f1({"a", "c"}, {"b"}, toy), 2 * p * r / (p + r), 1e-12);
  EXPECT_NEAR(bert_score_f1({"d"}, {"b"}, toy), 1.0, 1e-12);
  const auto skipped = bert_score(one("a", {"a"}), nullptr);
  EXPECT_TRUE(skipped.skipped);
  EXPECT_FALSE(skipped.score.has_value());
  EXPECT_FALSE(skipped.reason.empty());
}

TEST(GroundingAcc, ConstructedFixture) {
  using geometry::Box;
  std::vector<Box> pred, gold;
  for (int i = 0; i < 6; ++i) {
    pred.push_back({i, i, i + 3, i + 2});
    gold.push_back({i, i, i + 3, i + 2});
  }
  pred.push_back({0, 0, 2, 1});
  gold.push_back({0, 0, 1, 1});
  pred.push_back({0, 0, 2, 1});
  gold.push_back({1, 0, 3, 1});
  pred.push_back({0, 0, 1, 1});
  gold.push_back({5, 5, 6, 6});
  pred.push_back({2, 2, 2, 2});
  gold.push_back({3, 3, 3, 3});
  EXPECT_DOUBLE_EQ(grounding_acc(pred, gold), 0.7);
  EXPECT_DOUBLE_EQ(grounding_acc(gold, gold, 0.5), 0.9);
  EXPECT_THROW(grounding_acc(pred, {}), AlignmentError);
  EXPECT_THROW(grounding_acc({}, {}), EmptyEvalError);
}

TEST(Metrics, IdentityIsMaximalAndOrderFree) {
  std::mt19937_64 rng(5);
  auto pairs = oracle::random_pairs(rng, 30);
  std::vector<EvalPair> ident;
  for (auto& p : pairs) {
    p.references.resize(1);
    ident.push_back({p.id, p.references[0], p.references});
  }
  OneHotEmbedder hot;
  for (const auto& name : metric_names()) {
    const auto a = evaluate(name, pairs, &hot), self = evaluate(name, ident, &hot);
    for (std::size_t i = 0; i < pairs.size(); ++i) EXPECT_LE(a.per_sample[i], self.per_sample[i] + 1e-12) << name;
    auto shuffled = pairs;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    EXPECT_NEAR(*evaluate(name, shuffled, &hot).score, *a.score, 1e-12) << name;
  }
  EXPECT_THROW(evaluate("spice", pairs), ConfigError);
}

TEST(Metrics, ReportJson) {
  const nlohmann::json j = bleu4(one("a b c d", {"a b c d"}));
  EXPECT_EQ(j.at("metric"), "bleu4");
  EXPECT_DOUBLE_EQ(j.at("reported").get<double>(), 100.0);
  const nlohmann::json s = bert_score(one("a", {"a"}), nullptr);
  EXPECT_TRUE(s.at("score").is_null());
}

}  // namespace
}  // namespace regioncap::metrics
