// Copyright 2026 The skv Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "skv/attention.hpp"
#include "skv/engine.hpp"
#include "skv/error.hpp"
#include "test_util.hpp"

namespace skv {
namespace {

struct Fixture {
  SyntheticModel model;
  SyntheticCorpus corpus;
};

Fixture small_world(std::size_t length, ModelDims dims = {2, 2, 8}, std::uint64_t seed = 3) {
  SyntheticModel model(make_vocab(96, 4, 0.05, seed), dims, seed);
  SyntheticCorpus corpus = make_topic_corpus(model.vocab(), length, seed + 100);
  return {std::move(model), std::move(corpus)};
}

QkvBlock one_token(const ModelDims& dims, std::uint32_t seed) { return testing::random_block(dims, 1, seed); }

TEST(MeanQuery, SingletonIsTheQuery) {
  const ModelDims dims{2, 2, 4};
  SentenceQueryCache cache(dims);
  const QkvBlock t = one_token(dims, 1);
  cache.append(t);
  const HeadVectors m = mean_query(cache);
  for (std::size_t l = 0; l < 2; ++l)
    for (std::size_t h = 0; h < 2; ++h)
      for (std::size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(m.at(l, h)[i], t.query(l, 0, h)[i]);
}

TEST(MeanQuery, OppositeQueriesCancel) {
  const ModelDims dims{1, 1, 4};
  SentenceQueryCache cache(dims);
  QkvBlock a = one_token(dims, 2);
  QkvBlock b = a;
  for (auto& x : b.query(0, 0, 0)) x = -x;
  cache.append(a);
  cache.append(b);
  const HeadVectors m = mean_query(cache);
  for (double x : m.at(0, 0)) EXPECT_EQ(x, 0.0);
}

TEST(MeanQuery, MatchesOracleAndResets) {
  const ModelDims dims{2, 3, 8};
  SentenceQueryCache cache(dims);
  std::vector<QkvBlock> tokens;
  for (std::uint32_t s = 0; s < 5; ++s) {
    tokens.push_back(one_token(dims, 10 + s));
    cache.append(tokens.back());
  }
  EXPECT_EQ(cache.token_count(), 5u);
  const HeadVectors m = mean_query(cache);
  for (std::size_t l = 0; l < 2; ++l)
    for (std::size_t h = 0; h < 3; ++h)
      for (std::size_t i = 0; i < 8; ++i) {
        double s = 0;
        for (const auto& t : tokens) s += t.query(l, 0, h)[i];
        EXPECT_NEAR(m.at(l, h)[i], s / 5.0, 1e-7);
        EXPECT_EQ(cache.query(3, l, h)[i], tokens[3].query(l, 0, h)[i]);
      }
  cache.reset();
  EXPECT_TRUE(cache.empty());
  EXPECT_THROW(mean_query(cache), ContractError);
}

SentenceBucket bucket_with_key(const ModelDims& dims, std::vector<float> key, bool rankable = true) {
  SentenceBucket b;
  b.dims = dims;
  b.retained.assign(dims.layers, rankable ? std::vector<std::size_t>{0} : std::vector<std::size_t>{});
  b.retained_alpha.assign(dims.layers, rankable ? std::vector<double>{1.0} : std::vector<double>{});
  b.mean_keys = std::move(key);
  return b;
}

TEST(RankBuckets, AlignedBucketFirstAndUnrankableSkipped) {
  const ModelDims dims{1, 1, 3};
  HeadVectors q(dims);
  q.data = {1, 0, 0};
  std::vector<SentenceBucket> buckets{bucket_with_key(dims, {0, 1, 0}), bucket_with_key(dims, {-1, 0, 0}),
                                      bucket_with_key(dims, {5, 0, 0}, false), bucket_with_key(dims, {1, 0, 0})};
  EXPECT_EQ(rank_buckets(q, buckets, 0), (std::vector<std::size_t>{3, 0, 1}));
}

TEST(RankBuckets, ZeroQueryKeepsIdOrder) {
  const ModelDims dims{1, 2, 2};
  HeadVectors q(dims);
  std::vector<SentenceBucket> buckets;
  for (int b = 0; b < 6; ++b) buckets.push_back(bucket_with_key(dims, {float(b), 1, -1, 2}));
  EXPECT_EQ(rank_buckets(q, buckets, 0), (std::vector<std::size_t>{0, 1, 2, 3, 4, 5}));
  std::vector<SentenceBucket> none{bucket_with_key(dims, {0, 0, 0, 0}, false)};
  EXPECT_TRUE(rank_buckets(q, none, 0).empty());
}

TEST(RankBuckets, MatchesBruteForce) {
  std::mt19937 rng(21);
  const ModelDims dims{2, 2, 4};
  for (int trial = 0; trial < 50; ++trial) {
    HeadVectors q(dims);
    for (auto& x : q.data) x = std::normal_distribution<double>()(rng);
    std::vector<SentenceBucket> buckets;
    for (int b = 0; b < 12; ++b) buckets.push_back(bucket_with_key(dims, testing::random_vector(16, rng)));
    for (std::size_t l = 0; l < 2; ++l) {
      const auto ranked = rank_buckets(q, buckets, l);
      std::vector<double> score;
      for (const auto& b : buckets) {
        double s = 0;
        for (std::size_t h = 0; h < 2; ++h)
          for (std::size_t i = 0; i < 4; ++i) s += q.at(l, h)[i] * b.mean_key(l, h)[i];
        score.push_back(s);
      }
      for (std::size_t i = 1; i < ranked.size(); ++i) EXPECT_GE(score[ranked[i - 1]], score[ranked[i]]);
      EXPECT_EQ(ranked.size(), 12u);
    }
  }
}

TEST(QueryStrategy, ParseRoundTrip) {
  EXPECT_EQ(parse_query_strategy("mean_sentence"), QueryStrategy::mean_sentence);
  EXPECT_EQ(to_string(parse_query_strategy("current_token")), "current_token");
  EXPECT_THROW(parse_query_strategy("last"), ConfigError);
}

TEST(PolicyParse, NamesAndChunkSizes) {
  EXPECT_EQ(parse_policy("sentencekv", 32).kind, PolicyKind::sentencekv);
  EXPECT_EQ(parse_policy("quest", 16).label(), "quest16");
  EXPECT_EQ(parse_policy("quest64", 16).chunk_size, 64u);
  EXPECT_THROW(parse_policy("quest0", 16), ConfigError);
  EXPECT_THROW(parse_policy("questx", 16), ConfigError);
  EXPECT_THROW(parse_policy("lru", 16), ConfigError);
}

TEST(EngineConfigTest, Validation) {
  EngineConfig c;
  EXPECT_NO_THROW(c.validate());
  c.budget = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.keep_factor = 0.9;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.window = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(EngineTest, DecodeBeforePrefillIsAStateError) {
  const auto w = small_world(100);
  Engine e(w.model, {}, {});
  EXPECT_THROW(e.decode_step(), StateError);
  EXPECT_THROW(e.run_decode(3), StateError);
  EXPECT_EQ(e.sentence_policy(), nullptr);
}

TEST(EngineTest, ShortPromptRejected) {
  const auto w = small_world(100);
  EngineConfig c;
  c.window = 32;
  Engine e(w.model, c, {});
  const std::vector<TokenId> prompt(w.corpus.tokens.begin(), w.corpus.tokens.begin() + 32);
  EXPECT_THROW(e.prefill(prompt), InputError);
}

TEST(EngineTest, QueryCacheResetsAfterBoundaries) {
  const auto w = small_world(300);
  EngineConfig c;
  c.budget = 40;
  c.window = 16;
  Engine e(w.model, c, {});
  e.prefill(w.corpus.tokens);
  const TokenId word = w.model.vocab().tokens_of_topic[0][0];
  const TokenId stop = w.model.vocab().boundary_token_ids[0];
  const std::vector<TokenId> inputs{word, word, stop, word, stop, stop, word};
  const DecodeTrace t = e.run_decode(inputs);
  std::vector<std::size_t> cache;
  for (const auto& s : t.steps) cache.push_back(s.cache_tokens);
  EXPECT_EQ(cache, (std::vector<std::size_t>{1, 2, 3, 1, 2, 1, 1}));
  EXPECT_EQ(t.resets, 3u);
  EXPECT_TRUE(t.steps[2].reset_after);
  EXPECT_FALSE(t.steps[3].reset_after);
  EXPECT_EQ(t.policy, "sentencekv");
}

TEST(EngineTest, HotSetsStayWithinBudgetAndInsideCold) {
  const auto w = small_world(800);
  EngineConfig c;
  c.budget = 50;
  c.keep_factor = 2.0;
  c.window = 24;
  Engine e(w.model, c, {});
  e.prefill(w.corpus.tokens);
  for (int i = 0; i < 40; ++i) {
    const StepRecord& s = e.decode_step();
    for (std::size_t l = 0; l < s.layers.size(); ++l) {
      const auto& ls = s.layers[l];
      EXPECT_LE(ls.hot_count, 50u);
      EXPECT_EQ(ls.attended, ls.hot_count + 24 + s.step);
      for (auto t : ls.hot) EXPECT_TRUE(e.sentence_policy()->store().in_cold(l, t));
      EXPECT_EQ(ls.ranking_dot_products, 2 * ls.ranking.size());
    }
  }
  for (std::size_t l = 0; l < 2; ++l) EXPECT_EQ(e.sentence_policy()->store().cold_size(l), 100u);
}

// r = 1 and a budget covering every pre-window token: the retained set is the
// whole prompt, so every step matches the reference full-attention step.
TEST(EngineTest, FullBudgetMatchesReferenceDecoder) {
  const auto w = small_world(120);
  EngineConfig c;
  c.budget = 200;
  c.keep_factor = 1.0;
  c.window = 16;
  Engine e(w.model, c, {});
  e.prefill(w.corpus.tokens);
  const QkvBlock prompt = w.model.encode(w.corpus.tokens);
  QkvBlock generated;
  for (int i = 0; i < 12; ++i) {
    const StepRecord& s = e.decode_step();
    const QkvBlock token = w.model.token_qkv(s.input_token, 120 + s.step);
    const AttentionOutput ref = full_decode_step(prompt, generated, token);
    for (std::size_t l = 0; l < 2; ++l)
      for (std::size_t h = 0; h < 2; ++h)
        for (std::size_t j = 0; j < 8; ++j) EXPECT_NEAR(s.output.output(l, h)[j], ref.output(l, h)[j], 1e-5);
    if (generated.tokens() == 0) {
      generated = token;
    } else {
      generated.append(token, 0);
    }
  }
}

TEST(EngineTest, DeterministicAcrossRuns) {
  const auto w = small_world(400);
  auto run = [&] {
    EngineConfig c;
    c.budget = 30;
    c.window = 16;
    Engine e(w.model, c, {});
    e.prefill(w.corpus.tokens);
    return e.run_decode(25);
  };
  const DecodeTrace a = run();
  const DecodeTrace b = run();
  ASSERT_EQ(a.steps.size(), b.steps.size());
  for (std::size_t i = 0; i < a.steps.size(); ++i) {
    EXPECT_EQ(a.steps[i].next_token, b.steps[i].next_token);
    EXPECT_EQ(a.steps[i].output, b.steps[i].output);
  }
  EXPECT_EQ(a.ledger.rows().size(), b.ledger.rows().size());
  EXPECT_EQ(a.ledger.onload_bytes(), b.ledger.onload_bytes());
}

TEST(EngineTest, SegmentationDoesNotChangeRetainedSet) {
  const auto w = small_world(500);
  EngineConfig c;
  c.budget = 20;
  c.window = 16;
  Engine punct(w.model, c, {});
  c.segmentation = parse_segmentation("equal_chunks:7");
  Engine chunks(w.model, c, {});
  punct.prefill(w.corpus.tokens);
  chunks.prefill(w.corpus.tokens);
  for (std::size_t l = 0; l < 2; ++l) {
    EXPECT_TRUE(std::ranges::equal(punct.sentence_policy()->store().cold_indices(l),
                                   chunks.sentence_policy()->store().cold_indices(l)));
  }
  EXPECT_NE(punct.sentence_policy()->buckets().size(), chunks.sentence_policy()->buckets().size());
}

TEST(EngineTest, WindowMismatchRejected) {
  const auto w = small_world(200);
  EngineConfig c;
  c.window = 16;
  Engine e(w.model, c, {});
  EXPECT_THROW(e.prefill(encode_prompt(w.model, w.corpus.tokens, 8)), ConfigError);
}

TEST(EngineTest, TraceCsvShape) {
  const auto w = small_world(200);
  EngineConfig c;
  c.budget = 16;
  c.window = 16;
  Engine e(w.model, c, {});
  e.prefill(w.corpus.tokens);
  const DecodeTrace t = e.run_decode(3);
  std::ostringstream out;
  t.write_csv(out);
  const std::string csv = out.str();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "step,layer,top1_bucket,hot_count,onload_tokens,needle_hit");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 3 * 2);
  std::ostringstream with_policy;
  t.write_csv(with_policy, true);
  EXPECT_EQ(with_policy.str().rfind("policy,step", 0), 0u);
}

}  // namespace
}  // namespace skv
