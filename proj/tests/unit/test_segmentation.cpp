// Copyright 2026 The skv Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "skv/error.hpp"
#include "skv/segmentation.hpp"

namespace skv {
namespace {

class SegmentTest : public ::testing::Test {
 protected:
  SyntheticVocab vocab = make_vocab(64, 4, 0.05, 3);
  TokenId p() const { return vocab.boundary_token_ids.front(); }
  TokenId a() const { return vocab.tokens_of_topic[0][0]; }
  TokenId b() const { return vocab.tokens_of_topic[1][0]; }
};

std::vector<SentenceSpan> spans_of(std::initializer_list<std::pair<std::size_t, std::size_t>> ranges) {
  std::vector<SentenceSpan> out;
  for (const auto& [s, e] : ranges) {
    out.push_back({out.size(), s, e});
  }
  return out;
}

TEST_F(SegmentTest, BoundaryClosesSentence) {
  const std::vector<TokenId> tokens{a(), a(), p(), b(), p()};
  EXPECT_EQ(segment(tokens, vocab, {}), spans_of({{0, 3}, {3, 5}}));
}

TEST_F(SegmentTest, TrailingSentenceWithoutBoundary) {
  const std::vector<TokenId> tokens{a(), p(), b(), b()};
  EXPECT_EQ(segment(tokens, vocab, {}), spans_of({{0, 2}, {2, 4}}));
}

TEST_F(SegmentTest, EqualChunks) {
  const std::vector<TokenId> tokens{a(), a(), p(), b(), p()};
  EXPECT_EQ(segment(tokens, vocab, parse_segmentation("equal_chunks:2")), spans_of({{0, 2}, {2, 4}, {4, 5}}));
}

TEST_F(SegmentTest, EmptyInputRejected) {
  EXPECT_THROW(segment({}, vocab, {}), InputError);
}

TEST(SegmentationConfig, ParseAndValidate) {
  EXPECT_EQ(parse_segmentation("punctuation").mode, SegmentationMode::punctuation);
  const auto eq = parse_segmentation("equal_chunks:16");
  EXPECT_EQ(eq.mode, SegmentationMode::equal_chunks);
  EXPECT_EQ(eq.chunk_size, 16u);
  EXPECT_EQ(eq.to_string(), "equal_chunks:16");
  EXPECT_EQ(parse_segmentation("equal_chunks").chunk_size, 32u);
  EXPECT_THROW(parse_segmentation("equal_chunks:0"), ConfigError);
  EXPECT_THROW(parse_segmentation("equal_chunks:x"), ConfigError);
  EXPECT_THROW(parse_segmentation("words"), ConfigError);
  SegmentationConfig c;
  EXPECT_DOUBLE_EQ(c.outlier_n_std, 3.0);
}

TEST(SplitOutliers, HandComputedThreshold) {
  // lengths 10,10,10,100: mean 32.5, population std ~38.97, threshold ~71.47.
  const auto spans = spans_of({{0, 10}, {10, 20}, {20, 30}, {30, 130}});
  const double mean = 32.5;
  const double std = std::sqrt((3 * 22.5 * 22.5 + 67.5 * 67.5) / 4.0);
  EXPECT_NEAR(std, 38.97, 0.01);
  EXPECT_NEAR(mean + std, 71.47, 0.01);
  const auto out = split_outliers(spans, 1.0);
  ASSERT_EQ(out.size(), 3u + 4u);  // ceil(100 / 33) = 4 pieces
  EXPECT_EQ(out[3], (SentenceSpan{3, 30, 63}));
  EXPECT_EQ(out[4], (SentenceSpan{4, 63, 96}));
  EXPECT_EQ(out[5], (SentenceSpan{5, 96, 129}));
  EXPECT_EQ(out[6], (SentenceSpan{6, 129, 130}));
  EXPECT_TRUE(is_partition(out, 130));
}

TEST(SplitOutliers, EqualLengthsAndSingleSpanUnchanged) {
  const auto equal = spans_of({{0, 5}, {5, 10}, {10, 15}});
  EXPECT_EQ(split_outliers(equal, 0.0), equal);
  const auto single = spans_of({{0, 50}});
  EXPECT_EQ(split_outliers(single, 3.0), single);
}

TEST(SplitOutliers, IdempotentWhenNothingExceeds) {
  const auto spans = spans_of({{0, 10}, {10, 25}, {25, 30}});
  const auto once = split_outliers(spans, 3.0);
  EXPECT_EQ(once, spans);
  EXPECT_EQ(split_outliers(once, 3.0), once);
}

TEST(IsPartition, DetectsGapsAndOverlaps) {
  EXPECT_TRUE(is_partition(spans_of({{0, 3}, {3, 5}}), 5));
  EXPECT_FALSE(is_partition(spans_of({{0, 3}, {4, 5}}), 5));
  EXPECT_FALSE(is_partition(spans_of({{0, 3}, {2, 5}}), 5));
  EXPECT_FALSE(is_partition(spans_of({{0, 3}, {3, 3}, {3, 5}}), 5));
  EXPECT_FALSE(is_partition(spans_of({{0, 3}}), 5));
}

// Random corpora: partition, no interior boundary, each punctuation span ends
// at a boundary or at the end; outlier splitting keeps the partition.
TEST(SegmentProperty, RandomCorpora) {
  const SyntheticVocab vocab = make_vocab(128, 4, 0.1, 8);
  std::mt19937 rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t length = 1 + rng() % 300;
    std::vector<TokenId> tokens(length);
    for (auto& t : tokens) {
      t = static_cast<TokenId>(rng() % 128);
    }
    const auto spans = segment(tokens, vocab, {});
    ASSERT_TRUE(is_partition(spans, length));
    for (const auto& s : spans) {
      for (std::size_t i = s.start; i + 1 < s.end; ++i) {
        EXPECT_FALSE(vocab.is_boundary(tokens[i]));
      }
      EXPECT_TRUE(vocab.is_boundary(tokens[s.end - 1]) || s.end == length);
    }
    const auto split = split_outliers(spans, (rng() % 4) * 0.5);
    ASSERT_TRUE(is_partition(split, length));
    for (std::size_t i = 0; i < split.size(); ++i) {
      EXPECT_EQ(split[i].bucket_id, i);
    }
    SegmentationConfig eq = parse_segmentation("equal_chunks:" + std::to_string(1 + rng() % 40));
    ASSERT_TRUE(is_partition(segment(tokens, vocab, eq), length));
  }
}

TEST(SegmentProperty, LongNiahCorpusHasHundredsOfBuckets) {
  const SyntheticVocab vocab = make_vocab(512, 8, 0.02, 1);
  const SyntheticCorpus c = make_niah_corpus(vocab, 32768, 2, 25, 0.5, 1);
  const auto spans = segment(c.tokens, vocab, {});
  EXPECT_GE(spans.size(), 100u);
  EXPECT_LE(spans.size(), 3000u);
  std::size_t shortest = c.tokens.size(), longest = 0;
  for (const auto& s : spans) {
    shortest = std::min(shortest, s.size());
    longest = std::max(longest, s.size());
  }
  EXPECT_LT(shortest, longest);
}

}  // namespace
}  // namespace skv
