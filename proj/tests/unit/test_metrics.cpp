// Copyright 2026 The skv Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <sstream>

#include "skv/error.hpp"
#include "skv/kv_store.hpp"
#include "skv/metrics.hpp"

namespace skv {
namespace {

SyntheticCorpus needle_corpus() {
  SyntheticCorpus c;
  c.tokens.assign(100, 1);
  c.needle_span = std::pair<std::size_t, std::size_t>{10, 20};
  c.needle_query_tokens = {7, 8};
  return c;
}

StepRecord step_with(std::size_t step, TokenId input, std::vector<std::pair<std::size_t, std::size_t>> held_hot) {
  StepRecord s;
  s.step = step;
  s.input_token = input;
  for (const auto& [held, hot] : held_hot) {
    LayerStep l;
    l.needle_held = held;
    l.needle_hot = hot;
    l.hot_count = hot + 3;
    l.onload_tokens = 2;
    s.layers.push_back(l);
  }
  s.dot_products = 100;
  return s;
}

DecodeTrace trace_of(std::vector<StepRecord> steps) {
  DecodeTrace t;
  t.policy = "sentencekv";
  t.watch = std::pair<std::size_t, std::size_t>{10, 20};
  t.steps = std::move(steps);
  return t;
}

TEST(NeedleHit, EightyPercentRule) {
  LayerStep l;
  EXPECT_FALSE(l.needle_hit());
  l.needle_held = 10;
  l.needle_hot = 8;
  EXPECT_TRUE(l.needle_hit());
  l.needle_hot = 7;
  EXPECT_FALSE(l.needle_hit());
  l.needle_held = 5;
  l.needle_hot = 4;
  EXPECT_TRUE(l.needle_hit());
}

TEST(ScoreNiah, EvaluatedWhereProbesComplete) {
  const auto corpus = needle_corpus();
  // Probes 7, 8 complete at step 2; only that step's coverage counts.
  auto t = trace_of({step_with(0, 3, {{10, 10}, {10, 10}}), step_with(1, 7, {{10, 0}, {10, 10}}),
                     step_with(2, 8, {{10, 9}, {10, 8}}), step_with(3, 8, {{10, 0}, {10, 0}})});
  auto r = score_niah(t, corpus);
  EXPECT_TRUE(r.hit);
  EXPECT_EQ(r.query_step, 2u);
  EXPECT_EQ(r.steps_to_hit, 0u);
  EXPECT_EQ(r.policy, "sentencekv");

  t.steps[2].layers[1].needle_hot = 7;
  r = score_niah(t, corpus);
  EXPECT_FALSE(r.hit);
  EXPECT_EQ(r.query_step, 2u);

  t.steps[2].input_token = 9;
  r = score_niah(t, corpus);
  EXPECT_FALSE(r.hit);
  EXPECT_FALSE(r.query_step.has_value());
}

TEST(ScoreNiah, NothingHeldIsAMiss) {
  auto t = trace_of({step_with(0, 7, {{0, 0}}), step_with(1, 8, {{0, 0}})});
  const auto r = score_niah(t, needle_corpus());
  EXPECT_FALSE(r.hit);
  EXPECT_FALSE(r.steps_to_hit.has_value());
}

TEST(ScoreNiah, Errors) {
  SyntheticCorpus plain;
  plain.tokens.assign(10, 1);
  EXPECT_THROW(score_niah(trace_of({}), plain), InputError);
  auto t = trace_of({});
  t.watch.reset();
  EXPECT_THROW(score_niah(t, needle_corpus()), ContractError);
}

TEST(SummarizeTrace, MeansAndEmptyTrace) {
  auto t = trace_of({step_with(0, 7, {{4, 4}, {4, 4}}), step_with(1, 8, {{4, 4}, {4, 1}})});
  t.steps[1].dot_products = 300;
  const CellResult c = summarize_trace(t, needle_corpus());
  EXPECT_EQ(c.steps, 2u);
  EXPECT_DOUBLE_EQ(c.onload_tokens_mean, 4.0);
  EXPECT_DOUBLE_EQ(c.dot_products_mean, 200.0);
  EXPECT_EQ(c.peak_hot, 7u);
  EXPECT_FALSE(c.niah.hit);

  const CellResult empty = summarize_trace(trace_of({}), needle_corpus());
  EXPECT_EQ(empty.steps, 0u);
  EXPECT_EQ(empty.onload_tokens_mean, 0.0);
  EXPECT_EQ(empty.dot_products_mean, 0.0);
  EXPECT_EQ(empty.peak_hot, 0u);
}

TEST(LatencyProxyTest, SumsLayers) {
  StepRecord s = step_with(0, 1, {{0, 0}, {0, 0}, {0, 0}});
  for (auto& l : s.layers) l.ranking_dot_products = 5;
  const auto p = latency_proxy(s);
  EXPECT_EQ(p.dot_products, 100u);
  EXPECT_EQ(p.onload_tokens, 6u);
  EXPECT_EQ(p.ranking_comparisons, 15u);
}

TEST(Projection, FullCacheAtReferenceLength) {
  EXPECT_EQ(projected_device_bytes(true, 32768, 128, 32), 17179869184ull);
  EXPECT_EQ(format_gib(projected_device_bytes(true, 32768, 128, 32)), "16.00 GiB");
  // Bounded cache: 128 + 32 tokens regardless of length.
  const std::uint64_t bounded = memory_cost(kProjectionDims, 160, 0);
  for (auto length : kProjectionLengths) EXPECT_EQ(projected_device_bytes(false, length, 128, 32), bounded);
  EXPECT_EQ(projected_device_bytes(false, 100, 128, 32), memory_cost(kProjectionDims, 100, 0));
}

TEST(FormatGib, Rounding) {
  EXPECT_EQ(format_gib(0), "0.00 GiB");
  EXPECT_EQ(format_gib(4294967296ull), "4.00 GiB");
  EXPECT_EQ(format_gib((1ull << 30) + (1ull << 29)), "1.50 GiB");
  EXPECT_EQ(format_gib((1ull << 30) - 1), "1.00 GiB");
  EXPECT_EQ(format_gib(static_cast<unsigned __int128>(1) << 70), "1099511627776.00 GiB");
  EXPECT_EQ(to_decimal(static_cast<unsigned __int128>(1) << 64), "18446744073709551616");
}

CellResult cell(const std::string& policy, bool hit, double onload) {
  CellResult c;
  c.policy = policy;
  c.niah.hit = hit;
  c.onload_tokens_mean = onload;
  c.budget = 128;
  c.window = 32;
  c.peak_hot = onload > 1 ? 128 : 64;
  return c;
}

TEST(Summarize, PerPolicyInFirstAppearanceOrder) {
  const std::vector<CellResult> cells{cell("sentencekv", true, 2), cell("full", true, 0),
                                      cell("sentencekv", false, 4), cell("full", true, 0)};
  EXPECT_DOUBLE_EQ(accuracy(cells), 0.75);
  EXPECT_EQ(accuracy(std::span<const CellResult>{}), 0.0);
  const auto rows = summarize(cells);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].policy, "sentencekv");
  EXPECT_EQ(rows[0].cells, 2u);
  EXPECT_DOUBLE_EQ(rows[0].accuracy, 0.5);
  EXPECT_DOUBLE_EQ(rows[0].onload_tokens_mean, 3.0);
  EXPECT_EQ(rows[0].peak_hot, 128u);
  EXPECT_EQ(rows[1].memory_bytes[1], 17179869184ull);
  EXPECT_EQ(rows[1].memory_bytes.size(), std::size(kProjectionLengths));

  std::ostringstream out;
  write_memory_csv(out, rows);
  EXPECT_NE(out.str().find("full,32768,17179869184,16.00\n"), std::string::npos);
  std::ostringstream summary;
  write_summary_csv(summary, rows);
  EXPECT_EQ(summary.str().substr(0, summary.str().find('\n')),
            "policy,cells,accuracy,onload_tokens_mean,dot_products_mean,peak_hot,mem_16k_bytes,mem_32k_bytes,"
            "mem_64k_bytes,mem_128k_bytes,mem_256k_bytes");
}

}  // namespace
}  // namespace skv
