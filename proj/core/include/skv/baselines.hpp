// Copyright 2026 The skv Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "skv/decode.hpp"
#include "skv/kv_store.hpp"

namespace skv {

/// Attends every prompt token; the accuracy reference.
class FullKvPolicy final : public CachePolicy {
 public:
  explicit FullKvPolicy(std::shared_ptr<const PromptState> prompt);

  std::string label() const override { return "full"; }
  void plan_step(const StepContext& ctx, std::vector<LayerPlan>& plan) override;
  std::span<const float> prompt_key(std::size_t layer, std::size_t token, std::size_t head) const override {
    return prompt_->qkv.key(layer, token, head);
  }
  std::span<const float> prompt_value(std::size_t layer, std::size_t token, std::size_t head) const override {
    return prompt_->qkv.value(layer, token, head);
  }
  std::size_t held_in_range(std::size_t layer, std::size_t begin, std::size_t end) const override;

 private:
  std::shared_ptr<const PromptState> prompt_;
  std::vector<std::size_t> all_;
};

/// Static eviction: per layer the top-budget pre-window tokens by
/// observation-window importance, fixed for the whole decode.
std::vector<std::vector<std::size_t>> static_evict_policy(const ImportanceScores& importance, std::size_t budget);

class StaticEvictPolicy final : public CachePolicy {
 public:
  StaticEvictPolicy(std::shared_ptr<const PromptState> prompt, std::size_t budget);

  std::string label() const override { return "static_evict"; }
  void plan_step(const StepContext& ctx, std::vector<LayerPlan>& plan) override;
  std::span<const float> prompt_key(std::size_t layer, std::size_t token, std::size_t head) const override;
  std::span<const float> prompt_value(std::size_t layer, std::size_t token, std::size_t head) const override;
  std::size_t held_in_range(std::size_t layer, std::size_t begin, std::size_t end) const override;

  const std::vector<std::vector<std::size_t>>& retained() const { return retained_; }

 private:
  std::shared_ptr<const PromptState> prompt_;
  std::vector<std::vector<std::size_t>> retained_;
};

/// Heavy-hitter state for one layer: live pre-window tokens and their
/// accumulated attention.
struct H2oState {
  std::vector<std::size_t> live;  // sorted
  std::vector<double> score;      // parallel to live
};

/// Adds `attention` (parallel to state.live) to the accumulated scores, then
/// evicts the lowest-scoring tokens (ties -> higher index first) until at most
/// `budget` remain. Returns the evicted indices, sorted. Evictions are final.
std::vector<std::size_t> h2o_evict_step(H2oState& state, std::span<const double> attention, std::size_t budget);

/// H2O: live set starts as the budget's worth of pre-window tokens with the
/// highest observation importance; each step's attention is accumulated and
/// the live set is shrunk back to the budget.
class H2oPolicy final : public CachePolicy {
 public:
  H2oPolicy(std::shared_ptr<const PromptState> prompt, std::size_t budget);

  std::string label() const override { return "h2o"; }
  void plan_step(const StepContext& ctx, std::vector<LayerPlan>& plan) override;
  std::span<const float> prompt_key(std::size_t layer, std::size_t token, std::size_t head) const override;
  std::span<const float> prompt_value(std::size_t layer, std::size_t token, std::size_t head) const override;
  void observe_attention(std::size_t layer, std::span<const std::size_t> prompt_tokens,
                         std::span<const double> mass) override;
  std::size_t held_in_range(std::size_t layer, std::size_t begin, std::size_t end) const override;

  const H2oState& state(std::size_t layer) const { return states_.at(layer); }

 private:
  std::shared_ptr<const PromptState> prompt_;
  std::size_t budget_;
  std::vector<H2oState> states_;
};

/// A fixed-size page of prompt tokens with elementwise key bounds per
/// (layer, head).
struct ChunkPage {
  std::size_t page_id = 0;
  std::size_t start = 0;
  std::size_t end = 0;
  ModelDims dims;
  std::vector<float> key_min;  // [layer][head][d]
  std::vector<float> key_max;

  std::size_t size() const { return end - start; }
  std::span<const float> min_key(std::size_t layer, std::size_t head) const {
    return {key_min.data() + (layer * dims.heads + head) * dims.head_dim, dims.head_dim};
  }
  std::span<const float> max_key(std::size_t layer, std::size_t head) const {
    return {key_max.data() + (layer * dims.heads + head) * dims.head_dim, dims.head_dim};
  }
};

/// Pages of `chunk_size` tokens over [0, length); the last may be short.
/// Throws ConfigError on chunk_size == 0.
std::vector<ChunkPage> build_pages(const QkvBlock& prompt, std::size_t length, std::size_t chunk_size);

/// Upper-bound page score: sum over heads and dims of max(q*min, q*max).
double quest_page_score(const HeadVectors& query, const ChunkPage& page, std::size_t layer);
/// Page ids by descending upper-bound score (ties -> lower id).
std::vector<std::size_t> quest_rank_pages(const HeadVectors& query, std::span<const ChunkPage> pages,
                                          std::size_t layer);
/// Whole pages in rank order while they fit, then the highest-alpha tokens
/// of the first page that does not (same fill rule as the sentence engine).
/// `alpha` is indexed by token position. Sorted ascending.
std::vector<std::size_t> quest_select(std::span<const ChunkPage> pages, std::span<const std::size_t> ranked,
                                      std::size_t budget, std::span<const double> alpha);

/// Query-aware page retrieval driven by the current token's query.
class QuestPolicy final : public CachePolicy {
 public:
  QuestPolicy(std::shared_ptr<const PromptState> prompt, std::size_t budget, std::size_t chunk_size,
              std::size_t element_bytes = kDefaultElementBytes);

  std::string label() const override { return "quest" + std::to_string(chunk_size_); }
  void plan_step(const StepContext& ctx, std::vector<LayerPlan>& plan) override;
  std::span<const float> prompt_key(std::size_t layer, std::size_t token, std::size_t head) const override {
    return prompt_->qkv.key(layer, token, head);
  }
  std::span<const float> prompt_value(std::size_t layer, std::size_t token, std::size_t head) const override {
    return prompt_->qkv.value(layer, token, head);
  }
  std::size_t held_in_range(std::size_t layer, std::size_t begin, std::size_t end) const override;
  const TransferLedger* ledger() const override { return &ledger_; }

  const std::vector<ChunkPage>& pages() const { return pages_; }

 private:
  std::shared_ptr<const PromptState> prompt_;
  std::size_t budget_;
  std::size_t chunk_size_;
  std::vector<ChunkPage> pages_;
  std::vector<std::vector<std::size_t>> hot_;
  TransferLedger ledger_;
};

}  // namespace skv
