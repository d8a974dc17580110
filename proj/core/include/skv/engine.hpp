// Copyright 2026 The skv Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "skv/decode.hpp"
#include "skv/kv_store.hpp"
#include "skv/model_synth.hpp"
#include "skv/segmentation.hpp"

namespace skv {

/// Which query drives bucket ranking: the mean over the current sentence's
/// generated tokens, or just the token being processed.
enum class QueryStrategy { mean_sentence, current_token };

std::string to_string(QueryStrategy strategy);
/// Parses "mean_sentence" | "current_token"; throws ConfigError otherwise.
QueryStrategy parse_query_strategy(std::string_view text);

struct EngineConfig {
  std::size_t budget = 128;  // hot prompt tokens per layer per step
  double keep_factor = 3.0;  // prefill keeps floor(keep_factor * budget)
  std::size_t window = 32;   // observation window, always hot
  QueryStrategy query_strategy = QueryStrategy::mean_sentence;
  SegmentationConfig segmentation;
  std::size_t element_bytes = kDefaultElementBytes;

  /// Throws ConfigError on budget < 1, keep_factor < 1, window < 1,
  /// element_bytes < 1 or an invalid segmentation.
  void validate() const;
  std::size_t retained() const { return retained_target(budget, keep_factor); }
};

/// Bucket ids with at least one retained token at `layer`, ordered by
/// sum over heads of query . mean_key (descending, ties -> lower id).
std::vector<std::size_t> rank_buckets(const HeadVectors& query, std::span<const SentenceBucket> buckets,
                                      std::size_t layer);

/// Sentence-level retrieval: prefill segmentation plus filtering into a tiered
/// store, then per-step ranking of buckets by mean key and budgeted reloads.
class SentenceKvPolicy final : public CachePolicy {
 public:
  SentenceKvPolicy(const SyntheticModel& model, std::shared_ptr<const PromptState> prompt, EngineConfig config);

  std::string label() const override { return "sentencekv"; }
  void plan_step(const StepContext& ctx, std::vector<LayerPlan>& plan) override;
  std::span<const float> prompt_key(std::size_t layer, std::size_t token, std::size_t head) const override {
    return store_.cold_key(layer, token, head);
  }
  std::span<const float> prompt_value(std::size_t layer, std::size_t token, std::size_t head) const override {
    return store_.cold_value(layer, token, head);
  }
  std::size_t held_in_range(std::size_t layer, std::size_t begin, std::size_t end) const override;
  const TransferLedger* ledger() const override { return &store_.ledger(); }

  const EngineConfig& config() const { return config_; }
  const std::vector<SentenceSpan>& spans() const { return spans_; }
  const std::vector<SentenceBucket>& buckets() const { return buckets_; }
  const TieredKvStore& store() const { return store_; }
  /// Rankings computed at the most recent step, one per layer.
  const std::vector<std::vector<std::size_t>>& last_ranking() const { return last_ranking_; }

 private:
  EngineConfig config_;
  std::shared_ptr<const PromptState> prompt_;
  std::vector<SentenceSpan> spans_;
  std::vector<SentenceBucket> buckets_;
  TieredKvStore store_;
  std::vector<std::vector<std::size_t>> last_ranking_;
};

enum class PolicyKind { sentencekv, full, static_evict, h2o, quest };

struct PolicySpec {
  PolicyKind kind = PolicyKind::sentencekv;
  std::size_t chunk_size = 32;  // quest page size

  /// "sentencekv", "full", "static_evict", "h2o" or "quest<chunk>".
  std::string label() const;
  friend bool operator==(const PolicySpec&, const PolicySpec&) = default;
};

/// Parses a policy label; "quest" alone uses `default_chunk`. Throws
/// ConfigError on unknown names or a zero chunk size.
PolicySpec parse_policy(std::string_view text, std::size_t default_chunk = 32);

std::unique_ptr<CachePolicy> make_policy(const PolicySpec& spec, const SyntheticModel& model,
                                         std::shared_ptr<const PromptState> prompt, const EngineConfig& config);

/// Convenience facade: prefill once, then decode step by step.
class Engine {
 public:
  Engine(const SyntheticModel& model, EngineConfig config, PolicySpec policy = {});

  /// Encodes, scores and (for sentencekv) segments and filters the prompt.
  /// Throws InputError when the prompt is not longer than the window.
  void prefill(std::span<const TokenId> prompt);
  /// Reuses an already encoded prompt; its window must match the config.
  void prefill(std::shared_ptr<const PromptState> prompt);
  bool prefilled() const { return session_ != nullptr; }

  /// Throws StateError before prefill.
  void watch(std::pair<std::size_t, std::size_t> span);
  const StepRecord& decode_step(std::optional<TokenId> forced = std::nullopt);
  /// `steps` greedy steps.
  DecodeTrace run_decode(std::size_t steps);
  /// One step per forced token.
  DecodeTrace run_decode(std::span<const TokenId> forced);

  const EngineConfig& config() const { return config_; }
  const PolicySpec& policy_spec() const { return spec_; }
  DecodeSession& session();
  const DecodeSession& session() const;
  /// The sentence policy, or nullptr for baselines / before prefill.
  const SentenceKvPolicy* sentence_policy() const;

 private:
  const SyntheticModel* model_;
  EngineConfig config_;
  PolicySpec spec_;
  std::unique_ptr<DecodeSession> session_;
};

}  // namespace skv
