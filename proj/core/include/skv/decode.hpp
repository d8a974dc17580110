// Copyright 2026 The skv Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "skv/attention.hpp"
#include "skv/kv_store.hpp"
#include "skv/model_synth.hpp"
#include "skv/tensor.hpp"

namespace skv {

/// Per (layer, head) vectors in double precision, layout [layer][head][d].
struct HeadVectors {
  ModelDims dims;
  std::vector<double> data;

  HeadVectors() = default;
  explicit HeadVectors(ModelDims d) : dims(d), data(d.floats_per_token(), 0.0) {}

  std::span<const double> at(std::size_t layer, std::size_t head) const {
    return {data.data() + (layer * dims.heads + head) * dims.head_dim, dims.head_dim};
  }
  std::span<double> at(std::size_t layer, std::size_t head) {
    return {data.data() + (layer * dims.heads + head) * dims.head_dim, dims.head_dim};
  }
};

/// Query vectors of the tokens generated since the last sentence boundary.
class SentenceQueryCache {
 public:
  explicit SentenceQueryCache(ModelDims dims);

  /// Appends the queries of a one-token block.
  void append(const QkvBlock& token);
  void reset();

  const ModelDims& dims() const { return dims_; }
  std::size_t token_count() const { return count_; }
  bool empty() const { return count_ == 0; }
  std::span<const float> query(std::size_t index, std::size_t layer, std::size_t head) const;

 private:
  ModelDims dims_;
  std::size_t count_ = 0;
  std::vector<float> queries_;  // [index][layer][head][d]
};

/// Arithmetic mean of the cached queries per (layer, head). Throws
/// ContractError on an empty cache.
HeadVectors mean_query(const SentenceQueryCache& cache);
/// The queries of a one-token block, widened to double.
HeadVectors current_query(const QkvBlock& token);

/// The encoded prompt shared by every policy: tokens, Q/K/V and
/// observation-window importance.
struct PromptState {
  std::vector<TokenId> tokens;
  QkvBlock qkv;
  ImportanceScores importance;
  std::size_t window = 0;

  std::size_t length() const { return tokens.size(); }
  std::size_t window_begin() const { return tokens.size() - window; }
};

/// Encodes and scores a prompt. Throws InputError unless length > window >= 1.
std::shared_ptr<const PromptState> encode_prompt(const SyntheticModel& model, std::span<const TokenId> tokens,
                                                 std::size_t window);

struct StepContext {
  std::size_t step = 0;
  const QkvBlock& token;
  const SentenceQueryCache& cache;
};

/// What a policy decides for one layer at one step.
struct LayerPlan {
  std::vector<std::size_t> prompt_tokens;  // sorted pre-window indices to attend
  std::vector<std::size_t> ranking;        // bucket/page ids, best first
  long long top1 = -1;                     // best bucket/page id, -1 when unranked
  std::size_t onload_tokens = 0;
  std::size_t offload_tokens = 0;
  std::size_t ranking_dot_products = 0;
};

/// A KV-cache policy plugged into DecodeSession. The observation window and
/// generated tokens are always attended and never pass through the policy.
class CachePolicy {
 public:
  virtual ~CachePolicy() = default;

  virtual std::string label() const = 0;
  /// Fills plan[layer] for every layer.
  virtual void plan_step(const StepContext& ctx, std::vector<LayerPlan>& plan) = 0;
  virtual std::span<const float> prompt_key(std::size_t layer, std::size_t token, std::size_t head) const = 0;
  virtual std::span<const float> prompt_value(std::size_t layer, std::size_t token, std::size_t head) const = 0;
  /// Attention mass (summed over heads) that this step put on each planned
  /// prompt token.
  virtual void observe_attention(std::size_t /*layer*/, std::span<const std::size_t> /*prompt_tokens*/,
                                 std::span<const double> /*mass*/) {}
  /// Number of pre-window tokens in [begin, end) the policy still holds
  /// anywhere (hot or cold) at `layer`.
  virtual std::size_t held_in_range(std::size_t layer, std::size_t begin, std::size_t end) const = 0;
  virtual const TransferLedger* ledger() const { return nullptr; }
};

struct LayerStep {
  long long top1 = -1;
  std::size_t hot_count = 0;
  std::size_t attended = 0;
  std::size_t onload_tokens = 0;
  std::size_t offload_tokens = 0;
  std::size_t ranking_dot_products = 0;
  std::size_t needle_held = 0;
  std::size_t needle_hot = 0;
  std::vector<std::size_t> hot;
  std::vector<std::size_t> ranking;

  /// At least 80% of the watched tokens the policy still holds are hot.
  bool needle_hit() const { return needle_held > 0 && 5 * needle_hot >= 4 * needle_held; }
};

struct StepRecord {
  std::size_t step = 0;
  TokenId input_token = 0;
  TokenId next_token = 0;
  std::size_t cache_tokens = 0;  // |Q_s| when the step ranked
  bool reset_after = false;
  std::uint64_t dot_products = 0;
  std::vector<LayerStep> layers;
  AttentionOutput output;
};

struct DecodeTrace {
  std::string policy;
  std::vector<StepRecord> steps;
  TransferLedger ledger;
  std::optional<std::pair<std::size_t, std::size_t>> watch;
  std::size_t resets = 0;

  /// CSV step,layer,top1_bucket,hot_count,onload_tokens,needle_hit, optionally
  /// prefixed with a policy column.
  void write_csv(std::ostream& out, bool with_policy = false) const;
};

/// One decode session: a policy, the generated-token cache, the sentence
/// query cache and the trace. Single-threaded; the model and prompt must
/// outlive the session.
class DecodeSession {
 public:
  DecodeSession(const SyntheticModel& model, std::shared_ptr<const PromptState> prompt,
                std::unique_ptr<CachePolicy> policy);

  /// Records needle coverage of [begin, end) at every step.
  void watch(std::pair<std::size_t, std::size_t> span);

  /// Processes one token (the forced one, else the greedy prediction of the
  /// previous step) and returns its record.
  const StepRecord& decode_step(std::optional<TokenId> forced = std::nullopt);

  DecodeTrace trace() const;
  const SentenceQueryCache& query_cache() const { return cache_; }
  const CachePolicy& policy() const { return *policy_; }
  CachePolicy& policy() { return *policy_; }
  const QkvBlock& generated() const { return generated_; }
  const PromptState& prompt() const { return *prompt_; }
  TokenId pending_token() const { return pending_; }

 private:
  const SyntheticModel* model_;
  std::shared_ptr<const PromptState> prompt_;
  std::unique_ptr<CachePolicy> policy_;
  SentenceQueryCache cache_;
  QkvBlock generated_;
  TokenId pending_ = 0;
  DecodeTrace trace_;
  std::vector<LayerPlan> plan_;
};

}  // namespace skv
