// Copyright 2026 The skv Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "skv/attention.hpp"
#include "skv/segmentation.hpp"
#include "skv/tensor.hpp"

namespace skv {

/// Bytes per element used for transfer and memory accounting (fp16 analog).
inline constexpr std::size_t kDefaultElementBytes = 2;

/// A sentence span plus what survived prefill filtering inside it.
struct SentenceBucket {
  SentenceSpan span;
  ModelDims dims;
  /// Sorted retained token indices, per layer.
  std::vector<std::vector<std::size_t>> retained;
  /// alpha of each retained token, parallel to `retained`.
  std::vector<std::vector<double>> retained_alpha;
  /// Mean retained key per (layer, head); meaningless where !rankable(layer).
  std::vector<float> mean_keys;

  bool rankable(std::size_t layer) const { return !retained[layer].empty(); }
  std::span<const float> mean_key(std::size_t layer, std::size_t head) const {
    return {mean_keys.data() + (layer * dims.heads + head) * dims.head_dim, dims.head_dim};
  }
};

struct LedgerRow {
  std::size_t step = 0;
  std::size_t layer = 0;
  std::size_t onload_tokens = 0;
  std::size_t offload_tokens = 0;
  std::uint64_t onload_bytes = 0;
  std::uint64_t offload_bytes = 0;
};

/// Byte-exact accounting of host<->device KV movement.
///
/// One token moved at one layer costs 2 (K and V) * heads * head_dim *
/// element_bytes. Prefill offload of the retained set is tracked separately
/// from the per-step hot-set churn.
class TransferLedger {
 public:
  TransferLedger() = default;
  TransferLedger(ModelDims dims, std::size_t element_bytes = kDefaultElementBytes);

  std::uint64_t bytes_per_token() const { return bytes_per_token_; }
  void record_prefill_offload(std::size_t tokens);
  void record_step(std::size_t step, std::size_t layer, std::size_t onload_tokens, std::size_t offload_tokens);

  std::uint64_t onload_bytes() const { return onload_bytes_; }
  std::uint64_t offload_bytes() const { return offload_bytes_; }
  std::uint64_t onload_tokens() const { return onload_tokens_; }
  std::uint64_t prefill_offload_bytes() const { return prefill_offload_bytes_; }
  const std::vector<LedgerRow>& rows() const { return rows_; }

  /// CSV with header step,layer,onload_tokens,onload_bytes,offload_bytes.
  void write_csv(std::ostream& out) const;

 private:
  std::uint64_t bytes_per_token_ = 0;
  std::uint64_t onload_bytes_ = 0;
  std::uint64_t offload_bytes_ = 0;
  std::uint64_t onload_tokens_ = 0;
  std::uint64_t prefill_offload_bytes_ = 0;
  std::vector<LedgerRow> rows_;
};

struct StoreBuild;

struct LoadResult {
  std::size_t onload_tokens = 0;
  std::size_t offload_tokens = 0;
};

/// Cold (host-analog) retained KV, hot (device-analog) resident view, the
/// always-hot observation window and the transfer ledger.
///
/// Cold contents are fixed after build_store(). The hot set is a view over
/// cold entries; load_hot() only charges the ledger for the difference.
class TieredKvStore {
 public:
  TieredKvStore() = default;

  const ModelDims& dims() const { return dims_; }
  std::size_t prompt_length() const { return prompt_length_; }
  std::size_t window() const { return window_; }
  std::size_t window_begin() const { return prompt_length_ - window_; }
  std::size_t budget() const { return budget_; }
  double keep_factor() const { return keep_factor_; }

  std::size_t cold_size(std::size_t layer) const { return cold_.at(layer).indices.size(); }
  std::span<const std::size_t> cold_indices(std::size_t layer) const { return cold_.at(layer).indices; }
  bool in_cold(std::size_t layer, std::size_t token) const;
  std::span<const float> cold_key(std::size_t layer, std::size_t token, std::size_t head) const;
  std::span<const float> cold_value(std::size_t layer, std::size_t token, std::size_t head) const;
  double cold_alpha(std::size_t layer, std::size_t token) const;

  /// j-th window token, j in [0, window).
  std::span<const float> window_key(std::size_t layer, std::size_t j, std::size_t head) const {
    return window_kv_.key(layer, j, head);
  }
  std::span<const float> window_value(std::size_t layer, std::size_t j, std::size_t head) const {
    return window_kv_.value(layer, j, head);
  }
  const QkvBlock& window_kv() const { return window_kv_; }

  std::span<const std::size_t> hot(std::size_t layer) const { return hot_.at(layer); }
  /// Replaces the hot set of `layer` (sorted, subset of cold) and charges the
  /// ledger with the set difference against the previous hot set.
  LoadResult load_hot(std::size_t layer, std::vector<std::size_t> indices, std::size_t step);

  const TransferLedger& ledger() const { return ledger_; }

  /// Text dump, one line per token: token,layer,alpha,resident. Window tokens
  /// carry alpha "-" and are always resident.
  void write_snapshot(std::ostream& out) const;

 private:
  friend StoreBuild build_store(std::span<const SentenceSpan>, const QkvBlock&, const ImportanceScores&,
                                std::size_t, double, std::size_t, std::size_t);

  struct LayerCold {
    std::vector<std::size_t> indices;  // sorted
    std::vector<double> alpha;
    std::vector<float> keys;    // [slot][head][d]
    std::vector<float> values;  // [slot][head][d]
  };
  std::size_t slot_of(std::size_t layer, std::size_t token) const;

  ModelDims dims_{};
  std::size_t prompt_length_ = 0;
  std::size_t window_ = 0;
  std::size_t budget_ = 0;
  double keep_factor_ = 1.0;
  std::vector<LayerCold> cold_;
  std::vector<std::vector<std::size_t>> hot_;
  QkvBlock window_kv_;
  TransferLedger ledger_;
};

struct StoreBuild {
  std::vector<SentenceBucket> buckets;
  TieredKvStore store;
};

/// floor(keep_factor * budget), guarded against representation error.
std::size_t retained_target(std::size_t budget, double keep_factor);

/// Indices of the k largest scores (ties -> lower index), sorted ascending.
std::vector<std::size_t> top_k_indices(std::span<const double> scores, std::size_t k);

/// Prefill retention: per layer keep the global top floor(r * tau) pre-window
/// tokens by alpha, copy their KV to the cold store, attribute them to their
/// buckets and compute each bucket's mean retained key per head. The window
/// tokens are kept hot. Throws ConfigError when tau < 1, r < 1 or
/// floor(r * tau) < 1; InputError when spans do not partition the prompt.
StoreBuild build_store(std::span<const SentenceSpan> spans, const QkvBlock& prompt,
                       const ImportanceScores& importance, std::size_t budget, double keep_factor,
                       std::size_t window, std::size_t element_bytes = kDefaultElementBytes);

/// Budget fill for one layer: whole buckets in rank order while they fit, then
/// the highest-alpha tokens of the first bucket that does not fit. Result is
/// sorted ascending. Throws ConfigError when budget < 1 and ContractError when
/// `ranked` names an unknown, duplicate or unrankable bucket.
std::vector<std::size_t> select_hot(std::span<const SentenceBucket> buckets, std::span<const std::size_t> ranked,
                                    std::size_t layer, std::size_t budget);

/// select_hot() for every layer followed by load_hot(); returns per-layer
/// transfer counts.
std::vector<LoadResult> retrieve(TieredKvStore& store, std::span<const SentenceBucket> buckets,
                                 const std::vector<std::vector<std::size_t>>& ranked_per_layer, std::size_t budget,
                                 std::size_t step);

/// Exact KV bytes M * H * (L + t) * d * 2 * element_bytes, as a 128-bit value.
unsigned __int128 memory_cost_wide(std::uint64_t layers, std::uint64_t heads, std::uint64_t head_dim,
                                   std::uint64_t prompt_tokens, std::uint64_t generated_tokens,
                                   std::uint64_t element_bytes);
/// As memory_cost_wide(); throws InputError if the result exceeds 64 bits.
std::uint64_t memory_cost(const ModelDims& dims, std::uint64_t prompt_tokens, std::uint64_t generated_tokens,
                          std::uint64_t element_bytes = kDefaultElementBytes);

}  // namespace skv
