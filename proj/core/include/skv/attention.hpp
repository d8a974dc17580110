// Copyright 2026 The skv Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "skv/tensor.hpp"

namespace skv {

/// Single-query scaled dot-product attention over an explicit key/value list.
///
/// weights = softmax(scale * q.k_i) with max subtraction; output = sum_i
/// weights_i * v_i. Accumulation is in double. Throws ContractError on an
/// empty key set or mismatched lengths.
struct AttentionResult {
  std::vector<float> output;
  std::vector<double> weights;
};

AttentionResult attend(std::span<const float> query, std::span<const std::span<const float>> keys,
                       std::span<const std::span<const float>> values, double scale);

/// Buffer-reusing variant for the decode loop. `weights` is resized to
/// keys.size(); `output` must have the value length.
void attend_into(std::span<const float> query, std::span<const std::span<const float>> keys,
                 std::span<const std::span<const float>> values, double scale, std::span<float> output,
                 std::vector<double>& weights);

/// 1 / sqrt(head_dim).
double attention_scale(std::size_t head_dim);

/// Per (layer, head) attention outputs for one decode step.
class AttentionOutput {
 public:
  AttentionOutput() = default;
  explicit AttentionOutput(ModelDims dims);

  const ModelDims& dims() const { return dims_; }
  std::span<const float> output(std::size_t layer, std::size_t head) const {
    return {data_.data() + (layer * dims_.heads + head) * dims_.head_dim, dims_.head_dim};
  }
  std::span<float> output(std::size_t layer, std::size_t head) {
    return {data_.data() + (layer * dims_.heads + head) * dims_.head_dim, dims_.head_dim};
  }
  /// Mean of all (layer, head) outputs; drives greedy emission.
  std::vector<double> summary() const;

  friend bool operator==(const AttentionOutput&, const AttentionOutput&) = default;

 private:
  ModelDims dims_{};
  std::vector<float> data_;
};

/// Reference decoder step: the query token attends over every prompt token
/// followed by every previously generated token, per layer and head.
AttentionOutput full_decode_step(const QkvBlock& prompt, const QkvBlock& generated, const QkvBlock& query_token);

/// Observation-window importance, one vector per layer.
struct ImportanceScores {
  std::size_t window = 0;
  /// alpha[layer][i] for i in [0, L - window).
  std::vector<std::vector<double>> alpha;

  std::size_t candidates() const { return alpha.empty() ? 0 : alpha.front().size(); }
};

/// For each layer, each window token w in [L - N, L) and each head, takes the
/// softmax over w's causal prefix [0, w) and adds the mass landing on
/// [0, L - N) to alpha. Throws InputError unless L > N >= 1.
ImportanceScores score_importance(const QkvBlock& prompt, std::size_t window);

}  // namespace skv
