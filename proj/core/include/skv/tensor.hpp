// Copyright 2026 The skv Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace skv {

/// Shape of the attention stack: layers x heads x head_dim.
struct ModelDims {
  std::size_t layers = 1;
  std::size_t heads = 1;
  std::size_t head_dim = 1;

  std::size_t value_dim() const { return head_dim; }
  /// Floats per token for one of Q, K or V across all layers and heads.
  std::size_t floats_per_token() const { return layers * heads * head_dim; }
  void validate() const;

  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

/// Dense query/key/value storage for a run of tokens.
///
/// Layout is [layer][token][head][dim] for each of Q, K and V so that one
/// layer's keys for consecutive tokens are contiguous.
class QkvBlock {
 public:
  QkvBlock() = default;
  QkvBlock(ModelDims dims, std::size_t tokens);

  const ModelDims& dims() const { return dims_; }
  std::size_t tokens() const { return tokens_; }

  std::span<const float> query(std::size_t layer, std::size_t token, std::size_t head) const {
    return {q_.data() + offset(layer, token, head), dims_.head_dim};
  }
  std::span<const float> key(std::size_t layer, std::size_t token, std::size_t head) const {
    return {k_.data() + offset(layer, token, head), dims_.head_dim};
  }
  std::span<const float> value(std::size_t layer, std::size_t token, std::size_t head) const {
    return {v_.data() + offset(layer, token, head), dims_.head_dim};
  }
  std::span<float> query(std::size_t layer, std::size_t token, std::size_t head) {
    return {q_.data() + offset(layer, token, head), dims_.head_dim};
  }
  std::span<float> key(std::size_t layer, std::size_t token, std::size_t head) {
    return {k_.data() + offset(layer, token, head), dims_.head_dim};
  }
  std::span<float> value(std::size_t layer, std::size_t token, std::size_t head) {
    return {v_.data() + offset(layer, token, head), dims_.head_dim};
  }

  /// Appends one token taken from `other` (which must share dims).
  void append(const QkvBlock& other, std::size_t token);
  /// Copies tokens [begin, end) into a new block.
  QkvBlock slice(std::size_t begin, std::size_t end) const;

  /// Bitwise comparison of dims and stored token data.
  friend bool operator==(const QkvBlock& a, const QkvBlock& b);

 private:
  std::size_t offset(std::size_t layer, std::size_t token, std::size_t head) const {
    return ((layer * capacity_ + token) * dims_.heads + head) * dims_.head_dim;
  }
  void grow(std::size_t capacity);

  ModelDims dims_{};
  std::size_t tokens_ = 0;
  std::size_t capacity_ = 0;
  std::vector<float> q_;
  std::vector<float> k_;
  std::vector<float> v_;
};

}  // namespace skv
