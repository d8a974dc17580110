// Copyright 2026 The skv Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "skv/model_synth.hpp"

namespace skv {

/// A bucket's token range [start, end) in the prompt.
struct SentenceSpan {
  std::size_t bucket_id = 0;
  std::size_t start = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - start; }
  bool contains(std::size_t index) const { return index >= start && index < end; }

  friend bool operator==(const SentenceSpan&, const SentenceSpan&) = default;
};

enum class SegmentationMode { punctuation, equal_chunks };

struct SegmentationConfig {
  SegmentationMode mode = SegmentationMode::punctuation;
  std::size_t chunk_size = 32;  // equal_chunks only
  bool outlier_split_enabled = false;
  double outlier_n_std = 3.0;

  void validate() const;
  /// "punctuation" or "equal_chunks:<size>".
  std::string to_string() const;
};

/// Parses "punctuation" | "equal_chunks" | "equal_chunks:<size>".
SegmentationConfig parse_segmentation(std::string_view text);

/// Partitions [0, tokens.size()) into buckets.
///
/// Punctuation mode closes a bucket after every boundary token (the boundary
/// stays with the sentence it terminates); a trailing unterminated sentence is
/// its own bucket. Equal-chunk mode ignores boundaries. When enabled, outlier
/// splitting is applied last. Throws InputError on empty input.
std::vector<SentenceSpan> segment(std::span<const TokenId> tokens, const SyntheticVocab& vocab,
                                  const SegmentationConfig& config);

/// Splits any span longer than mean + n_std * std (population std over span
/// lengths) into consecutive sub-spans of at most ceil(mean) tokens, then
/// renumbers bucket ids in order.
std::vector<SentenceSpan> split_outliers(std::span<const SentenceSpan> spans, double n_std);

/// True when spans are sorted, non-empty, contiguous and cover [0, length).
bool is_partition(std::span<const SentenceSpan> spans, std::size_t length);

}  // namespace skv
