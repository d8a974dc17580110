// Copyright 2026 The skv Authors
// SPDX-License-Identifier: Apache-2.0

#include "skv/segmentation.hpp"

#include <cmath>
#include <string>

#include "skv/error.hpp"

namespace skv {

void SegmentationConfig::validate() const {
  if (mode == SegmentationMode::equal_chunks && chunk_size < 1) {
    throw ConfigError("equal_chunks segmentation needs chunk_size >= 1");
  }
  if (outlier_split_enabled && !(outlier_n_std >= 0.0)) {
    throw ConfigError("outlier_n_std must be >= 0");
  }
}

std::string SegmentationConfig::to_string() const {
  if (mode == SegmentationMode::punctuation) {
    return "punctuation";
  }
  return "equal_chunks:" + std::to_string(chunk_size);
}

SegmentationConfig parse_segmentation(std::string_view text) {
  SegmentationConfig config;
  if (text == "punctuation") {
    return config;
  }
  constexpr std::string_view kChunks = "equal_chunks";
  if (text.substr(0, kChunks.size()) != kChunks) {
    throw ConfigError("unknown segmentation mode '" + std::string(text) + "'");
  }
  config.mode = SegmentationMode::equal_chunks;
  auto rest = text.substr(kChunks.size());
  if (!rest.empty()) {
    if (rest.front() != ':' || rest.size() == 1) {
      throw ConfigError("segmentation must look like equal_chunks:<size>");
    }
    const std::string digits(rest.substr(1));
    std::size_t used = 0;
    unsigned long value = 0;
    try {
      value = std::stoul(digits, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != digits.size() || value < 1) {
      throw ConfigError("equal_chunks size must be a positive integer");
    }
    config.chunk_size = value;
  }
  return config;
}

std::vector<SentenceSpan> segment(std::span<const TokenId> tokens, const SyntheticVocab& vocab,
                                  const SegmentationConfig& config) {
  config.validate();
  if (tokens.empty()) {
    throw InputError("segment: empty token sequence");
  }
  std::vector<SentenceSpan> spans;
  const std::size_t length = tokens.size();
  if (config.mode == SegmentationMode::equal_chunks) {
    for (std::size_t start = 0; start < length; start += config.chunk_size) {
      spans.push_back({spans.size(), start, std::min(length, start + config.chunk_size)});
    }
  } else {
    std::size_t start = 0;
    for (std::size_t i = 0; i < length; ++i) {
      if (vocab.is_boundary(tokens[i])) {
        spans.push_back({spans.size(), start, i + 1});
        start = i + 1;
      }
    }
    if (start < length) {
      spans.push_back({spans.size(), start, length});
    }
  }
  if (config.outlier_split_enabled) {
    return split_outliers(spans, config.outlier_n_std);
  }
  return spans;
}

std::vector<SentenceSpan> split_outliers(std::span<const SentenceSpan> spans, double n_std) {
  std::vector<SentenceSpan> out;
  if (spans.empty()) {
    return out;
  }
  double mean = 0.0;
  for (const auto& s : spans) {
    mean += static_cast<double>(s.size());
  }
  mean /= static_cast<double>(spans.size());
  double var = 0.0;
  if (spans.size() >= 2) {
    for (const auto& s : spans) {
      const double diff = static_cast<double>(s.size()) - mean;
      var += diff * diff;
    }
    var /= static_cast<double>(spans.size());
  }
  const double threshold = mean + n_std * std::sqrt(var);
  const auto cap = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(mean)));

  for (const auto& s : spans) {
    if (static_cast<double>(s.size()) > threshold) {
      for (std::size_t start = s.start; start < s.end; start += cap) {
        out.push_back({out.size(), start, std::min(s.end, start + cap)});
      }
    } else {
      out.push_back({out.size(), s.start, s.end});
    }
  }
  return out;
}

bool is_partition(std::span<const SentenceSpan> spans, std::size_t length) {
  std::size_t cursor = 0;
  for (const auto& s : spans) {
    if (s.start != cursor || s.end <= s.start) {
      return false;
    }
    cursor = s.end;
  }
  return cursor == length;
}

}  // namespace skv
