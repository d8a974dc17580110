// Copyright 2026 The skv Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "skv/tensor.hpp"

namespace skv {

using TokenId = std::uint32_t;

/// Topic label carried by boundary (sentence-terminating) tokens.
inline constexpr int kBoundaryTopic = -1;

/// Default relative weight of per-token noise in query/key vectors.
inline constexpr double kDefaultNoiseScale = 0.25;

/// Token vocabulary with topic structure and sentence terminators.
struct SyntheticVocab {
  std::size_t vocab_size = 0;
  std::size_t topic_count = 0;
  std::uint64_t seed = 0;
  std::vector<TokenId> boundary_token_ids;           // sorted
  std::vector<int> topic_of_token;                   // kBoundaryTopic for boundary ids
  std::vector<std::vector<TokenId>> tokens_of_topic;  // sorted per topic

  bool is_boundary(TokenId token) const { return topic_of_token.at(token) == kBoundaryTopic; }
  int topic(TokenId token) const { return topic_of_token.at(token); }
};

/// Builds a deterministic vocabulary.
///
/// ceil(boundary_fraction * vocab_size) ids become boundary tokens (a seeded
/// choice); the remaining ids are dealt round-robin to topics in id order.
/// Throws ConfigError unless vocab_size >= topic_count + 1,
/// 0 < boundary_fraction < 0.5 and every topic receives at least one token.
SyntheticVocab make_vocab(std::size_t vocab_size, std::size_t topic_count, double boundary_fraction,
                          std::uint64_t seed);

struct ModelOptions {
  /// sigma: key = (1 - sigma) * centroid + sigma * noise (both unit vectors).
  double noise_scale = kDefaultNoiseScale;
  /// Queries carry an extra magnitude of query_gain * sqrt(head_dim), so that
  /// q.k / sqrt(d) is on the order of query_gain for aligned unit keys. Keys
  /// stay unscaled.
  double query_gain = 8.0;
};

/// Seeded stand-in for a transformer's Q/K/V projections.
///
/// Each (topic, layer, head) owns a unit centroid; boundary tokens share a
/// dedicated boundary centroid. Positions only feed the noise term, so the
/// mean key of a sentence stays aligned with its topic. Values are pure noise.
/// All methods are const and thread-safe.
class SyntheticModel {
 public:
  SyntheticModel(SyntheticVocab vocab, ModelDims dims, std::uint64_t seed, ModelOptions options = {});

  const SyntheticVocab& vocab() const { return vocab_; }
  const ModelDims& dims() const { return dims_; }
  std::uint64_t seed() const { return seed_; }
  const ModelOptions& options() const { return options_; }

  /// Q/K/V of one token at one absolute position (a one-token block).
  QkvBlock token_qkv(TokenId token, std::size_t position) const;
  /// Q/K/V of a token run starting at `first_position`.
  QkvBlock encode(std::span<const TokenId> tokens, std::size_t first_position = 0) const;

  /// Unit centroid for (topic, layer, head); topic kBoundaryTopic selects the
  /// boundary centroid.
  std::span<const float> centroid(int topic, std::size_t layer, std::size_t head) const;
  /// Seeded unit readout vector used for greedy token emission.
  std::span<const float> readout(TokenId token) const;
  /// Greedy emission: argmax over tokens of readout(token) . summary (ties -> lower id).
  TokenId emit(std::span<const double> summary) const;

 private:
  void fill_token(QkvBlock& block, std::size_t slot, TokenId token, std::size_t position) const;

  SyntheticVocab vocab_;
  ModelDims dims_;
  std::uint64_t seed_;
  ModelOptions options_;
  std::vector<float> centroids_;  // [topic_count + 1][layer][head][d], last = boundary
  std::vector<float> readouts_;   // [vocab][d]
};

/// Free-function form; builds a throwaway model. Throws InputError when
/// token_id >= vocab_size.
QkvBlock token_qkv(const SyntheticVocab& vocab, const ModelDims& dims, TokenId token_id,
                   std::size_t position, std::uint64_t seed, ModelOptions options = {});

struct SyntheticCorpus {
  std::vector<TokenId> tokens;
  std::vector<int> topic_labels;
  std::optional<std::pair<std::size_t, std::size_t>> needle_span;  // [start, end)
  std::vector<TokenId> needle_query_tokens;
  int needle_topic = kBoundaryTopic;
};

struct NiahOptions {
  std::size_t min_sentence = 20;
  std::size_t max_sentence = 40;
  /// Needle-topic question sentence closing the prompt (ends in a boundary).
  std::size_t question_len = 12;
  /// Needle-topic probe tokens fed during decoding.
  std::size_t probe_len = 8;
};

/// Haystack of off-topic sentences with one needle sentence at the requested
/// depth and a needle-topic question at the end of the prompt.
///
/// tokens.size() == haystack_len + question_len; the needle (needle_len tokens,
/// the last one a boundary) starts at the sentence start closest to
/// fraction * (haystack_len - needle_len).
SyntheticCorpus make_niah_corpus(const SyntheticVocab& vocab, std::size_t haystack_len,
                                 std::size_t needle_topic, std::size_t needle_len,
                                 double needle_position_fraction, std::uint64_t seed,
                                 const NiahOptions& options = {});

/// Needle-free run of topical sentences (used by fuzz and benchmark drivers).
SyntheticCorpus make_topic_corpus(const SyntheticVocab& vocab, std::size_t length, std::uint64_t seed,
                                  const NiahOptions& options = {});

/// Line-oriented export: optional `#needle <start> <end>` and
/// `#query <id> <id> ...` headers, then one token id per line.
void write_corpus(std::ostream& out, const SyntheticCorpus& corpus);
/// Inverse of write_corpus; topic labels are taken from `vocab`.
SyntheticCorpus read_corpus(std::istream& in, const SyntheticVocab& vocab);

}  // namespace skv
