// Copyright 2026 The skv Authors
// SPDX-License-Identifier: Apache-2.0

#include "skv/model_synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>

#include "random.hpp"
#include "skv/error.hpp"

namespace skv {

namespace {

enum StreamTag : std::uint64_t {
  kVocabStream = 11,
  kCentroidStream = 12,
  kReadoutStream = 13,
  kTokenStream = 14,
  kCorpusStream = 15,
};

void check_token(const SyntheticVocab& vocab, TokenId token) {
  if (token >= vocab.vocab_size) {
    throw InputError("token id " + std::to_string(token) + " out of range for vocab of size " +
                     std::to_string(vocab.vocab_size));
  }
}

}  // namespace

SyntheticVocab make_vocab(std::size_t vocab_size, std::size_t topic_count, double boundary_fraction,
                          std::uint64_t seed) {
  if (topic_count < 1 || vocab_size < topic_count + 1) {
    throw ConfigError("make_vocab: need vocab_size >= topic_count + 1 and topic_count >= 1");
  }
  if (!(boundary_fraction > 0.0 && boundary_fraction < 0.5)) {
    throw ConfigError("make_vocab: boundary_fraction must lie in (0, 0.5)");
  }
  // The epsilon keeps exact products such as 0.02 * 100 from rounding up.
  const auto boundary_count =
      static_cast<std::size_t>(std::ceil(boundary_fraction * static_cast<double>(vocab_size) - 1e-9));
  if (vocab_size - boundary_count < topic_count) {
    throw ConfigError("make_vocab: not enough topical tokens to give every topic one token");
  }

  std::vector<TokenId> ids(vocab_size);
  std::iota(ids.begin(), ids.end(), TokenId{0});
  detail::SplitMix64 rng(detail::hash_key({seed, kVocabStream}));
  for (std::size_t i = vocab_size - 1; i > 0; --i) {
    std::swap(ids[i], ids[rng.between(0, i)]);
  }

  SyntheticVocab vocab;
  vocab.vocab_size = vocab_size;
  vocab.topic_count = topic_count;
  vocab.seed = seed;
  vocab.boundary_token_ids.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(boundary_count));
  std::ranges::sort(vocab.boundary_token_ids);

  vocab.topic_of_token.assign(vocab_size, 0);
  for (TokenId b : vocab.boundary_token_ids) {
    vocab.topic_of_token[b] = kBoundaryTopic;
  }
  vocab.tokens_of_topic.assign(topic_count, {});
  std::size_t dealt = 0;
  for (TokenId id = 0; id < vocab_size; ++id) {
    if (vocab.topic_of_token[id] == kBoundaryTopic) {
      continue;
    }
    const auto topic = dealt++ % topic_count;
    vocab.topic_of_token[id] = static_cast<int>(topic);
    vocab.tokens_of_topic[topic].push_back(id);
  }
  return vocab;
}

SyntheticModel::SyntheticModel(SyntheticVocab vocab, ModelDims dims, std::uint64_t seed, ModelOptions options)
    : vocab_(std::move(vocab)), dims_(dims), seed_(seed), options_(options) {
  dims_.validate();
  if (vocab_.vocab_size == 0 || vocab_.topic_of_token.size() != vocab_.vocab_size) {
    throw ConfigError("SyntheticModel: vocabulary is empty or inconsistent");
  }
  if (!(options_.noise_scale >= 0.0 && options_.noise_scale <= 1.0)) {
    throw ConfigError("SyntheticModel: noise_scale must lie in [0, 1]");
  }
  const std::size_t d = dims_.head_dim;
  std::vector<double> scratch(d);

  const std::size_t groups = vocab_.topic_count + 1;
  centroids_.resize(groups * dims_.layers * dims_.heads * d);
  for (std::size_t t = 0; t < groups; ++t) {
    for (std::size_t l = 0; l < dims_.layers; ++l) {
      for (std::size_t h = 0; h < dims_.heads; ++h) {
        detail::SplitMix64 rng(detail::hash_key({seed_, kCentroidStream, t, l, h}));
        detail::unit_vector(rng, scratch);
        auto* dst = centroids_.data() + ((t * dims_.layers + l) * dims_.heads + h) * d;
        std::ranges::transform(scratch, dst, [](double x) { return static_cast<float>(x); });
      }
    }
  }

  readouts_.resize(vocab_.vocab_size * d);
  for (std::size_t tok = 0; tok < vocab_.vocab_size; ++tok) {
    detail::SplitMix64 rng(detail::hash_key({seed_, kReadoutStream, tok}));
    detail::unit_vector(rng, scratch);
    std::ranges::transform(scratch, readouts_.data() + tok * d, [](double x) { return static_cast<float>(x); });
  }
}

std::span<const float> SyntheticModel::centroid(int topic, std::size_t layer, std::size_t head) const {
  const std::size_t t = topic == kBoundaryTopic ? vocab_.topic_count : static_cast<std::size_t>(topic);
  if (t > vocab_.topic_count || layer >= dims_.layers || head >= dims_.heads) {
    throw InputError("centroid: index out of range");
  }
  return {centroids_.data() + ((t * dims_.layers + layer) * dims_.heads + head) * dims_.head_dim,
          dims_.head_dim};
}

std::span<const float> SyntheticModel::readout(TokenId token) const {
  check_token(vocab_, token);
  return {readouts_.data() + static_cast<std::size_t>(token) * dims_.head_dim, dims_.head_dim};
}

TokenId SyntheticModel::emit(std::span<const double> summary) const {
  if (summary.size() != dims_.head_dim) {
    throw ContractError("emit: summary length must equal head_dim");
  }
  TokenId best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (TokenId tok = 0; tok < vocab_.vocab_size; ++tok) {
    const auto r = readout(tok);
    double score = 0.0;
    for (std::size_t i = 0; i < summary.size(); ++i) {
      score += static_cast<double>(r[i]) * summary[i];
    }
    if (score > best_score) {
      best_score = score;
      best = tok;
    }
  }
  return best;
}

void SyntheticModel::fill_token(QkvBlock& block, std::size_t slot, TokenId token, std::size_t position) const {
  check_token(vocab_, token);
  const std::size_t d = dims_.head_dim;
  const double sigma = options_.noise_scale;
  const double q_scale = options_.query_gain * std::sqrt(static_cast<double>(d));
  const int topic = vocab_.topic(token);
  std::vector<double> noise_k(d);
  std::vector<double> noise_q(d);
  std::vector<double> noise_v(d);
  for (std::size_t l = 0; l < dims_.layers; ++l) {
    for (std::size_t h = 0; h < dims_.heads; ++h) {
      detail::SplitMix64 rng(detail::hash_key({seed_, kTokenStream, token, position, l, h}));
      detail::unit_vector(rng, noise_k);
      detail::unit_vector(rng, noise_q);
      detail::unit_vector(rng, noise_v);
      const auto c = centroid(topic, l, h);
      auto k = block.key(l, slot, h);
      auto q = block.query(l, slot, h);
      auto v = block.value(l, slot, h);
      for (std::size_t i = 0; i < d; ++i) {
        const double base = (1.0 - sigma) * static_cast<double>(c[i]);
        k[i] = static_cast<float>(base + sigma * noise_k[i]);
        q[i] = static_cast<float>(q_scale * (base + sigma * noise_q[i]));
        v[i] = static_cast<float>(noise_v[i]);
      }
    }
  }
}

QkvBlock SyntheticModel::token_qkv(TokenId token, std::size_t position) const {
  QkvBlock block(dims_, 1);
  fill_token(block, 0, token, position);
  return block;
}

QkvBlock SyntheticModel::encode(std::span<const TokenId> tokens, std::size_t first_position) const {
  QkvBlock block(dims_, tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    fill_token(block, i, tokens[i], first_position + i);
  }
  return block;
}

QkvBlock token_qkv(const SyntheticVocab& vocab, const ModelDims& dims, TokenId token_id, std::size_t position,
                   std::uint64_t seed, ModelOptions options) {
  check_token(vocab, token_id);
  return SyntheticModel(vocab, dims, seed, options).token_qkv(token_id, position);
}

namespace {

TokenId pick(detail::SplitMix64& rng, const std::vector<TokenId>& pool) {
  return pool[rng.between(0, pool.size() - 1)];
}

/// Appends `len` tokens of `topic`, the last of which is a boundary token.
void append_sentence(detail::SplitMix64& rng, const SyntheticVocab& vocab, std::size_t topic, std::size_t len,
                     std::vector<TokenId>& out) {
  for (std::size_t i = 0; i + 1 < len; ++i) {
    out.push_back(pick(rng, vocab.tokens_of_topic[topic]));
  }
  if (len > 0) {
    out.push_back(pick(rng, vocab.boundary_token_ids));
  }
}

void label(const SyntheticVocab& vocab, SyntheticCorpus& corpus) {
  corpus.topic_labels.resize(corpus.tokens.size());
  std::ranges::transform(corpus.tokens, corpus.topic_labels.begin(), [&](TokenId t) { return vocab.topic(t); });
}

void check_sentence_range(const NiahOptions& options) {
  if (options.min_sentence < 2 || options.max_sentence < options.min_sentence) {
    throw ConfigError("sentence length range must satisfy 2 <= min <= max");
  }
}

}  // namespace

SyntheticCorpus make_niah_corpus(const SyntheticVocab& vocab, std::size_t haystack_len, std::size_t needle_topic,
                                 std::size_t needle_len, double needle_position_fraction, std::uint64_t seed,
                                 const NiahOptions& options) {
  if (needle_topic >= vocab.topic_count) {
    throw InputError("make_niah_corpus: needle_topic out of range");
  }
  if (vocab.topic_count < 2) {
    throw InputError("make_niah_corpus: need at least two topics (needle and haystack)");
  }
  if (needle_len < 2 || needle_len >= haystack_len) {
    throw InputError("make_niah_corpus: need 2 <= needle_len < haystack_len");
  }
  if (!(needle_position_fraction >= 0.0 && needle_position_fraction <= 1.0)) {
    throw InputError("make_niah_corpus: needle_position_fraction must lie in [0, 1]");
  }
  check_sentence_range(options);

  detail::SplitMix64 rng(detail::hash_key({seed, kCorpusStream, needle_topic, haystack_len, needle_len}));
  const std::size_t body_len = haystack_len - needle_len;

  std::vector<TokenId> body;
  body.reserve(body_len + options.max_sentence);
  while (body.size() < body_len) {
    auto topic = static_cast<std::size_t>(rng.between(0, vocab.topic_count - 2));
    if (topic >= needle_topic) {
      ++topic;
    }
    append_sentence(rng, vocab, topic, rng.between(options.min_sentence, options.max_sentence), body);
  }
  body.resize(body_len);
  if (!body.empty() && !vocab.is_boundary(body.back())) {
    body.back() = pick(rng, vocab.boundary_token_ids);
  }

  // Sentence starts are valid insertion points; pick the one nearest the target.
  const double target = needle_position_fraction * static_cast<double>(body_len);
  std::size_t insert_at = 0;
  double best = target;
  for (std::size_t i = 0; i < body.size(); ++i) {
    if (!vocab.is_boundary(body[i])) {
      continue;
    }
    const double dist = std::abs(static_cast<double>(i + 1) - target);
    if (dist < best) {
      best = dist;
      insert_at = i + 1;
    }
  }

  std::vector<TokenId> needle;
  append_sentence(rng, vocab, needle_topic, needle_len, needle);
  std::vector<TokenId> question;
  append_sentence(rng, vocab, needle_topic, options.question_len, question);

  SyntheticCorpus corpus;
  corpus.needle_topic = static_cast<int>(needle_topic);
  corpus.tokens.reserve(haystack_len + question.size());
  corpus.tokens.insert(corpus.tokens.end(), body.begin(), body.begin() + static_cast<std::ptrdiff_t>(insert_at));
  corpus.tokens.insert(corpus.tokens.end(), needle.begin(), needle.end());
  corpus.tokens.insert(corpus.tokens.end(), body.begin() + static_cast<std::ptrdiff_t>(insert_at), body.end());
  corpus.tokens.insert(corpus.tokens.end(), question.begin(), question.end());
  corpus.needle_span = std::make_pair(insert_at, insert_at + needle_len);
  for (std::size_t i = 0; i < options.probe_len; ++i) {
    corpus.needle_query_tokens.push_back(pick(rng, vocab.tokens_of_topic[needle_topic]));
  }
  label(vocab, corpus);
  return corpus;
}

SyntheticCorpus make_topic_corpus(const SyntheticVocab& vocab, std::size_t length, std::uint64_t seed,
                                  const NiahOptions& options) {
  check_sentence_range(options);
  detail::SplitMix64 rng(detail::hash_key({seed, kCorpusStream, length}));
  SyntheticCorpus corpus;
  while (corpus.tokens.size() < length) {
    const auto topic = static_cast<std::size_t>(rng.between(0, vocab.topic_count - 1));
    append_sentence(rng, vocab, topic, rng.between(options.min_sentence, options.max_sentence), corpus.tokens);
  }
  corpus.tokens.resize(length);
  label(vocab, corpus);
  return corpus;
}

void write_corpus(std::ostream& out, const SyntheticCorpus& corpus) {
  if (corpus.needle_span) {
    out << "#needle " << corpus.needle_span->first << ' ' << corpus.needle_span->second << '\n';
  }
  if (!corpus.needle_query_tokens.empty()) {
    out << "#query";
    for (TokenId t : corpus.needle_query_tokens) {
      out << ' ' << t;
    }
    out << '\n';
  }
  for (TokenId t : corpus.tokens) {
    out << t << '\n';
  }
}

SyntheticCorpus read_corpus(std::istream& in, const SyntheticVocab& vocab) {
  SyntheticCorpus corpus;
  std::string line;
  std::size_t line_no = 0;
  auto parse_token = [&](const std::string& text) {
    std::size_t used = 0;
    unsigned long long value = 0;
    try {
      value = std::stoull(text, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != text.size()) {
      throw InputError("read_corpus: bad token '" + text + "' on line " + std::to_string(line_no));
    }
    if (value >= vocab.vocab_size) {
      throw InputError("read_corpus: token out of range on line " + std::to_string(line_no));
    }
    return static_cast<TokenId>(value);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    if (line.empty()) {
      continue;
    }
    if (line.front() == '#') {
      std::istringstream fields(line.substr(1));
      std::string key;
      fields >> key;
      if (key == "needle") {
        std::size_t start = 0;
        std::size_t end = 0;
        if (!(fields >> start >> end) || start >= end) {
          throw InputError("read_corpus: malformed #needle header");
        }
        corpus.needle_span = std::make_pair(start, end);
      } else if (key == "query") {
        std::string tok;
        while (fields >> tok) {
          corpus.needle_query_tokens.push_back(parse_token(tok));
        }
      }
      continue;
    }
    corpus.tokens.push_back(parse_token(line));
  }
  if (corpus.needle_span && corpus.needle_span->second > corpus.tokens.size()) {
    throw InputError("read_corpus: needle span exceeds corpus length");
  }
  label(vocab, corpus);
  if (corpus.needle_span) {
    corpus.needle_topic = corpus.topic_labels[corpus.needle_span->first];
  }
  return corpus;
}

}  // namespace skv
