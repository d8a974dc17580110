// Copyright 2026 The skv Authors
// SPDX-License-Identifier: Apache-2.0

#include "skv/engine.hpp"

#include <algorithm>
#include <charconv>
#include <numeric>

#include "skv/baselines.hpp"
#include "skv/error.hpp"

namespace skv {

std::string to_string(QueryStrategy strategy) {
  return strategy == QueryStrategy::mean_sentence ? "mean_sentence" : "current_token";
}

QueryStrategy parse_query_strategy(std::string_view text) {
  if (text == "mean_sentence") {
    return QueryStrategy::mean_sentence;
  }
  if (text == "current_token") {
    return QueryStrategy::current_token;
  }
  throw ConfigError("unknown query strategy '" + std::string(text) + "' (mean_sentence|current_token)");
}

void EngineConfig::validate() const {
  if (budget < 1) {
    throw ConfigError("token budget must be >= 1");
  }
  if (!(keep_factor >= 1.0)) {
    throw ConfigError("keep factor must be >= 1");
  }
  if (window < 1) {
    throw ConfigError("observation window must be >= 1");
  }
  if (element_bytes < 1) {
    throw ConfigError("element bytes must be >= 1");
  }
  segmentation.validate();
}

std::vector<std::size_t> rank_buckets(const HeadVectors& query, std::span<const SentenceBucket> buckets,
                                      std::size_t layer) {
  const ModelDims& dims = query.dims;
  std::vector<std::size_t> ids;
  std::vector<double> score(buckets.size(), 0.0);
  for (std::size_t b = 0; b < buckets.size(); ++b) {
    if (!buckets[b].rankable(layer)) {
      continue;
    }
    double s = 0.0;
    for (std::size_t h = 0; h < dims.heads; ++h) {
      const auto q = query.at(layer, h);
      const auto k = buckets[b].mean_key(layer, h);
      for (std::size_t i = 0; i < dims.head_dim; ++i) {
        s += q[i] * static_cast<double>(k[i]);
      }
    }
    score[b] = s;
    ids.push_back(b);
  }
  std::ranges::stable_sort(ids, [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
  return ids;
}

SentenceKvPolicy::SentenceKvPolicy(const SyntheticModel& model, std::shared_ptr<const PromptState> prompt,
                                   EngineConfig config)
    : config_(std::move(config)), prompt_(std::move(prompt)) {
  config_.validate();
  if (prompt_->window != config_.window) {
    throw ConfigError("prompt was scored with a different observation window");
  }
  spans_ = segment(prompt_->tokens, model.vocab(), config_.segmentation);
  StoreBuild build = build_store(spans_, prompt_->qkv, prompt_->importance, config_.budget, config_.keep_factor,
                                 config_.window, config_.element_bytes);
  buckets_ = std::move(build.buckets);
  store_ = std::move(build.store);
}

void SentenceKvPolicy::plan_step(const StepContext& ctx, std::vector<LayerPlan>& plan) {
  const HeadVectors query = config_.query_strategy == QueryStrategy::mean_sentence ? mean_query(ctx.cache)
                                                                                    : current_query(ctx.token);
  const ModelDims& dims = store_.dims();
  last_ranking_.resize(dims.layers);
  for (std::size_t l = 0; l < dims.layers; ++l) {
    auto& ranking = last_ranking_[l];
    ranking = rank_buckets(query, buckets_, l);
    LayerPlan& p = plan[l];
    p.top1 = ranking.empty() ? -1 : static_cast<long long>(ranking.front());
    p.ranking_dot_products = dims.heads * ranking.size();
    const LoadResult load = store_.load_hot(l, select_hot(buckets_, ranking, l, config_.budget), ctx.step);
    p.onload_tokens = load.onload_tokens;
    p.offload_tokens = load.offload_tokens;
    const auto hot = store_.hot(l);
    p.prompt_tokens.assign(hot.begin(), hot.end());
    p.ranking = ranking;
  }
}

std::size_t SentenceKvPolicy::held_in_range(std::size_t layer, std::size_t begin, std::size_t end) const {
  const auto cold = store_.cold_indices(layer);
  return static_cast<std::size_t>(std::ranges::lower_bound(cold, end) - std::ranges::lower_bound(cold, begin));
}

std::string PolicySpec::label() const {
  switch (kind) {
    case PolicyKind::sentencekv:
      return "sentencekv";
    case PolicyKind::full:
      return "full";
    case PolicyKind::static_evict:
      return "static_evict";
    case PolicyKind::h2o:
      return "h2o";
    case PolicyKind::quest:
      return "quest" + std::to_string(chunk_size);
  }
  return "unknown";
}

PolicySpec parse_policy(std::string_view text, std::size_t default_chunk) {
  PolicySpec spec;
  spec.chunk_size = default_chunk;
  if (text == "sentencekv") {
    spec.kind = PolicyKind::sentencekv;
  } else if (text == "full") {
    spec.kind = PolicyKind::full;
  } else if (text == "static_evict") {
    spec.kind = PolicyKind::static_evict;
  } else if (text == "h2o") {
    spec.kind = PolicyKind::h2o;
  } else if (text.starts_with("quest")) {
    spec.kind = PolicyKind::quest;
    const std::string_view digits = text.substr(5);
    if (!digits.empty()) {
      std::size_t chunk = 0;
      const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), chunk);
      if (ec != std::errc{} || ptr != digits.data() + digits.size()) {
        throw ConfigError("bad quest chunk size in '" + std::string(text) + "'");
      }
      spec.chunk_size = chunk;
    }
  } else {
    throw ConfigError("unknown policy '" + std::string(text) + "' (sentencekv|full|static_evict|h2o|quest<N>)");
  }
  if (spec.chunk_size == 0) {
    throw ConfigError("chunk size must be >= 1");
  }
  return spec;
}

std::unique_ptr<CachePolicy> make_policy(const PolicySpec& spec, const SyntheticModel& model,
                                         std::shared_ptr<const PromptState> prompt, const EngineConfig& config) {
  config.validate();
  switch (spec.kind) {
    case PolicyKind::sentencekv:
      return std::make_unique<SentenceKvPolicy>(model, std::move(prompt), config);
    case PolicyKind::full:
      return std::make_unique<FullKvPolicy>(std::move(prompt));
    case PolicyKind::static_evict:
      return std::make_unique<StaticEvictPolicy>(std::move(prompt), config.budget);
    case PolicyKind::h2o:
      return std::make_unique<H2oPolicy>(std::move(prompt), config.budget);
    case PolicyKind::quest:
      return std::make_unique<QuestPolicy>(std::move(prompt), config.budget, spec.chunk_size, config.element_bytes);
  }
  throw ConfigError("unknown policy kind");
}

Engine::Engine(const SyntheticModel& model, EngineConfig config, PolicySpec policy)
    : model_(&model), config_(std::move(config)), spec_(policy) {
  config_.validate();
  if (spec_.chunk_size == 0) {
    throw ConfigError("chunk size must be >= 1");
  }
}

void Engine::prefill(std::span<const TokenId> prompt) { prefill(encode_prompt(*model_, prompt, config_.window)); }

void Engine::prefill(std::shared_ptr<const PromptState> prompt) {
  if (!prompt) {
    throw ContractError("Engine::prefill: null prompt");
  }
  if (prompt->window != config_.window) {
    throw ConfigError("prompt was scored with a different observation window");
  }
  auto policy = make_policy(spec_, *model_, prompt, config_);
  session_ = std::make_unique<DecodeSession>(*model_, std::move(prompt), std::move(policy));
}

DecodeSession& Engine::session() {
  if (!session_) {
    throw StateError("decode requested before prefill");
  }
  return *session_;
}

const DecodeSession& Engine::session() const {
  if (!session_) {
    throw StateError("decode requested before prefill");
  }
  return *session_;
}

void Engine::watch(std::pair<std::size_t, std::size_t> span) { session().watch(span); }

const StepRecord& Engine::decode_step(std::optional<TokenId> forced) { return session().decode_step(forced); }

DecodeTrace Engine::run_decode(std::size_t steps) {
  DecodeSession& s = session();
  for (std::size_t i = 0; i < steps; ++i) {
    s.decode_step();
  }
  return s.trace();
}

DecodeTrace Engine::run_decode(std::span<const TokenId> forced) {
  DecodeSession& s = session();
  for (const TokenId token : forced) {
    s.decode_step(token);
  }
  return s.trace();
}

const SentenceKvPolicy* Engine::sentence_policy() const {
  if (!session_) {
    return nullptr;
  }
  return dynamic_cast<const SentenceKvPolicy*>(&session_->policy());
}

}  // namespace skv
