// Copyright 2026 The skv Authors
// SPDX-License-Identifier: Apache-2.0

#include "skv/baselines.hpp"

#include <algorithm>
#include <numeric>

#include "skv/error.hpp"

namespace skv {

namespace {

std::size_t count_in(std::span<const std::size_t> sorted, std::size_t begin, std::size_t end) {
  return static_cast<std::size_t>(std::ranges::lower_bound(sorted, end) - std::ranges::lower_bound(sorted, begin));
}

std::size_t slot_in(std::span<const std::size_t> sorted, std::size_t token) {
  const auto it = std::ranges::lower_bound(sorted, token);
  if (it == sorted.end() || *it != token) {
    throw ContractError("token " + std::to_string(token) + " is not held by the policy");
  }
  return static_cast<std::size_t>(it - sorted.begin());
}

void check_budget(std::size_t budget) {
  if (budget < 1) {
    throw ConfigError("token budget must be >= 1");
  }
}

}  // namespace

FullKvPolicy::FullKvPolicy(std::shared_ptr<const PromptState> prompt) : prompt_(std::move(prompt)) {
  all_.resize(prompt_->window_begin());
  std::iota(all_.begin(), all_.end(), std::size_t{0});
}

void FullKvPolicy::plan_step(const StepContext& /*ctx*/, std::vector<LayerPlan>& plan) {
  for (auto& p : plan) {
    p.prompt_tokens = all_;
  }
}

std::size_t FullKvPolicy::held_in_range(std::size_t /*layer*/, std::size_t begin, std::size_t end) const {
  return count_in(all_, begin, end);
}

std::vector<std::vector<std::size_t>> static_evict_policy(const ImportanceScores& importance, std::size_t budget) {
  check_budget(budget);
  std::vector<std::vector<std::size_t>> kept;
  kept.reserve(importance.alpha.size());
  for (const auto& alpha : importance.alpha) {
    kept.push_back(top_k_indices(alpha, budget));
  }
  return kept;
}

StaticEvictPolicy::StaticEvictPolicy(std::shared_ptr<const PromptState> prompt, std::size_t budget)
    : prompt_(std::move(prompt)), retained_(static_evict_policy(prompt_->importance, budget)) {}

void StaticEvictPolicy::plan_step(const StepContext& /*ctx*/, std::vector<LayerPlan>& plan) {
  for (std::size_t l = 0; l < plan.size(); ++l) {
    plan[l].prompt_tokens = retained_[l];
  }
}

std::span<const float> StaticEvictPolicy::prompt_key(std::size_t layer, std::size_t token, std::size_t head) const {
  slot_in(retained_[layer], token);
  return prompt_->qkv.key(layer, token, head);
}

std::span<const float> StaticEvictPolicy::prompt_value(std::size_t layer, std::size_t token,
                                                       std::size_t head) const {
  slot_in(retained_[layer], token);
  return prompt_->qkv.value(layer, token, head);
}

std::size_t StaticEvictPolicy::held_in_range(std::size_t layer, std::size_t begin, std::size_t end) const {
  return count_in(retained_[layer], begin, end);
}

std::vector<std::size_t> h2o_evict_step(H2oState& state, std::span<const double> attention, std::size_t budget) {
  check_budget(budget);
  if (attention.size() != state.live.size()) {
    throw ContractError("h2o_evict_step: attention row must match the live set");
  }
  for (std::size_t i = 0; i < attention.size(); ++i) {
    state.score[i] += attention[i];
  }
  if (state.live.size() <= budget) {
    return {};
  }
  std::vector<std::size_t> order(state.live.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t drop = state.live.size() - budget;
  // Lowest score first; equal scores evict the later token first.
  std::ranges::partial_sort(order, order.begin() + static_cast<std::ptrdiff_t>(drop),
                            [&](std::size_t a, std::size_t b) {
                              if (state.score[a] != state.score[b]) {
                                return state.score[a] < state.score[b];
                              }
                              return a > b;
                            });
  std::vector<bool> evict(state.live.size(), false);
  for (std::size_t i = 0; i < drop; ++i) {
    evict[order[i]] = true;
  }
  std::vector<std::size_t> evicted;
  H2oState next;
  next.live.reserve(budget);
  next.score.reserve(budget);
  for (std::size_t i = 0; i < state.live.size(); ++i) {
    if (evict[i]) {
      evicted.push_back(state.live[i]);
    } else {
      next.live.push_back(state.live[i]);
      next.score.push_back(state.score[i]);
    }
  }
  state = std::move(next);
  return evicted;
}

H2oPolicy::H2oPolicy(std::shared_ptr<const PromptState> prompt, std::size_t budget)
    : prompt_(std::move(prompt)), budget_(budget) {
  check_budget(budget);
  for (const auto& alpha : prompt_->importance.alpha) {
    H2oState s;
    s.live.resize(alpha.size());
    std::iota(s.live.begin(), s.live.end(), std::size_t{0});
    s.score = alpha;
    // Prefill already ran under the budget: trim by observation importance.
    const std::vector<double> none(s.live.size(), 0.0);
    h2o_evict_step(s, none, budget_);
    states_.push_back(std::move(s));
  }
}

void H2oPolicy::plan_step(const StepContext& /*ctx*/, std::vector<LayerPlan>& plan) {
  for (std::size_t l = 0; l < plan.size(); ++l) {
    plan[l].prompt_tokens = states_[l].live;
  }
}

std::span<const float> H2oPolicy::prompt_key(std::size_t layer, std::size_t token, std::size_t head) const {
  slot_in(states_[layer].live, token);
  return prompt_->qkv.key(layer, token, head);
}

std::span<const float> H2oPolicy::prompt_value(std::size_t layer, std::size_t token, std::size_t head) const {
  slot_in(states_[layer].live, token);
  return prompt_->qkv.value(layer, token, head);
}

void H2oPolicy::observe_attention(std::size_t layer, std::span<const std::size_t> prompt_tokens,
                                  std::span<const double> mass) {
  if (!std::ranges::equal(prompt_tokens, states_[layer].live)) {
    throw ContractError("h2o: attention reported for tokens that are not live");
  }
  h2o_evict_step(states_[layer], mass, budget_);
}

std::size_t H2oPolicy::held_in_range(std::size_t layer, std::size_t begin, std::size_t end) const {
  return count_in(states_[layer].live, begin, end);
}

std::vector<ChunkPage> build_pages(const QkvBlock& prompt, std::size_t length, std::size_t chunk_size) {
  if (chunk_size == 0) {
    throw ConfigError("chunk size must be >= 1");
  }
  if (length > prompt.tokens()) {
    throw ContractError("build_pages: length exceeds the prompt");
  }
  const ModelDims& dims = prompt.dims();
  std::vector<ChunkPage> pages;
  for (std::size_t start = 0; start < length; start += chunk_size) {
    ChunkPage page;
    page.page_id = pages.size();
    page.start = start;
    page.end = std::min(length, start + chunk_size);
    page.dims = dims;
    page.key_min.resize(dims.floats_per_token());
    page.key_max.resize(dims.floats_per_token());
    for (std::size_t l = 0; l < dims.layers; ++l) {
      for (std::size_t h = 0; h < dims.heads; ++h) {
        const std::size_t off = (l * dims.heads + h) * dims.head_dim;
        const auto first = prompt.key(l, page.start, h);
        std::ranges::copy(first, page.key_min.begin() + static_cast<std::ptrdiff_t>(off));
        std::ranges::copy(first, page.key_max.begin() + static_cast<std::ptrdiff_t>(off));
        for (std::size_t t = page.start + 1; t < page.end; ++t) {
          const auto k = prompt.key(l, t, h);
          for (std::size_t i = 0; i < dims.head_dim; ++i) {
            page.key_min[off + i] = std::min(page.key_min[off + i], k[i]);
            page.key_max[off + i] = std::max(page.key_max[off + i], k[i]);
          }
        }
      }
    }
    pages.push_back(std::move(page));
  }
  return pages;
}

double quest_page_score(const HeadVectors& query, const ChunkPage& page, std::size_t layer) {
  double score = 0.0;
  for (std::size_t h = 0; h < page.dims.heads; ++h) {
    const auto q = query.at(layer, h);
    const auto lo = page.min_key(layer, h);
    const auto hi = page.max_key(layer, h);
    for (std::size_t i = 0; i < page.dims.head_dim; ++i) {
      score += std::max(q[i] * static_cast<double>(lo[i]), q[i] * static_cast<double>(hi[i]));
    }
  }
  return score;
}

std::vector<std::size_t> quest_rank_pages(const HeadVectors& query, std::span<const ChunkPage> pages,
                                          std::size_t layer) {
  std::vector<double> score(pages.size());
  std::vector<std::size_t> ids(pages.size());
  for (std::size_t p = 0; p < pages.size(); ++p) {
    score[p] = quest_page_score(query, pages[p], layer);
    ids[p] = p;
  }
  std::ranges::stable_sort(ids, [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
  return ids;
}

std::vector<std::size_t> quest_select(std::span<const ChunkPage> pages, std::span<const std::size_t> ranked,
                                      std::size_t budget, std::span<const double> alpha) {
  check_budget(budget);
  std::vector<std::size_t> hot;
  std::size_t remaining = budget;
  for (const std::size_t id : ranked) {
    if (id >= pages.size()) {
      throw ContractError("quest_select: unknown page id");
    }
    const ChunkPage& page = pages[id];
    if (page.end > alpha.size()) {
      throw ContractError("quest_select: alpha does not cover the page");
    }
    if (page.size() <= remaining) {
      for (std::size_t t = page.start; t < page.end; ++t) {
        hot.push_back(t);
      }
      remaining -= page.size();
      continue;
    }
    for (const std::size_t pos : top_k_indices(alpha.subspan(page.start, page.size()), remaining)) {
      hot.push_back(page.start + pos);
    }
    break;
  }
  std::ranges::sort(hot);
  return hot;
}

QuestPolicy::QuestPolicy(std::shared_ptr<const PromptState> prompt, std::size_t budget, std::size_t chunk_size,
                         std::size_t element_bytes)
    : prompt_(std::move(prompt)),
      budget_(budget),
      chunk_size_(chunk_size),
      pages_(build_pages(prompt_->qkv, prompt_->window_begin(), chunk_size)),
      hot_(prompt_->qkv.dims().layers),
      ledger_(prompt_->qkv.dims(), element_bytes) {
  check_budget(budget);
}

void QuestPolicy::plan_step(const StepContext& ctx, std::vector<LayerPlan>& plan) {
  const HeadVectors query = current_query(ctx.token);
  for (std::size_t l = 0; l < plan.size(); ++l) {
    const auto ranking = quest_rank_pages(query, pages_, l);
    std::vector<std::size_t> next = quest_select(pages_, ranking, budget_, prompt_->importance.alpha[l]);
    std::vector<std::size_t> on;
    std::vector<std::size_t> off;
    std::ranges::set_difference(next, hot_[l], std::back_inserter(on));
    std::ranges::set_difference(hot_[l], next, std::back_inserter(off));
    ledger_.record_step(ctx.step, l, on.size(), off.size());
    LayerPlan& p = plan[l];
    p.top1 = ranking.empty() ? -1 : static_cast<long long>(ranking.front());
    p.ranking_dot_products = prompt_->qkv.dims().heads * pages_.size();
    p.onload_tokens = on.size();
    p.offload_tokens = off.size();
    p.prompt_tokens = next;
    p.ranking = ranking;
    hot_[l] = std::move(next);
  }
}

std::size_t QuestPolicy::held_in_range(std::size_t /*layer*/, std::size_t begin, std::size_t end) const {
  const std::size_t limit = prompt_->window_begin();
  return std::min(end, limit) > begin ? std::min(end, limit) - begin : 0;
}

}  // namespace skv
