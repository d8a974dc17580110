// Copyright 2026 The skv Authors
// SPDX-License-Identifier: Apache-2.0

#include "skv/decode.hpp"

#include <algorithm>
#include <ostream>
#include <string>

#include "skv/error.hpp"

namespace skv {

SentenceQueryCache::SentenceQueryCache(ModelDims dims) : dims_(dims) { dims_.validate(); }

void SentenceQueryCache::append(const QkvBlock& token) {
  if (token.tokens() != 1 || token.dims() != dims_) {
    throw ContractError("SentenceQueryCache::append: expected a one-token block with matching dims");
  }
  for (std::size_t l = 0; l < dims_.layers; ++l) {
    for (std::size_t h = 0; h < dims_.heads; ++h) {
      const auto q = token.query(l, 0, h);
      queries_.insert(queries_.end(), q.begin(), q.end());
    }
  }
  ++count_;
}

void SentenceQueryCache::reset() {
  queries_.clear();
  count_ = 0;
}

std::span<const float> SentenceQueryCache::query(std::size_t index, std::size_t layer, std::size_t head) const {
  if (index >= count_) {
    throw ContractError("SentenceQueryCache::query: index out of range");
  }
  const std::size_t offset = ((index * dims_.layers + layer) * dims_.heads + head) * dims_.head_dim;
  return {queries_.data() + offset, dims_.head_dim};
}

HeadVectors mean_query(const SentenceQueryCache& cache) {
  if (cache.empty()) {
    throw ContractError("mean_query: empty sentence query cache");
  }
  const ModelDims& dims = cache.dims();
  HeadVectors mean(dims);
  for (std::size_t i = 0; i < cache.token_count(); ++i) {
    for (std::size_t l = 0; l < dims.layers; ++l) {
      for (std::size_t h = 0; h < dims.heads; ++h) {
        const auto q = cache.query(i, l, h);
        auto acc = mean.at(l, h);
        for (std::size_t j = 0; j < dims.head_dim; ++j) {
          acc[j] += static_cast<double>(q[j]);
        }
      }
    }
  }
  const double n = static_cast<double>(cache.token_count());
  for (auto& x : mean.data) {
    x /= n;
  }
  return mean;
}

HeadVectors current_query(const QkvBlock& token) {
  if (token.tokens() != 1) {
    throw ContractError("current_query: expected a one-token block");
  }
  const ModelDims& dims = token.dims();
  HeadVectors out(dims);
  for (std::size_t l = 0; l < dims.layers; ++l) {
    for (std::size_t h = 0; h < dims.heads; ++h) {
      const auto q = token.query(l, 0, h);
      std::ranges::copy(q, out.at(l, h).begin());
    }
  }
  return out;
}

std::shared_ptr<const PromptState> encode_prompt(const SyntheticModel& model, std::span<const TokenId> tokens,
                                                 std::size_t window) {
  if (window < 1 || tokens.size() <= window) {
    throw InputError("prompt length " + std::to_string(tokens.size()) + " must exceed the observation window " +
                     std::to_string(window));
  }
  auto state = std::make_shared<PromptState>();
  state->tokens.assign(tokens.begin(), tokens.end());
  state->qkv = model.encode(tokens);
  state->importance = score_importance(state->qkv, window);
  state->window = window;
  return state;
}

void DecodeTrace::write_csv(std::ostream& out, bool with_policy) const {
  if (with_policy) {
    out << "policy,";
  }
  out << "step,layer,top1_bucket,hot_count,onload_tokens,needle_hit\n";
  for (const auto& s : steps) {
    for (std::size_t l = 0; l < s.layers.size(); ++l) {
      const auto& ls = s.layers[l];
      if (with_policy) {
        out << policy << ',';
      }
      out << s.step << ',' << l << ',' << ls.top1 << ',' << ls.hot_count << ',' << ls.onload_tokens << ','
          << (ls.needle_hit() ? 1 : 0) << '\n';
    }
  }
}

DecodeSession::DecodeSession(const SyntheticModel& model, std::shared_ptr<const PromptState> prompt,
                             std::unique_ptr<CachePolicy> policy)
    : model_(&model), prompt_(std::move(prompt)), policy_(std::move(policy)), cache_(model.dims()) {
  if (!prompt_ || !policy_) {
    throw ContractError("DecodeSession: null prompt or policy");
  }
  if (prompt_->qkv.dims() != model.dims()) {
    throw ContractError("DecodeSession: prompt was encoded with different dims");
  }
  trace_.policy = policy_->label();
  // The first decode input is what the prompt's last position predicts.
  const std::size_t length = prompt_->length();
  const AttentionOutput last =
      full_decode_step(prompt_->qkv.slice(0, length - 1), QkvBlock{}, prompt_->qkv.slice(length - 1, length));
  pending_ = model_->emit(last.summary());
}

void DecodeSession::watch(std::pair<std::size_t, std::size_t> span) {
  if (span.first >= span.second || span.second > prompt_->length()) {
    throw InputError("watch span must be a non-empty range inside the prompt");
  }
  trace_.watch = span;
}

const StepRecord& DecodeSession::decode_step(std::optional<TokenId> forced) {
  const SyntheticVocab& vocab = model_->vocab();
  const ModelDims& dims = model_->dims();
  const TokenId input = forced.value_or(pending_);
  if (input >= vocab.vocab_size) {
    throw InputError("decode input token " + std::to_string(input) + " outside the vocabulary");
  }
  const std::size_t step = trace_.steps.size();
  const std::size_t length = prompt_->length();
  const std::size_t window_begin = prompt_->window_begin();
  const QkvBlock token = model_->token_qkv(input, length + step);
  cache_.append(token);

  StepRecord rec;
  rec.step = step;
  rec.input_token = input;
  rec.cache_tokens = cache_.token_count();
  rec.layers.resize(dims.layers);
  rec.output = AttentionOutput(dims);

  plan_.assign(dims.layers, LayerPlan{});
  policy_->plan_step(StepContext{step, token, cache_}, plan_);

  const double scale = attention_scale(dims.head_dim);
  const std::size_t generated = generated_.tokens();
  std::vector<std::span<const float>> keys;
  std::vector<std::span<const float>> values;
  std::vector<double> weights;
  std::vector<double> mass;
  std::uint64_t dots = 0;
  for (std::size_t l = 0; l < dims.layers; ++l) {
    const auto& hot = plan_[l].prompt_tokens;
    for (std::size_t i = 0; i < hot.size(); ++i) {
      if (hot[i] >= window_begin || (i > 0 && hot[i] <= hot[i - 1])) {
        throw ContractError("policy returned an unsorted or out-of-range hot set");
      }
    }
    mass.assign(hot.size(), 0.0);
    for (std::size_t h = 0; h < dims.heads; ++h) {
      keys.clear();
      values.clear();
      for (const std::size_t t : hot) {
        keys.push_back(policy_->prompt_key(l, t, h));
        values.push_back(policy_->prompt_value(l, t, h));
      }
      for (std::size_t t = window_begin; t < length; ++t) {
        keys.push_back(prompt_->qkv.key(l, t, h));
        values.push_back(prompt_->qkv.value(l, t, h));
      }
      for (std::size_t t = 0; t < generated; ++t) {
        keys.push_back(generated_.key(l, t, h));
        values.push_back(generated_.value(l, t, h));
      }
      attend_into(token.query(l, 0, h), keys, values, scale, rec.output.output(l, h), weights);
      for (std::size_t i = 0; i < hot.size(); ++i) {
        mass[i] += weights[i];
      }
    }

    LayerStep& ls = rec.layers[l];
    ls.top1 = plan_[l].top1;
    ls.hot_count = hot.size();
    ls.attended = keys.size();
    ls.onload_tokens = plan_[l].onload_tokens;
    ls.offload_tokens = plan_[l].offload_tokens;
    ls.ranking_dot_products = plan_[l].ranking_dot_products;
    if (trace_.watch) {
      const auto [begin, end] = *trace_.watch;
      const std::size_t clipped = std::min(end, window_begin);
      if (begin < clipped) {
        ls.needle_held = policy_->held_in_range(l, begin, clipped);
        const auto lo = std::ranges::lower_bound(hot, begin);
        const auto hi = std::ranges::lower_bound(hot, clipped);
        ls.needle_hot = static_cast<std::size_t>(hi - lo);
      }
    }
    ls.hot = hot;
    ls.ranking = std::move(plan_[l].ranking);
    dots += static_cast<std::uint64_t>(ls.attended) * dims.heads + plan_[l].ranking_dot_products;
    policy_->observe_attention(l, hot, mass);
  }
  rec.dot_products = dots;

  generated_.append(token, 0);
  rec.next_token = model_->emit(rec.output.summary());
  pending_ = rec.next_token;
  if (vocab.is_boundary(input)) {
    cache_.reset();
    rec.reset_after = true;
    ++trace_.resets;
  }
  trace_.steps.push_back(std::move(rec));
  return trace_.steps.back();
}

DecodeTrace DecodeSession::trace() const {
  DecodeTrace copy = trace_;
  if (const TransferLedger* ledger = policy_->ledger()) {
    copy.ledger = *ledger;
  } else {
    copy.ledger = TransferLedger(model_->dims());
  }
  return copy;
}

}  // namespace skv
