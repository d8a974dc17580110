// Copyright 2026 The skv Authors
// SPDX-License-Identifier: Apache-2.0

#include "skv/kv_store.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <string>

#include "skv/error.hpp"

namespace skv {

TransferLedger::TransferLedger(ModelDims dims, std::size_t element_bytes)
    : bytes_per_token_(2ULL * dims.heads * dims.head_dim * element_bytes) {}

void TransferLedger::record_prefill_offload(std::size_t tokens) {
  prefill_offload_bytes_ += tokens * bytes_per_token_;
}

void TransferLedger::record_step(std::size_t step, std::size_t layer, std::size_t onload_tokens,
                                 std::size_t offload_tokens) {
  LedgerRow row{step, layer, onload_tokens, offload_tokens, onload_tokens * bytes_per_token_,
                offload_tokens * bytes_per_token_};
  onload_bytes_ += row.onload_bytes;
  offload_bytes_ += row.offload_bytes;
  onload_tokens_ += onload_tokens;
  rows_.push_back(row);
}

void TransferLedger::write_csv(std::ostream& out) const {
  out << "step,layer,onload_tokens,onload_bytes,offload_bytes\n";
  for (const auto& r : rows_) {
    out << r.step << ',' << r.layer << ',' << r.onload_tokens << ',' << r.onload_bytes << ',' << r.offload_bytes
        << '\n';
  }
}

std::size_t TieredKvStore::slot_of(std::size_t layer, std::size_t token) const {
  const auto& idx = cold_.at(layer).indices;
  auto it = std::ranges::lower_bound(idx, token);
  if (it == idx.end() || *it != token) {
    throw ContractError("token " + std::to_string(token) + " is not in the cold store at layer " +
                        std::to_string(layer));
  }
  return static_cast<std::size_t>(it - idx.begin());
}

bool TieredKvStore::in_cold(std::size_t layer, std::size_t token) const {
  return std::ranges::binary_search(cold_.at(layer).indices, token);
}

std::span<const float> TieredKvStore::cold_key(std::size_t layer, std::size_t token, std::size_t head) const {
  const std::size_t slot = slot_of(layer, token);
  return {cold_[layer].keys.data() + (slot * dims_.heads + head) * dims_.head_dim, dims_.head_dim};
}

std::span<const float> TieredKvStore::cold_value(std::size_t layer, std::size_t token, std::size_t head) const {
  const std::size_t slot = slot_of(layer, token);
  return {cold_[layer].values.data() + (slot * dims_.heads + head) * dims_.head_dim, dims_.head_dim};
}

double TieredKvStore::cold_alpha(std::size_t layer, std::size_t token) const {
  return cold_[layer].alpha[slot_of(layer, token)];
}

LoadResult TieredKvStore::load_hot(std::size_t layer, std::vector<std::size_t> indices, std::size_t step) {
  if (!std::ranges::is_sorted(indices) || std::ranges::adjacent_find(indices) != indices.end()) {
    throw ContractError("load_hot: indices must be sorted and unique");
  }
  for (auto token : indices) {
    if (!in_cold(layer, token)) {
      throw ContractError("load_hot: token " + std::to_string(token) + " is not in the cold store");
    }
  }
  auto& previous = hot_.at(layer);
  std::vector<std::size_t> diff;
  std::ranges::set_difference(indices, previous, std::back_inserter(diff));
  LoadResult result;
  result.onload_tokens = diff.size();
  diff.clear();
  std::ranges::set_difference(previous, indices, std::back_inserter(diff));
  result.offload_tokens = diff.size();
  ledger_.record_step(step, layer, result.onload_tokens, result.offload_tokens);
  previous = std::move(indices);
  return result;
}

void TieredKvStore::write_snapshot(std::ostream& out) const {
  out << "token,layer,alpha,resident\n";
  const auto old_precision = out.precision(9);
  for (std::size_t l = 0; l < dims_.layers; ++l) {
    const auto& cold = cold_[l];
    const auto& hot = hot_[l];
    for (std::size_t slot = 0; slot < cold.indices.size(); ++slot) {
      const bool resident = std::ranges::binary_search(hot, cold.indices[slot]);
      out << cold.indices[slot] << ',' << l << ',' << cold.alpha[slot] << ',' << (resident ? 1 : 0) << '\n';
    }
    for (std::size_t t = window_begin(); t < prompt_length_; ++t) {
      out << t << ',' << l << ",-,1\n";
    }
  }
  out.precision(old_precision);
}

std::size_t retained_target(std::size_t budget, double keep_factor) {
  const double product = keep_factor * static_cast<double>(budget);
  return static_cast<std::size_t>(std::floor(product + 1e-9 * std::max(1.0, product)));
}

std::vector<std::size_t> top_k_indices(std::span<const double> scores, std::size_t k) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  k = std::min(k, order.size());
  auto better = [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b] || (scores[a] == scores[b] && a < b);
  };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), better);
  order.resize(k);
  std::ranges::sort(order);
  return order;
}

StoreBuild build_store(std::span<const SentenceSpan> spans, const QkvBlock& prompt,
                       const ImportanceScores& importance, std::size_t budget, double keep_factor,
                       std::size_t window, std::size_t element_bytes) {
  if (budget < 1) {
    throw ConfigError("build_store: token budget must be >= 1");
  }
  if (!(keep_factor >= 1.0)) {
    throw ConfigError("build_store: keep factor must be >= 1");
  }
  const std::size_t target = retained_target(budget, keep_factor);
  if (target < 1) {
    throw ConfigError("build_store: floor(r * tau) must be >= 1");
  }
  const std::size_t length = prompt.tokens();
  const ModelDims dims = prompt.dims();
  if (window < 1 || length <= window) {
    throw InputError("build_store: need L > N >= 1");
  }
  if (!is_partition(spans, length)) {
    throw InputError("build_store: spans must partition the prompt");
  }
  const std::size_t candidates = length - window;
  if (importance.window != window || importance.alpha.size() != dims.layers ||
      importance.candidates() != candidates) {
    throw InputError("build_store: importance scores do not match prompt/window");
  }

  StoreBuild result;
  TieredKvStore& store = result.store;
  store.dims_ = dims;
  store.prompt_length_ = length;
  store.window_ = window;
  store.budget_ = budget;
  store.keep_factor_ = keep_factor;
  store.ledger_ = TransferLedger(dims, element_bytes);
  store.window_kv_ = prompt.slice(candidates, length);
  store.hot_.assign(dims.layers, {});
  store.cold_.resize(dims.layers);

  auto& buckets = result.buckets;
  buckets.resize(spans.size());
  for (std::size_t b = 0; b < spans.size(); ++b) {
    buckets[b].span = spans[b];
    buckets[b].span.bucket_id = b;
    buckets[b].dims = dims;
    buckets[b].retained.assign(dims.layers, {});
    buckets[b].retained_alpha.assign(dims.layers, {});
    buckets[b].mean_keys.assign(dims.floats_per_token(), 0.0f);
  }

  const std::size_t row = dims.heads * dims.head_dim;
  std::vector<double> sums(row);
  for (std::size_t l = 0; l < dims.layers; ++l) {
    const auto& alpha = importance.alpha[l];
    auto keep = top_k_indices(alpha, target);
    auto& cold = store.cold_[l];
    cold.indices = keep;
    cold.alpha.reserve(keep.size());
    cold.keys.resize(keep.size() * row);
    cold.values.resize(keep.size() * row);
    for (std::size_t slot = 0; slot < keep.size(); ++slot) {
      const std::size_t token = keep[slot];
      cold.alpha.push_back(alpha[token]);
      for (std::size_t h = 0; h < dims.heads; ++h) {
        std::ranges::copy(prompt.key(l, token, h), cold.keys.begin() + static_cast<std::ptrdiff_t>((slot * dims.heads + h) * dims.head_dim));
        std::ranges::copy(prompt.value(l, token, h), cold.values.begin() + static_cast<std::ptrdiff_t>((slot * dims.heads + h) * dims.head_dim));
      }
    }
    store.ledger_.record_prefill_offload(keep.size());

    // Spans are sorted, so one sweep attributes retained tokens to buckets.
    std::size_t b = 0;
    for (std::size_t slot = 0; slot < keep.size(); ++slot) {
      const std::size_t token = keep[slot];
      while (!spans[b].contains(token)) {
        ++b;
      }
      buckets[b].retained[l].push_back(token);
      buckets[b].retained_alpha[l].push_back(alpha[token]);
    }

    for (auto& bucket : buckets) {
      const auto& members = bucket.retained[l];
      if (members.empty()) {
        continue;
      }
      std::ranges::fill(sums, 0.0);
      for (auto token : members) {
        for (std::size_t h = 0; h < dims.heads; ++h) {
          const auto k = prompt.key(l, token, h);
          for (std::size_t i = 0; i < dims.head_dim; ++i) {
            sums[h * dims.head_dim + i] += static_cast<double>(k[i]);
          }
        }
      }
      const double n = static_cast<double>(members.size());
      for (std::size_t j = 0; j < row; ++j) {
        bucket.mean_keys[l * row + j] = static_cast<float>(sums[j] / n);
      }
    }
  }
  return result;
}

std::vector<std::size_t> select_hot(std::span<const SentenceBucket> buckets, std::span<const std::size_t> ranked,
                                    std::size_t layer, std::size_t budget) {
  if (budget < 1) {
    throw ConfigError("retrieve: token budget must be >= 1");
  }
  std::vector<bool> seen(buckets.size(), false);
  for (auto id : ranked) {
    if (id >= buckets.size() || seen[id] || !buckets[id].rankable(layer)) {
      throw ContractError("retrieve: ranking must list distinct rankable buckets");
    }
    seen[id] = true;
  }

  std::vector<std::size_t> hot;
  std::size_t remaining = budget;
  for (auto id : ranked) {
    const auto& members = buckets[id].retained[layer];
    if (members.size() <= remaining) {
      hot.insert(hot.end(), members.begin(), members.end());
      remaining -= members.size();
      continue;
    }
    // First bucket that does not fit: top-alpha members fill what is left.
    for (auto pos : top_k_indices(buckets[id].retained_alpha[layer], remaining)) {
      hot.push_back(members[pos]);
    }
    break;
  }
  std::ranges::sort(hot);
  return hot;
}

std::vector<LoadResult> retrieve(TieredKvStore& store, std::span<const SentenceBucket> buckets,
                                 const std::vector<std::vector<std::size_t>>& ranked_per_layer, std::size_t budget,
                                 std::size_t step) {
  if (ranked_per_layer.size() != store.dims().layers) {
    throw ContractError("retrieve: need one ranking per layer");
  }
  std::vector<LoadResult> loads;
  loads.reserve(ranked_per_layer.size());
  for (std::size_t l = 0; l < ranked_per_layer.size(); ++l) {
    loads.push_back(store.load_hot(l, select_hot(buckets, ranked_per_layer[l], l, budget), step));
  }
  return loads;
}

unsigned __int128 memory_cost_wide(std::uint64_t layers, std::uint64_t heads, std::uint64_t head_dim,
                                   std::uint64_t prompt_tokens, std::uint64_t generated_tokens,
                                   std::uint64_t element_bytes) {
  using Wide = unsigned __int128;
  Wide tokens = static_cast<Wide>(prompt_tokens) + generated_tokens;
  Wide total = 2;
  for (Wide factor : {static_cast<Wide>(layers), static_cast<Wide>(heads), tokens, static_cast<Wide>(head_dim),
                      static_cast<Wide>(element_bytes)}) {
    if (__builtin_mul_overflow(total, factor, &total)) {
      throw InputError("memory_cost: result exceeds 128 bits");
    }
  }
  return total;
}

std::uint64_t memory_cost(const ModelDims& dims, std::uint64_t prompt_tokens, std::uint64_t generated_tokens,
                          std::uint64_t element_bytes) {
  const auto wide =
      memory_cost_wide(dims.layers, dims.heads, dims.head_dim, prompt_tokens, generated_tokens, element_bytes);
  if (wide > std::numeric_limits<std::uint64_t>::max()) {
    throw InputError("memory_cost: result exceeds 64 bits");
  }
  return static_cast<std::uint64_t>(wide);
}

}  // namespace skv
