// Copyright 2026 The skv Authors
// SPDX-License-Identifier: Apache-2.0

#include "skv/attention.hpp"

#include <algorithm>
#include <cmath>

#include "skv/error.hpp"

namespace skv {

namespace {

double dot(std::span<const float> a, std::span<const float> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  }
  return acc;
}

/// In-place softmax of `logits`; returns nothing, logits become weights.
void softmax_inplace(std::vector<double>& logits) {
  const double peak = *std::ranges::max_element(logits);
  double total = 0.0;
  for (auto& x : logits) {
    x = std::exp(x - peak);
    total += x;
  }
  for (auto& x : logits) {
    x /= total;
  }
}

}  // namespace

double attention_scale(std::size_t head_dim) { return 1.0 / std::sqrt(static_cast<double>(head_dim)); }

void attend_into(std::span<const float> query, std::span<const std::span<const float>> keys,
                 std::span<const std::span<const float>> values, double scale, std::span<float> output,
                 std::vector<double>& weights) {
  if (keys.empty()) {
    throw ContractError("attend: empty key set");
  }
  if (keys.size() != values.size()) {
    throw ContractError("attend: |keys| != |values|");
  }
  const std::size_t value_dim = values.front().size();
  if (output.size() != value_dim) {
    throw ContractError("attend: output length must equal value length");
  }
  weights.resize(keys.size());
  for (std::size_t i = 0; i < keys.size(); ++i) {
    if (keys[i].size() != query.size() || values[i].size() != value_dim) {
      throw ContractError("attend: vector length mismatch");
    }
    weights[i] = scale * dot(query, keys[i]);
  }
  softmax_inplace(weights);
  std::vector<double> acc(value_dim, 0.0);
  for (std::size_t i = 0; i < keys.size(); ++i) {
    const double w = weights[i];
    const auto v = values[i];
    for (std::size_t j = 0; j < value_dim; ++j) {
      acc[j] += w * static_cast<double>(v[j]);
    }
  }
  for (std::size_t j = 0; j < value_dim; ++j) {
    output[j] = static_cast<float>(acc[j]);
  }
}

AttentionResult attend(std::span<const float> query, std::span<const std::span<const float>> keys,
                       std::span<const std::span<const float>> values, double scale) {
  if (keys.empty()) {
    throw ContractError("attend: empty key set");
  }
  if (keys.size() != values.size()) {
    throw ContractError("attend: |keys| != |values|");
  }
  AttentionResult result;
  result.output.resize(values.front().size());
  attend_into(query, keys, values, scale, result.output, result.weights);
  return result;
}

AttentionOutput::AttentionOutput(ModelDims dims)
    : dims_(dims), data_(dims.layers * dims.heads * dims.head_dim, 0.0f) {}

std::vector<double> AttentionOutput::summary() const {
  std::vector<double> mean(dims_.head_dim, 0.0);
  const std::size_t groups = dims_.layers * dims_.heads;
  for (std::size_t g = 0; g < groups; ++g) {
    for (std::size_t i = 0; i < dims_.head_dim; ++i) {
      mean[i] += static_cast<double>(data_[g * dims_.head_dim + i]);
    }
  }
  for (auto& x : mean) {
    x /= static_cast<double>(groups);
  }
  return mean;
}

AttentionOutput full_decode_step(const QkvBlock& prompt, const QkvBlock& generated, const QkvBlock& query_token) {
  if (prompt.tokens() == 0) {
    throw ContractError("full_decode_step: empty prompt");
  }
  const ModelDims& dims = prompt.dims();
  if (query_token.dims() != dims || query_token.tokens() != 1 ||
      (generated.tokens() > 0 && generated.dims() != dims)) {
    throw ContractError("full_decode_step: dims mismatch");
  }
  AttentionOutput out(dims);
  const double scale = attention_scale(dims.head_dim);
  std::vector<std::span<const float>> keys;
  std::vector<std::span<const float>> values;
  std::vector<double> weights;
  for (std::size_t l = 0; l < dims.layers; ++l) {
    for (std::size_t h = 0; h < dims.heads; ++h) {
      keys.clear();
      values.clear();
      for (std::size_t t = 0; t < prompt.tokens(); ++t) {
        keys.push_back(prompt.key(l, t, h));
        values.push_back(prompt.value(l, t, h));
      }
      for (std::size_t t = 0; t < generated.tokens(); ++t) {
        keys.push_back(generated.key(l, t, h));
        values.push_back(generated.value(l, t, h));
      }
      attend_into(query_token.query(l, 0, h), keys, values, scale, out.output(l, h), weights);
    }
  }
  return out;
}

ImportanceScores score_importance(const QkvBlock& prompt, std::size_t window) {
  const std::size_t length = prompt.tokens();
  if (window < 1 || length <= window) {
    throw InputError("score_importance: need L > N >= 1");
  }
  const ModelDims& dims = prompt.dims();
  const std::size_t candidates = length - window;
  const double scale = attention_scale(dims.head_dim);

  ImportanceScores scores;
  scores.window = window;
  scores.alpha.assign(dims.layers, std::vector<double>(candidates, 0.0));
  std::vector<double> row;
  for (std::size_t l = 0; l < dims.layers; ++l) {
    auto& alpha = scores.alpha[l];
    for (std::size_t h = 0; h < dims.heads; ++h) {
      for (std::size_t w = candidates; w < length; ++w) {
        const auto q = prompt.query(l, w, h);
        row.resize(w);
        for (std::size_t i = 0; i < w; ++i) {
          row[i] = scale * dot(q, prompt.key(l, i, h));
        }
        softmax_inplace(row);
        for (std::size_t i = 0; i < candidates; ++i) {
          alpha[i] += row[i];
        }
      }
    }
  }
  return scores;
}

}  // namespace skv
