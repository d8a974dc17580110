// Copyright 2026 The skv Authors
// SPDX-License-Identifier: Apache-2.0

#include "skv/tensor.hpp"

#include <algorithm>
#include <cstring>

#include "skv/error.hpp"

namespace skv {

void ModelDims::validate() const {
  if (layers < 1 || heads < 1 || head_dim < 1) {
    throw ConfigError("model dims must be >= 1 (layers, heads, head_dim)");
  }
}

QkvBlock::QkvBlock(ModelDims dims, std::size_t tokens) : dims_(dims) {
  dims_.validate();
  grow(tokens);
  tokens_ = tokens;
}

void QkvBlock::grow(std::size_t capacity) {
  if (capacity <= capacity_ && !q_.empty()) {
    return;
  }
  const std::size_t row = dims_.heads * dims_.head_dim;
  auto regrow = [&](std::vector<float>& data) {
    std::vector<float> next(dims_.layers * capacity * row, 0.0f);
    for (std::size_t l = 0; l < dims_.layers && capacity_ > 0; ++l) {
      std::copy_n(data.data() + l * capacity_ * row, tokens_ * row, next.data() + l * capacity * row);
    }
    data = std::move(next);
  };
  regrow(q_);
  regrow(k_);
  regrow(v_);
  capacity_ = capacity;
}

void QkvBlock::append(const QkvBlock& other, std::size_t token) {
  if (tokens_ == 0 && capacity_ == 0) {
    dims_ = other.dims_;
  }
  if (other.dims_ != dims_) {
    throw ContractError("QkvBlock::append: dims mismatch");
  }
  if (token >= other.tokens_) {
    throw ContractError("QkvBlock::append: token out of range");
  }
  if (tokens_ == capacity_) {
    grow(std::max<std::size_t>(8, capacity_ * 2));
  }
  for (std::size_t l = 0; l < dims_.layers; ++l) {
    for (std::size_t h = 0; h < dims_.heads; ++h) {
      std::ranges::copy(other.query(l, token, h), query(l, tokens_, h).begin());
      std::ranges::copy(other.key(l, token, h), key(l, tokens_, h).begin());
      std::ranges::copy(other.value(l, token, h), value(l, tokens_, h).begin());
    }
  }
  ++tokens_;
}

QkvBlock QkvBlock::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > tokens_) {
    throw ContractError("QkvBlock::slice: bad range");
  }
  QkvBlock out(dims_, end - begin);
  for (std::size_t l = 0; l < dims_.layers; ++l) {
    for (std::size_t t = begin; t < end; ++t) {
      for (std::size_t h = 0; h < dims_.heads; ++h) {
        std::ranges::copy(query(l, t, h), out.query(l, t - begin, h).begin());
        std::ranges::copy(key(l, t, h), out.key(l, t - begin, h).begin());
        std::ranges::copy(value(l, t, h), out.value(l, t - begin, h).begin());
      }
    }
  }
  return out;
}

bool operator==(const QkvBlock& a, const QkvBlock& b) {
  if (a.dims_ != b.dims_ || a.tokens_ != b.tokens_) {
    return false;
  }
  const std::size_t bytes = a.dims_.head_dim * sizeof(float);
  for (std::size_t l = 0; l < a.dims_.layers; ++l) {
    for (std::size_t t = 0; t < a.tokens_; ++t) {
      for (std::size_t h = 0; h < a.dims_.heads; ++h) {
        if (std::memcmp(a.query(l, t, h).data(), b.query(l, t, h).data(), bytes) != 0 ||
            std::memcmp(a.key(l, t, h).data(), b.key(l, t, h).data(), bytes) != 0 ||
            std::memcmp(a.value(l, t, h).data(), b.value(l, t, h).data(), bytes) != 0) {
          return false;
        }
      }
    }
  }
  return true;
}

}  // namespace skv
