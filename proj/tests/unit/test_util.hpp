// Copyright 2026 The skv Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "skv/tensor.hpp"

namespace skv::testing {

inline QkvBlock random_block(ModelDims dims, std::size_t tokens, std::uint32_t seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<float> dist(0.0f, 1.0f);
  QkvBlock block(dims, tokens);
  for (std::size_t l = 0; l < dims.layers; ++l) {
    for (std::size_t t = 0; t < tokens; ++t) {
      for (std::size_t h = 0; h < dims.heads; ++h) {
        for (auto& x : block.query(l, t, h)) x = dist(rng);
        for (auto& x : block.key(l, t, h)) x = dist(rng);
        for (auto& x : block.value(l, t, h)) x = dist(rng);
      }
    }
  }
  return block;
}

inline std::vector<float> random_vector(std::size_t n, std::mt19937& rng) {
  std::normal_distribution<float> dist(0.0f, 1.0f);
  std::vector<float> v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

}  // namespace skv::testing
