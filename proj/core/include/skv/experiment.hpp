// Copyright 2026 The skv Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "skv/engine.hpp"
#include "skv/metrics.hpp"
#include "skv/model_synth.hpp"

namespace skv {

/// The synthetic needle-retrieval suite: one vocabulary and model per seed,
/// one corpus per (seed, depth), every policy decoding the probe tokens over
/// the same encoded prompt.
struct SuiteConfig {
  std::size_t vocab_size = 512;
  std::size_t topic_count = 8;
  double boundary_fraction = 0.02;
  ModelDims dims{2, 2, 16};
  ModelOptions model;
  std::size_t haystack_len = 8000;
  std::size_t needle_len = 25;
  NiahOptions niah;
  std::vector<double> depths{0.0, 0.3, 0.6, 0.9};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  EngineConfig engine;
  std::vector<PolicySpec> policies{{PolicyKind::sentencekv, 32}, {PolicyKind::full, 32},
                                   {PolicyKind::static_evict, 32}, {PolicyKind::h2o, 32},
                                   {PolicyKind::quest, 16},       {PolicyKind::quest, 32}};

  /// Throws ConfigError on empty seed/depth/policy lists, depths outside
  /// [0, 1] or an invalid engine config.
  void validate() const;
  /// One line of key=value pairs, stable across runs.
  std::string describe() const;
};

/// Corpus and model for one (seed, depth) cell.
struct SuiteCase {
  std::uint64_t seed = 0;
  double depth = 0.0;
  std::shared_ptr<const SyntheticModel> model;
  SyntheticCorpus corpus;
};

SuiteCase make_suite_case(const SuiteConfig& config, std::uint64_t seed, std::size_t depth_index);

/// Runs one policy over a prepared case (prompt shared across calls) and
/// returns the trace with the needle watched.
DecodeTrace run_case(const SuiteCase& c, std::shared_ptr<const PromptState> prompt, const PolicySpec& policy,
                     const EngineConfig& engine);

/// Every (policy, seed, depth) cell, sorted by policy order, seed, depth.
std::vector<CellResult> run_niah_suite(const SuiteConfig& config);

/// Accuracy of one sentencekv configuration over the suite.
struct AblationRow {
  std::string segmentation;
  std::string query_strategy;
  double keep_factor = 0.0;
  std::size_t budget = 0;
  std::size_t window = 0;
  std::size_t cells = 0;
  double accuracy = 0.0;
};

/// Sweeps keep factors x {mean_sentence, current_token} x segmentations.
std::vector<AblationRow> run_ablation(const SuiteConfig& config, const std::vector<double>& keep_factors,
                                      const std::vector<SegmentationConfig>& segmentations);

}  // namespace skv
