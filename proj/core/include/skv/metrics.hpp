// Copyright 2026 The skv Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "skv/decode.hpp"
#include "skv/model_synth.hpp"

namespace skv {

struct NiahResult {
  bool hit = false;
  /// Step at which the full probe sequence had been fed; none if never.
  std::optional<std::size_t> query_step;
  /// First step at which the coverage rule held; none if never.
  std::optional<std::size_t> steps_to_hit;
  std::string policy;
};

/// Scores a decode trace against its corpus. The trace must watch the needle
/// span. At the first step whose trailing inputs equal the probe tokens, hit
/// is true iff at every layer the policy holds some needle tokens and at
/// least 80% of them are hot. Throws InputError when the corpus has no needle.
NiahResult score_niah(const DecodeTrace& trace, const SyntheticCorpus& corpus);

/// Hardware-free cost stand-ins for one step.
struct LatencyProxy {
  std::uint64_t dot_products = 0;
  std::uint64_t onload_tokens = 0;
  std::uint64_t ranking_comparisons = 0;
};

LatencyProxy latency_proxy(const StepRecord& step);

/// Dims used for memory projections (a 32-layer, 32-head, 128-dim model).
inline constexpr ModelDims kProjectionDims{32, 32, 128};
inline constexpr std::uint64_t kProjectionLengths[] = {16384, 32768, 65536, 131072, 262144};

/// Device-resident KV bytes at prompt length `length`: every token for the
/// full cache, otherwise min(budget, length - window) + window tokens.
std::uint64_t projected_device_bytes(bool full_cache, std::uint64_t length, std::size_t budget, std::size_t window,
                                     const ModelDims& dims = kProjectionDims,
                                     std::size_t element_bytes = kDefaultElementBytes);

/// One (policy, seed, depth) cell.
struct CellResult {
  std::string policy;
  std::uint64_t seed = 0;
  double depth = 0.0;
  std::size_t budget = 0;
  double keep_factor = 0.0;
  std::size_t window = 0;
  std::string query_strategy;
  std::string segmentation;
  NiahResult niah;
  std::size_t steps = 0;
  double onload_tokens_mean = 0.0;
  double dot_products_mean = 0.0;
  std::size_t peak_hot = 0;
  std::uint64_t mem_32k_bytes = 0;
  std::uint64_t onload_bytes = 0;
};

/// Per-step means over the trace; zero when the trace has no steps.
CellResult summarize_trace(const DecodeTrace& trace, const SyntheticCorpus& corpus);

/// Per-policy aggregate, in first-appearance order of policies.
struct PolicySummary {
  std::string policy;
  std::size_t cells = 0;
  double accuracy = 0.0;
  double onload_tokens_mean = 0.0;
  double dot_products_mean = 0.0;
  std::size_t peak_hot = 0;
  std::vector<std::uint64_t> memory_bytes;  // one per kProjectionLengths entry
};

std::vector<PolicySummary> summarize(std::span<const CellResult> cells);

/// Fraction of hits; 0 for an empty set.
double accuracy(std::span<const CellResult> cells);

/// Header policy,seed,depth,tau,r,N,accuracy,onload_tokens_mean,dot_products_mean,peak_hot,mem_32k_bytes.
void write_cells_csv(std::ostream& out, std::span<const CellResult> cells);
void write_summary_csv(std::ostream& out, std::span<const PolicySummary> rows);
/// Memory table: policy,length,bytes,gib for each projection length.
void write_memory_csv(std::ostream& out, std::span<const PolicySummary> rows);

/// Two-decimal GiB string, e.g. "16.00 GiB".
std::string format_gib(unsigned __int128 bytes);
/// Decimal rendering of a 128-bit value.
std::string to_decimal(unsigned __int128 value);

}  // namespace skv
