// Copyright 2026 The skv Authors
// SPDX-License-Identifier: Apache-2.0

#include "skv/metrics.hpp"

#include <algorithm>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "skv/error.hpp"
#include "skv/kv_store.hpp"

namespace skv {

namespace {

bool all_layers_hit(const StepRecord& step) {
  return !step.layers.empty() && std::ranges::all_of(step.layers, [](const LayerStep& l) { return l.needle_hit(); });
}

std::string fixed(double value, int digits) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << value;
  return s.str();
}

}  // namespace

NiahResult score_niah(const DecodeTrace& trace, const SyntheticCorpus& corpus) {
  if (!corpus.needle_span) {
    throw InputError("score_niah: corpus has no needle");
  }
  if (trace.watch != corpus.needle_span) {
    throw ContractError("score_niah: trace does not watch the needle span");
  }
  NiahResult result;
  result.policy = trace.policy;
  const auto& probes = corpus.needle_query_tokens;
  for (std::size_t s = 0; s < trace.steps.size(); ++s) {
    if (!result.steps_to_hit && all_layers_hit(trace.steps[s])) {
      result.steps_to_hit = s;
    }
    if (result.query_step || probes.empty() || s + 1 < probes.size()) {
      continue;
    }
    const std::size_t first = s + 1 - probes.size();
    bool match = true;
    for (std::size_t i = 0; i < probes.size() && match; ++i) {
      match = trace.steps[first + i].input_token == probes[i];
    }
    if (match) {
      result.query_step = s;
      result.hit = all_layers_hit(trace.steps[s]);
    }
  }
  return result;
}

LatencyProxy latency_proxy(const StepRecord& step) {
  LatencyProxy proxy;
  proxy.dot_products = step.dot_products;
  for (const auto& l : step.layers) {
    proxy.onload_tokens += l.onload_tokens;
    proxy.ranking_comparisons += l.ranking_dot_products;
  }
  return proxy;
}

std::uint64_t projected_device_bytes(bool full_cache, std::uint64_t length, std::size_t budget, std::size_t window,
                                     const ModelDims& dims, std::size_t element_bytes) {
  std::uint64_t tokens = length;
  if (!full_cache) {
    const std::uint64_t pre_window = length > window ? length - window : 0;
    tokens = std::min<std::uint64_t>(budget, pre_window) + std::min<std::uint64_t>(window, length);
  }
  return memory_cost(dims, tokens, 0, element_bytes);
}

CellResult summarize_trace(const DecodeTrace& trace, const SyntheticCorpus& corpus) {
  CellResult cell;
  cell.policy = trace.policy;
  cell.niah = score_niah(trace, corpus);
  cell.steps = trace.steps.size();
  cell.onload_bytes = trace.ledger.onload_bytes();
  if (trace.steps.empty()) {
    return cell;
  }
  double onload = 0.0;
  double dots = 0.0;
  for (const auto& step : trace.steps) {
    const LatencyProxy proxy = latency_proxy(step);
    onload += static_cast<double>(proxy.onload_tokens);
    dots += static_cast<double>(proxy.dot_products);
    for (const auto& l : step.layers) {
      cell.peak_hot = std::max(cell.peak_hot, l.hot_count);
    }
  }
  const double n = static_cast<double>(trace.steps.size());
  cell.onload_tokens_mean = onload / n;
  cell.dot_products_mean = dots / n;
  return cell;
}

double accuracy(std::span<const CellResult> cells) {
  if (cells.empty()) {
    return 0.0;
  }
  const auto hits = std::ranges::count_if(cells, [](const CellResult& c) { return c.niah.hit; });
  return static_cast<double>(hits) / static_cast<double>(cells.size());
}

std::vector<PolicySummary> summarize(std::span<const CellResult> cells) {
  std::vector<PolicySummary> rows;
  for (const auto& cell : cells) {
    auto it = std::ranges::find(rows, cell.policy, &PolicySummary::policy);
    if (it == rows.end()) {
      PolicySummary row;
      row.policy = cell.policy;
      for (const auto length : kProjectionLengths) {
        row.memory_bytes.push_back(projected_device_bytes(cell.policy == "full", length, cell.budget, cell.window));
      }
      rows.push_back(std::move(row));
      it = rows.end() - 1;
    }
    ++it->cells;
    it->accuracy += cell.niah.hit ? 1.0 : 0.0;
    it->onload_tokens_mean += cell.onload_tokens_mean;
    it->dot_products_mean += cell.dot_products_mean;
    it->peak_hot = std::max(it->peak_hot, cell.peak_hot);
  }
  for (auto& row : rows) {
    const double n = static_cast<double>(row.cells);
    row.accuracy /= n;
    row.onload_tokens_mean /= n;
    row.dot_products_mean /= n;
  }
  return rows;
}

void write_cells_csv(std::ostream& out, std::span<const CellResult> cells) {
  out << "policy,seed,depth,tau,r,N,accuracy,onload_tokens_mean,dot_products_mean,peak_hot,mem_32k_bytes\n";
  for (const auto& c : cells) {
    out << c.policy << ',' << c.seed << ',' << fixed(c.depth, 2) << ',' << c.budget << ',' << c.keep_factor << ','
        << c.window << ',' << (c.niah.hit ? "1.0000" : "0.0000") << ',' << fixed(c.onload_tokens_mean, 4) << ','
        << fixed(c.dot_products_mean, 4) << ',' << c.peak_hot << ',' << c.mem_32k_bytes << '\n';
  }
}

void write_summary_csv(std::ostream& out, std::span<const PolicySummary> rows) {
  out << "policy,cells,accuracy,onload_tokens_mean,dot_products_mean,peak_hot";
  for (const auto length : kProjectionLengths) {
    out << ",mem_" << length / 1024 << "k_bytes";
  }
  out << '\n';
  for (const auto& r : rows) {
    out << r.policy << ',' << r.cells << ',' << fixed(r.accuracy, 4) << ',' << fixed(r.onload_tokens_mean, 4) << ','
        << fixed(r.dot_products_mean, 4) << ',' << r.peak_hot;
    for (const auto bytes : r.memory_bytes) {
      out << ',' << bytes;
    }
    out << '\n';
  }
}

void write_memory_csv(std::ostream& out, std::span<const PolicySummary> rows) {
  out << "policy,length,bytes,gib\n";
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.memory_bytes.size(); ++i) {
      out << r.policy << ',' << kProjectionLengths[i] << ',' << r.memory_bytes[i] << ','
          << format_gib(r.memory_bytes[i]).substr(0, format_gib(r.memory_bytes[i]).find(' ')) << '\n';
    }
  }
}

std::string to_decimal(unsigned __int128 value) {
  if (value == 0) {
    return "0";
  }
  std::string digits;
  while (value > 0) {
    digits.push_back(static_cast<char>('0' + static_cast<int>(value % 10)));
    value /= 10;
  }
  std::ranges::reverse(digits);
  return digits;
}

std::string format_gib(unsigned __int128 bytes) {
  constexpr unsigned __int128 kGib = static_cast<unsigned __int128>(1) << 30;
  unsigned __int128 whole = bytes / kGib;
  // Round the fractional part half-up to hundredths without overflow.
  unsigned __int128 hundredths = ((bytes % kGib) * 100 + kGib / 2) / kGib;
  if (hundredths == 100) {
    ++whole;
    hundredths = 0;
  }
  std::string frac = to_decimal(hundredths);
  if (frac.size() < 2) {
    frac.insert(0, "0");
  }
  return to_decimal(whole) + "." + frac + " GiB";
}

}  // namespace skv
