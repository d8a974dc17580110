// Copyright 2026 The skv Authors
// SPDX-License-Identifier: Apache-2.0

#include "skv/experiment.hpp"

#include <algorithm>
#include <sstream>

#include "random.hpp"
#include "skv/error.hpp"

namespace skv {

void SuiteConfig::validate() const {
  if (seeds.empty() || depths.empty() || policies.empty()) {
    throw ConfigError("suite needs at least one seed, depth and policy");
  }
  for (const double d : depths) {
    if (!(d >= 0.0 && d <= 1.0)) {
      throw ConfigError("needle depths must lie in [0, 1]");
    }
  }
  dims.validate();
  engine.validate();
}

std::string SuiteConfig::describe() const {
  std::ostringstream s;
  s << "vocab=" << vocab_size << " topics=" << topic_count << " boundary_fraction=" << boundary_fraction
    << " layers=" << dims.layers << " heads=" << dims.heads << " head_dim=" << dims.head_dim
    << " sigma=" << model.noise_scale << " query_gain=" << model.query_gain << " haystack=" << haystack_len
    << " needle=" << needle_len << " tau=" << engine.budget << " r=" << engine.keep_factor
    << " N=" << engine.window << " query_strategy=" << to_string(engine.query_strategy)
    << " segmentation=" << engine.segmentation.to_string() << " seeds=";
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    s << (i ? ";" : "") << seeds[i];
  }
  s << " depths=";
  for (std::size_t i = 0; i < depths.size(); ++i) {
    s << (i ? ";" : "") << depths[i];
  }
  s << " policies=";
  for (std::size_t i = 0; i < policies.size(); ++i) {
    s << (i ? ";" : "") << policies[i].label();
  }
  return s.str();
}

SuiteCase make_suite_case(const SuiteConfig& config, std::uint64_t seed, std::size_t depth_index) {
  SuiteCase c;
  c.seed = seed;
  c.depth = config.depths.at(depth_index);
  SyntheticVocab vocab = make_vocab(config.vocab_size, config.topic_count, config.boundary_fraction, seed);
  const std::size_t needle_topic = static_cast<std::size_t>(seed % config.topic_count);
  c.corpus = make_niah_corpus(vocab, config.haystack_len, needle_topic, config.needle_len, c.depth,
                              detail::hash_key({seed, 0x5eed, depth_index}), config.niah);
  c.model = std::make_shared<const SyntheticModel>(std::move(vocab), config.dims, seed, config.model);
  return c;
}

DecodeTrace run_case(const SuiteCase& c, std::shared_ptr<const PromptState> prompt, const PolicySpec& policy,
                     const EngineConfig& engine) {
  Engine e(*c.model, engine, policy);
  e.prefill(std::move(prompt));
  e.watch(*c.corpus.needle_span);
  const DecodeTrace trace = e.run_decode(c.corpus.needle_query_tokens);
  if (policy.kind != PolicyKind::full) {
    for (const auto& step : trace.steps) {
      for (const auto& l : step.layers) {
        if (l.hot_count > engine.budget) {
          throw ContractError(policy.label() + ": hot set exceeds the token budget");
        }
      }
    }
  }
  return trace;
}

std::vector<CellResult> run_niah_suite(const SuiteConfig& config) {
  config.validate();
  std::vector<CellResult> cells;
  std::vector<std::size_t> policy_rank;
  for (const std::uint64_t seed : config.seeds) {
    for (std::size_t d = 0; d < config.depths.size(); ++d) {
      const SuiteCase c = make_suite_case(config, seed, d);
      const auto prompt = encode_prompt(*c.model, c.corpus.tokens, config.engine.window);
      for (std::size_t p = 0; p < config.policies.size(); ++p) {
        const DecodeTrace trace = run_case(c, prompt, config.policies[p], config.engine);
        CellResult cell = summarize_trace(trace, c.corpus);
        cell.seed = seed;
        cell.depth = c.depth;
        cell.budget = config.engine.budget;
        cell.keep_factor = config.engine.keep_factor;
        cell.window = config.engine.window;
        cell.query_strategy = to_string(config.engine.query_strategy);
        cell.segmentation = config.engine.segmentation.to_string();
        cell.mem_32k_bytes = projected_device_bytes(config.policies[p].kind == PolicyKind::full, 32768,
                                                    cell.budget, cell.window);
        cells.push_back(std::move(cell));
        policy_rank.push_back(p);
      }
    }
  }
  std::vector<std::size_t> order(cells.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    order[i] = i;
  }
  // Rows were produced seed-major; regroup by policy while keeping seed/depth order.
  std::ranges::stable_sort(order, [&](std::size_t a, std::size_t b) { return policy_rank[a] < policy_rank[b]; });
  std::vector<CellResult> sorted;
  sorted.reserve(cells.size());
  for (const auto i : order) {
    sorted.push_back(std::move(cells[i]));
  }
  return sorted;
}

std::vector<AblationRow> run_ablation(const SuiteConfig& config, const std::vector<double>& keep_factors,
                                      const std::vector<SegmentationConfig>& segmentations) {
  config.validate();
  if (keep_factors.empty() || segmentations.empty()) {
    throw ConfigError("ablation needs at least one keep factor and one segmentation");
  }
  const QueryStrategy strategies[] = {QueryStrategy::mean_sentence, QueryStrategy::current_token};
  std::vector<AblationRow> rows;
  for (const auto& seg : segmentations) {
    for (const double r : keep_factors) {
      for (const auto q : strategies) {
        AblationRow row;
        row.segmentation = seg.to_string();
        row.query_strategy = to_string(q);
        row.keep_factor = r;
        row.budget = config.engine.budget;
        row.window = config.engine.window;
        rows.push_back(row);
      }
    }
  }
  std::vector<std::size_t> hits(rows.size(), 0);
  for (const std::uint64_t seed : config.seeds) {
    for (std::size_t d = 0; d < config.depths.size(); ++d) {
      const SuiteCase c = make_suite_case(config, seed, d);
      const auto prompt = encode_prompt(*c.model, c.corpus.tokens, config.engine.window);
      std::size_t i = 0;
      for (const auto& seg : segmentations) {
        for (const double r : keep_factors) {
          for (const auto q : strategies) {
            EngineConfig engine = config.engine;
            engine.segmentation = seg;
            engine.keep_factor = r;
            engine.query_strategy = q;
            const DecodeTrace trace = run_case(c, prompt, PolicySpec{PolicyKind::sentencekv, 32}, engine);
            hits[i] += score_niah(trace, c.corpus).hit ? 1 : 0;
            ++rows[i].cells;
            ++i;
          }
        }
      }
    }
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    rows[i].accuracy = static_cast<double>(hits[i]) / static_cast<double>(rows[i].cells);
  }
  return rows;
}

}  // namespace skv
