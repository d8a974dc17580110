// Copyright 2026 The skv Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include <map>
#include <random>

#include "skv/attention.hpp"
#include "skv/engine.hpp"
#include "skv/model_synth.hpp"

namespace skv {
namespace {

QkvBlock noise_block(ModelDims dims, std::size_t tokens) {
  std::mt19937 rng(7);
  std::normal_distribution<float> dist;
  QkvBlock block(dims, tokens);
  for (std::size_t l = 0; l < dims.layers; ++l)
    for (std::size_t t = 0; t < tokens; ++t)
      for (std::size_t h = 0; h < dims.heads; ++h) {
        for (auto& x : block.query(l, t, h)) x = dist(rng);
        for (auto& x : block.key(l, t, h)) x = dist(rng);
        for (auto& x : block.value(l, t, h)) x = dist(rng);
      }
  return block;
}

void BM_Attend(benchmark::State& state) {
  const std::size_t keys = static_cast<std::size_t>(state.range(0));
  const QkvBlock block = noise_block({1, 1, 64}, keys + 1);
  std::vector<std::span<const float>> k, v;
  for (std::size_t t = 0; t < keys; ++t) {
    k.push_back(block.key(0, t, 0));
    v.push_back(block.value(0, t, 0));
  }
  std::vector<float> out(64);
  std::vector<double> weights;
  for (auto _ : state) {
    attend_into(block.query(0, keys, 0), k, v, attention_scale(64), out, weights);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * keys));
}
BENCHMARK(BM_Attend)->RangeMultiplier(4)->Range(256, 16384);

void BM_ScoreImportance(benchmark::State& state) {
  const QkvBlock prompt = noise_block({2, 2, 16}, static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(score_importance(prompt, 32));
  }
}
BENCHMARK(BM_ScoreImportance)->Arg(2048)->Arg(8192)->Unit(benchmark::kMillisecond);

struct World {
  SyntheticModel model;
  std::shared_ptr<const PromptState> prompt;
};

const World& world(std::size_t length) {
  static std::map<std::size_t, World> cache;
  auto it = cache.find(length);
  if (it == cache.end()) {
    SyntheticModel model(make_vocab(512, 8, 0.02, 1), {2, 2, 16}, 1);
    const SyntheticCorpus corpus = make_topic_corpus(model.vocab(), length, 2);
    auto prompt = encode_prompt(model, corpus.tokens, 32);
    it = cache.emplace(length, World{std::move(model), std::move(prompt)}).first;
  }
  return it->second;
}

void BM_RankBuckets(benchmark::State& state) {
  const World& w = world(static_cast<std::size_t>(state.range(0)));
  SentenceKvPolicy policy(w.model, w.prompt, EngineConfig{});
  SentenceQueryCache cache(w.model.dims());
  cache.append(w.model.token_qkv(3, w.prompt->length()));
  const HeadVectors q = mean_query(cache);
  for (auto _ : state) {
    benchmark::DoNotOptimize(rank_buckets(q, policy.buckets(), 0));
  }
  state.counters["buckets"] = static_cast<double>(policy.buckets().size());
}
BENCHMARK(BM_RankBuckets)->Arg(4096)->Arg(16384);

void BM_DecodeStep(benchmark::State& state) {
  const World& w = world(8192);
  const PolicySpec spec{static_cast<PolicyKind>(state.range(0)), 32};
  Engine engine(w.model, EngineConfig{}, spec);
  engine.prefill(w.prompt);
  std::size_t steps = 0;
  for (auto _ : state) {
    if (++steps == 512) {
      state.PauseTiming();
      engine.prefill(w.prompt);
      steps = 0;
      state.ResumeTiming();
    }
    benchmark::DoNotOptimize(engine.decode_step().next_token);
  }
  state.SetLabel(spec.label());
}
BENCHMARK(BM_DecodeStep)
    ->Arg(static_cast<int>(PolicyKind::sentencekv))
    ->Arg(static_cast<int>(PolicyKind::full))
    ->Arg(static_cast<int>(PolicyKind::h2o))
    ->Arg(static_cast<int>(PolicyKind::quest));

}  // namespace
}  // namespace skv

BENCHMARK_MAIN();
