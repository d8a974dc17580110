// Copyright 2026 The skv Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "skv/error.hpp"

namespace skv::cli {
namespace {

namespace fs = std::filesystem;

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun run(std::vector<std::string> args) {
  args.insert(args.begin(), "skv");
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::path(::testing::TempDir()) / ("skv_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<std::string> data_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line[0] != '#') lines.push_back(line);
  }
  return lines;
}

// Small but complete suite shape for fast runs.
std::vector<std::string> small(const fs::path& out) {
  return {"--out", out.string(), "--seed", "1-2", "--depths", "0,0.5", "--haystack", "600",
          "--tau", "32", "--n-window", "16"};
}

TEST(Memcalc, ReferenceModel) {
  const CliRun r = run({"memcalc", "32", "32", "128", "32768", "0", "2"});
  EXPECT_EQ(r.code, kExitOk);
  EXPECT_EQ(r.out, "17179869184 bytes\n16.00 GiB\n");
  EXPECT_EQ(run({"memcalc", "32", "8", "128", "32768", "0", "2"}).out, "4294967296 bytes\n4.00 GiB\n");
  EXPECT_EQ(run({"memcalc", "32", "32", "128", "0", "0", "2"}).out, "0 bytes\n0.00 GiB\n");
}

TEST(ExitCodes, UsageErrors) {
  EXPECT_EQ(run({}).code, kExitUsage);
  EXPECT_EQ(run({"memcalc", "1", "2"}).code, kExitUsage);
  EXPECT_EQ(run({"--config", "/nonexistent/skv.ini", "memcalc", "1", "1", "1", "1", "1", "1"}).code, kExitUsage);
  EXPECT_EQ(run({"--tau", "-1", "niah"}).code, kExitUsage);
  EXPECT_EQ(run({"--policy", "lru", "niah"}).code, kExitUsage);
  EXPECT_EQ(run({"--seed", "5-2", "niah"}).code, kExitUsage);
  const fs::path dir = scratch("badcorpus");
  EXPECT_EQ(run({"--out", dir.string(), "--corpus", (dir / "missing.txt").string(), "decode"}).code, kExitUsage);
  EXPECT_EQ(run({"--help"}).code, kExitOk);
}

TEST(SeedList, RangesAndErrors) {
  EXPECT_EQ(parse_seed_list("1,2,5-8"), (std::vector<unsigned long long>{1, 2, 5, 6, 7, 8}));
  EXPECT_EQ(parse_seed_list("3"), (std::vector<unsigned long long>{3}));
  EXPECT_THROW(parse_seed_list(""), ConfigError);
  EXPECT_THROW(parse_seed_list("a"), ConfigError);
  EXPECT_THROW(parse_seed_list("4-1"), ConfigError);
}

TEST(Config, FileAppliesAndFlagsOverride) {
  const fs::path dir = scratch("config");
  const fs::path ini = dir / "skv.ini";
  std::ofstream(ini) << "tau=24\nn-window=8\nhaystack=400\nseed=3\ndepths=0.5\npolicy=sentencekv\n";
  CliRun r = run({"--config", ini.string(), "--out", (dir / "a").string(), "niah"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  std::string cfg = slurp(dir / "a" / "effective_config.txt");
  EXPECT_NE(cfg.find("tau=24\n"), std::string::npos) << cfg;
  EXPECT_NE(cfg.find("N=8\n"), std::string::npos) << cfg;

  r = run({"--config", ini.string(), "--tau", "20", "--out", (dir / "b").string(), "niah"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  cfg = slurp(dir / "b" / "effective_config.txt");
  EXPECT_NE(cfg.find("tau=20\n"), std::string::npos) << cfg;
  EXPECT_NE(cfg.find("N=8\n"), std::string::npos) << cfg;
}

TEST(Niah, OneRowPerCellAndSummary) {
  const fs::path dir = scratch("niah");
  auto args = small(dir / "o");
  args.push_back("niah");
  const CliRun ok = run(args);
  ASSERT_EQ(ok.code, kExitOk) << ok.err;
  const auto cells = data_lines(slurp(dir / "o" / "niah.csv"));
  // header + 6 policies x 2 seeds x 2 depths
  ASSERT_EQ(cells.size(), 1u + 24u);
  EXPECT_EQ(cells[0], "policy,seed,depth,tau,r,N,accuracy,onload_tokens_mean,dot_products_mean,peak_hot,mem_32k_bytes");
  EXPECT_EQ(cells[1].rfind("sentencekv,1,0.00,32,3,16,", 0), 0u) << cells[1];
  EXPECT_EQ(cells.back().rfind("quest32,2,0.50,", 0), 0u) << cells.back();
  const auto summary = data_lines(slurp(dir / "o" / "niah_summary.csv"));
  EXPECT_EQ(summary.size(), 1u + 6u);
  const auto memory = data_lines(slurp(dir / "o" / "memory.csv"));
  EXPECT_EQ(memory.size(), 1u + 6u * 5u);
  EXPECT_NE(slurp(dir / "o" / "memory.csv").find("full,32768,17179869184,16.00"), std::string::npos);
}

TEST(Ablate, RowsPerKeepFactorAndStrategy) {
  const fs::path dir = scratch("ablate");
  auto args = small(dir / "o");
  args.insert(args.end(), {"--r-list", "1,2", "ablate"});
  CliRun r = run(args);
  ASSERT_EQ(r.code, kExitOk) << r.err;
  auto rows = data_lines(slurp(dir / "o" / "ablate.csv"));
  ASSERT_EQ(rows.size(), 1u + 2u * 2u);
  EXPECT_EQ(rows[0], "segmentation,query_strategy,r,tau,N,retained,cells,accuracy");
  // r = 1 retains exactly the budget.
  EXPECT_EQ(rows[1].rfind("punctuation,mean_sentence,1,32,16,32,4,", 0), 0u) << rows[1];

  args = small(dir / "p");
  args.insert(args.end(), {"--r-list", "1,2", "--segmentation", "equal_chunks:32", "ablate"});
  r = run(args);
  ASSERT_EQ(r.code, kExitOk) << r.err;
  rows = data_lines(slurp(dir / "p" / "ablate.csv"));
  ASSERT_EQ(rows.size(), 1u + 2u * 2u * 2u);
  EXPECT_TRUE(std::ranges::any_of(rows, [](const std::string& s) { return s.starts_with("equal_chunks:32,"); }));
}

TEST(Decode, TraceAndLedgers) {
  const fs::path dir = scratch("decode");
  auto args = small(dir / "o");
  args.insert(args.end(), {"--policy", "sentencekv,h2o", "--steps", "10", "decode"});
  const CliRun r = run(args);
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.out.find("sentencekv: steps=10"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("h2o: steps=10"), std::string::npos) << r.out;
  const auto trace = data_lines(slurp(dir / "o" / "trace.csv"));
  EXPECT_EQ(trace.size(), 1u + 2u * 10u * 2u);
  EXPECT_EQ(trace[0], "policy,step,layer,top1_bucket,hot_count,onload_tokens,needle_hit");
  EXPECT_TRUE(fs::exists(dir / "o" / "ledger_sentencekv.csv"));
  EXPECT_TRUE(fs::exists(dir / "o" / "ledger_h2o.csv"));
}

TEST(PrefillDump, WritesArtifactsAndRoundTripsCorpus) {
  const fs::path dir = scratch("prefill");
  auto args = small(dir / "o");
  args.push_back("prefill-dump");
  const CliRun r = run(args);
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.out.find("cold_l0=96"), std::string::npos) << r.out;
  for (const char* f : {"buckets.csv", "snapshot.csv", "corpus.txt", "effective_config.txt"}) {
    EXPECT_TRUE(fs::exists(dir / "o" / f)) << f;
  }
  // Feeding the dumped corpus back reproduces the same prefill.
  auto again = small(dir / "q");
  again.insert(again.end(), {"--corpus", (dir / "o" / "corpus.txt").string(), "prefill-dump"});
  const CliRun r2 = run(again);
  ASSERT_EQ(r2.code, kExitOk) << r2.err;
  EXPECT_EQ(r.out, r2.out);
  EXPECT_EQ(data_lines(slurp(dir / "o" / "snapshot.csv")), data_lines(slurp(dir / "q" / "snapshot.csv")));
}

}  // namespace
}  // namespace skv::cli
