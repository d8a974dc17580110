// Copyright 2026 The skv Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "skv/engine.hpp"
#include "skv/error.hpp"
#include "skv/experiment.hpp"
#include "skv/metrics.hpp"

namespace skv::cli {

namespace {

struct Options {
  std::string out_dir = "skv_out";
  std::string seeds = "1-10";
  std::size_t tau = 128;
  double r = 3.0;
  std::size_t window = 32;
  std::string policy = "sentencekv,full,static_evict,h2o,quest";
  std::string chunk_sizes = "16,32";
  std::string query_strategy = "mean_sentence";
  std::string segmentation = "punctuation";
  bool outlier_split = false;
  double outlier_n_std = 3.0;
  std::string depths = "0,0.3,0.6,0.9";
  std::string r_list = "1,1.5,2,3,4";
  std::size_t vocab = 512;
  std::size_t topics = 8;
  double boundary_fraction = 0.02;
  std::size_t layers = 2;
  std::size_t heads = 2;
  std::size_t head_dim = 16;
  double sigma = kDefaultNoiseScale;
  double query_gain = 8.0;
  std::size_t haystack = 8000;
  std::size_t needle_len = 25;
  std::size_t steps = 32;
  double depth = 0.5;
  std::string corpus;
  std::vector<std::uint64_t> memcalc;
};

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, sep)) {
    if (!item.empty()) {
      parts.push_back(item);
    }
  }
  return parts;
}

template <typename T>
T parse_number(const std::string& text, const char* what) {
  T value{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw ConfigError(std::string("bad ") + what + " '" + text + "'");
  }
  return value;
}

std::vector<double> parse_double_list(const std::string& text, const char* what) {
  std::vector<double> values;
  for (const auto& item : split(text, ',')) {
    values.push_back(parse_number<double>(item, what));
  }
  if (values.empty()) {
    throw ConfigError(std::string("empty ") + what + " list");
  }
  return values;
}

std::vector<PolicySpec> parse_policies(const Options& o) {
  std::vector<std::size_t> chunks;
  for (const auto& c : split(o.chunk_sizes, ',')) {
    chunks.push_back(parse_number<std::size_t>(c, "chunk size"));
  }
  if (chunks.empty()) {
    throw ConfigError("empty chunk size list");
  }
  std::vector<PolicySpec> policies;
  for (const auto& name : split(o.policy, ',')) {
    if (name == "quest") {
      for (const auto c : chunks) {
        policies.push_back(parse_policy("quest", c));
      }
    } else {
      policies.push_back(parse_policy(name, chunks.front()));
    }
  }
  if (policies.empty()) {
    throw ConfigError("empty policy list");
  }
  return policies;
}

SuiteConfig build_suite(const Options& o) {
  SuiteConfig s;
  s.vocab_size = o.vocab;
  s.topic_count = o.topics;
  s.boundary_fraction = o.boundary_fraction;
  s.dims = ModelDims{o.layers, o.heads, o.head_dim};
  s.model.noise_scale = o.sigma;
  s.model.query_gain = o.query_gain;
  s.haystack_len = o.haystack;
  s.needle_len = o.needle_len;
  s.depths = parse_double_list(o.depths, "depth");
  s.seeds.clear();
  for (const auto seed : parse_seed_list(o.seeds)) {
    s.seeds.push_back(seed);
  }
  s.engine.budget = o.tau;
  s.engine.keep_factor = o.r;
  s.engine.window = o.window;
  s.engine.query_strategy = parse_query_strategy(o.query_strategy);
  s.engine.segmentation = parse_segmentation(o.segmentation);
  s.engine.segmentation.outlier_split_enabled = o.outlier_split;
  s.engine.segmentation.outlier_n_std = o.outlier_n_std;
  s.policies = parse_policies(o);
  s.validate();
  return s;
}

std::filesystem::path prepare_out(const Options& o) {
  const std::filesystem::path dir(o.out_dir);
  std::filesystem::create_directories(dir);
  return dir;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) {
    throw ConfigError("cannot write " + path.string());
  }
  f << content;
}

std::string header(const std::string& command, const std::string& description) {
  return "# skv " + command + " " + description + "\n";
}

void write_effective_config(const std::filesystem::path& dir, const std::string& command,
                            const std::string& description) {
  std::string body = "command=" + command + "\n";
  for (const auto& kv : split(description, ' ')) {
    body += kv + "\n";
  }
  write_file(dir / "effective_config.txt", body);
}

int cmd_niah(const Options& o, std::ostream& out) {
  const SuiteConfig suite = build_suite(o);
  const std::string desc = suite.describe();
  const auto cells = run_niah_suite(suite);
  const auto rows = summarize(cells);
  for (const auto& row : rows) {
    if (!(row.accuracy >= 0.0 && row.accuracy <= 1.0)) {
      throw ContractError("accuracy outside [0, 1]");
    }
  }
  const auto dir = prepare_out(o);
  std::ostringstream cells_csv;
  cells_csv << header("niah", desc);
  write_cells_csv(cells_csv, cells);
  write_file(dir / "niah.csv", cells_csv.str());
  std::ostringstream summary_csv;
  summary_csv << header("niah", desc);
  write_summary_csv(summary_csv, rows);
  write_file(dir / "niah_summary.csv", summary_csv.str());
  std::ostringstream memory_csv;
  memory_csv << header("niah", desc);
  write_memory_csv(memory_csv, rows);
  write_file(dir / "memory.csv", memory_csv.str());
  write_effective_config(dir, "niah", desc);
  out << summary_csv.str();
  return kExitOk;
}

int cmd_ablate(const Options& o, std::ostream& out) {
  Options base = o;
  base.policy = "sentencekv";
  const SuiteConfig suite = build_suite(base);
  std::vector<SegmentationConfig> segs;
  SegmentationConfig punct;
  punct.outlier_split_enabled = o.outlier_split;
  punct.outlier_n_std = o.outlier_n_std;
  segs.push_back(punct);
  if (suite.engine.segmentation.mode == SegmentationMode::equal_chunks) {
    segs.push_back(suite.engine.segmentation);
  }
  const auto r_values = parse_double_list(o.r_list, "keep factor");
  const auto rows = run_ablation(suite, r_values, segs);
  std::ostringstream csv;
  const std::string desc = suite.describe() + " r_list=" + o.r_list;
  csv << header("ablate", desc);
  csv << "segmentation,query_strategy,r,tau,N,retained,cells,accuracy\n";
  for (const auto& row : rows) {
    csv << row.segmentation << ',' << row.query_strategy << ',' << row.keep_factor << ',' << row.budget << ','
        << row.window << ',' << retained_target(row.budget, row.keep_factor) << ',' << row.cells << ','
        << std::fixed << std::setprecision(4) << row.accuracy << std::defaultfloat << '\n';
  }
  const auto dir = prepare_out(o);
  write_file(dir / "ablate.csv", csv.str());
  write_effective_config(dir, "ablate", desc);
  out << csv.str();
  return kExitOk;
}

SuiteCase single_case(const Options& o, const SuiteConfig& suite) {
  SuiteConfig one = suite;
  one.depths = {o.depth};
  SuiteCase c = make_suite_case(one, suite.seeds.front(), 0);
  if (!o.corpus.empty()) {
    std::ifstream in(o.corpus);
    if (!in) {
      throw ConfigError("cannot read corpus file " + o.corpus);
    }
    c.corpus = read_corpus(in, c.model->vocab());
  }
  return c;
}

int cmd_decode(const Options& o, std::ostream& out) {
  const SuiteConfig suite = build_suite(o);
  const SuiteCase c = single_case(o, suite);
  const auto prompt = encode_prompt(*c.model, c.corpus.tokens, suite.engine.window);
  const std::string desc = suite.describe() + " depth=" + std::to_string(o.depth) + " steps=" +
                           std::to_string(o.steps) + (o.corpus.empty() ? "" : " corpus=file");
  const auto dir = prepare_out(o);
  const bool with_policy = !(suite.policies.size() == 1 && suite.policies.front().kind == PolicyKind::sentencekv);
  std::ostringstream trace_csv;
  trace_csv << header("decode", desc);
  bool first = true;
  for (const auto& spec : suite.policies) {
    Engine engine(*c.model, suite.engine, spec);
    engine.prefill(prompt);
    if (c.corpus.needle_span) {
      engine.watch(*c.corpus.needle_span);
    }
    for (std::size_t s = 0; s < o.steps; ++s) {
      if (s < c.corpus.needle_query_tokens.size()) {
        engine.decode_step(c.corpus.needle_query_tokens[s]);
      } else {
        engine.decode_step();
      }
    }
    const DecodeTrace trace = engine.session().trace();
    std::ostringstream body;
    trace.write_csv(body, with_policy);
    std::string text = body.str();
    if (!first) {
      text = text.substr(text.find('\n') + 1);
    }
    first = false;
    trace_csv << text;
    std::ostringstream ledger;
    ledger << header("decode", desc);
    trace.ledger.write_csv(ledger);
    write_file(dir / ("ledger_" + trace.policy + ".csv"), ledger.str());
    out << trace.policy << ": steps=" << trace.steps.size() << " resets=" << trace.resets
        << " onload_bytes=" << trace.ledger.onload_bytes() << " offload_bytes=" << trace.ledger.offload_bytes();
    if (c.corpus.needle_span && o.steps >= c.corpus.needle_query_tokens.size()) {
      out << " needle_hit=" << (score_niah(trace, c.corpus).hit ? 1 : 0);
    }
    out << '\n';
  }
  write_file(dir / "trace.csv", trace_csv.str());
  write_effective_config(dir, "decode", desc);
  return kExitOk;
}

int cmd_prefill_dump(const Options& o, std::ostream& out) {
  Options base = o;
  base.policy = "sentencekv";
  const SuiteConfig suite = build_suite(base);
  const SuiteCase c = single_case(o, suite);
  Engine engine(*c.model, suite.engine, PolicySpec{});
  engine.prefill(c.corpus.tokens);
  const SentenceKvPolicy& policy = *engine.sentence_policy();
  const std::string desc = suite.describe() + " depth=" + std::to_string(o.depth) +
                           (o.corpus.empty() ? "" : " corpus=file");
  const auto dir = prepare_out(o);

  std::ostringstream buckets;
  buckets << header("prefill-dump", desc);
  buckets << "bucket_id,start,end,layer,retained,rankable\n";
  for (const auto& b : policy.buckets()) {
    for (std::size_t l = 0; l < suite.dims.layers; ++l) {
      buckets << b.span.bucket_id << ',' << b.span.start << ',' << b.span.end << ',' << l << ','
              << b.retained[l].size() << ',' << (b.rankable(l) ? 1 : 0) << '\n';
    }
  }
  write_file(dir / "buckets.csv", buckets.str());
  std::ostringstream snapshot;
  snapshot << header("prefill-dump", desc);
  policy.store().write_snapshot(snapshot);
  write_file(dir / "snapshot.csv", snapshot.str());
  std::ostringstream corpus;
  write_corpus(corpus, c.corpus);
  write_file(dir / "corpus.txt", corpus.str());
  write_effective_config(dir, "prefill-dump", desc);

  out << "prompt_tokens=" << c.corpus.tokens.size() << " buckets=" << policy.buckets().size();
  for (std::size_t l = 0; l < suite.dims.layers; ++l) {
    out << " cold_l" << l << '=' << policy.store().cold_size(l);
  }
  out << " prefill_offload_bytes=" << policy.store().ledger().prefill_offload_bytes() << '\n';
  return kExitOk;
}

int cmd_memcalc(const Options& o, std::ostream& out) {
  const auto& a = o.memcalc;
  const unsigned __int128 bytes = memory_cost_wide(a[0], a[1], a[2], a[3], a[4], a[5]);
  out << to_decimal(bytes) << " bytes\n" << format_gib(bytes) << '\n';
  return kExitOk;
}

void add_shared_options(CLI::App& app, Options& o) {
  app.add_option("--out", o.out_dir, "Output directory")->capture_default_str();
  app.add_option("--seed", o.seeds, "Seed list, e.g. 1,2,5-8")->capture_default_str();
  app.add_option("--tau", o.tau, "Hot token budget per layer")->capture_default_str();
  app.add_option("--r", o.r, "Keep factor (cold store holds floor(r*tau))")->capture_default_str();
  app.add_option("--n-window", o.window, "Observation window size")->capture_default_str();
  app.add_option("--policy", o.policy, "Comma list: sentencekv,full,static_evict,h2o,quest[N]")
      ->capture_default_str();
  app.add_option("--chunk-size", o.chunk_sizes, "Quest page sizes for plain 'quest'")->capture_default_str();
  app.add_option("--query-strategy", o.query_strategy, "mean_sentence|current_token")->capture_default_str();
  app.add_option("--segmentation", o.segmentation, "punctuation|equal_chunks[:SIZE]")->capture_default_str();
  app.add_flag("--outlier-split", o.outlier_split, "Split overlong sentences");
  app.add_option("--outlier-n-std", o.outlier_n_std, "Outlier threshold in std units")->capture_default_str();
  app.add_option("--depths", o.depths, "Needle depth fractions")->capture_default_str();
  app.add_option("--r-list", o.r_list, "Keep factors swept by ablate")->capture_default_str();
  app.add_option("--vocab", o.vocab, "Vocabulary size")->capture_default_str();
  app.add_option("--topics", o.topics, "Topic count")->capture_default_str();
  app.add_option("--boundary-fraction", o.boundary_fraction, "Fraction of boundary tokens")->capture_default_str();
  app.add_option("--layers", o.layers, "Layers")->capture_default_str();
  app.add_option("--heads", o.heads, "Heads")->capture_default_str();
  app.add_option("--head-dim", o.head_dim, "Head dimension")->capture_default_str();
  app.add_option("--sigma", o.sigma, "Key/query noise scale")->capture_default_str();
  app.add_option("--query-gain", o.query_gain, "Query magnitude gain")->capture_default_str();
  app.add_option("--haystack", o.haystack, "Haystack length")->capture_default_str();
  app.add_option("--needle-len", o.needle_len, "Needle length")->capture_default_str();
  app.add_option("--steps", o.steps, "Decode steps (decode)")->capture_default_str();
  app.add_option("--depth", o.depth, "Needle depth (decode, prefill-dump)")->capture_default_str();
  app.add_option("--corpus", o.corpus, "Corpus file instead of a generated one");
}

}  // namespace

std::vector<unsigned long long> parse_seed_list(const std::string& text) {
  std::vector<unsigned long long> seeds;
  for (const auto& item : split(text, ',')) {
    const auto dash = item.find('-');
    if (dash == std::string::npos) {
      seeds.push_back(parse_number<unsigned long long>(item, "seed"));
      continue;
    }
    const auto lo = parse_number<unsigned long long>(item.substr(0, dash), "seed");
    const auto hi = parse_number<unsigned long long>(item.substr(dash + 1), "seed");
    if (hi < lo || hi - lo > 100000) {
      throw ConfigError("bad seed range '" + item + "'");
    }
    for (auto s = lo; s <= hi; ++s) {
      seeds.push_back(s);
    }
  }
  if (seeds.empty()) {
    throw ConfigError("empty seed list");
  }
  return seeds;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Sentence-level KV cache retrieval simulator", "skv"};
  app.set_config("--config", "", "INI file of option=value lines; flags override it");
  app.require_subcommand(1);
  add_shared_options(app, o);

  auto* niah = app.add_subcommand("niah", "Run the needle-retrieval suite over the policy matrix");
  auto* ablate = app.add_subcommand("ablate", "Sweep keep factor and query strategy");
  auto* decode = app.add_subcommand("decode", "Decode one corpus and write per-step traces");
  auto* prefill = app.add_subcommand("prefill-dump", "Dump buckets and the store after prefill");
  auto* memcalc = app.add_subcommand("memcalc", "KV bytes for M H d L t element_bytes");
  memcalc->add_option("values", o.memcalc, "M H d L t element_bytes")->expected(6)->required();
  for (auto* sub : {niah, ablate, decode, prefill, memcalc}) {
    sub->fallthrough();
  }

  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const auto& a : args) {
    argv.push_back(a.c_str());
  }
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "skv: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (niah->parsed()) {
      return cmd_niah(o, out);
    }
    if (ablate->parsed()) {
      return cmd_ablate(o, out);
    }
    if (decode->parsed()) {
      return cmd_decode(o, out);
    }
    if (prefill->parsed()) {
      return cmd_prefill_dump(o, out);
    }
    return cmd_memcalc(o, out);
  } catch (const skv::ConfigError& e) {
    err << "skv: config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const skv::InputError& e) {
    err << "skv: input error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "skv: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "skv: invariant failure: " << e.what() << '\n';
    return kExitInvariant;
  }
}

}  // namespace skv::cli
