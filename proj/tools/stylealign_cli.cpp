// stylealign command-line driver.
//
// Exit codes: 0 success, 1 configuration or input error, 2 provider failure,
// 3 partial results (some language pairs failed; re-run to resume).

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "stylealign/error.hpp"
#include "stylealign/io.hpp"
#include "stylealign/pipeline.hpp"
#include "stylealign/testbed.hpp"

namespace sa = stylealign;
namespace fs = std::filesystem;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kProviderError = 2;
constexpr int kPartial = 3;

struct Flags {
  std::string config;
  std::vector<std::string> corpus;
  std::string style;
  std::optional<int> bins;
  std::optional<std::size_t> k;
  std::string align_mode;
  std::optional<std::uint64_t> seed;
  std::string offline_scores;
  std::string out;
  std::vector<std::string> variants;
  bool quiet = false;
};

struct TestbedFlags {
  std::string distortion;
  std::vector<std::string> languages;
  std::optional<std::size_t> samples_per_bucket;
  std::optional<std::size_t> dim;
  std::string cache_format = "binary";
};

sa::RunConfig build_config(const Flags& f, bool need_corpus) {
  sa::RunConfig cfg;
  bool from_file = false;
  if (!f.config.empty()) {
    cfg = sa::RunConfig::load(f.config);
    from_file = true;
  }
  for (const auto& c : f.corpus) cfg.corpus_paths.emplace_back(c);
  if (!f.style.empty()) cfg.style_name = f.style;
  if (f.bins) cfg.n_bins = *f.bins;
  if (f.k) cfg.k = *f.k;
  if (!f.align_mode.empty()) cfg.align_mode = sa::parse_align_mode(f.align_mode);
  if (f.seed) {
    cfg.seed = *f.seed;
    if (cfg.testbed) cfg.testbed->seed = *f.seed;
  }
  if (!f.offline_scores.empty()) cfg.offline_scores = f.offline_scores;
  if (!f.out.empty()) cfg.out_dir = f.out;
  if (!f.variants.empty()) {
    cfg.variants.clear();
    for (const auto& v : f.variants) cfg.variants.push_back(sa::parse_variant(v));
  }
  if (need_corpus && !from_file && cfg.corpus_paths.empty() && !cfg.testbed) {
    throw sa::ConfigError("no corpus: pass --config or --corpus");
  }
  if (need_corpus) cfg.validate();
  return cfg;
}

int run_testbed(const Flags& f, const TestbedFlags& t, const sa::Pipeline::Logger& log) {
  sa::RunConfig cfg = build_config(f, false);
  sa::SyntheticSpec spec = cfg.testbed ? *cfg.testbed : sa::SyntheticSpec{};
  if (!t.distortion.empty()) spec.distortion = sa::Distortion::parse(t.distortion);
  if (!t.languages.empty()) spec.languages = t.languages;
  if (t.samples_per_bucket) spec.samples_per_bucket = *t.samples_per_bucket;
  if (t.dim) spec.dim = *t.dim;
  if (f.bins) spec.n_bins = *f.bins;
  if (f.seed) spec.seed = *f.seed;
  if (!f.style.empty()) spec.style_name = f.style;
  spec.validate();
  if (t.cache_format != "binary" && t.cache_format != "jsonl") {
    throw sa::ConfigError("--cache-format must be binary or jsonl");
  }

  const sa::SyntheticWorld world = sa::generate(spec);
  const fs::path out = cfg.out_dir;
  fs::create_directories(out);
  sa::save_corpus(world.corpus(), out / "corpus.jsonl");

  sa::EmbeddingCache cache("testbed-embed", spec.dim);
  for (const auto& s : world.corpus().samples()) {
    cache.put(sa::EmbeddingCache::key_for(s.text), world.store().at(sa::native_scope(), s.id));
  }
  const bool jsonl = t.cache_format == "jsonl";
  cache.save(out / (jsonl ? "embeddings.jsonl" : "embeddings.bin"),
             jsonl ? sa::EmbeddingCache::Format::JsonLines : sa::EmbeddingCache::Format::Binary);

  nlohmann::json planted = nlohmann::json::array();
  for (const auto& [key, m] : world.planted_mappings()) {
    planted.push_back({{"source", m.source},
                       {"target", m.target},
                       {"level", m.level.index},
                       {"v_native", m.v_native},
                       {"v_trans", m.v_trans},
                       {"v_align", m.v_align}});
  }
  sa::write_file_atomic(out / "planted_mappings.json", planted.dump(2) + "\n");

  // A run config that drives the real pipeline over the emitted files with mock providers.
  nlohmann::json run = {{"corpus", "corpus.jsonl"},
                        {"n_bins", spec.n_bins},
                        {"k", cfg.k},
                        {"seed", spec.seed},
                        {"out", "run"},
                        {"testbed", spec.to_json()}};
  sa::write_file_atomic(out / "run_config.json", run.dump(2) + "\n");
  log("testbed: " + std::to_string(world.corpus().size()) + " samples, " + std::to_string(spec.languages.size()) +
      " languages, dim " + std::to_string(spec.dim) + " -> " + out.string());
  return kOk;
}

int status_of(bool partial) { return partial ? kPartial : kOk; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stylealign: retrieval-augmented style alignment for machine translation"};
  app.require_subcommand(1);
  app.fallthrough();

  Flags f;
  TestbedFlags t;
  app.add_option("--config", f.config, "JSON run configuration");
  app.add_option("--corpus", f.corpus, "Corpus JSON-lines file (repeatable)");
  app.add_option("--style", f.style, "Style name");
  app.add_option("--bins", f.bins, "Number of style levels");
  app.add_option("--k", f.k, "Exemplars per prompt");
  app.add_option("--align-mode", f.align_mode, "source-shift or translation-shift")
      ->check(CLI::IsMember({"source-shift", "translation-shift"}));
  app.add_option("--seed", f.seed, "Random seed");
  app.add_option("--offline-scores", f.offline_scores, "JSON-lines {id, score} table replacing the scorer");
  app.add_option("--out", f.out, "Output directory");
  app.add_flag("--quiet", f.quiet, "Suppress progress messages");

  auto* ingest = app.add_subcommand("ingest", "Validate the corpus and write out/corpus.jsonl");
  auto* embed = app.add_subcommand("embed", "Embed every native sample");
  auto* centroids = app.add_subcommand("centroids", "Compute style-level centroids");
  auto* mappings = app.add_subcommand("mappings", "Learn alignment mappings for every language pair");
  auto* translate = app.add_subcommand("translate", "Translate the test split");
  std::string variant;
  translate->add_option("--variant", variant, "vanilla, preserve or rasta")
      ->required()
      ->check(CLI::IsMember({"vanilla", "preserve", "rasta"}));
  auto* score = app.add_subcommand("score", "Score originals and translations");
  auto* evaluate = app.add_subcommand("evaluate", "Compute style alignment and write report.json");
  auto* report = app.add_subcommand("report", "Write JSON, text and CSV reports");
  for (auto* sub : {score, evaluate, report}) {
    sub->add_option("--variant", f.variants, "Variants to include (default: from config)")
        ->check(CLI::IsMember({"vanilla", "preserve", "rasta"}));
  }
  auto* testbed = app.add_subcommand("testbed", "Emit a synthetic corpus and embedding cache");
  testbed->add_option("--distortion", t.distortion, "identity | shrink:L | gaussian:S | planted-style-shift[:G]");
  testbed->add_option("--languages", t.languages, "Language codes");
  testbed->add_option("--samples-per-bucket", t.samples_per_bucket, "Samples per (language, level)");
  testbed->add_option("--dim", t.dim, "Embedding dimension");
  testbed->add_option("--cache-format", t.cache_format, "binary or jsonl");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigError;
  }

  const sa::Pipeline::Logger log = [&](const std::string& m) {
    if (!f.quiet) std::cerr << "[stylealign] " << m << "\n";
  };

  try {
    if (testbed->parsed()) return run_testbed(f, t, log);

    sa::Pipeline p(build_config(f, true), log);
    if (ingest->parsed()) {
      p.ingest();
      return kOk;
    }
    if (embed->parsed()) {
      p.embed();
      return kOk;
    }
    if (centroids->parsed()) {
      p.centroids();
      return status_of(!p.mapping_errors().empty());
    }
    if (mappings->parsed()) {
      const auto& maps = p.mappings();
      for (const auto& [pair, pm] : maps) {
        std::cout << pair.first << "->" << pair.second << ": " << pm.levels.size() << " levels";
        if (!pm.gaps.empty()) std::cout << ", " << pm.gaps.size() << " gaps";
        if (!pm.merges.empty()) std::cout << ", " << pm.merges.size() << " pooled";
        std::cout << "\n";
      }
      return status_of(!p.mapping_errors().empty());
    }
    if (translate->parsed()) {
      bool partial = false;
      for (const auto& pt : p.translate(sa::parse_variant(variant))) {
        std::cout << pt.source << "->" << pt.target << ": ";
        if (pt.error) {
          partial = true;
          std::cout << "FAILED (" << *pt.error << ")\n";
        } else {
          std::cout << pt.translations.size() << " translations\n";
        }
      }
      return status_of(partial);
    }
    if (score->parsed()) {
      bool partial = false;
      for (auto v : p.config().variants) {
        const auto vr = p.score(v);
        partial = partial || vr.partial();
        for (const auto& pair : vr.pairs) {
          std::cout << sa::to_string(v) << " " << pair.source << "->" << pair.target << ": ";
          if (pair.error) {
            std::cout << "FAILED (" << *pair.error << ")\n";
          } else {
            std::cout << pair.result.n << " scored\n";
          }
        }
      }
      return status_of(partial);
    }
    if (evaluate->parsed() || report->parsed()) {
      const auto r = p.evaluate(p.config().variants);
      if (evaluate->parsed()) {
        p.emit_report(r, {"json"});
      } else {
        p.emit_report(r);
        std::cout << r.render_text();
      }
      return status_of(r.partial());
    }
  } catch (const sa::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const sa::ProviderError& e) {
    std::cerr << "provider failure: " << e.what() << "\n";
    return kProviderError;
  } catch (const sa::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfigError;
  }
  return kOk;
}
