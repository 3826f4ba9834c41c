#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "stylealign/alignment.hpp"
#include "stylealign/clients.hpp"
#include "stylealign/corpus.hpp"
#include "stylealign/embedding.hpp"
#include "stylealign/metrics.hpp"
#include "stylealign/prompting.hpp"
#include "stylealign/retrieval.hpp"
#include "stylealign/testbed.hpp"

namespace stylealign {

/// Everything a run needs. Loaded from one JSON document; relative paths resolve against
/// the document's directory.
struct RunConfig {
  std::vector<std::filesystem::path> corpus_paths;
  /// Checked against the corpus; fills in a missing corpus style name.
  std::string style_name;
  int n_bins = 5;
  std::size_t k = 5;
  AlignMode align_mode = AlignMode::SourceShift;
  std::size_t min_support = 10;
  std::optional<ProviderConfig> embedding;
  std::optional<ProviderConfig> translator;
  std::optional<ProviderConfig> scorer;
  std::optional<ProviderConfig> judge;
  std::optional<ProviderConfig> qe;
  /// JSON-lines {id, score}; replaces the scorer provider.
  std::optional<std::filesystem::path> offline_scores;
  std::optional<std::filesystem::path> templates_dir;
  std::map<std::string, std::string> language_names;
  /// Synthetic world backing "testbed" providers; also the corpus when corpus_paths is empty.
  std::optional<SyntheticSpec> testbed;
  std::vector<Variant> variants{Variant::Vanilla, Variant::Preserve, Variant::Rasta};
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "out";
  int decimals = 2;
  CorrelationGrouping correlation_grouping = CorrelationGrouping::PerPair;
  /// Worker threads for provider fan-out; 0 uses each provider's max_in_flight.
  std::size_t workers = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  static RunConfig load(const std::filesystem::path& path);
  /// sha256 of the canonical JSON form.
  std::string hash() const;
};

struct PairOutcome {
  std::string source;
  std::string target;
  AlignmentResult result;
  /// Set when a provider failure aborted the pair.
  std::optional<std::string> error;
  /// sample id -> score
  std::map<std::string, double> original_scores;
  std::map<std::string, double> translated_scores;
  std::size_t widened = 0;
};

struct VariantReport {
  Variant variant = Variant::Vanilla;
  std::vector<PairOutcome> pairs;
  std::optional<Heatmap> heatmap;
  std::vector<CorrelationResult> correlations;
  std::size_t widening_events = 0;

  bool partial() const;
  nlohmann::json to_json() const;
};

struct HygieneReport {
  std::size_t test_ids = 0;
  std::size_t centroid_ids = 0;
  std::size_t exemplar_ids = 0;
  /// Size of the intersection of test ids with centroid and exemplar ids. Always 0 in a
  /// completed run: a violation aborts the run.
  std::size_t violations = 0;
};

struct EvaluationReport {
  std::string style_name;
  std::vector<std::string> languages;
  int n_bins = 5;
  std::size_t k = 5;
  AlignMode align_mode = AlignMode::SourceShift;
  std::map<Variant, VariantReport> variants;
  /// "<language>/native" for source texts, "<language>/<variant>" for translations into it.
  std::map<std::string, DistributionStats> distributions;
  std::optional<ReportTable> table;
  /// Mean relative change in translated-score std, rasta vs vanilla, over target languages.
  std::optional<double> std_change;
  HygieneReport hygiene;
  nlohmann::json manifest;
  std::vector<std::string> notes;

  bool partial() const;
  nlohmann::json to_json() const;
  std::string render_text() const;
};

/// Orchestrates ingest -> embed -> mappings -> translate -> score -> evaluate -> report.
/// Every stage reads and writes caches under cfg.out_dir, so re-running a stage (or a whole
/// run after an interruption) never repeats a provider call that already succeeded.
class Pipeline {
 public:
  struct Providers {
    std::shared_ptr<EmbeddingBackend> embedding;
    std::shared_ptr<CompletionBackend> translator;
    std::shared_ptr<ScorerBackend> scorer;
    std::shared_ptr<QualityBackend> judge;
    std::shared_ptr<QualityBackend> qe;
  };
  using Logger = std::function<void(const std::string&)>;

  /// Builds providers from the config ("http" or "testbed").
  explicit Pipeline(RunConfig cfg, Logger log = {});
  /// Uses the given backends; null members fall back to the config.
  Pipeline(RunConfig cfg, Providers providers, Logger log = {});
  ~Pipeline();

  const RunConfig& config() const { return cfg_; }
  const StyleCorpus& corpus();
  int n_bins();
  std::shared_ptr<const SyntheticWorld> world() const { return world_; }

  /// Validates the corpus and writes it to out/corpus.jsonl.
  void ingest();
  /// Embeds every native sample; persists out/embeddings.bin.
  const EmbeddingStore& embed();
  /// Native and translated centroids per (language, level) from the train split; writes
  /// out/centroids.json.
  nlohmann::json centroids();
  /// Mappings for every ordered pair; writes out/mappings/<style>_<src>_<tgt>.json. Pairs whose
  /// provider calls failed are absent and listed in mapping_errors().
  const std::map<std::pair<std::string, std::string>, PairMappings>& mappings();
  const std::map<std::pair<std::string, std::string>, std::string>& mapping_errors() const { return mapping_errors_; }

  /// Translates every test sample for every ordered pair. Returns sample id -> translation
  /// per pair; failed pairs carry an error instead.
  struct PairTranslations {
    std::string source;
    std::string target;
    std::map<std::string, std::string> translations;
    std::size_t widened = 0;
    std::optional<std::string> error;
  };
  std::vector<PairTranslations> translate(Variant variant);

  /// Translate and score one variant; aggregates A per pair.
  VariantReport score(Variant variant);
  VariantReport run_baseline(Variant variant);
  VariantReport run_rasta();

  EvaluationReport evaluate(const std::vector<Variant>& variants);
  /// formats: any of "json", "text", "csv". Files are written atomically under out_dir.
  void emit_report(const EvaluationReport& report, const std::set<std::string>& formats = {"json", "text", "csv"});

  const TranslatorClient& translator_client();
  const ScorerClient& scorer_client();
  const HygieneReport& hygiene() const { return hygiene_; }

 private:
  struct State;

  void log(const std::string& message) const;
  TranslatorClient& translator();
  ScorerClient& scorer();
  EmbeddingCache& embedding_cache();
  EmbeddingBackend& embedding_backend();
  std::vector<Vec> embed_texts(const std::vector<std::string>& texts);
  std::size_t workers(const ProviderConfig& cfg) const;
  PromptRequest base_request(Variant variant, const StyleSample& sample, const std::string& target);
  const ExemplarIndex& index();
  void check_hygiene(const std::set<std::string>& ids, const char* what);
  nlohmann::json manifest();

  RunConfig cfg_;
  Providers providers_;
  Logger log_;
  std::shared_ptr<const SyntheticWorld> world_;
  std::unique_ptr<State> state_;
  std::map<std::pair<std::string, std::string>, std::string> mapping_errors_;
  HygieneReport hygiene_;
};

}  // namespace stylealign
