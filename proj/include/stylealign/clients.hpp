#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "stylealign/concurrency.hpp"
#include "stylealign/corpus.hpp"
#include "stylealign/embedding.hpp"

namespace stylealign {

/// Connection and sampling settings for one external service.
struct ProviderConfig {
  /// "http" talks to `endpoint`; "testbed" selects the synthetic mock providers.
  std::string kind = "http";
  std::string endpoint;
  std::string model_id;
  double temperature = 1.0;
  double top_p = 1.0;
  int max_retries = 3;
  std::chrono::milliseconds timeout{60000};
  std::size_t max_in_flight = 4;
  double requests_per_second = 0.0;
  std::size_t batch_size = 64;
  /// Name of the environment variable holding the bearer token. The value is never logged.
  std::string api_key_env = "STYLEALIGN_API_KEY";
  std::chrono::milliseconds backoff_base{1000};
  std::chrono::milliseconds backoff_cap{30000};

  void validate() const;
  RetryPolicy retry_policy() const;
  nlohmann::json to_json() const;
  static ProviderConfig from_json(const nlohmann::json& j);
};

/// Sampling presets: "open-weights" (temperature 0.6, top-p 0.9, as used for Llama/Gemma)
/// and "gpt" (1.0 / 1.0).
std::pair<double, double> sampling_preset(const std::string& name);

// ---------------------------------------------------------------------------
// Transport

/// POSTs a JSON body to `endpoint` and returns the decoded JSON reply. Connection errors,
/// 429 and 5xx raise TransientError; other failures ProviderError / ParseError.
nlohmann::json http_post_json(const ProviderConfig& cfg, const nlohmann::json& body);

// ---------------------------------------------------------------------------
// Persistent key/value cache backed by an append-only JSON-lines log.

class JsonlCache {
 public:
  JsonlCache() = default;
  /// Replays an existing log (if any) and appends new entries to it.
  explicit JsonlCache(std::filesystem::path log_path);

  std::optional<nlohmann::json> get(const std::string& key) const;
  void put(const std::string& key, nlohmann::json value);
  std::size_t size() const;
  /// Snapshot of all entries, ordered by key.
  std::map<std::string, nlohmann::json> entries() const;

 private:
  std::map<std::string, nlohmann::json> entries_;
  std::optional<std::filesystem::path> log_path_;
  std::unique_ptr<std::ofstream> log_;
  mutable std::mutex mutex_;
};

// ---------------------------------------------------------------------------
// Translation

struct CompletionRequest {
  std::string model;
  std::string prompt;
  double temperature = 1.0;
  double top_p = 1.0;
};

/// One raw completion call; no caching or retries.
class CompletionBackend {
 public:
  virtual ~CompletionBackend() = default;
  virtual std::string complete(const CompletionRequest& request) = 0;
};

/// Wire contract: POST {model, prompt, temperature, top_p}; reply {text} or a
/// chat-completion style {choices:[{message:{content}}]} / {choices:[{text}]}.
class HttpCompletionBackend : public CompletionBackend {
 public:
  explicit HttpCompletionBackend(ProviderConfig cfg) : cfg_(std::move(cfg)) {}
  std::string complete(const CompletionRequest& request) override;

 private:
  ProviderConfig cfg_;
};

struct TranslationRecord {
  std::string sample_id;
  std::string source_language;
  std::string target_language;
  std::string variant;
  std::string prompt_hash;
  std::string translation;
  std::string provider;
  std::string timestamp;

  nlohmann::json to_json() const;
  static TranslationRecord from_json(const nlohmann::json& j);
};

struct ClientStats {
  std::atomic<std::size_t> provider_calls{0};
  std::atomic<std::size_t> cache_hits{0};
  std::atomic<std::size_t> attempts{0};
  std::atomic<std::size_t> retries{0};
};

/// Cached, retrying, rate-limited translator. Safe for concurrent use; at most
/// cfg.max_in_flight provider requests are outstanding at any time, and concurrent
/// requests for the same cache key share one provider call.
class TranslatorClient {
 public:
  TranslatorClient(std::shared_ptr<CompletionBackend> backend, ProviderConfig cfg,
                   std::shared_ptr<JsonlCache> cache = std::make_shared<JsonlCache>());

  /// Cache key over (prompt hash, model id, temperature, top_p).
  static std::string cache_key(const std::string& prompt, const ProviderConfig& cfg);

  /// Returns the trimmed completion. `record` (optional) supplies provenance stored with a
  /// fresh cache entry; its prompt_hash/translation/provider/timestamp fields are filled in.
  std::string translate(const std::string& prompt, const TranslationRecord* record = nullptr);
  /// Translates every prompt with bounded concurrency; output order follows input.
  std::vector<std::string> translate_all(const std::vector<std::string>& prompts);

  /// Cached provenance record for a prompt, if any.
  std::optional<TranslationRecord> record_for(const std::string& prompt) const;

  const ProviderConfig& config() const { return cfg_; }
  const ClientStats& stats() const { return stats_; }
  JsonlCache& cache() { return *cache_; }

 private:
  std::string call_provider(const std::string& prompt);

  std::shared_ptr<CompletionBackend> backend_;
  ProviderConfig cfg_;
  std::shared_ptr<JsonlCache> cache_;
  RetryPolicy retry_;
  RateLimiter limiter_;
  std::counting_semaphore<> in_flight_;
  std::mutex pending_mutex_;
  std::map<std::string, std::shared_future<std::string>> pending_;
  ClientStats stats_;
};

// ---------------------------------------------------------------------------
// Style scoring

struct ScoreRequest {
  std::string id;
  std::string text;
  std::string language;
  std::string style;
};

class ScorerBackend {
 public:
  virtual ~ScorerBackend() = default;
  virtual std::string model_id() const = 0;
  virtual double score(const ScoreRequest& request) = 0;
};

/// Wire contract: POST {text, language, style}; reply {score}.
class HttpScorerBackend : public ScorerBackend {
 public:
  explicit HttpScorerBackend(ProviderConfig cfg) : cfg_(std::move(cfg)) {}
  std::string model_id() const override { return cfg_.model_id; }
  double score(const ScoreRequest& request) override;

 private:
  ProviderConfig cfg_;
};

/// Precomputed scores keyed by id; file format is JSON lines {id, score}.
class OfflineScoreTable : public ScorerBackend {
 public:
  OfflineScoreTable() = default;
  explicit OfflineScoreTable(std::map<std::string, double> scores) : scores_(std::move(scores)) {}
  static OfflineScoreTable load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  std::string model_id() const override { return "offline-table"; }
  /// Looks up request.id; throws DataError when absent.
  double score(const ScoreRequest& request) override;
  bool contains(const std::string& id) const { return scores_.count(id) > 0; }
  std::size_t size() const { return scores_.size(); }

 private:
  std::map<std::string, double> scores_;
};

/// Scorer with per-language configuration checks, [0,1] range contract, retries and caching.
/// An empty `languages` set accepts every language.
class ScorerClient {
 public:
  ScorerClient(std::shared_ptr<ScorerBackend> backend, ProviderConfig cfg, std::set<std::string> languages = {},
               std::shared_ptr<JsonlCache> cache = std::make_shared<JsonlCache>());

  double score_style(const ScoreRequest& request);
  std::vector<double> score_all(const std::vector<ScoreRequest>& requests);

  const ClientStats& stats() const { return stats_; }
  std::string model_id() const { return backend_->model_id(); }

 private:
  std::shared_ptr<ScorerBackend> backend_;
  ProviderConfig cfg_;
  std::set<std::string> languages_;
  std::shared_ptr<JsonlCache> cache_;
  RateLimiter limiter_;
  ClientStats stats_;
};

/// Root-mean-square error between scorer outputs and the samples' gold labels.
double validate_scorer(ScorerClient& scorer, const std::vector<const StyleSample*>& test_split,
                       const std::string& style_name);

// ---------------------------------------------------------------------------
// Translation quality

enum class QualityMetric { GembaJudge, ExternalQe };
std::string_view to_string(QualityMetric metric);

struct QualityRequest {
  std::string source;
  std::string hypothesis;
  std::string source_language;  // display name
  std::string target_language;  // display name
};

class QualityBackend {
 public:
  virtual ~QualityBackend() = default;
  virtual QualityMetric metric() const = 0;
  virtual std::string model_id() const = 0;
  virtual double score(const QualityRequest& request) = 0;
};

/// Default LLM-judge prompt for the 0-100 direct-assessment style metric. External-method
/// plumbing: the prompt is configurable and not part of the style-alignment method itself.
extern const char* const kDefaultJudgeTemplate;

/// Extracts the first number from a judge reply; ParseError (with the raw payload) when
/// there is none or it falls outside [0, 100].
double parse_judge_score(const std::string& raw);

/// LLM judge over a completion backend; one deterministic-as-possible call per item.
class GembaJudge : public QualityBackend {
 public:
  GembaJudge(std::shared_ptr<CompletionBackend> backend, ProviderConfig cfg,
             std::string judge_template = kDefaultJudgeTemplate);
  QualityMetric metric() const override { return QualityMetric::GembaJudge; }
  std::string model_id() const override { return cfg_.model_id; }
  double score(const QualityRequest& request) override;
  std::string render(const QualityRequest& request) const;

 private:
  std::shared_ptr<CompletionBackend> backend_;
  ProviderConfig cfg_;
  std::string template_;
};

/// Remote quality-estimation service. Wire contract: POST {source, hypothesis}; reply {score}.
class HttpQeBackend : public QualityBackend {
 public:
  explicit HttpQeBackend(ProviderConfig cfg) : cfg_(std::move(cfg)) {}
  QualityMetric metric() const override { return QualityMetric::ExternalQe; }
  std::string model_id() const override { return cfg_.model_id; }
  double score(const QualityRequest& request) override;

 private:
  ProviderConfig cfg_;
};

/// Retrying, cached pass-through to a quality backend.
class QualityClient {
 public:
  QualityClient(std::shared_ptr<QualityBackend> backend, ProviderConfig cfg,
                std::shared_ptr<JsonlCache> cache = std::make_shared<JsonlCache>());
  double quality_score(const QualityRequest& request);
  QualityMetric metric() const { return backend_->metric(); }
  std::string model_id() const { return backend_->model_id(); }
  const ClientStats& stats() const { return stats_; }

 private:
  std::shared_ptr<QualityBackend> backend_;
  ProviderConfig cfg_;
  std::shared_ptr<JsonlCache> cache_;
  RateLimiter limiter_;
  ClientStats stats_;
};

// ---------------------------------------------------------------------------
// Embeddings over HTTP

/// Wire contract: POST {model, texts}; reply {dim, vectors} with one vector per text.
class HttpEmbeddingBackend : public EmbeddingBackend {
 public:
  explicit HttpEmbeddingBackend(ProviderConfig cfg) : cfg_(std::move(cfg)) {}
  std::string model_id() const override { return cfg_.model_id; }
  EmbedResponse embed(const std::vector<std::string>& texts) override;

 private:
  ProviderConfig cfg_;
};

}  // namespace stylealign
