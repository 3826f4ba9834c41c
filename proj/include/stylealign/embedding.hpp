#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stylealign/concurrency.hpp"

namespace stylealign {

/// Embedding vector. Stored values are float32-representable; reductions run in double.
using Vec = std::vector<double>;

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> a);
/// dot(a,b) / (|a| |b|). Throws DimensionMismatch or DataError on a zero-norm input.
double cosine_similarity(std::span<const double> a, std::span<const double> b);
/// Euclidean norm of a - b.
double l2_distance(std::span<const double> a, std::span<const double> b);

/// Rounds every component to the nearest float32; throws DataError on non-finite values.
Vec quantize_f32(std::span<const double> v);
Vec normalized(std::span<const double> v);

/// Provider-produced vectors keyed by content hash of the embedded text.
///
/// One cache is bound to one model id, so switching providers never serves stale
/// vectors. Thread-safe. Persisted either as a little-endian binary file (default)
/// or as JSON lines:
///
///   binary: "SAEMBED1" | u32 version=1 | u32 dim | u32 len | model_id bytes | u64 count |
///           count x ( u32 key_len | key bytes | dim x f32 )
///   jsonl:  {"model_id":..., "dim":...} then {"key":..., "vector":[...]} per line
class EmbeddingCache {
 public:
  enum class Format { Binary, JsonLines };

  explicit EmbeddingCache(std::string model_id, std::size_t dim = 0);
  EmbeddingCache(EmbeddingCache&& other) noexcept;
  EmbeddingCache& operator=(EmbeddingCache&& other) noexcept;

  const std::string& model_id() const { return model_id_; }
  std::size_t dim() const;

  static std::string key_for(const std::string& text);

  std::optional<Vec> get(const std::string& key) const;
  /// Inserts a vector; the first insert fixes the dimension when it was unset.
  void put(const std::string& key, std::span<const double> vector);
  std::size_t size() const;

  void save(const std::filesystem::path& path, Format format = Format::Binary) const;
  /// Reads either format (detected by magic bytes).
  static EmbeddingCache load(const std::filesystem::path& path);
  /// Loads `path` when it exists and matches `model_id`; otherwise returns an empty cache.
  static EmbeddingCache load_or_create(const std::filesystem::path& path, const std::string& model_id);

 private:
  std::string model_id_;
  std::size_t dim_;
  std::map<std::string, Vec> entries_;
  mutable std::mutex mutex_;
};

struct EmbedResponse {
  std::size_t dim = 0;
  std::vector<Vec> vectors;
};

/// One raw call to an embedding service (no caching, no retries).
class EmbeddingBackend {
 public:
  virtual ~EmbeddingBackend() = default;
  virtual std::string model_id() const = 0;
  virtual EmbedResponse embed(const std::vector<std::string>& texts) = 0;
};

struct EmbedOptions {
  std::size_t batch_size = 64;
  std::size_t max_in_flight = 4;
  RetryPolicy retry;
};

/// Embeds texts through the cache: hits never reach the provider, misses are deduplicated,
/// batched, sent with bounded concurrency and written through. Output order follows input.
std::vector<Vec> embed_batch(const std::vector<std::string>& texts, EmbeddingBackend& provider,
                             EmbeddingCache& cache, const EmbedOptions& options = {});

/// Store population tags: "native", or "translated-from:<source>-><target>" for
/// translations of source-language samples into the target language.
std::string native_scope();
std::string translated_scope(const std::string& source_language, const std::string& target_language);

/// Sample-id keyed vectors for one embedding model, partitioned by scope tag.
class EmbeddingStore {
 public:
  EmbeddingStore() = default;
  EmbeddingStore(std::string model_id, std::size_t dim);

  const std::string& model_id() const { return model_id_; }
  std::size_t dim() const { return dim_; }

  /// Throws DataError if (scope, id) already present or DimensionMismatch.
  void add(const std::string& scope, const std::string& id, Vec vector);
  const Vec& at(const std::string& scope, const std::string& id) const;
  const Vec* find(const std::string& scope, const std::string& id) const;
  bool contains(const std::string& scope, const std::string& id) const;
  std::size_t size() const;
  std::size_t size(const std::string& scope) const;
  std::vector<std::string> scopes() const;

 private:
  std::string model_id_;
  std::size_t dim_ = 0;
  std::map<std::string, std::map<std::string, Vec>> entries_;
};

}  // namespace stylealign
