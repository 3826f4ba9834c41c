#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "stylealign/corpus.hpp"
#include "stylealign/embedding.hpp"

namespace stylealign {

struct IndexEntry {
  std::string id;
  Vec vector;
  double norm = 0.0;
  double style_label = 0.0;
  std::string text;
};

struct Exemplar {
  std::string id;
  std::string text;
  double style_label = 0.0;
  double similarity = 0.0;
};

struct ExemplarSet {
  std::vector<Exemplar> exemplars;
  std::size_t k = 0;
  /// Levels whose buckets supplied candidates, in the order they were opened.
  std::vector<int> levels;
  bool widened() const { return levels.size() > 1; }
};

/// Train-split exemplars bucketed by (language, style level), each bucket ordered by id.
class ExemplarIndex {
 public:
  ExemplarIndex() = default;
  ExemplarIndex(std::size_t dim, int n_bins);

  /// Entries must be added in ascending id order within a bucket.
  void add(const std::string& language, int level, IndexEntry entry);

  std::size_t dim() const { return dim_; }
  int n_bins() const { return n_bins_; }
  std::size_t size() const;
  std::size_t bucket_count() const { return buckets_.size(); }
  bool has_language(const std::string& language) const;
  const std::vector<IndexEntry>* bucket(const std::string& language, int level) const;

  /// Exact top-k by cosine similarity within the (language, level) bucket, ties by ascending
  /// id. Sparse buckets widen to neighbouring levels (nearest first, lower level on ties)
  /// until k candidates exist. `exclude_id` drops one sample from the candidates.
  ExemplarSet retrieve(std::span<const double> query, const std::string& language, StyleLevel level,
                       std::size_t k, const std::string& exclude_id = {}) const;

 private:
  std::size_t dim_ = 0;
  int n_bins_ = 2;
  std::map<std::pair<std::string, int>, std::vector<IndexEntry>> buckets_;
};

/// Buckets every train sample by bin_style(label, n_bins). Fails fast listing train ids
/// without a native embedding, and names any language whose train split is empty.
ExemplarIndex build_index(const StyleCorpus& corpus, const EmbeddingStore& store, int n_bins);

}  // namespace stylealign
