#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "stylealign/corpus.hpp"
#include "stylealign/embedding.hpp"

namespace stylealign {

enum class AlignMode {
  /// e + v_align
  SourceShift,
  /// e + v_native
  TranslationShift,
};

std::string_view to_string(AlignMode mode);
AlignMode parse_align_mode(std::string_view text);

/// Mean embedding of the texts sharing (language, level, scope).
struct Centroid {
  std::string language;
  StyleLevel level;
  /// "native" or "translated-from:<source>"; `language` is then the translation target.
  std::string scope = "native";
  Vec vector;
  std::size_t count = 0;
};

struct MappingSupport {
  std::size_t native_source = 0;
  std::size_t native_target = 0;
  std::size_t translated = 0;
};

struct MappingSet {
  std::string source;
  std::string target;
  StyleLevel level;
  Vec v_native;
  Vec v_trans;
  Vec v_align;
  MappingSupport support;
  /// Bins pooled to reach minimum support (just `level.index` when no merge happened).
  std::vector<int> pooled_levels;
};

/// Componentwise arithmetic mean, accumulated in the given order.
Vec compute_centroid(std::span<const Vec* const> vectors);
Vec compute_centroid(const std::vector<Vec>& vectors);

/// v_native = tgt - src, v_trans = translated - src, v_align = v_native - v_trans.
/// Throws DataError on level/scope mismatch or when a centroid has fewer than
/// `min_support` members.
MappingSet compute_mappings(const Centroid& native_source, const Centroid& native_target,
                            const Centroid& translated, std::size_t min_support = 10);

Vec align_embedding(std::span<const double> embedding, const MappingSet& mapping,
                    AlignMode mode = AlignMode::SourceShift);

/// A level whose populations were below minimum support and got pooled with neighbours.
struct LevelMerge {
  int level = 0;
  std::vector<int> pooled_levels;
};

/// Per-level mappings for one ordered language pair.
struct PairMappings {
  std::string style_name;
  std::string source;
  std::string target;
  std::string model_id;
  int n_bins = 5;
  std::size_t min_support = 10;
  std::map<int, MappingSet> levels;
  std::vector<LevelMerge> merges;
  /// Levels that could not reach minimum support even after pooling every bin.
  std::vector<int> gaps;
  /// Every sample id that contributed to any centroid.
  std::set<std::string> contributing_ids;

  const MappingSet& at(int level) const;
};

/// Learns mappings for (source -> target) from the train split. Translated embeddings are
/// read from store scope translated_scope(source, target), keyed by source sample id, and
/// grouped by the source sample's level.
PairMappings learn_pair_mappings(const StyleCorpus& corpus, const EmbeddingStore& store,
                                 const std::string& source, const std::string& target, int n_bins,
                                 std::size_t min_support = 10);

nlohmann::json to_json(const PairMappings& mappings);
PairMappings pair_mappings_from_json(const nlohmann::json& doc);

struct DistanceRow {
  std::string group;
  std::string label;
  double mean = 0.0;
  double std = 0.0;
  std::size_t n = 0;
};

struct DistanceReport {
  std::vector<DistanceRow> rows;
  /// One line per row: "<label> : <mean> ± <std>" under group headings.
  std::string render() const;
};

struct DistanceAnalysisOptions {
  double fraction = 0.2;
  int n_random_trials = 100;
  std::uint64_t seed = 0;
  std::optional<Split> split;
  std::string top_name = "high";
  std::string bottom_name = "low";
};

/// Distance between the centroids of two id subsets drawn from (possibly different) scopes.
double subset_distance(const EmbeddingStore& store, const std::string& scope_a,
                       const std::vector<std::string>& ids_a, const std::string& scope_b,
                       const std::vector<std::string>& ids_b);

/// Centroid distances between extreme-style subsets: within a language, across languages,
/// translated vs native (when translated embeddings exist) and a random-subset baseline.
DistanceReport centroid_distance_analysis(const EmbeddingStore& store, const StyleCorpus& corpus,
                                          const DistanceAnalysisOptions& options = {});

}  // namespace stylealign
