#include "stylealign/retrieval.hpp"

#include <algorithm>
#include <cmath>

#include "stylealign/error.hpp"

namespace stylealign {

ExemplarIndex::ExemplarIndex(std::size_t dim, int n_bins) : dim_(dim), n_bins_(n_bins) {
  if (n_bins_ < 2) throw DataError("n_bins must be >= 2");
}

void ExemplarIndex::add(const std::string& language, int level, IndexEntry entry) {
  if (entry.vector.size() != dim_) throw DimensionMismatch(dim_, entry.vector.size(), "exemplar index");
  if (bin_style(entry.style_label, n_bins_).index != level) {
    throw DataError("exemplar '" + entry.id + "' does not bin to level " + std::to_string(level));
  }
  auto& b = buckets_[{language, level}];
  if (!b.empty() && !(b.back().id < entry.id)) {
    throw DataError("exemplar '" + entry.id + "' added out of id order");
  }
  entry.norm = l2_norm(entry.vector);
  if (entry.norm == 0.0) throw DataError("exemplar '" + entry.id + "' has a zero-norm embedding");
  b.push_back(std::move(entry));
}

std::size_t ExemplarIndex::size() const {
  std::size_t n = 0;
  for (const auto& [key, b] : buckets_) n += b.size();
  return n;
}

bool ExemplarIndex::has_language(const std::string& language) const {
  auto it = buckets_.lower_bound({language, -1});
  return it != buckets_.end() && it->first.first == language;
}

const std::vector<IndexEntry>* ExemplarIndex::bucket(const std::string& language, int level) const {
  auto it = buckets_.find({language, level});
  return it == buckets_.end() ? nullptr : &it->second;
}

ExemplarSet ExemplarIndex::retrieve(std::span<const double> query, const std::string& language,
                                    StyleLevel level, std::size_t k, const std::string& exclude_id) const {
  if (k == 0) throw DataError("k must be >= 1");
  if (query.size() != dim_) throw DimensionMismatch(dim_, query.size(), "retrieval query");
  if (!has_language(language)) throw DataError("language '" + language + "' is not in the exemplar index");
  if (level.n_bins != n_bins_) {
    throw DataError("query level uses " + std::to_string(level.n_bins) + " bins, index uses " +
                    std::to_string(n_bins_));
  }
  const double qnorm = l2_norm(query);
  if (qnorm == 0.0) throw DataError("retrieval query has zero norm");

  auto usable = [&](int lv) {
    const auto* b = bucket(language, lv);
    if (b == nullptr) return std::size_t{0};
    std::size_t n = b->size();
    if (!exclude_id.empty()) {
      n -= static_cast<std::size_t>(std::count_if(b->begin(), b->end(),
                                                  [&](const IndexEntry& e) { return e.id == exclude_id; }));
    }
    return n;
  };

  // Open levels nearest-first (lower level first at equal distance) until k candidates exist.
  std::vector<int> order = {level.index};
  for (int dist = 1; dist < n_bins_; ++dist) {
    if (level.index - dist >= 0) order.push_back(level.index - dist);
    if (level.index + dist < n_bins_) order.push_back(level.index + dist);
  }
  ExemplarSet out;
  out.k = k;
  std::size_t available = 0;
  for (int lv : order) {
    if (available >= k) break;
    const std::size_t n = usable(lv);
    if (n == 0 && lv != level.index) continue;
    out.levels.push_back(lv);
    available += n;
  }
  if (available < k) {
    throw DataError("k=" + std::to_string(k) + " exceeds the " + std::to_string(available) +
                    " candidates available in '" + language + "'");
  }

  struct Scored {
    double sim;
    const IndexEntry* entry;
  };
  std::vector<Scored> scored;
  scored.reserve(available);
  for (int lv : out.levels) {
    const auto* b = bucket(language, lv);
    if (b == nullptr) continue;
    for (const auto& e : *b) {
      if (!exclude_id.empty() && e.id == exclude_id) continue;
      const double c = dot(query, e.vector) / (qnorm * e.norm);
      scored.push_back({std::clamp(c, -1.0, 1.0), &e});
    }
  }
  auto better = [](const Scored& a, const Scored& b) {
    if (a.sim != b.sim) return a.sim > b.sim;
    return a.entry->id < b.entry->id;
  };
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k), scored.end(), better);
  for (std::size_t i = 0; i < k; ++i) {
    const auto& e = *scored[i].entry;
    out.exemplars.push_back({e.id, e.text, e.style_label, scored[i].sim});
  }
  return out;
}

ExemplarIndex build_index(const StyleCorpus& corpus, const EmbeddingStore& store, int n_bins) {
  ExemplarIndex index(store.dim(), n_bins);
  std::vector<std::string> missing;
  for (const auto& lang : corpus.languages()) {
    const auto train = corpus.select(lang, Split::Train);
    if (train.empty()) throw DataError("language '" + lang + "' has an empty train split");
    for (const auto* s : train) {
      if (!store.contains(native_scope(), s->id)) missing.push_back(s->id);
    }
  }
  if (!missing.empty()) {
    std::string list;
    for (std::size_t i = 0; i < missing.size() && i < 20; ++i) list += (i ? ", " : "") + missing[i];
    if (missing.size() > 20) list += ", ...";
    throw DataError("missing embeddings for " + std::to_string(missing.size()) + " train samples: " + list);
  }
  for (const auto& lang : corpus.languages()) {
    for (const auto* s : corpus.select(lang, Split::Train)) {
      const int level = bin_style(s->style_label, n_bins).index;
      index.add(lang, level, IndexEntry{s->id, store.at(native_scope(), s->id), 0.0, s->style_label, s->text});
    }
  }
  return index;
}

}  // namespace stylealign
