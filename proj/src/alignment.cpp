#include "stylealign/alignment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "stylealign/error.hpp"

namespace stylealign {

using nlohmann::json;

namespace {

Vec subtract(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionMismatch(a.size(), b.size(), "vector subtraction");
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

Vec add(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionMismatch(a.size(), b.size(), "vector addition");
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

struct Summary {
  double mean = 0.0;
  double std = 0.0;
};

Summary summarize(const std::vector<double>& xs) {
  Summary s;
  if (xs.empty()) return s;
  for (double x : xs) s.mean += x;
  s.mean /= static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - s.mean) * (x - s.mean);
  s.std = std::sqrt(ss / static_cast<double>(xs.size()));
  return s;
}

std::vector<std::string> ids_of(const std::vector<const StyleSample*>& samples) {
  std::vector<std::string> out;
  out.reserve(samples.size());
  for (const auto* s : samples) out.push_back(s->id);
  return out;
}

}  // namespace

std::string_view to_string(AlignMode mode) {
  return mode == AlignMode::SourceShift ? "source-shift" : "translation-shift";
}

AlignMode parse_align_mode(std::string_view text) {
  if (text == "source-shift") return AlignMode::SourceShift;
  if (text == "translation-shift") return AlignMode::TranslationShift;
  throw ConfigError("unknown alignment mode '" + std::string(text) + "'");
}

Vec compute_centroid(std::span<const Vec* const> vectors) {
  if (vectors.empty()) throw DataError("centroid of an empty set");
  const std::size_t dim = vectors.front()->size();
  Vec sum(dim, 0.0);
  for (const Vec* v : vectors) {
    if (v->size() != dim) throw DimensionMismatch(dim, v->size(), "compute_centroid");
    for (std::size_t i = 0; i < dim; ++i) sum[i] += (*v)[i];
  }
  const auto n = static_cast<double>(vectors.size());
  for (double& x : sum) x /= n;
  return sum;
}

Vec compute_centroid(const std::vector<Vec>& vectors) {
  std::vector<const Vec*> ptrs;
  ptrs.reserve(vectors.size());
  for (const auto& v : vectors) ptrs.push_back(&v);
  return compute_centroid(std::span<const Vec* const>(ptrs));
}

MappingSet compute_mappings(const Centroid& native_source, const Centroid& native_target,
                            const Centroid& translated, std::size_t min_support) {
  if (native_source.level != native_target.level || native_source.level != translated.level) {
    throw DataError("centroid level mismatch");
  }
  if (native_source.scope != "native" || native_target.scope != "native") {
    throw DataError("native centroids must have scope 'native'");
  }
  if (translated.scope != "translated-from:" + native_source.language) {
    throw DataError("translated centroid scope '" + translated.scope + "' does not match source '" +
                    native_source.language + "'");
  }
  if (translated.language != native_target.language) {
    throw DataError("translated centroid language '" + translated.language + "' does not match target '" +
                    native_target.language + "'");
  }
  for (const Centroid* c : {&native_source, &native_target, &translated}) {
    if (c->count < min_support) {
      throw DataError("insufficient support for centroid (" + c->language + ", level " +
                      std::to_string(c->level.index) + ", " + c->scope + "): " + std::to_string(c->count) +
                      " < " + std::to_string(min_support));
    }
  }

  MappingSet m;
  m.source = native_source.language;
  m.target = native_target.language;
  m.level = native_source.level;
  m.v_native = subtract(native_target.vector, native_source.vector);
  m.v_trans = subtract(translated.vector, native_source.vector);
  m.v_align = subtract(m.v_native, m.v_trans);
  m.support = {native_source.count, native_target.count, translated.count};
  m.pooled_levels = {m.level.index};
  return m;
}

Vec align_embedding(std::span<const double> embedding, const MappingSet& mapping, AlignMode mode) {
  return add(embedding, mode == AlignMode::SourceShift ? mapping.v_align : mapping.v_native);
}

const MappingSet& PairMappings::at(int level) const {
  auto it = levels.find(level);
  if (it == levels.end()) {
    throw DataError("no mapping for " + source + "->" + target + " at level " + std::to_string(level));
  }
  return it->second;
}

PairMappings learn_pair_mappings(const StyleCorpus& corpus, const EmbeddingStore& store,
                                 const std::string& source, const std::string& target, int n_bins,
                                 std::size_t min_support) {
  if (source == target) throw DataError("source and target language must differ");
  for (const auto& lang : {source, target}) {
    if (!corpus.has_language(lang)) throw DataError("unknown language '" + lang + "'");
  }
  const auto src_train = corpus.select(source, Split::Train);
  const auto tgt_train = corpus.select(target, Split::Train);
  const std::string trans_scope = translated_scope(source, target);

  std::vector<std::string> missing;
  for (const auto* s : src_train) {
    if (!store.contains(native_scope(), s->id)) missing.push_back(s->id);
    if (!store.contains(trans_scope, s->id)) missing.push_back(s->id + " (" + trans_scope + ")");
  }
  for (const auto* s : tgt_train) {
    if (!store.contains(native_scope(), s->id)) missing.push_back(s->id);
  }
  if (!missing.empty()) {
    std::string list;
    for (std::size_t i = 0; i < missing.size() && i < 20; ++i) list += (i ? ", " : "") + missing[i];
    if (missing.size() > 20) list += ", ...";
    throw DataError("missing embeddings for " + std::to_string(missing.size()) + " train samples: " + list);
  }

  PairMappings out;
  out.style_name = corpus.style_name();
  out.source = source;
  out.target = target;
  out.model_id = store.model_id();
  out.n_bins = n_bins;
  out.min_support = min_support;

  auto in_levels = [n_bins](const StyleSample* s, const std::vector<int>& levels) {
    const int idx = bin_style(s->style_label, n_bins).index;
    return std::find(levels.begin(), levels.end(), idx) != levels.end();
  };
  auto pick = [&](const std::vector<const StyleSample*>& pool, const std::vector<int>& levels) {
    std::vector<const StyleSample*> out_samples;
    for (const auto* s : pool) {
      if (in_levels(s, levels)) out_samples.push_back(s);
    }
    return out_samples;
  };

  for (int level = 0; level < n_bins; ++level) {
    std::vector<int> pooled = {level};
    for (;;) {
      const auto src = pick(src_train, pooled);
      const auto tgt = pick(tgt_train, pooled);
      if (src.size() >= min_support && tgt.size() >= min_support) {
        std::vector<const Vec*> src_vecs, tgt_vecs, trans_vecs;
        for (const auto* s : src) {
          src_vecs.push_back(&store.at(native_scope(), s->id));
          trans_vecs.push_back(&store.at(trans_scope, s->id));
          out.contributing_ids.insert(s->id);
        }
        for (const auto* s : tgt) {
          tgt_vecs.push_back(&store.at(native_scope(), s->id));
          out.contributing_ids.insert(s->id);
        }
        const StyleLevel lv{level, n_bins};
        Centroid cs{source, lv, native_scope(), compute_centroid(std::span<const Vec* const>(src_vecs)), src.size()};
        Centroid ct{target, lv, native_scope(), compute_centroid(std::span<const Vec* const>(tgt_vecs)), tgt.size()};
        Centroid tr{target, lv, "translated-from:" + source,
                    compute_centroid(std::span<const Vec* const>(trans_vecs)), src.size()};
        auto mapping = compute_mappings(cs, ct, tr, min_support);
        std::sort(pooled.begin(), pooled.end());
        mapping.pooled_levels = pooled;
        out.levels.emplace(level, std::move(mapping));
        if (pooled.size() > 1) out.merges.push_back({level, pooled});
        break;
      }

      const int lo = *std::min_element(pooled.begin(), pooled.end()) - 1;
      const int hi = *std::max_element(pooled.begin(), pooled.end()) + 1;
      if (lo < 0 && hi >= n_bins) {
        out.gaps.push_back(level);
        break;
      }
      // Nearest neighbouring bin by label: compare the pooled samples' mean label
      // against the centre of each candidate bin.
      double label_sum = 0.0;
      std::size_t label_n = 0;
      for (const auto* s : src) label_sum += s->style_label, ++label_n;
      for (const auto* s : tgt) label_sum += s->style_label, ++label_n;
      const double anchor = label_n > 0 ? label_sum / static_cast<double>(label_n)
                                         : (lo + 1 + hi) / 2.0 / static_cast<double>(n_bins);
      int chosen;
      if (lo < 0) {
        chosen = hi;
      } else if (hi >= n_bins) {
        chosen = lo;
      } else {
        const double d_lo = std::abs(anchor - StyleLevel{lo, n_bins}.center());
        const double d_hi = std::abs(anchor - StyleLevel{hi, n_bins}.center());
        chosen = d_hi < d_lo ? hi : lo;
      }
      pooled.push_back(chosen);
    }
  }
  return out;
}

json to_json(const PairMappings& m) {
  json levels = json::array();
  for (const auto& [level, ms] : m.levels) {
    levels.push_back({{"level", level},
                      {"pooled_levels", ms.pooled_levels},
                      {"support",
                       {{"native_source", ms.support.native_source},
                        {"native_target", ms.support.native_target},
                        {"translated", ms.support.translated}}},
                      {"v_native", ms.v_native},
                      {"v_trans", ms.v_trans},
                      {"v_align", ms.v_align}});
  }
  json merges = json::array();
  for (const auto& mg : m.merges) merges.push_back({{"level", mg.level}, {"pooled_levels", mg.pooled_levels}});
  return json{{"style_name", m.style_name},
              {"source", m.source},
              {"target", m.target},
              {"model_id", m.model_id},
              {"n_bins", m.n_bins},
              {"min_support", m.min_support},
              {"levels", levels},
              {"merges", merges},
              {"gaps", m.gaps},
              {"contributing_ids", m.contributing_ids}};
}

PairMappings pair_mappings_from_json(const json& doc) {
  PairMappings m;
  try {
    m.style_name = doc.at("style_name").get<std::string>();
    m.source = doc.at("source").get<std::string>();
    m.target = doc.at("target").get<std::string>();
    m.model_id = doc.at("model_id").get<std::string>();
    m.n_bins = doc.at("n_bins").get<int>();
    m.min_support = doc.at("min_support").get<std::size_t>();
    for (const auto& lv : doc.at("levels")) {
      MappingSet ms;
      ms.source = m.source;
      ms.target = m.target;
      ms.level = StyleLevel{lv.at("level").get<int>(), m.n_bins};
      ms.pooled_levels = lv.at("pooled_levels").get<std::vector<int>>();
      const auto& sup = lv.at("support");
      ms.support = {sup.at("native_source").get<std::size_t>(), sup.at("native_target").get<std::size_t>(),
                    sup.at("translated").get<std::size_t>()};
      ms.v_native = lv.at("v_native").get<Vec>();
      ms.v_trans = lv.at("v_trans").get<Vec>();
      ms.v_align = lv.at("v_align").get<Vec>();
      if (ms.v_native.size() != ms.v_trans.size() || ms.v_native.size() != ms.v_align.size()) {
        throw DataError("mapping vectors disagree on dimension");
      }
      m.levels.emplace(ms.level.index, std::move(ms));
    }
    for (const auto& mg : doc.at("merges")) {
      m.merges.push_back({mg.at("level").get<int>(), mg.at("pooled_levels").get<std::vector<int>>()});
    }
    m.gaps = doc.at("gaps").get<std::vector<int>>();
    m.contributing_ids = doc.value("contributing_ids", std::set<std::string>{});
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed mapping document: ") + e.what());
  }
  return m;
}

double subset_distance(const EmbeddingStore& store, const std::string& scope_a,
                       const std::vector<std::string>& ids_a, const std::string& scope_b,
                       const std::vector<std::string>& ids_b) {
  auto centroid_of = [&store](const std::string& scope, const std::vector<std::string>& ids) {
    std::vector<const Vec*> vecs;
    vecs.reserve(ids.size());
    for (const auto& id : ids) vecs.push_back(&store.at(scope, id));
    return compute_centroid(std::span<const Vec* const>(vecs));
  };
  return l2_distance(centroid_of(scope_a, ids_a), centroid_of(scope_b, ids_b));
}

DistanceReport centroid_distance_analysis(const EmbeddingStore& store, const StyleCorpus& corpus,
                                          const DistanceAnalysisOptions& options) {
  const std::vector<std::string> languages(corpus.languages().begin(), corpus.languages().end());
  std::map<std::string, ExtremeSubsets> extremes;
  for (const auto& lang : languages) {
    extremes.emplace(lang, extreme_subsets(corpus, lang, options.fraction, options.split));
  }
  const std::string& hi = options.top_name;
  const std::string& lo = options.bottom_name;
  const std::string native = native_scope();

  DistanceReport report;
  auto push = [&report](std::string group, std::string label, const std::vector<double>& xs) {
    const auto s = summarize(xs);
    report.rows.push_back({std::move(group), std::move(label), s.mean, s.std, xs.size()});
  };

  {
    std::vector<double> d;
    for (const auto& lang : languages) {
      const auto& ex = extremes.at(lang);
      d.push_back(subset_distance(store, native, ids_of(ex.top), native, ids_of(ex.bottom)));
    }
    push("Different styles within the same language", "|μ(L, " + hi + ") − μ(L, " + lo + ")|", d);
  }
  {
    std::vector<double> d_hi, d_lo;
    for (std::size_t i = 0; i < languages.size(); ++i) {
      for (std::size_t j = i + 1; j < languages.size(); ++j) {
        const auto& a = extremes.at(languages[i]);
        const auto& b = extremes.at(languages[j]);
        d_hi.push_back(subset_distance(store, native, ids_of(a.top), native, ids_of(b.top)));
        d_lo.push_back(subset_distance(store, native, ids_of(a.bottom), native, ids_of(b.bottom)));
      }
    }
    if (!d_hi.empty()) {
      push("Identical style across different languages", "|μ(L1, " + hi + ") − μ(L2, " + hi + ")|", d_hi);
      push("Identical style across different languages", "|μ(L1, " + lo + ") − μ(L2, " + lo + ")|", d_lo);
    }
  }
  {
    std::vector<double> d_hi, d_lo;
    for (const auto& src : languages) {
      for (const auto& tgt : languages) {
        if (src == tgt) continue;
        const auto scope = translated_scope(src, tgt);
        const auto& a = extremes.at(src);
        const auto& b = extremes.at(tgt);
        auto all_present = [&](const std::vector<const StyleSample*>& xs) {
          return std::all_of(xs.begin(), xs.end(),
                             [&](const StyleSample* s) { return store.contains(scope, s->id); });
        };
        if (store.size(scope) == 0 || !all_present(a.top) || !all_present(a.bottom)) continue;
        d_hi.push_back(subset_distance(store, scope, ids_of(a.top), native, ids_of(b.top)));
        d_lo.push_back(subset_distance(store, scope, ids_of(a.bottom), native, ids_of(b.bottom)));
      }
    }
    if (!d_hi.empty()) {
      const std::string group = "Translated vs. native speaker generated within the same style and language";
      push(group, "|μ(L1→L2, " + hi + ") − μ(L2, " + hi + ")|", d_hi);
      push(group, "|μ(L1→L2, " + lo + ") − μ(L2, " + lo + ")|", d_lo);
    }
  }
  {
    std::mt19937_64 rng(options.seed);
    std::vector<double> d;
    for (int t = 0; t < options.n_random_trials; ++t) {
      const auto& lang = languages[static_cast<std::size_t>(t) % languages.size()];
      auto pool = ids_of(corpus.select(lang, options.split));
      const std::size_t m = extremes.at(lang).top.size();
      if (pool.size() < 2 * m) {
        throw DataError("too few samples in '" + lang + "' for two disjoint random subsets of size " +
                        std::to_string(m));
      }
      std::shuffle(pool.begin(), pool.end(), rng);
      std::vector<std::string> a(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(m));
      std::vector<std::string> b(pool.begin() + static_cast<std::ptrdiff_t>(m),
                                 pool.begin() + static_cast<std::ptrdiff_t>(2 * m));
      std::sort(a.begin(), a.end());
      std::sort(b.begin(), b.end());
      d.push_back(subset_distance(store, native, a, native, b));
    }
    if (!d.empty()) push("Baseline: random subsets of identical size", "|X_rand − X_rand|", d);
  }
  return report;
}

std::string DistanceReport::render() const {
  std::string out;
  std::string current;
  for (const auto& row : rows) {
    if (row.group != current) {
      current = row.group;
      out += current + "\n";
    }
    char buf[64];
    std::snprintf(buf, sizeof(buf), " : %.2f ± %.2f", row.mean, row.std);
    out += "  " + row.label + buf + "\n";
  }
  return out;
}

}  // namespace stylealign
