#include "stylealign/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <mutex>

#include "stylealign/error.hpp"
#include "stylealign/io.hpp"

namespace stylealign {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::set<std::string> kConfigKeys = {
    "corpus",    "style",   "n_bins",   "k",         "align_mode", "min_support", "providers",
    "offline_scores", "templates", "language_names", "testbed", "variants", "seed",  "out",
    "decimals",  "correlation_grouping", "workers"};

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

std::string method_name(Variant v) {
  switch (v) {
    case Variant::Vanilla: return "Vanilla";
    case Variant::Preserve: return "Preserve";
    case Variant::Rasta: return "RASTA";
  }
  return "";
}

ProviderConfig testbed_provider(const std::string& model_id) {
  ProviderConfig c;
  c.kind = "testbed";
  c.model_id = model_id;
  return c;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

std::string pair_name(const std::string& s, const std::string& t) { return s + "->" + t; }

}  // namespace

// ---------------------------------------------------------------------------
// RunConfig

void RunConfig::validate() const {
  if (corpus_paths.empty() && !testbed) throw ConfigError("config names no corpus and no testbed spec");
  if (n_bins < 2) throw ConfigError("n_bins must be >= 2");
  if (k < 1) throw ConfigError("k must be >= 1");
  if (decimals < 0 || decimals > 8) throw ConfigError("decimals must lie in [0, 8]");
  if (variants.empty()) throw ConfigError("no variants selected");
  for (const auto* p : {&embedding, &translator, &scorer, &judge, &qe}) {
    if (*p) p->value().validate();
  }
  if (testbed) testbed->validate();
  for (const auto& [code, name] : language_names) {
    if (name.empty()) throw ConfigError("empty display name for '" + code + "'");
  }
}

json RunConfig::to_json() const {
  json providers = json::object();
  const std::pair<const char*, const std::optional<ProviderConfig>*> named[] = {
      {"embedding", &embedding}, {"translator", &translator}, {"scorer", &scorer}, {"judge", &judge}, {"qe", &qe}};
  for (const auto& [name, p] : named) {
    if (*p) providers[name] = p->value().to_json();
  }
  std::vector<std::string> corpus;
  for (const auto& p : corpus_paths) corpus.push_back(p.string());
  std::vector<std::string> vs;
  for (auto v : variants) vs.emplace_back(to_string(v));
  json j = {{"corpus", corpus},
            {"style", style_name},
            {"n_bins", n_bins},
            {"k", k},
            {"align_mode", std::string(stylealign::to_string(align_mode))},
            {"min_support", min_support},
            {"providers", providers},
            {"language_names", language_names},
            {"variants", vs},
            {"seed", seed},
            {"out", out_dir.string()},
            {"decimals", decimals},
            {"correlation_grouping",
             correlation_grouping == CorrelationGrouping::PerPair ? "per-pair" : "per-pair-model"},
            {"workers", workers}};
  j["offline_scores"] = offline_scores ? json(offline_scores->string()) : json(nullptr);
  j["templates"] = templates_dir ? json(templates_dir->string()) : json(nullptr);
  j["testbed"] = testbed ? testbed->to_json() : json(nullptr);
  return j;
}

RunConfig RunConfig::from_json(const json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!kConfigKeys.count(key)) throw ConfigError("unknown config key '" + key + "'");
  }
  RunConfig c;
  try {
    if (j.contains("corpus")) {
      const auto& cj = j.at("corpus");
      if (cj.is_string()) {
        c.corpus_paths.push_back(resolve(base_dir, cj.get<std::string>()));
      } else {
        for (const auto& p : cj) c.corpus_paths.push_back(resolve(base_dir, p.get<std::string>()));
      }
    }
    c.style_name = j.value("style", c.style_name);
    c.n_bins = j.value("n_bins", c.n_bins);
    c.k = j.value("k", c.k);
    if (j.contains("align_mode")) c.align_mode = parse_align_mode(j.at("align_mode").get<std::string>());
    c.min_support = j.value("min_support", c.min_support);
    if (j.contains("providers")) {
      const auto& pj = j.at("providers");
      const std::pair<const char*, std::optional<ProviderConfig>*> named[] = {
          {"embedding", &c.embedding}, {"translator", &c.translator}, {"scorer", &c.scorer},
          {"judge", &c.judge},         {"qe", &c.qe}};
      for (const auto& [key, value] : pj.items()) {
        bool known = false;
        for (const auto& [name, slot] : named) {
          if (key == name) {
            if (!value.is_null()) *slot = ProviderConfig::from_json(value);
            known = true;
          }
        }
        if (!known) throw ConfigError("unknown provider role '" + key + "'");
      }
    }
    if (j.contains("offline_scores") && !j.at("offline_scores").is_null()) {
      c.offline_scores = resolve(base_dir, j.at("offline_scores").get<std::string>());
    }
    if (j.contains("templates") && !j.at("templates").is_null()) {
      c.templates_dir = resolve(base_dir, j.at("templates").get<std::string>());
    }
    c.language_names = j.value("language_names", c.language_names);
    if (j.contains("testbed") && !j.at("testbed").is_null()) c.testbed = SyntheticSpec::from_json(j.at("testbed"));
    if (j.contains("variants")) {
      c.variants.clear();
      for (const auto& v : j.at("variants")) c.variants.push_back(parse_variant(v.get<std::string>()));
    }
    c.seed = j.value("seed", c.seed);
    if (j.contains("out")) c.out_dir = resolve(base_dir, j.at("out").get<std::string>());
    c.decimals = j.value("decimals", c.decimals);
    if (j.contains("correlation_grouping")) {
      const auto g = j.at("correlation_grouping").get<std::string>();
      if (g == "per-pair") {
        c.correlation_grouping = CorrelationGrouping::PerPair;
      } else if (g == "per-pair-model") {
        c.correlation_grouping = CorrelationGrouping::PerPairModel;
      } else {
        throw ConfigError("unknown correlation_grouping '" + g + "'");
      }
    }
    c.workers = j.value("workers", c.workers);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig RunConfig::load(const fs::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const std::exception& e) {
    throw ConfigError("cannot read config " + path.string() + ": " + e.what());
  }
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return from_json(j, path.parent_path());
}

std::string RunConfig::hash() const {
  json j = to_json();
  // Where results go does not change what they are.
  j.erase("out");
  return sha256_hex(j.dump());
}

// ---------------------------------------------------------------------------
// Reports

bool VariantReport::partial() const {
  return std::any_of(pairs.begin(), pairs.end(), [](const PairOutcome& p) { return p.error.has_value(); });
}

json VariantReport::to_json() const {
  json ps = json::array();
  for (const auto& p : pairs) {
    json pj = p.result.to_json();
    pj["source"] = p.source;
    pj["target"] = p.target;
    pj["widened"] = p.widened;
    if (p.error) pj["error"] = *p.error;
    ps.push_back(pj);
  }
  json cs = json::array();
  for (const auto& c : correlations) cs.push_back(c.to_json());
  return json{{"variant", std::string(to_string(variant))},
              {"partial", partial()},
              {"pairs", ps},
              {"heatmap", heatmap ? heatmap->to_json() : json(nullptr)},
              {"correlations", cs},
              {"widening_events", widening_events}};
}

bool EvaluationReport::partial() const {
  return std::any_of(variants.begin(), variants.end(), [](const auto& kv) { return kv.second.partial(); });
}

json EvaluationReport::to_json() const {
  json vs = json::object();
  for (const auto& [v, r] : variants) vs[std::string(to_string(v))] = r.to_json();
  json ds = json::object();
  for (const auto& [key, d] : distributions) ds[key] = d.to_json();
  return json{{"style", style_name},
              {"languages", languages},
              {"n_bins", n_bins},
              {"k", k},
              {"align_mode", std::string(stylealign::to_string(align_mode))},
              {"partial", partial()},
              {"variants", vs},
              {"distributions", ds},
              {"table", table ? table->to_json() : json(nullptr)},
              {"std_change", std_change ? json(*std_change) : json(nullptr)},
              {"hygiene",
               {{"test_ids", hygiene.test_ids},
                {"centroid_ids", hygiene.centroid_ids},
                {"exemplar_ids", hygiene.exemplar_ids},
                {"violations", hygiene.violations}}},
              {"manifest", manifest},
              {"notes", notes}};
}

std::string EvaluationReport::render_text() const {
  std::string out;
  if (partial()) {
    out += "*** INCOMPLETE RESULTS: the following pairs failed and are excluded ***\n";
    for (const auto& [v, r] : variants) {
      for (const auto& p : r.pairs) {
        if (p.error) out += "  " + std::string(to_string(v)) + " " + pair_name(p.source, p.target) + ": " + *p.error + "\n";
      }
    }
    out += "\n";
  }
  out += "Style alignment report: " + style_name + " (" + std::to_string(n_bins) + " bins, k=" + std::to_string(k) +
         ", " + std::string(stylealign::to_string(align_mode)) + ")\n\n";
  if (table) {
    out += table->render();
  } else {
    out += "(no comparison table)\n";
  }
  out += "\nPer-pair style alignment\n";
  char line[256];
  std::snprintf(line, sizeof(line), "%-9s %-7s %-7s %7s %9s\n", "variant", "source", "target", "n", "A");
  out += line;
  for (const auto& [v, r] : variants) {
    for (const auto& p : r.pairs) {
      std::string a = p.error ? "failed" : (p.result.A ? fmt("%.4f", *p.result.A) : "undefined");
      std::snprintf(line, sizeof(line), "%-9s %-7s %-7s %7zu %9s\n", std::string(to_string(v)).c_str(),
                    p.source.c_str(), p.target.c_str(), p.result.n, a.c_str());
      out += line;
    }
  }
  out += "\nScore distributions\n";
  std::snprintf(line, sizeof(line), "%-18s %7s %7s %7s %8s %7s %7s\n", "scope", "n", "mean", "std", "neutral", "low",
                "high");
  out += line;
  for (const auto& [key, d] : distributions) {
    std::snprintf(line, sizeof(line), "%-18s %7zu %7.3f %7.3f %8.3f %7.3f %7.3f\n", key.c_str(), d.n, d.mean, d.std,
                  d.neutral_fraction, d.low_extreme_fraction, d.high_extreme_fraction);
    out += line;
  }
  if (std_change) out += "\nTranslated std change, rasta vs vanilla: " + format_delta(*std_change * 100.0) + "\n";
  for (const auto& [v, r] : variants) {
    if (r.correlations.empty()) continue;
    out += "\nMetric correlations (" + std::string(to_string(v)) + ")\n";
    for (const auto& c : r.correlations) {
      if (c.r) {
        std::snprintf(line, sizeof(line), "  %s ~ %s: r = %.3f%s (p = %.4f, n = %zu)\n", c.x.c_str(), c.y.c_str(), *c.r,
                      c.significant ? "*" : "", *c.p_value, c.n);
      } else {
        std::snprintf(line, sizeof(line), "  %s ~ %s: undefined (n = %zu)\n", c.x.c_str(), c.y.c_str(), c.n);
      }
      out += line;
    }
  }
  for (const auto& [v, r] : variants) {
    if (r.widening_events > 0) {
      out += "\n" + std::string(to_string(v)) + ": " + std::to_string(r.widening_events) +
             " retrievals widened to neighbouring style levels\n";
    }
  }
  out += "\nTrain/test hygiene: " + std::to_string(hygiene.test_ids) + " test ids, " +
         std::to_string(hygiene.centroid_ids) + " centroid ids, " + std::to_string(hygiene.exemplar_ids) +
         " exemplar ids, " + std::to_string(hygiene.violations) + " overlaps\n";
  for (const auto& n : notes) out += "note: " + n + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Pipeline

struct Pipeline::State {
  std::optional<StyleCorpus> corpus;
  int n_bins = 0;
  PromptTemplates templates;
  std::optional<EmbeddingCache> embedding_cache;
  std::optional<EmbeddingStore> store;
  bool native_embedded = false;
  std::unique_ptr<TranslatorClient> translator;
  std::unique_ptr<ScorerClient> scorer;
  std::unique_ptr<QualityClient> judge;
  std::unique_ptr<QualityClient> qe;
  bool quality_ready = false;
  std::optional<std::map<std::pair<std::string, std::string>, PairMappings>> mappings;
  std::optional<ExemplarIndex> index;
  std::set<std::string> centroid_ids;
  std::set<std::string> exemplar_ids;
  std::map<std::string, std::map<std::string, double>> original_scores;
  std::map<Variant, std::vector<PairTranslations>> translations;
  std::map<Variant, VariantReport> scored;
};

Pipeline::Pipeline(RunConfig cfg, Logger log) : Pipeline(std::move(cfg), Providers{}, std::move(log)) {}

Pipeline::Pipeline(RunConfig cfg, Providers providers, Logger log)
    : cfg_(std::move(cfg)), providers_(std::move(providers)), log_(std::move(log)), state_(std::make_unique<State>()) {
  cfg_.validate();
  if (cfg_.testbed) {
    if (!cfg_.translator) cfg_.translator = testbed_provider("testbed-translator");
    if (!cfg_.scorer && !cfg_.offline_scores) cfg_.scorer = testbed_provider("testbed-scorer");
    if (!cfg_.embedding) cfg_.embedding = testbed_provider("testbed-embed");
    world_ = std::make_shared<SyntheticWorld>(generate(*cfg_.testbed));
  }
  state_->templates = cfg_.templates_dir ? PromptTemplates::load(*cfg_.templates_dir) : PromptTemplates::builtin();
  std::error_code ec;
  fs::create_directories(cfg_.out_dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + cfg_.out_dir.string() + ": " + ec.message());
}

Pipeline::~Pipeline() = default;

void Pipeline::log(const std::string& message) const {
  if (log_) log_(message);
}

const StyleCorpus& Pipeline::corpus() {
  if (!state_->corpus) {
    StyleCorpus c = cfg_.corpus_paths.empty() ? world_->corpus() : load_corpora(cfg_.corpus_paths);
    if (!cfg_.style_name.empty() && !c.style_name().empty() && c.style_name() != cfg_.style_name) {
      throw ConfigError("corpus style '" + c.style_name() + "' does not match --style '" + cfg_.style_name + "'");
    }
    if (c.style_name().empty()) {
      if (cfg_.style_name.empty()) throw ConfigError("no style name in corpus or config");
      c = StyleCorpus(cfg_.style_name, c.samples());
    }
    if (c.languages().size() < 2) throw DataError("corpus needs at least 2 languages");
    for (const auto& lang : c.languages()) display_name(lang, cfg_.language_names);
    state_->n_bins = resolve_bins(c, cfg_.n_bins);
    if (state_->n_bins != cfg_.n_bins) {
      log("binary labels detected: using " + std::to_string(state_->n_bins) + " style levels");
    }
    state_->corpus = std::move(c);
    hygiene_.test_ids = state_->corpus->ids(Split::Test).size();
  }
  return *state_->corpus;
}

int Pipeline::n_bins() {
  corpus();
  return state_->n_bins;
}

void Pipeline::ingest() {
  const auto& c = corpus();
  save_corpus(c, cfg_.out_dir / "corpus.jsonl");
  for (const auto& lang : c.languages()) {
    log(lang + ": " + std::to_string(c.select(lang, Split::Train).size()) + " train, " +
        std::to_string(c.select(lang, Split::Test).size()) + " test");
  }
}

std::size_t Pipeline::workers(const ProviderConfig& cfg) const {
  return cfg_.workers > 0 ? cfg_.workers : cfg.max_in_flight;
}

EmbeddingBackend& Pipeline::embedding_backend() {
  if (!providers_.embedding) {
    if (!cfg_.embedding) throw ConfigError("no embedding provider configured");
    if (cfg_.embedding->kind == "testbed") {
      if (!world_) throw ConfigError("testbed embedding provider needs a testbed spec");
      providers_.embedding = std::make_shared<MockEmbedding>(world_);
    } else {
      providers_.embedding = std::make_shared<HttpEmbeddingBackend>(*cfg_.embedding);
    }
  }
  return *providers_.embedding;
}

EmbeddingCache& Pipeline::embedding_cache() {
  if (!state_->embedding_cache) {
    state_->embedding_cache =
        EmbeddingCache::load_or_create(cfg_.out_dir / "embeddings.bin", embedding_backend().model_id());
  }
  return *state_->embedding_cache;
}

std::vector<Vec> Pipeline::embed_texts(const std::vector<std::string>& texts) {
  const ProviderConfig pc = cfg_.embedding ? *cfg_.embedding : testbed_provider(embedding_backend().model_id());
  EmbedOptions opt;
  opt.batch_size = pc.batch_size;
  opt.max_in_flight = workers(pc);
  opt.retry = pc.retry_policy();
  return embed_batch(texts, embedding_backend(), embedding_cache(), opt);
}

TranslatorClient& Pipeline::translator() {
  if (!state_->translator) {
    ProviderConfig pc = cfg_.translator ? *cfg_.translator : testbed_provider("custom-translator");
    if (!providers_.translator) {
      if (!cfg_.translator) throw ConfigError("no translator provider configured");
      if (pc.kind == "testbed") {
        if (!world_) throw ConfigError("testbed translator needs a testbed spec");
        providers_.translator = std::make_shared<MockTranslator>(world_, world_->spec().distortion, cfg_.language_names);
      } else {
        providers_.translator = std::make_shared<HttpCompletionBackend>(pc);
      }
    }
    auto cache = std::make_shared<JsonlCache>(cfg_.out_dir / "translations.jsonl");
    state_->translator = std::make_unique<TranslatorClient>(providers_.translator, pc, cache);
  }
  return *state_->translator;
}

ScorerClient& Pipeline::scorer() {
  if (!state_->scorer) {
    ProviderConfig pc = cfg_.scorer ? *cfg_.scorer : testbed_provider("offline-table");
    if (!providers_.scorer) {
      if (cfg_.offline_scores) {
        providers_.scorer = std::make_shared<OfflineScoreTable>(OfflineScoreTable::load(*cfg_.offline_scores));
      } else if (!cfg_.scorer) {
        throw ConfigError("no scorer provider or offline score table configured");
      } else if (pc.kind == "testbed") {
        if (!world_) throw ConfigError("testbed scorer needs a testbed spec");
        providers_.scorer = std::make_shared<MockScorer>(world_);
      } else {
        providers_.scorer = std::make_shared<HttpScorerBackend>(pc);
      }
    }
    const auto& langs = corpus().languages();
    auto cache = std::make_shared<JsonlCache>(cfg_.out_dir / "scores.jsonl");
    state_->scorer = std::make_unique<ScorerClient>(providers_.scorer, pc, langs, cache);
  }
  return *state_->scorer;
}

const TranslatorClient& Pipeline::translator_client() { return translator(); }
const ScorerClient& Pipeline::scorer_client() { return scorer(); }

const EmbeddingStore& Pipeline::embed() {
  if (state_->native_embedded) return *state_->store;
  const auto& c = corpus();
  std::vector<std::string> texts;
  texts.reserve(c.size());
  for (const auto& s : c.samples()) texts.push_back(s.text);
  auto vectors = embed_texts(texts);
  const std::size_t dim = vectors.empty() ? 0 : vectors.front().size();
  EmbeddingStore store(embedding_backend().model_id(), dim);
  for (std::size_t i = 0; i < c.samples().size(); ++i) store.add(native_scope(), c.samples()[i].id, std::move(vectors[i]));
  state_->store = std::move(store);
  state_->native_embedded = true;
  embedding_cache().save(cfg_.out_dir / "embeddings.bin");
  log("embedded " + std::to_string(c.size()) + " native samples (dim " + std::to_string(dim) + ")");
  return *state_->store;
}

PromptRequest Pipeline::base_request(Variant variant, const StyleSample& sample, const std::string& target) {
  PromptRequest req;
  req.variant = variant;
  req.text = sample.text;
  req.source_language = display_name(sample.language, cfg_.language_names);
  req.target_language = display_name(target, cfg_.language_names);
  req.style_name = corpus().style_name();
  req.style_label = sample.style_label;
  req.k = cfg_.k;
  return req;
}

void Pipeline::check_hygiene(const std::set<std::string>& ids, const char* what) {
  const auto test = corpus().ids(Split::Test);
  std::vector<std::string> overlap;
  std::set_intersection(ids.begin(), ids.end(), test.begin(), test.end(), std::back_inserter(overlap));
  if (!overlap.empty()) {
    hygiene_.violations += overlap.size();
    throw Error(std::string("train/test hygiene violation: test sample '") + overlap.front() + "' used in " + what +
                " (" + std::to_string(overlap.size()) + " ids)");
  }
}

const std::map<std::pair<std::string, std::string>, PairMappings>& Pipeline::mappings() {
  if (state_->mappings) return *state_->mappings;
  const auto& c = corpus();
  embed();
  std::map<std::pair<std::string, std::string>, PairMappings> out;
  const fs::path dir = cfg_.out_dir / "mappings";
  fs::create_directories(dir);
  for (const auto& src : c.languages()) {
    const auto train = c.select(src, Split::Train);
    for (const auto& tgt : c.languages()) {
      if (src == tgt) continue;
      std::vector<std::string> prompts(train.size());
      std::vector<TranslationRecord> records(train.size());
      for (std::size_t i = 0; i < train.size(); ++i) {
        prompts[i] = render_prompt(base_request(Variant::Vanilla, *train[i], tgt), state_->templates);
        records[i] = {train[i]->id, src, tgt, "vanilla", {}, {}, {}, {}};
      }
      std::vector<std::string> texts(train.size());
      std::vector<Vec> vectors;
      try {
        parallel_for(train.size(), workers(translator().config()),
                     [&](std::size_t i) { texts[i] = translator().translate(prompts[i], &records[i]); });
        vectors = embed_texts(texts);
      } catch (const ProviderError& e) {
        mapping_errors_[{src, tgt}] = e.what();
        log("mappings " + pair_name(src, tgt) + " failed: " + e.what());
        continue;
      }
      const auto scope = translated_scope(src, tgt);
      for (std::size_t i = 0; i < train.size(); ++i) {
        if (!state_->store->contains(scope, train[i]->id)) state_->store->add(scope, train[i]->id, std::move(vectors[i]));
      }
      auto pm = learn_pair_mappings(c, *state_->store, src, tgt, state_->n_bins, cfg_.min_support);
      check_hygiene(pm.contributing_ids, "a centroid");
      state_->centroid_ids.insert(pm.contributing_ids.begin(), pm.contributing_ids.end());
      for (const auto& m : pm.merges) {
        std::string levels;
        for (int l : m.pooled_levels) levels += (levels.empty() ? "" : ",") + std::to_string(l);
        log("mappings " + pair_name(src, tgt) + ": level " + std::to_string(m.level) + " pooled with levels " + levels);
      }
      write_file_atomic(dir / (c.style_name() + "_" + src + "_" + tgt + ".json"), stylealign::to_json(pm).dump(2) + "\n");
      out.emplace(std::make_pair(src, tgt), std::move(pm));
    }
  }
  hygiene_.centroid_ids = state_->centroid_ids.size();
  embedding_cache().save(cfg_.out_dir / "embeddings.bin");
  state_->mappings = std::move(out);
  return *state_->mappings;
}

json Pipeline::centroids() {
  const auto& c = corpus();
  const auto& maps = mappings();
  const auto& store = *state_->store;
  json natives = json::array();
  for (const auto& lang : c.languages()) {
    std::map<int, std::vector<const Vec*>> by_level;
    for (const auto* s : c.select(lang, Split::Train)) {
      by_level[bin_style(s->style_label, state_->n_bins).index].push_back(&store.at(native_scope(), s->id));
    }
    for (const auto& [level, vecs] : by_level) {
      natives.push_back({{"language", lang}, {"level", level}, {"scope", native_scope()}, {"count", vecs.size()},
                         {"vector", compute_centroid(vecs)}});
    }
  }
  json translated = json::array();
  for (const auto& [pair, pm] : maps) {
    std::map<int, std::vector<const Vec*>> by_level;
    for (const auto* s : c.select(pair.first, Split::Train)) {
      by_level[bin_style(s->style_label, state_->n_bins).index].push_back(
          &store.at(translated_scope(pair.first, pair.second), s->id));
    }
    for (const auto& [level, vecs] : by_level) {
      translated.push_back({{"language", pair.second},
                            {"level", level},
                            {"scope", translated_scope(pair.first, pair.second)},
                            {"count", vecs.size()},
                            {"vector", compute_centroid(vecs)}});
    }
  }
  json doc = {{"style", c.style_name()}, {"n_bins", state_->n_bins}, {"model_id", store.model_id()},
              {"native", natives}, {"translated", translated}};
  write_file_atomic(cfg_.out_dir / "centroids.json", doc.dump(2) + "\n");
  return doc;
}

const ExemplarIndex& Pipeline::index() {
  if (!state_->index) state_->index = build_index(corpus(), embed(), state_->n_bins);
  return *state_->index;
}

std::vector<Pipeline::PairTranslations> Pipeline::translate(Variant variant) {
  if (auto it = state_->translations.find(variant); it != state_->translations.end()) return it->second;
  const auto& c = corpus();
  if (variant == Variant::Rasta) {
    mappings();
    index();
  }
  std::vector<PairTranslations> results;
  for (const auto& src : c.languages()) {
    const auto tests = c.select(src, Split::Test);
    for (const auto& tgt : c.languages()) {
      if (src == tgt) continue;
      PairTranslations pt{src, tgt, {}, 0, std::nullopt};
      if (variant == Variant::Rasta) {
        if (auto err = mapping_errors_.find({src, tgt}); err != mapping_errors_.end()) {
          pt.error = "mappings unavailable: " + err->second;
          results.push_back(std::move(pt));
          continue;
        }
      }
      std::vector<std::string> prompts(tests.size());
      std::vector<TranslationRecord> records(tests.size());
      std::set<std::string> exemplar_ids;
      for (std::size_t i = 0; i < tests.size(); ++i) {
        const StyleSample& s = *tests[i];
        PromptRequest req = base_request(variant, s, tgt);
        if (variant == Variant::Rasta) {
          const auto& pm = state_->mappings->at({src, tgt});
          const StyleLevel level = bin_style(s.style_label, state_->n_bins);
          auto m = pm.levels.find(level.index);
          if (m == pm.levels.end()) {
            std::string gaps;
            for (int g : pm.gaps) gaps += (gaps.empty() ? "" : ",") + std::to_string(g);
            throw DataError("no mapping for " + pair_name(src, tgt) + " level " + std::to_string(level.index) +
                            " after pooling (gaps: " + gaps + ")");
          }
          const Vec query = align_embedding(state_->store->at(native_scope(), s.id), m->second, cfg_.align_mode);
          const ExemplarSet ex = index().retrieve(query, tgt, level, cfg_.k);
          if (ex.widened()) {
            ++pt.widened;
            log("retrieval for " + s.id + " into " + tgt + " widened to " + std::to_string(ex.levels.size()) + " levels");
          }
          for (const auto& e : ex.exemplars) exemplar_ids.insert(e.id);
          req.exemplars = exemplar_texts(ex);
        }
        prompts[i] = render_prompt(req, state_->templates);
        records[i] = {s.id, src, tgt, std::string(to_string(variant)), {}, {}, {}, {}};
      }
      check_hygiene(exemplar_ids, "an exemplar set");
      state_->exemplar_ids.insert(exemplar_ids.begin(), exemplar_ids.end());
      std::vector<std::string> out(tests.size());
      try {
        parallel_for(tests.size(), workers(translator().config()),
                     [&](std::size_t i) { out[i] = translator().translate(prompts[i], &records[i]); });
      } catch (const ProviderError& e) {
        pt.error = e.what();
        log(std::string(to_string(variant)) + " " + pair_name(src, tgt) + " failed: " + e.what());
        results.push_back(std::move(pt));
        continue;
      }
      for (std::size_t i = 0; i < tests.size(); ++i) pt.translations[tests[i]->id] = std::move(out[i]);
      results.push_back(std::move(pt));
    }
  }
  hygiene_.exemplar_ids = state_->exemplar_ids.size();
  state_->translations[variant] = results;
  return results;
}

VariantReport Pipeline::score(Variant variant) {
  if (auto it = state_->scored.find(variant); it != state_->scored.end()) return it->second;
  const auto trs = translate(variant);
  const auto& c = corpus();
  const std::string& style = c.style_name();

  if (!state_->quality_ready) {
    state_->quality_ready = true;
    auto make = [&](const std::optional<ProviderConfig>& pc, std::shared_ptr<QualityBackend>& backend,
                    QualityMetric metric, const char* cache_name) -> std::unique_ptr<QualityClient> {
      if (!backend && !pc) return nullptr;
      ProviderConfig cfg = pc ? *pc : testbed_provider("custom-quality");
      if (!backend) {
        if (cfg.kind == "testbed") {
          if (!world_) throw ConfigError("testbed quality provider needs a testbed spec");
          backend = std::make_shared<MockQuality>(world_, metric);
        } else if (metric == QualityMetric::GembaJudge) {
          backend = std::make_shared<GembaJudge>(std::make_shared<HttpCompletionBackend>(cfg), cfg);
        } else {
          backend = std::make_shared<HttpQeBackend>(cfg);
        }
      }
      return std::make_unique<QualityClient>(backend, cfg, std::make_shared<JsonlCache>(cfg_.out_dir / cache_name));
    };
    state_->judge = make(cfg_.judge, providers_.judge, QualityMetric::GembaJudge, "quality_judge.jsonl");
    state_->qe = make(cfg_.qe, providers_.qe, QualityMetric::ExternalQe, "quality_qe.jsonl");
  }

  VariantReport vr;
  vr.variant = variant;
  std::map<std::string, std::string> original_errors;
  for (const auto& pt : trs) {
    PairOutcome po;
    po.source = pt.source;
    po.target = pt.target;
    po.result.source = pt.source;
    po.result.target = pt.target;
    po.widened = pt.widened;
    vr.widening_events += pt.widened;
    if (pt.error) {
      po.error = pt.error;
      vr.pairs.push_back(std::move(po));
      continue;
    }
    try {
      if (!state_->original_scores.count(pt.source)) {
        const auto tests = c.select(pt.source, Split::Test);
        std::vector<ScoreRequest> reqs;
        for (const auto* s : tests) reqs.push_back({s->id, s->text, s->language, style});
        const auto scores = scorer().score_all(reqs);
        std::map<std::string, double> m;
        for (std::size_t i = 0; i < tests.size(); ++i) m[tests[i]->id] = scores[i];
        state_->original_scores[pt.source] = std::move(m);
      }
      const auto& originals = state_->original_scores.at(pt.source);
      std::vector<ScoreRequest> reqs;
      std::vector<std::string> ids;
      for (const auto& [id, text] : pt.translations) {
        reqs.push_back({std::string(to_string(variant)) + "/" + pt.target + "/" + id, text, pt.target, style});
        ids.push_back(id);
      }
      const auto scores = scorer().score_all(reqs);
      for (std::size_t i = 0; i < ids.size(); ++i) {
        po.original_scores[ids[i]] = originals.at(ids[i]);
        po.translated_scores[ids[i]] = scores[i];
      }
      po.result = alignment_score(po.original_scores, po.translated_scores, pt.source, pt.target);
      const std::pair<const char*, QualityClient*> quality[] = {{"G", state_->judge.get()}, {"QE", state_->qe.get()}};
      for (const auto& [name, client] : quality) {
        if (client == nullptr || ids.empty()) continue;
        std::vector<double> q(ids.size());
        const std::string sname = display_name(pt.source, cfg_.language_names);
        const std::string tname = display_name(pt.target, cfg_.language_names);
        parallel_for(ids.size(), cfg_.workers > 0 ? cfg_.workers : 4, [&](std::size_t i) {
          q[i] = client->quality_score({c.at(ids[i]).text, pt.translations.at(ids[i]), sname, tname});
        });
        double sum = 0.0;
        for (double v : q) sum += v;
        po.result.mean_quality_scores[name] = sum / static_cast<double>(q.size());
      }
    } catch (const ProviderError& e) {
      po.error = std::string("scoring failed: ") + e.what();
      po.original_scores.clear();
      po.translated_scores.clear();
      log(std::string(to_string(variant)) + " " + pair_name(pt.source, pt.target) + " " + *po.error);
    }
    vr.pairs.push_back(std::move(po));
  }

  std::vector<AlignmentResult> results;
  std::vector<PairMetrics> rows;
  for (const auto& p : vr.pairs) {
    if (p.error) continue;
    results.push_back(p.result);
    const auto& q = p.result.mean_quality_scores;
    if (p.result.A && q.count("G") && q.count("QE")) {
      rows.push_back({p.source, p.target, translator().config().model_id, *p.result.A, q.at("G"), q.at("QE")});
    }
  }
  if (results.size() >= 2) {
    try {
      vr.heatmap = build_heatmap(results);
    } catch (const DataError& e) {
      log(std::string("heatmap skipped: ") + e.what());
    }
  }
  if (rows.size() >= 4) vr.correlations = metric_correlation(rows, cfg_.correlation_grouping);
  state_->scored[variant] = vr;
  return vr;
}

VariantReport Pipeline::run_baseline(Variant variant) {
  if (variant == Variant::Rasta) throw ConfigError("run_baseline takes vanilla or preserve");
  return score(variant);
}

VariantReport Pipeline::run_rasta() { return score(Variant::Rasta); }

json Pipeline::manifest() {
  json providers = json::object();
  providers["translator"] = cfg_.translator ? json(cfg_.translator->model_id) : json(nullptr);
  if (cfg_.translator) {
    providers["translator_sampling"] = {{"temperature", cfg_.translator->temperature},
                                        {"top_p", cfg_.translator->top_p}};
  }
  providers["scorer"] = state_->scorer ? json(state_->scorer->model_id())
                                       : (cfg_.scorer ? json(cfg_.scorer->model_id) : json(nullptr));
  providers["embedding"] = state_->native_embedded ? json(state_->store->model_id())
                                                   : (cfg_.embedding ? json(cfg_.embedding->model_id) : json(nullptr));
  providers["judge"] = state_->judge ? json(state_->judge->model_id()) : json(nullptr);
  providers["qe"] = state_->qe ? json(state_->qe->model_id()) : json(nullptr);
  json inputs = json::object();
  for (const auto& p : cfg_.corpus_paths) inputs[p.filename().string()] = git_blob_hash(read_file(p));
  if (cfg_.offline_scores) inputs[cfg_.offline_scores->filename().string()] = git_blob_hash(read_file(*cfg_.offline_scores));
  json templates = {{"vanilla", git_blob_hash(state_->templates.vanilla)},
                    {"preserve", git_blob_hash(state_->templates.preserve)},
                    {"rasta", git_blob_hash(state_->templates.rasta)}};
  json m = {{"config_hash", cfg_.hash()}, {"providers", providers}, {"inputs", inputs},
            {"templates", templates},     {"seed", cfg_.seed},        {"n_bins", state_->n_bins}};
  if (cfg_.testbed) m["testbed"] = cfg_.testbed->to_json();
  return m;
}

EvaluationReport Pipeline::evaluate(const std::vector<Variant>& variants) {
  const auto& c = corpus();
  EvaluationReport r;
  r.style_name = c.style_name();
  r.languages.assign(c.languages().begin(), c.languages().end());
  r.n_bins = state_->n_bins;
  r.k = cfg_.k;
  r.align_mode = cfg_.align_mode;
  for (auto v : variants) r.variants[v] = score(v);

  for (const auto& [lang, scores] : state_->original_scores) {
    std::vector<double> xs;
    for (const auto& [id, s] : scores) xs.push_back(s);
    if (!xs.empty()) r.distributions[lang + "/native"] = distribution_stats(xs);
  }
  for (const auto& [v, vr] : r.variants) {
    std::map<std::string, std::vector<double>> by_target;
    for (const auto& p : vr.pairs) {
      if (p.error) continue;
      for (const auto& [id, s] : p.translated_scores) by_target[p.target].push_back(s);
    }
    for (const auto& [tgt, xs] : by_target) {
      if (!xs.empty()) r.distributions[tgt + "/" + std::string(to_string(v))] = distribution_stats(xs);
    }
  }

  // Comparison table: per target language, A (and quality means) averaged over sources.
  if (r.variants.count(Variant::Rasta) && r.variants.size() >= 2) {
    std::vector<std::string> langs;
    for (const auto& l : r.languages) langs.push_back(display_name(l, cfg_.language_names));
    std::vector<MethodScores> baselines;
    MethodScores rasta;
    bool complete = true;
    std::set<std::string> metrics = {"A"};
    for (const auto& [v, vr] : r.variants) {
      for (const auto& p : vr.pairs) {
        for (const auto& [name, value] : p.result.mean_quality_scores) metrics.insert(name);
      }
    }
    for (auto v : {Variant::Vanilla, Variant::Preserve, Variant::Rasta}) {
      auto it = r.variants.find(v);
      if (it == r.variants.end()) continue;
      MethodScores ms;
      ms.name = method_name(v);
      for (const auto& metric : metrics) {
        for (const auto& tgt : r.languages) {
          double sum = 0.0;
          int n = 0;
          for (const auto& p : it->second.pairs) {
            if (p.target != tgt || p.error) continue;
            if (metric == "A") {
              if (!p.result.A) continue;
              sum += *p.result.A;
            } else {
              auto q = p.result.mean_quality_scores.find(metric);
              if (q == p.result.mean_quality_scores.end()) continue;
              sum += q->second;
            }
            ++n;
          }
          if (n == 0) {
            complete = false;
            continue;
          }
          ms.values[metric][display_name(tgt, cfg_.language_names)] = sum / n;
        }
      }
      if (v == Variant::Rasta) {
        rasta = std::move(ms);
      } else {
        baselines.push_back(std::move(ms));
      }
    }
    if (complete) {
      r.table = report_table(r.style_name, langs, baselines, rasta, cfg_.decimals);
    } else {
      r.notes.push_back("comparison table omitted: some target languages have no defined values");
    }
  }

  if (r.variants.count(Variant::Vanilla) && r.variants.count(Variant::Rasta)) {
    std::vector<double> before;
    std::vector<double> after;
    for (const auto& l : r.languages) {
      auto b = r.distributions.find(l + "/vanilla");
      auto a = r.distributions.find(l + "/rasta");
      if (b == r.distributions.end() || a == r.distributions.end()) continue;
      before.push_back(b->second.std);
      after.push_back(a->second.std);
    }
    try {
      if (!before.empty()) r.std_change = relative_std_change(before, after);
    } catch (const UndefinedStatistic&) {
      r.notes.push_back("std change undefined: a vanilla translation distribution has zero spread");
    }
  }
  r.hygiene = hygiene_;
  r.manifest = manifest();
  if (r.partial()) r.notes.push_back("report is partial; re-run to resume from the caches");
  return r;
}

void Pipeline::emit_report(const EvaluationReport& report, const std::set<std::string>& formats) {
  for (const auto& f : formats) {
    if (f != "json" && f != "text" && f != "csv") throw ConfigError("unknown report format '" + f + "'");
  }
  const fs::path& dir = cfg_.out_dir;
  if (formats.count("json")) {
    write_file_atomic(dir / "report.json", report.to_json().dump(2) + "\n");
    write_file_atomic(dir / "manifest.json", report.manifest.dump(2) + "\n");
  }
  if (formats.count("text")) write_file_atomic(dir / "report.txt", report.render_text());
  if (formats.count("csv")) {
    for (const auto& [v, vr] : report.variants) {
      if (!vr.heatmap) continue;
      const std::string stem = "heatmap_" + std::string(to_string(v));
      write_file_atomic(dir / (stem + ".csv"), vr.heatmap->to_csv());
      write_file_atomic(dir / (stem + "_flags.csv"), vr.heatmap->flags_csv());
    }
  }
}

}  // namespace stylealign
