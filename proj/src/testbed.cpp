#include "stylealign/testbed.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <regex>

#include "stylealign/error.hpp"
#include "stylealign/io.hpp"
#include "stylealign/prompting.hpp"

namespace stylealign {

using nlohmann::json;

namespace {

/// Seed derived from the run seed and a string key, independent of generation order.
std::uint64_t derive_seed(std::uint64_t seed, const std::string& key) {
  const std::string h = sha256_hex(std::to_string(seed) + "|" + key);
  return std::stoull(h.substr(0, 16), nullptr, 16);
}

std::string offset_key(const std::string& source, const std::string& target, int level) {
  return source + ">" + target + ":" + std::to_string(level);
}

Vec random_unit(std::mt19937_64& rng, std::size_t dim, std::size_t first) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec v(dim, 0.0);
  double norm2 = 0.0;
  while (norm2 == 0.0) {
    for (std::size_t i = first; i < dim; ++i) {
      v[i] = normal(rng);
      norm2 += v[i] * v[i];
    }
  }
  const double norm = std::sqrt(norm2);
  for (auto& x : v) x /= norm;
  return v;
}

struct SynToken {
  std::string language;
  int level = 0;
  std::size_t ordinal = 0;
};

std::vector<SynToken> syn_tokens(const std::string& text) {
  static const std::regex re(R"(syn:([a-z]{2}):(\d+):(\d+))");
  std::vector<SynToken> out;
  for (auto it = std::sregex_iterator(text.begin(), text.end(), re); it != std::sregex_iterator(); ++it) {
    out.push_back({(*it)[1].str(), std::stoi((*it)[2].str()), std::stoul((*it)[3].str())});
  }
  return out;
}

struct TrToken {
  std::string target;
  std::string source_id;
  double label = 0.0;
};

std::optional<TrToken> parse_tr(const std::string& text) {
  static const std::regex re(R"(^tr:([a-z]{2}):([a-z]{2}-\d+-\d+):(\S+)$)");
  std::smatch m;
  if (!std::regex_match(text, m, re)) return std::nullopt;
  try {
    return TrToken{m[1].str(), m[2].str(), std::stod(m[3].str())};
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

double native_label(const SyntheticWorld& world, const std::string& text) {
  const auto toks = syn_tokens(text);
  if (toks.size() != 1 || text != SyntheticWorld::sample_text(toks[0].language, toks[0].level, toks[0].ordinal)) {
    throw ParseError("not a synthetic sample token", text);
  }
  const auto* s = world.corpus().find(SyntheticWorld::sample_id(toks[0].language, toks[0].level, toks[0].ordinal));
  if (s == nullptr) throw ParseError("unknown synthetic sample", text);
  return s->style_label;
}

double token_label(const SyntheticWorld& world, const std::string& text) {
  if (auto tr = parse_tr(text)) return tr->label;
  return native_label(world, text);
}

}  // namespace

// ---------------------------------------------------------------------------
// Distortion / spec

json Distortion::to_json() const {
  switch (kind) {
    case DistortionKind::Identity: return json{{"kind", "identity"}};
    case DistortionKind::Shrink: return json{{"kind", "shrink"}, {"lambda", lambda}};
    case DistortionKind::Gaussian: return json{{"kind", "gaussian"}, {"sigma", sigma}};
    case DistortionKind::PlantedStyleShift: return json{{"kind", "planted-style-shift"}, {"gamma", gamma}};
  }
  return json{{"kind", "identity"}};
}

Distortion Distortion::from_json(const json& j) {
  if (j.is_string()) return parse(j.get<std::string>());
  Distortion d = parse(j.value("kind", "identity"));
  d.lambda = j.value("lambda", d.lambda);
  d.sigma = j.value("sigma", d.sigma);
  d.gamma = j.value("gamma", d.gamma);
  return d;
}

Distortion Distortion::parse(const std::string& text) {
  const auto colon = text.find(':');
  const std::string name = text.substr(0, colon);
  std::optional<double> arg;
  if (colon != std::string::npos) {
    try {
      arg = std::stod(text.substr(colon + 1));
    } catch (const std::exception&) {
      throw ConfigError("bad distortion parameter in '" + text + "'");
    }
  }
  Distortion d;
  if (name == "identity") {
    d.kind = DistortionKind::Identity;
  } else if (name == "shrink") {
    d.kind = DistortionKind::Shrink;
    if (arg) d.lambda = *arg;
  } else if (name == "gaussian") {
    d.kind = DistortionKind::Gaussian;
    if (arg) d.sigma = *arg;
  } else if (name == "planted-style-shift") {
    d.kind = DistortionKind::PlantedStyleShift;
    if (arg) d.gamma = *arg;
  } else {
    throw ConfigError("unknown distortion '" + text + "'");
  }
  return d;
}

void SyntheticSpec::validate() const {
  if (languages.size() < 2) throw ConfigError("testbed needs at least 2 languages");
  std::set<std::string> seen;
  for (const auto& l : languages) {
    if (normalize_language(l) != l) throw ConfigError("testbed language '" + l + "' is not a lowercase ISO code");
    if (!seen.insert(l).second) throw ConfigError("duplicate testbed language '" + l + "'");
  }
  if (n_bins < 2) throw ConfigError("testbed n_bins must be >= 2");
  if (dim < 2) throw ConfigError("testbed dim must be >= 2");
  if (!(inter_cluster_separation > 0.0)) throw ConfigError("inter_cluster_separation must be > 0");
  if (!(within_cluster_std > 0.0)) throw ConfigError("within_cluster_std must be > 0");
  if (!(translation_noise_std >= 0.0)) throw ConfigError("translation_noise_std must be >= 0");
  if (samples_per_bucket < min_support) {
    throw ConfigError("samples_per_bucket (" + std::to_string(samples_per_bucket) + ") is below the minimum support (" +
                      std::to_string(min_support) + ")");
  }
  if (!(test_fraction >= 0.0 && test_fraction <= 1.0)) throw ConfigError("test_fraction must lie in [0, 1]");
  if (!(label_lo >= 0.0 && label_hi <= 1.0 && label_lo < label_hi)) {
    throw ConfigError("label range must satisfy 0 <= label_lo < label_hi <= 1");
  }
  for (const auto& [key, v] : planted_trans_offset) {
    if (v.size() != dim) throw ConfigError("planted offset '" + key + "' has the wrong dimension");
  }
  if (distortion.kind == DistortionKind::Gaussian && !(distortion.sigma >= 0.0)) {
    throw ConfigError("gaussian sigma must be >= 0");
  }
}

json SyntheticSpec::to_json() const {
  return json{{"languages", languages},
              {"style_name", style_name},
              {"n_bins", n_bins},
              {"samples_per_bucket", samples_per_bucket},
              {"dim", dim},
              {"inter_cluster_separation", inter_cluster_separation},
              {"within_cluster_std", within_cluster_std},
              {"translation_noise_std", translation_noise_std},
              {"test_fraction", test_fraction},
              {"label_lo", label_lo},
              {"label_hi", label_hi},
              {"min_support", min_support},
              {"planted_trans_offset", planted_trans_offset},
              {"distortion", distortion.to_json()},
              {"seed", seed}};
}

SyntheticSpec SyntheticSpec::from_json(const json& j) {
  SyntheticSpec s;
  try {
    s.languages = j.value("languages", s.languages);
    s.style_name = j.value("style_name", s.style_name);
    s.n_bins = j.value("n_bins", s.n_bins);
    s.samples_per_bucket = j.value("samples_per_bucket", s.samples_per_bucket);
    s.dim = j.value("dim", s.dim);
    s.inter_cluster_separation = j.value("inter_cluster_separation", s.inter_cluster_separation);
    s.within_cluster_std = j.value("within_cluster_std", s.within_cluster_std);
    s.translation_noise_std = j.value("translation_noise_std", s.translation_noise_std);
    s.test_fraction = j.value("test_fraction", s.test_fraction);
    s.label_lo = j.value("label_lo", s.label_lo);
    s.label_hi = j.value("label_hi", s.label_hi);
    s.min_support = j.value("min_support", s.min_support);
    s.planted_trans_offset = j.value("planted_trans_offset", s.planted_trans_offset);
    if (j.contains("distortion")) s.distortion = Distortion::from_json(j.at("distortion"));
    s.seed = j.value("seed", s.seed);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid testbed spec: ") + e.what());
  }
  s.validate();
  return s;
}

// ---------------------------------------------------------------------------
// World

std::string SyntheticWorld::sample_id(const std::string& language, int level, std::size_t ordinal) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s-%d-%06zu", language.c_str(), level, ordinal);
  return buf;
}

std::string SyntheticWorld::sample_text(const std::string& language, int level, std::size_t ordinal) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "syn:%s:%d:%06zu", language.c_str(), level, ordinal);
  return buf;
}

const Vec& SyntheticWorld::cluster_mean(const std::string& language, int level) const {
  auto it = means_.find({language, level});
  if (it == means_.end()) {
    throw DataError("no synthetic cluster for (" + language + ", level " + std::to_string(level) + ")");
  }
  return it->second;
}

const MappingSet& SyntheticWorld::planted(const std::string& source, const std::string& target, int level) const {
  auto it = planted_.find({source, target, level});
  if (it == planted_.end()) {
    throw DataError("no planted mapping for " + source + "->" + target + " level " + std::to_string(level));
  }
  return it->second;
}

double SyntheticWorld::style_shift(int level) const {
  return spec_.distortion.gamma * (0.5 - StyleLevel{level, spec_.n_bins}.center());
}

Vec SyntheticWorld::translated_embedding(const std::string& source_id, const std::string& target) const {
  const auto& s = corpus_.at(source_id);
  const int level = bin_style(s.style_label, spec_.n_bins).index;
  const auto& t = planted(s.language, target, level).v_trans;
  const auto& native = store_.at(native_scope(), source_id);
  std::mt19937_64 rng(derive_seed(spec_.seed, "translate-embed|" + source_id + "|" + target));
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec out(native.size());
  for (std::size_t i = 0; i < native.size(); ++i) {
    out[i] = native[i] + t[i] + spec_.translation_noise_std * normal(rng);
  }
  return quantize_f32(out);
}

SyntheticWorld generate(const SyntheticSpec& spec) {
  spec.validate();
  SyntheticWorld w;
  w.spec_ = spec;
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double sep = spec.inter_cluster_separation;

  // Random cluster means; two independent means sit about `sep` apart.
  for (const auto& lang : spec.languages) {
    for (int b = 0; b < spec.n_bins; ++b) {
      Vec m = random_unit(rng, spec.dim, 0);
      for (auto& x : m) x *= sep / std::sqrt(2.0);
      w.means_[{lang, b}] = quantize_f32(m);
    }
  }

  // Planted v_align: norm 2 * sep, component along the style axis -shift / kappa so that a
  // translation corrected by it moves the label back by exactly the distortion's shift.
  for (const auto& src : spec.languages) {
    for (const auto& tgt : spec.languages) {
      if (src == tgt) continue;
      for (int b = 0; b < spec.n_bins; ++b) {
        MappingSet m;
        m.source = src;
        m.target = tgt;
        m.level = StyleLevel{b, spec.n_bins};
        m.pooled_levels = {b};
        const Vec& m1 = w.means_.at({src, b});
        const Vec& m2 = w.means_.at({tgt, b});
        m.v_native.resize(spec.dim);
        for (std::size_t i = 0; i < spec.dim; ++i) m.v_native[i] = m2[i] - m1[i];
        Vec t;
        if (auto it = spec.planted_trans_offset.find(offset_key(src, tgt, b)); it != spec.planted_trans_offset.end()) {
          t = it->second;
        } else {
          const double axial = -w.spec_.distortion.gamma * (0.5 - m.level.center()) * sep;
          const double total = 2.0 * sep;
          const double rest = std::sqrt(std::max(0.0, total * total - axial * axial));
          Vec dir = random_unit(rng, spec.dim, 1);
          Vec v_align(spec.dim);
          v_align[0] = axial;
          for (std::size_t i = 1; i < spec.dim; ++i) v_align[i] = rest * dir[i];
          t.resize(spec.dim);
          for (std::size_t i = 0; i < spec.dim; ++i) t[i] = m.v_native[i] - v_align[i];
        }
        m.v_trans = t;
        m.v_align.resize(spec.dim);
        for (std::size_t i = 0; i < spec.dim; ++i) m.v_align[i] = m.v_native[i] - m.v_trans[i];
        w.planted_[{src, tgt, b}] = std::move(m);
      }
    }
  }

  // Bucket sizes proportional to each bin's overlap with the label range.
  const std::size_t total = spec.samples_per_bucket * static_cast<std::size_t>(spec.n_bins);
  std::vector<double> overlap(spec.n_bins);
  for (int b = 0; b < spec.n_bins; ++b) {
    const StyleLevel lv{b, spec.n_bins};
    overlap[b] = std::max(0.0, std::min(spec.label_hi, lv.upper()) - std::max(spec.label_lo, lv.lower()));
  }
  const double overlap_sum = std::accumulate(overlap.begin(), overlap.end(), 0.0);
  std::vector<std::size_t> counts(spec.n_bins);
  std::vector<std::pair<double, int>> remainders;
  std::size_t assigned = 0;
  for (int b = 0; b < spec.n_bins; ++b) {
    const double quota = static_cast<double>(total) * overlap[b] / overlap_sum;
    counts[b] = static_cast<std::size_t>(std::floor(quota));
    assigned += counts[b];
    remainders.emplace_back(-(quota - std::floor(quota)), b);
  }
  std::sort(remainders.begin(), remainders.end());
  for (std::size_t i = 0; assigned < total; ++i, ++assigned) ++counts[remainders[i % remainders.size()].second];

  std::vector<StyleSample> samples;
  std::vector<std::pair<std::string, Vec>> vectors;
  for (const auto& lang : spec.languages) {
    for (int b = 0; b < spec.n_bins; ++b) {
      if (counts[b] == 0) continue;
      const StyleLevel lv{b, spec.n_bins};
      const double lo = std::max(spec.label_lo, lv.lower());
      const double hi = std::min(spec.label_hi, lv.upper());
      std::uniform_real_distribution<double> uniform(lo, hi);
      const auto n_test = static_cast<std::size_t>(std::llround(spec.test_fraction * static_cast<double>(counts[b])));
      const Vec& mean = w.means_.at({lang, b});
      for (std::size_t o = 0; o < counts[b]; ++o) {
        double label = uniform(rng);
        while (bin_style(label, spec.n_bins).index != b) label = uniform(rng);
        StyleSample s;
        s.id = SyntheticWorld::sample_id(lang, b, o);
        s.language = lang;
        s.text = SyntheticWorld::sample_text(lang, b, o);
        s.style_label = label;
        s.split = o < n_test ? Split::Test : Split::Train;
        Vec v(spec.dim);
        for (std::size_t i = 0; i < spec.dim; ++i) v[i] = mean[i] + spec.within_cluster_std * normal(rng);
        vectors.emplace_back(s.id, quantize_f32(v));
        samples.push_back(std::move(s));
      }
    }
  }
  w.corpus_ = StyleCorpus(spec.style_name, std::move(samples));
  w.store_ = EmbeddingStore("testbed-embed", spec.dim);
  for (auto& [id, v] : vectors) w.store_.add(native_scope(), id, std::move(v));
  for (const auto& src : spec.languages) {
    for (const auto& tgt : spec.languages) {
      if (src == tgt) continue;
      for (const auto* s : w.corpus_.select(src)) {
        w.store_.add(translated_scope(src, tgt), s->id, w.translated_embedding(s->id, tgt));
      }
    }
  }
  return w;
}

// ---------------------------------------------------------------------------
// Mock providers

MockTranslation mock_translate(const StyleSample& sample, const std::string& target, const Distortion& distortion,
                               int n_bins, std::uint64_t seed, double correction) {
  const double x = sample.style_label;
  double y = x;
  switch (distortion.kind) {
    case DistortionKind::Identity: break;
    case DistortionKind::Shrink: y = 0.5 + distortion.lambda * (x - 0.5); break;
    case DistortionKind::Gaussian: {
      std::mt19937_64 rng(derive_seed(seed, "style-noise|" + sample.id + "|" + target));
      std::normal_distribution<double> normal(0.0, 1.0);
      y = x + distortion.sigma * normal(rng);
      break;
    }
    case DistortionKind::PlantedStyleShift:
      y = x + distortion.gamma * (0.5 - bin_style(x, n_bins).center());
      break;
  }
  y += correction;
  MockTranslation out;
  out.label = std::clamp(y, 0.0, 1.0);
  out.clamped = out.label != y;
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.17g", out.label);
  out.text = "tr:" + target + ":" + sample.id + ":" + buf;
  return out;
}

std::optional<double> mock_translation_label(const std::string& text) {
  auto tr = parse_tr(text);
  if (!tr) return std::nullopt;
  return tr->label;
}

MockTranslator::MockTranslator(std::shared_ptr<const SyntheticWorld> world, Distortion distortion,
                               std::map<std::string, std::string> display_overrides)
    : world_(std::move(world)), distortion_(distortion) {
  for (const auto& lang : world_->spec().languages) name_to_code_[display_name(lang, display_overrides)] = lang;
}

std::string MockTranslator::complete(const CompletionRequest& request) {
  ++calls_;
  const std::string& prompt = request.prompt;
  static const std::regex direction(R"(from (.+?) to ([^.\n]+)\.)");
  std::smatch m;
  if (!std::regex_search(prompt, m, direction)) throw ParseError("mock translator: no language direction", prompt);
  auto code = name_to_code_.find(m[2].str());
  if (code == name_to_code_.end()) throw ParseError("mock translator: unknown target '" + m[2].str() + "'", prompt);
  const std::string& target = code->second;

  const auto toks = syn_tokens(prompt);
  if (toks.empty()) throw ParseError("mock translator: no source token", prompt);
  const auto& src = toks.front();
  const StyleSample& sample = world_->corpus().at(SyntheticWorld::sample_id(src.language, src.level, src.ordinal));

  double correction = 0.0;
  if (distortion_.kind == DistortionKind::PlantedStyleShift && toks.size() > 1) {
    double mean_axis = 0.0;
    for (std::size_t i = 1; i < toks.size(); ++i) mean_axis += world_->cluster_mean(toks[i].language, toks[i].level)[0];
    mean_axis /= static_cast<double>(toks.size() - 1);
    const int level = bin_style(sample.style_label, world_->spec().n_bins).index;
    const double landing = world_->cluster_mean(sample.language, level)[0] +
                           world_->planted(sample.language, target, level).v_trans[0];
    correction = world_->kappa() * (mean_axis - landing);
  }
  const auto out =
      mock_translate(sample, target, distortion_, world_->spec().n_bins, world_->spec().seed, correction);
  if (out.clamped) ++clamps_;
  return out.text;
}

double MockScorer::score(const ScoreRequest& request) { return token_label(*world_, request.text); }

EmbedResponse MockEmbedding::embed(const std::vector<std::string>& texts) {
  ++calls_;
  EmbedResponse r;
  r.dim = world_->spec().dim;
  for (const auto& text : texts) {
    if (auto tr = parse_tr(text)) {
      r.vectors.push_back(world_->translated_embedding(tr->source_id, tr->target));
      continue;
    }
    const auto toks = syn_tokens(text);
    if (toks.size() != 1) throw ParseError("mock embedding: unrecognised text", text);
    r.vectors.push_back(world_->store().at(
        native_scope(), SyntheticWorld::sample_id(toks[0].language, toks[0].level, toks[0].ordinal)));
  }
  return r;
}

double MockQuality::score(const QualityRequest& request) {
  const double drift = std::abs(token_label(*world_, request.hypothesis) - native_label(*world_, request.source));
  return metric_ == QualityMetric::GembaJudge ? 100.0 * (1.0 - drift) : 1.0 - drift;
}

}  // namespace stylealign
