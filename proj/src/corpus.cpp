#include "stylealign/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

#include "json.hpp"

#include "stylealign/error.hpp"
#include "stylealign/io.hpp"

namespace stylealign {

using nlohmann::json;

namespace {

bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c) != 0; });
}

void validate_sample(const StyleSample& s) {
  if (s.id.empty()) throw DataError("sample with empty id");
  if (is_blank(s.text)) throw DataError("sample '" + s.id + "' has empty text");
  if (!std::isfinite(s.style_label) || s.style_label < 0.0 || s.style_label > 1.0) {
    throw DataError("sample '" + s.id + "' has style_label " + std::to_string(s.style_label) +
                    " outside [0, 1]");
  }
  if (s.language.empty()) throw DataError("sample '" + s.id + "' has empty language");
}

const std::set<std::string> kRecordFields = {"id", "language", "text", "style_label", "split"};

}  // namespace

std::string_view to_string(Split split) { return split == Split::Train ? "train" : "test"; }

Split parse_split(std::string_view text) {
  if (text == "train") return Split::Train;
  if (text == "test") return Split::Test;
  throw DataError("unknown split value '" + std::string(text) + "'");
}

std::string normalize_language(std::string_view code) {
  std::string out;
  for (char c : code) {
    if (c == '-' || c == '_') break;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  const bool ok = out.size() == 2 && std::all_of(out.begin(), out.end(), [](unsigned char c) {
                    return c >= 'a' && c <= 'z';
                  });
  if (!ok) throw DataError("invalid language code '" + std::string(code) + "'");
  return out;
}

StyleCorpus::StyleCorpus(std::string style_name, std::vector<StyleSample> samples)
    : style_name_(std::move(style_name)), samples_(std::move(samples)) {
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    const auto& s = samples_[i];
    validate_sample(s);
    if (!by_id_.emplace(s.id, i).second) throw DataError("duplicate sample id '" + s.id + "'");
    languages_.insert(s.language);
  }
}

const StyleSample& StyleCorpus::at(const std::string& id) const {
  const auto* s = find(id);
  if (s == nullptr) throw DataError("unknown sample id '" + id + "'");
  return *s;
}

const StyleSample* StyleCorpus::find(const std::string& id) const {
  auto it = by_id_.find(id);
  return it == by_id_.end() ? nullptr : &samples_[it->second];
}

std::vector<const StyleSample*> StyleCorpus::select(const std::string& language,
                                                    std::optional<Split> split) const {
  std::vector<const StyleSample*> out;
  // by_id_ is ordered, so the result comes out sorted by id.
  for (const auto& [id, idx] : by_id_) {
    const auto& s = samples_[idx];
    if (s.language == language && (!split || s.split == *split)) out.push_back(&s);
  }
  return out;
}

std::set<std::string> StyleCorpus::ids(Split split) const {
  std::set<std::string> out;
  for (const auto& s : samples_) {
    if (s.split == split) out.insert(s.id);
  }
  return out;
}

StyleCorpus load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus file " + path.string());

  std::string style_name;
  std::vector<StyleSample> samples;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  bool first_record = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank(line)) continue;
    const std::string where = path.filename().string() + ":" + std::to_string(line_no);
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError("malformed record at " + where + ": " + e.what());
    }
    if (!rec.is_object()) throw DataError("malformed record at " + where + ": not an object");

    const bool head = first_record;
    first_record = false;
    if (head && rec.contains("style_name")) {
      if (!rec["style_name"].is_string()) {
        throw DataError("malformed record at " + where + ": style_name must be a string");
      }
      style_name = rec["style_name"].get<std::string>();
      rec.erase("style_name");
      if (rec.empty()) continue;  // header-only record
    }

    for (const auto& [key, value] : rec.items()) {
      if (kRecordFields.count(key) == 0) {
        throw DataError("malformed record at " + where + ": unexpected field '" + key + "'");
      }
    }
    for (const auto& field : kRecordFields) {
      if (!rec.contains(field)) {
        throw DataError("malformed record at " + where + ": missing field '" + field + "'");
      }
    }
    StyleSample s;
    try {
      s.id = rec.at("id").get<std::string>();
      s.language = normalize_language(rec.at("language").get<std::string>());
      s.text = rec.at("text").get<std::string>();
      s.style_label = rec.at("style_label").get<double>();
      s.split = parse_split(rec.at("split").get<std::string>());
    } catch (const json::exception& e) {
      throw DataError("malformed record at " + where + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError(std::string(e.what()) + " at " + where);
    }
    if (!rec.at("style_label").is_number()) {
      throw DataError("malformed record at " + where + ": style_label must be a number");
    }
    if (!seen.insert(s.id).second) {
      throw DataError("duplicate sample id '" + s.id + "' at " + where);
    }
    try {
      validate_sample(s);
    } catch (const DataError& e) {
      throw DataError(std::string(e.what()) + " at " + where);
    }
    samples.push_back(std::move(s));
  }
  if (samples.empty()) throw DataError("no records in " + path.string());
  return StyleCorpus(std::move(style_name), std::move(samples));
}

StyleCorpus load_corpora(const std::vector<std::filesystem::path>& paths) {
  if (paths.empty()) throw ConfigError("no corpus paths given");
  std::string style_name;
  std::vector<StyleSample> merged;
  for (const auto& p : paths) {
    auto corpus = load_corpus(p);
    if (!corpus.style_name().empty()) {
      if (!style_name.empty() && style_name != corpus.style_name()) {
        throw DataError("corpus files disagree on style_name: '" + style_name + "' vs '" +
                        corpus.style_name() + "'");
      }
      style_name = corpus.style_name();
    }
    merged.insert(merged.end(), corpus.samples().begin(), corpus.samples().end());
  }
  return StyleCorpus(std::move(style_name), std::move(merged));
}

void save_corpus(const StyleCorpus& corpus, const std::filesystem::path& path) {
  std::string out;
  if (!corpus.style_name().empty()) {
    out += json{{"style_name", corpus.style_name()}}.dump() + "\n";
  }
  for (const auto& s : corpus.samples()) {
    json rec = {{"id", s.id},
                {"language", s.language},
                {"text", s.text},
                {"style_label", s.style_label},
                {"split", std::string(to_string(s.split))}};
    out += rec.dump() + "\n";
  }
  write_file_atomic(path, out);
}

StyleLevel bin_style(double label, int n_bins) {
  if (n_bins < 2) throw DataError("n_bins must be >= 2, got " + std::to_string(n_bins));
  if (!std::isfinite(label) || label < 0.0 || label > 1.0) {
    throw DataError("style label " + std::to_string(label) + " outside [0, 1]");
  }
  const int index = std::min(static_cast<int>(std::floor(label * n_bins)), n_bins - 1);
  return StyleLevel{index, n_bins};
}

int resolve_bins(const StyleCorpus& corpus, int requested) {
  std::set<double> values;
  for (const auto& s : corpus.samples()) {
    values.insert(s.style_label);
    if (values.size() > 2) return requested;
  }
  return values.size() == 2 ? 2 : requested;
}

ExtremeSubsets extreme_subsets(const StyleCorpus& corpus, const std::string& language,
                               double fraction, std::optional<Split> split) {
  if (!(fraction > 0.0 && fraction <= 0.5)) {
    throw DataError("fraction must lie in (0, 0.5], got " + std::to_string(fraction));
  }
  if (!corpus.has_language(language)) throw DataError("unknown language '" + language + "'");
  auto pool = corpus.select(language, split);
  const double n = static_cast<double>(pool.size());
  if (n * fraction < 1.0 - 1e-9) {
    throw DataError("too few samples in '" + language + "' (" + std::to_string(pool.size()) +
                    ") for fraction " + std::to_string(fraction));
  }
  const auto count = static_cast<std::size_t>(std::ceil(n * fraction - 1e-9));

  ExtremeSubsets out;
  auto desc = pool;
  std::stable_sort(desc.begin(), desc.end(), [](const StyleSample* a, const StyleSample* b) {
    if (a->style_label != b->style_label) return a->style_label > b->style_label;
    return a->id < b->id;
  });
  out.top.assign(desc.begin(), desc.begin() + static_cast<std::ptrdiff_t>(count));

  auto asc = pool;
  std::stable_sort(asc.begin(), asc.end(), [](const StyleSample* a, const StyleSample* b) {
    if (a->style_label != b->style_label) return a->style_label < b->style_label;
    return a->id < b->id;
  });
  out.bottom.assign(asc.begin(), asc.begin() + static_cast<std::ptrdiff_t>(count));
  return out;
}

}  // namespace stylealign
