#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace stylealign {

enum class Split { Train, Test };

std::string_view to_string(Split split);
Split parse_split(std::string_view text);

struct StyleSample {
  std::string id;
  std::string language;
  std::string text;
  double style_label = 0.0;
  Split split = Split::Train;
};

/// A discrete style bin. Bins are equal-width over [0, 1].
struct StyleLevel {
  int index = 0;
  int n_bins = 2;

  double lower() const { return static_cast<double>(index) / n_bins; }
  double upper() const { return static_cast<double>(index + 1) / n_bins; }
  double center() const { return (index + 0.5) / n_bins; }

  friend bool operator==(const StyleLevel&, const StyleLevel&) = default;
  friend auto operator<=>(const StyleLevel&, const StyleLevel&) = default;
};

/// Validated, immutable collection of style-annotated samples for one style.
class StyleCorpus {
 public:
  StyleCorpus() = default;
  /// Validates every sample; throws DataError on the first violation.
  StyleCorpus(std::string style_name, std::vector<StyleSample> samples);

  const std::string& style_name() const { return style_name_; }
  const std::vector<StyleSample>& samples() const { return samples_; }
  const std::set<std::string>& languages() const { return languages_; }
  std::size_t size() const { return samples_.size(); }

  const StyleSample& at(const std::string& id) const;
  const StyleSample* find(const std::string& id) const;
  bool has_language(const std::string& language) const { return languages_.count(language) > 0; }

  /// Samples of one language (optionally one split), ordered by ascending id.
  std::vector<const StyleSample*> select(const std::string& language,
                                         std::optional<Split> split = std::nullopt) const;

  /// Ids of every sample in the given split.
  std::set<std::string> ids(Split split) const;

 private:
  std::string style_name_;
  std::vector<StyleSample> samples_;
  std::set<std::string> languages_;
  std::map<std::string, std::size_t> by_id_;
};

/// Lowercases and strips any region suffix ("pt-BR" -> "pt"). Throws DataError for
/// codes that are not ISO-639-1 shaped.
std::string normalize_language(std::string_view code);

/// Loads the JSON-lines interchange format. Errors name the offending line or id.
StyleCorpus load_corpus(const std::filesystem::path& path);
/// Loads several files and merges them into one corpus (style names must agree).
StyleCorpus load_corpora(const std::vector<std::filesystem::path>& paths);
void save_corpus(const StyleCorpus& corpus, const std::filesystem::path& path);

/// floor(label * n_bins), clamped so that 1.0 maps to the top bin.
StyleLevel bin_style(double label, int n_bins);

/// Returns 2 when every label in the corpus takes one of exactly two values
/// (binary style annotations), otherwise `requested`.
int resolve_bins(const StyleCorpus& corpus, int requested);

struct ExtremeSubsets {
  std::vector<const StyleSample*> top;
  std::vector<const StyleSample*> bottom;
};

/// Highest / lowest ceil(fraction * n) samples of a language by label, ties by ascending id.
ExtremeSubsets extreme_subsets(const StyleCorpus& corpus, const std::string& language,
                               double fraction, std::optional<Split> split = std::nullopt);

}  // namespace stylealign
