#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace stylealign {

/// Sample product-moment correlation. Throws DataError on length mismatch or fewer than
/// three points and UndefinedStatistic when either series has zero variance.
double pearson(std::span<const double> x, std::span<const double> y);

/// Style alignment for one ordered language pair. `A` is empty when the correlation is
/// undefined (constant scores or n < 3); `undefined_reason` then says why.
struct AlignmentResult {
  std::string source;
  std::string target;
  std::size_t n = 0;
  std::optional<double> A;
  std::string undefined_reason;
  std::map<std::string, double> mean_quality_scores;

  nlohmann::json to_json() const;
  static AlignmentResult from_json(const nlohmann::json& j);
};

/// A over scores keyed by sample id. Both maps must hold exactly the same ids.
AlignmentResult alignment_score(const std::map<std::string, double>& original,
                                const std::map<std::string, double>& translated, const std::string& source = {},
                                const std::string& target = {});
/// Positional variant; element i of each list belongs to the same sample.
AlignmentResult alignment_score(std::span<const double> original, std::span<const double> translated);

/// Population statistics of a score list. Bands: neutral is the closed interval [0.4, 0.6];
/// low extreme is < 0.1 and high extreme is > 0.9, so the endpoints 0 and 1 count as extremes.
struct DistributionStats {
  double mean = 0.0;
  double std = 0.0;
  double neutral_fraction = 0.0;
  double low_extreme_fraction = 0.0;
  double high_extreme_fraction = 0.0;
  std::size_t n = 0;

  nlohmann::json to_json() const;
};

DistributionStats distribution_stats(std::span<const double> scores);

/// Mean over languages of the relative change in std, (after - before) / before.
double relative_std_change(std::span<const double> before, std::span<const double> after);

enum class CellFlag { None, Above, Below, At, Undefined };
std::string_view to_string(CellFlag flag);

/// Source x target matrix of A. Diagonal cells are blank (CellFlag::None).
struct Heatmap {
  std::vector<std::string> languages;
  std::vector<std::vector<std::optional<double>>> cells;
  std::vector<std::vector<CellFlag>> flags;
  double grand_mean = 0.0;

  /// Rows are sources, columns targets; blank cells are empty fields.
  std::string to_csv() const;
  std::string flags_csv() const;
  nlohmann::json to_json() const;
};

/// Cells are flagged against the grand mean of the defined off-diagonal cells; values within
/// 1e-12 of it are "at".
Heatmap build_heatmap(const std::vector<AlignmentResult>& results);

/// Rounds like numpy.round: nearbyint(value * 10^decimals) / 10^decimals.
double round_to(double value, int decimals);
/// Signed percent with one decimal, e.g. "+32.1%".
std::string format_delta(double delta_percent);

struct MethodScores {
  std::string name;
  /// metric -> language -> value
  std::map<std::string, std::map<std::string, double>> values;
};

/// One style block of the comparison table: per-language rows, a rounded average row and a
/// relative-change row of the last method against each earlier one.
struct ReportTable {
  std::string style;
  std::vector<std::string> languages;
  std::vector<std::string> methods;
  std::vector<std::string> metrics;
  int decimals = 2;
  std::map<std::string, std::map<std::string, std::map<std::string, double>>> values;
  /// method -> metric -> rounded average
  std::map<std::string, std::map<std::string, double>> averages;
  /// baseline method -> metric -> formatted delta ("n/a" when the baseline average is 0)
  std::map<std::string, std::map<std::string, std::string>> deltas;

  std::string render() const;
  nlohmann::json to_json() const;
};

/// Averages are taken over `languages` in the given order and rounded to `decimals`; deltas
/// are computed from the rounded averages. Every method must cover the same metrics and
/// languages.
ReportTable report_table(const std::string& style, const std::vector<std::string>& languages,
                         const std::vector<MethodScores>& baselines, const MethodScores& rasta, int decimals = 2);

/// One observation for the metric-correlation table.
struct PairMetrics {
  std::string source;
  std::string target;
  std::string model;
  double A = 0.0;
  double gemba = 0.0;
  double qe = 0.0;
};

enum class CorrelationGrouping {
  /// Rows of the same (source, target) are averaged over models first.
  PerPair,
  /// Every (pair, model) row is one observation.
  PerPairModel,
};

struct CorrelationResult {
  std::string x;
  std::string y;
  std::size_t n = 0;
  std::optional<double> r;
  std::optional<double> p_value;
  bool significant = false;

  nlohmann::json to_json() const;
};

/// Two-sided p-value of a correlation r over n points (t-distribution, n - 2 dof).
double correlation_p_value(double r, std::size_t n);

/// Correlations A~G, A~QE and G~QE. Needs at least 4 observations after grouping.
std::vector<CorrelationResult> metric_correlation(const std::vector<PairMetrics>& rows,
                                                  CorrelationGrouping grouping = CorrelationGrouping::PerPair);

}  // namespace stylealign
