#include "stylealign/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include <boost/math/distributions/students_t.hpp>

#include "stylealign/error.hpp"

namespace stylealign {

using nlohmann::json;

namespace {

constexpr double kAtTolerance = 1e-12;

std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
  return buf;
}

std::string shortest(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::string pad(const std::string& s, std::size_t width) {
  // Width counts bytes; labels are ASCII.
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

std::string lpad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : std::string(width - s.size(), ' ') + s;
}

}  // namespace

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw DataError("pearson: length mismatch (" + std::to_string(x.size()) + " vs " + std::to_string(y.size()) + ")");
  }
  const std::size_t n = x.size();
  if (n < 3) throw DataError("pearson: need at least 3 points, got " + std::to_string(n));
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) throw DataError("pearson: non-finite value");
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0;
  double syy = 0.0;
  double sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw UndefinedStatistic("pearson: zero variance, correlation undefined");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

json AlignmentResult::to_json() const {
  json j = {{"source", source}, {"target", target}, {"n", n}, {"A", optional_number(A)},
            {"mean_quality_scores", mean_quality_scores}};
  if (!A) j["undefined_reason"] = undefined_reason;
  return j;
}

AlignmentResult AlignmentResult::from_json(const json& j) {
  AlignmentResult r;
  r.source = j.at("source").get<std::string>();
  r.target = j.at("target").get<std::string>();
  r.n = j.at("n").get<std::size_t>();
  if (!j.at("A").is_null()) r.A = j.at("A").get<double>();
  r.undefined_reason = j.value("undefined_reason", "");
  r.mean_quality_scores = j.value("mean_quality_scores", std::map<std::string, double>{});
  return r;
}

AlignmentResult alignment_score(std::span<const double> original, std::span<const double> translated) {
  if (original.size() != translated.size()) {
    throw DataError("alignment_score: " + std::to_string(original.size()) + " originals vs " +
                    std::to_string(translated.size()) + " translations");
  }
  AlignmentResult r;
  r.n = original.size();
  if (r.n < 3) {
    r.undefined_reason = "fewer than 3 samples";
    return r;
  }
  try {
    r.A = pearson(original, translated);
  } catch (const UndefinedStatistic& e) {
    r.undefined_reason = e.what();
  }
  return r;
}

AlignmentResult alignment_score(const std::map<std::string, double>& original,
                                const std::map<std::string, double>& translated, const std::string& source,
                                const std::string& target) {
  std::vector<double> x;
  std::vector<double> y;
  x.reserve(original.size());
  y.reserve(original.size());
  for (const auto& [id, v] : original) {
    auto it = translated.find(id);
    if (it == translated.end()) throw DataError("alignment_score: no translated score for '" + id + "'");
    x.push_back(v);
    y.push_back(it->second);
  }
  if (translated.size() != original.size()) {
    for (const auto& [id, v] : translated) {
      if (!original.count(id)) throw DataError("alignment_score: no original score for '" + id + "'");
    }
  }
  auto r = alignment_score(x, y);
  r.source = source;
  r.target = target;
  return r;
}

json DistributionStats::to_json() const {
  return json{{"mean", mean},
              {"std", std},
              {"neutral_fraction", neutral_fraction},
              {"low_extreme_fraction", low_extreme_fraction},
              {"high_extreme_fraction", high_extreme_fraction},
              {"n", n}};
}

DistributionStats distribution_stats(std::span<const double> scores) {
  if (scores.empty()) throw DataError("distribution_stats: empty input");
  DistributionStats s;
  s.n = scores.size();
  const double n = static_cast<double>(s.n);
  std::size_t neutral = 0;
  std::size_t low = 0;
  std::size_t high = 0;
  for (double v : scores) {
    if (!std::isfinite(v)) throw DataError("distribution_stats: non-finite score");
    s.mean += v;
    if (v >= 0.4 && v <= 0.6) ++neutral;
    if (v < 0.1) ++low;
    if (v > 0.9) ++high;
  }
  s.mean /= n;
  double ss = 0.0;
  for (double v : scores) ss += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(ss / n);
  s.neutral_fraction = static_cast<double>(neutral) / n;
  s.low_extreme_fraction = static_cast<double>(low) / n;
  s.high_extreme_fraction = static_cast<double>(high) / n;
  return s;
}

double relative_std_change(std::span<const double> before, std::span<const double> after) {
  if (before.size() != after.size() || before.empty()) {
    throw DataError("relative_std_change: need equally many non-zero before/after values");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < before.size(); ++i) {
    if (before[i] == 0.0) throw UndefinedStatistic("relative_std_change: zero baseline std");
    total += (after[i] - before[i]) / before[i];
  }
  return total / static_cast<double>(before.size());
}

std::string_view to_string(CellFlag flag) {
  switch (flag) {
    case CellFlag::None: return "";
    case CellFlag::Above: return "above";
    case CellFlag::Below: return "below";
    case CellFlag::At: return "at";
    case CellFlag::Undefined: return "undefined";
  }
  return "";
}

Heatmap build_heatmap(const std::vector<AlignmentResult>& results) {
  std::set<std::string> langs;
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& r : results) {
    if (r.source == r.target) throw DataError("heatmap: pair " + r.source + "->" + r.target + " is on the diagonal");
    if (!seen.insert({r.source, r.target}).second) {
      throw DataError("heatmap: duplicate entry for " + r.source + "->" + r.target);
    }
    langs.insert(r.source);
    langs.insert(r.target);
  }
  if (seen.size() < 2) throw DataError("heatmap: need at least 2 language pairs");

  Heatmap h;
  h.languages.assign(langs.begin(), langs.end());
  const std::size_t m = h.languages.size();
  h.cells.assign(m, std::vector<std::optional<double>>(m));
  h.flags.assign(m, std::vector<CellFlag>(m, CellFlag::None));
  auto index = [&](const std::string& l) {
    return static_cast<std::size_t>(std::lower_bound(h.languages.begin(), h.languages.end(), l) -
                                    h.languages.begin());
  };
  std::vector<std::pair<std::size_t, std::size_t>> defined;
  for (const auto& r : results) {
    const auto i = index(r.source);
    const auto j = index(r.target);
    if (r.A) {
      h.cells[i][j] = r.A;
      defined.emplace_back(i, j);
    } else {
      h.flags[i][j] = CellFlag::Undefined;
    }
  }
  if (defined.empty()) throw UndefinedStatistic("heatmap: no pair has a defined A");
  std::sort(defined.begin(), defined.end());
  double sum = 0.0;
  for (auto [i, j] : defined) sum += *h.cells[i][j];
  h.grand_mean = sum / static_cast<double>(defined.size());
  for (auto [i, j] : defined) {
    const double v = *h.cells[i][j];
    if (std::abs(v - h.grand_mean) <= kAtTolerance) {
      h.flags[i][j] = CellFlag::At;
    } else {
      h.flags[i][j] = v > h.grand_mean ? CellFlag::Above : CellFlag::Below;
    }
  }
  return h;
}

std::string Heatmap::to_csv() const {
  std::string out = "source\\target";
  for (const auto& l : languages) out += "," + l;
  out += "\n";
  for (std::size_t i = 0; i < languages.size(); ++i) {
    out += languages[i];
    for (std::size_t j = 0; j < languages.size(); ++j) {
      out += ",";
      if (cells[i][j]) out += shortest(*cells[i][j]);
    }
    out += "\n";
  }
  return out;
}

std::string Heatmap::flags_csv() const {
  std::string out = "source\\target";
  for (const auto& l : languages) out += "," + l;
  out += "\n";
  for (std::size_t i = 0; i < languages.size(); ++i) {
    out += languages[i];
    for (std::size_t j = 0; j < languages.size(); ++j) {
      out += ",";
      out += to_string(flags[i][j]);
    }
    out += "\n";
  }
  return out;
}

json Heatmap::to_json() const {
  json cells_j = json::array();
  json flags_j = json::array();
  for (std::size_t i = 0; i < languages.size(); ++i) {
    json row = json::array();
    json frow = json::array();
    for (std::size_t j = 0; j < languages.size(); ++j) {
      row.push_back(optional_number(cells[i][j]));
      frow.push_back(std::string(to_string(flags[i][j])));
    }
    cells_j.push_back(row);
    flags_j.push_back(frow);
  }
  return json{{"languages", languages}, {"cells", cells_j}, {"flags", flags_j}, {"grand_mean", grand_mean}};
}

double round_to(double value, int decimals) {
  const double scale = std::pow(10.0, decimals);
  return std::nearbyint(value * scale) / scale;
}

std::string format_delta(double delta_percent) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%+.1f%%", delta_percent);
  return buf;
}

ReportTable report_table(const std::string& style, const std::vector<std::string>& languages,
                         const std::vector<MethodScores>& baselines, const MethodScores& rasta, int decimals) {
  if (languages.empty()) throw DataError("report_table: no languages");
  if (decimals < 0 || decimals > 8) throw DataError("report_table: decimals must lie in [0, 8]");
  ReportTable t;
  t.style = style;
  t.languages = languages;
  t.decimals = decimals;
  for (const auto& [metric, v] : rasta.values) t.metrics.push_back(metric);
  if (t.metrics.empty()) throw DataError("report_table: method '" + rasta.name + "' has no metrics");

  const std::set<std::string> lang_set(languages.begin(), languages.end());
  std::vector<const MethodScores*> all;
  for (const auto& b : baselines) all.push_back(&b);
  all.push_back(&rasta);
  for (const auto* m : all) {
    if (t.values.count(m->name)) throw DataError("report_table: duplicate method '" + m->name + "'");
    t.methods.push_back(m->name);
    if (m->values.size() != t.metrics.size()) {
      throw DataError("report_table: method '" + m->name + "' reports a different metric set");
    }
    for (const auto& metric : t.metrics) {
      auto it = m->values.find(metric);
      if (it == m->values.end()) throw DataError("report_table: method '" + m->name + "' lacks metric " + metric);
      std::set<std::string> have;
      for (const auto& [lang, v] : it->second) have.insert(lang);
      if (have != lang_set) {
        throw DataError("report_table: language set mismatch for " + m->name + "/" + metric);
      }
      double sum = 0.0;
      for (const auto& lang : languages) sum += it->second.at(lang);
      t.averages[m->name][metric] = round_to(sum / static_cast<double>(languages.size()), decimals);
    }
    t.values[m->name] = m->values;
  }
  for (const auto& b : baselines) {
    for (const auto& metric : t.metrics) {
      const double base = t.averages[b.name][metric];
      const double ours = t.averages[rasta.name][metric];
      t.deltas[b.name][metric] = base == 0.0 ? "n/a" : format_delta((ours - base) / base * 100.0);
    }
  }
  return t;
}

std::string ReportTable::render() const {
  std::size_t label_w = 8;
  for (const auto& l : languages) label_w = std::max(label_w, l.size() + 1);
  const std::string delta_label = methods.empty() ? "Delta" : methods.back() + " Delta";
  label_w = std::max(label_w, delta_label.size() + 1);
  std::size_t cell_w = 8;
  for (const auto& [method, per_metric] : values) {
    for (const auto& [metric, per_lang] : per_metric) {
      for (const auto& [lang, v] : per_lang) cell_w = std::max(cell_w, fixed(v, decimals).size() + 1);
    }
  }
  for (const auto& m : metrics) cell_w = std::max(cell_w, m.size() + 1);
  const std::size_t group_w = cell_w * metrics.size();

  std::string out = "Style: " + style + "\n";
  std::string head1 = pad("", label_w);
  std::string head2 = pad("Target", label_w);
  for (const auto& m : methods) {
    head1 += " | " + pad(m, group_w);
    head2 += " | ";
    for (const auto& metric : metrics) head2 += lpad(metric, cell_w);
  }
  out += head1 + "\n" + head2 + "\n";
  const std::string rule(head2.size(), '-');
  out += rule + "\n";
  for (const auto& lang : languages) {
    std::string line = pad(lang, label_w);
    for (const auto& m : methods) {
      line += " | ";
      for (const auto& metric : metrics) line += lpad(fixed(values.at(m).at(metric).at(lang), decimals), cell_w);
    }
    out += line + "\n";
  }
  out += rule + "\n";
  std::string avg = pad("Avg.", label_w);
  std::string delta = pad(delta_label, label_w);
  for (const auto& m : methods) {
    avg += " | ";
    delta += " | ";
    for (const auto& metric : metrics) {
      avg += lpad(fixed(averages.at(m).at(metric), decimals), cell_w);
      auto it = deltas.find(m);
      delta += lpad(it == deltas.end() ? "--" : it->second.at(metric), cell_w);
    }
  }
  out += avg + "\n" + delta + "\n";
  return out;
}

json ReportTable::to_json() const {
  return json{{"style", style},       {"languages", languages}, {"methods", methods},
              {"metrics", metrics},   {"decimals", decimals},   {"values", values},
              {"averages", averages}, {"deltas", deltas}};
}

json CorrelationResult::to_json() const {
  return json{{"x", x},
              {"y", y},
              {"n", n},
              {"r", optional_number(r)},
              {"p_value", optional_number(p_value)},
              {"significant", significant}};
}

double correlation_p_value(double r, std::size_t n) {
  if (n < 3) throw DataError("correlation_p_value: need n >= 3");
  const double a = std::abs(r);
  if (a >= 1.0) return 0.0;
  const double dof = static_cast<double>(n - 2);
  const double t = a * std::sqrt(dof / (1.0 - a * a));
  boost::math::students_t dist(dof);
  return std::clamp(2.0 * boost::math::cdf(boost::math::complement(dist, t)), 0.0, 1.0);
}

std::vector<CorrelationResult> metric_correlation(const std::vector<PairMetrics>& rows,
                                                  CorrelationGrouping grouping) {
  std::vector<double> a;
  std::vector<double> g;
  std::vector<double> q;
  if (grouping == CorrelationGrouping::PerPairModel) {
    for (const auto& r : rows) {
      a.push_back(r.A);
      g.push_back(r.gemba);
      q.push_back(r.qe);
    }
  } else {
    struct Acc {
      double a = 0, g = 0, q = 0;
      int n = 0;
    };
    std::map<std::pair<std::string, std::string>, Acc> by_pair;
    for (const auto& r : rows) {
      auto& acc = by_pair[{r.source, r.target}];
      acc.a += r.A;
      acc.g += r.gemba;
      acc.q += r.qe;
      ++acc.n;
    }
    for (const auto& [pair, acc] : by_pair) {
      a.push_back(acc.a / acc.n);
      g.push_back(acc.g / acc.n);
      q.push_back(acc.q / acc.n);
    }
  }
  if (a.size() < 4) {
    throw DataError("metric_correlation: need at least 4 observations, got " + std::to_string(a.size()));
  }
  auto correlate = [&](const char* xn, const std::vector<double>& x, const char* yn, const std::vector<double>& y) {
    CorrelationResult c;
    c.x = xn;
    c.y = yn;
    c.n = x.size();
    try {
      c.r = pearson(x, y);
      c.p_value = correlation_p_value(*c.r, c.n);
      c.significant = *c.p_value < 0.05;
    } catch (const UndefinedStatistic&) {
    }
    return c;
  };
  return {correlate("A", a, "G", g), correlate("A", a, "QE", q), correlate("G", g, "QE", q)};
}

}  // namespace stylealign
