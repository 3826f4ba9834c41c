// Acceptance checks. Prints one PASS/FAIL line per criterion and exits non-zero if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <unistd.h>

#include "stylealign/alignment.hpp"
#include "stylealign/clients.hpp"
#include "stylealign/error.hpp"
#include "stylealign/io.hpp"
#include "stylealign/metrics.hpp"
#include "stylealign/pipeline.hpp"
#include "stylealign/prompting.hpp"
#include "stylealign/retrieval.hpp"
#include "stylealign/testbed.hpp"

#ifndef STYLEALIGN_SOURCE_DIR
#define STYLEALIGN_SOURCE_DIR "."
#endif

namespace sa = stylealign;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool ok = true;
  std::string detail;

  void require(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      if (!detail.empty()) detail += "; ";
      detail += what;
    }
  }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("stylealign_acc_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

sa::RunConfig testbed_config(const sa::SyntheticSpec& spec, const fs::path& out, std::vector<sa::Variant> variants) {
  sa::RunConfig cfg;
  cfg.testbed = spec;
  cfg.n_bins = spec.n_bins;
  cfg.k = 5;
  cfg.seed = spec.seed;
  cfg.out_dir = out;
  cfg.variants = std::move(variants);
  return cfg;
}

// ---------------------------------------------------------------------------

Outcome criterion1() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  struct Block {
    const char* style;
    std::vector<std::string> langs;
    std::vector<double> vanilla, preserve, rasta;
    const char* avg_vanilla;
    const char* avg_rasta;
    const char* delta;
  };
  const std::vector<Block> blocks = {
      {"politeness", {"English", "Spanish", "Japanese", "Chinese"},
       {0.61, 0.56, 0.39, 0.55}, {0.60, 0.65, 0.55, 0.61}, {0.70, 0.69, 0.70, 0.70}, "0.53", "0.70", "+32.1%"},
      {"intimacy", {"English", "Spanish", "French", "Italian", "Portuguese", "Chinese"},
       {0.64, 0.62, 0.38, 0.49, 0.29, 0.28}, {0.62, 0.58, 0.57, 0.58, 0.45, 0.37},
       {0.66, 0.59, 0.60, 0.59, 0.46, 0.39}, "0.45", "0.55", "+22.2%"},
      {"formality", {"En", "Fr", "It", "Pt"},
       {0.46, 0.44, 0.51, 0.50}, {0.54, 0.66, 0.66, 0.72}, {0.76, 0.75, 0.70, 0.78}, "0.48", "0.75", "+56.3%"},
  };
  for (const auto& b : blocks) {
    auto scores = [&](const char* name, const std::vector<double>& v) {
      sa::MethodScores m{name, {}};
      for (std::size_t i = 0; i < b.langs.size(); ++i) m.values["A"][b.langs[i]] = v[i];
      return m;
    };
    const auto t = sa::report_table(b.style, b.langs, {scores("Vanilla", b.vanilla), scores("Preserve", b.preserve)},
                                    scores("RASTA", b.rasta), 2);
    const std::string av = fmt("%.2f", t.averages.at("Vanilla").at("A"));
    const std::string ar = fmt("%.2f", t.averages.at("RASTA").at("A"));
    const std::string d = t.deltas.at("Vanilla").at("A");
    o.require(av == b.avg_vanilla && ar == b.avg_rasta && d == b.delta,
              std::string(b.style) + ": " + av + " -> " + ar + " " + d);
    if (o.ok) o.detail += std::string(o.detail.empty() ? "" : ", ") + b.style + " " + av + "->" + ar + " " + d;
  }
  const double s = seconds_since(t0);
  o.require(s < 1.0, "runtime " + fmt("%.3f", s) + " s");
  return o;
}

// Textbook one-pass formula, coded apart from the library.
double pearson_oracle(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    syy += y[i] * y[i];
    sxy += x[i] * y[i];
  }
  return (n * sxy - sx * sy) / std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
}

Outcome criterion2() {
  Outcome o;
  const std::vector<double> x = {1, 2, 3, 4, 5};
  std::vector<double> up, down;
  for (double v : x) {
    up.push_back(2.0 * v + 3.0);
    down.push_back(-0.5 * v + 7.0);
  }
  o.require(std::abs(sa::pearson(x, up) - 1.0) <= 1e-12, "r(+1)");
  o.require(std::abs(sa::pearson(x, down) + 1.0) <= 1e-12, "r(-1)");
  bool threw = false;
  try {
    const std::vector<double> flat = {0.3, 0.3, 0.3, 0.3, 0.3};
    sa::pearson(x, flat);
  } catch (const sa::UndefinedStatistic&) {
    threw = true;
  }
  o.require(threw, "constant series did not raise UndefinedStatistic");

  const std::vector<double> a = {1, 2, 3}, b = {1, 2, 4};
  const double r = sa::pearson(a, b);
  const double oracle = pearson_oracle(a, b);
  o.require(std::abs(r - 0.98198) <= 1e-5 && std::abs(r - oracle) <= 1e-12,
            "r(1,2,3;1,2,4) = " + fmt("%.17g", r) + " oracle " + fmt("%.17g", oracle));

  std::mt19937_64 rng(20240611);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> len(3, 60);
  std::uniform_real_distribution<double> coef(0.1, 10.0), shift(-100.0, 100.0);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = len(rng);
    std::vector<double> xs(n), ys(n), xt(n), yt(n);
    const double rho = std::uniform_real_distribution<double>(-0.95, 0.95)(rng);
    for (int i = 0; i < n; ++i) {
      xs[i] = normal(rng);
      ys[i] = rho * xs[i] + std::sqrt(1 - rho * rho) * normal(rng);
    }
    const double ca = coef(rng) * (rng() % 2 ? 1 : -1), cb = shift(rng);
    const double cc = coef(rng) * (rng() % 2 ? 1 : -1), cd = shift(rng);
    for (int i = 0; i < n; ++i) {
      xt[i] = ca * xs[i] + cb;
      yt[i] = cc * ys[i] + cd;
    }
    const double sign = (ca > 0) == (cc > 0) ? 1.0 : -1.0;
    worst = std::max(worst, std::abs(sa::pearson(xt, yt) - sign * sa::pearson(xs, ys)));
  }
  o.require(worst <= 1e-9, "affine invariance max error " + fmt("%.3g", worst));
  if (o.ok) o.detail = "r=" + fmt("%.7f", r) + ", affine max err " + fmt("%.2g", worst);
  return o;
}

// O(n k) scan: k passes, each picking the best remaining candidate (similarity desc, id asc).
std::vector<std::string> brute_force_top_k(const std::vector<sa::IndexEntry>& entries, const std::vector<double>& q,
                                           std::size_t k) {
  auto norm = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double c : v) s += c * c;
    return std::sqrt(s);
  };
  const double qn = norm(q);
  std::vector<double> sims(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    double d = 0.0;
    for (std::size_t j = 0; j < q.size(); ++j) d += q[j] * entries[i].vector[j];
    sims[i] = std::clamp(d / (qn * norm(entries[i].vector)), -1.0, 1.0);
  }
  std::vector<bool> taken(entries.size(), false);
  std::vector<std::string> out;
  for (std::size_t pass = 0; pass < k; ++pass) {
    std::ptrdiff_t best = -1;
    for (std::size_t i = 0; i < entries.size(); ++i) {
      if (taken[i]) continue;
      if (best < 0 || sims[i] > sims[best] || (sims[i] == sims[best] && entries[i].id < entries[best].id)) {
        best = static_cast<std::ptrdiff_t>(i);
      }
    }
    taken[best] = true;
    out.push_back(entries[best].id);
  }
  return out;
}

Outcome criterion3() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t dim = 16;
  std::mt19937_64 rng(7);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::size_t checked = 0;
  for (std::size_t n : {10, 100, 1000}) {
    sa::ExemplarIndex index(dim, 2);
    std::vector<sa::IndexEntry> entries;
    for (std::size_t i = 0; i < n; ++i) {
      char id[32];
      std::snprintf(id, sizeof(id), "c%05zu", i);
      sa::Vec v(dim);
      // Every fourth vector repeats an earlier one (scaled by 2) to force exact ties.
      if (i % 4 == 3) {
        v = entries[i / 2].vector;
        for (auto& c : v) c *= 2.0;
      } else {
        for (auto& c : v) c = normal(rng);
      }
      entries.push_back({id, v, 0.0, 0.25, id});
      index.add("xx", 0, entries.back());
    }
    for (std::size_t k : {1, 5, 10}) {
      for (int qi = 0; qi < 100; ++qi) {
        sa::Vec q(dim);
        if (qi % 10 == 0) {
          q = entries[static_cast<std::size_t>(qi) % n].vector;
        } else {
          for (auto& c : q) c = normal(rng);
        }
        const auto got = index.retrieve(q, "xx", sa::StyleLevel{0, 2}, k);
        const auto want = brute_force_top_k(entries, q, k);
        std::vector<std::string> ids;
        for (const auto& e : got.exemplars) ids.push_back(e.id);
        if (ids != want) {
          o.require(false, "mismatch n=" + std::to_string(n) + " k=" + std::to_string(k) + " q=" + std::to_string(qi));
          return o;
        }
        ++checked;
      }
    }
  }
  const double s = seconds_since(t0);
  o.require(s < 5.0, "runtime " + fmt("%.3f", s) + " s");
  if (o.ok) o.detail = std::to_string(checked) + " queries match, " + fmt("%.3f", s) + " s";
  return o;
}

sa::Centroid centroid_of(const std::string& lang, const std::string& scope, const std::vector<sa::Vec>& members) {
  return sa::Centroid{lang, sa::StyleLevel{1, 2}, scope, sa::compute_centroid(members), members.size()};
}

Outcome criterion4() {
  Outcome o;
  std::mt19937_64 rng(11);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto cloud = [&](std::size_t n, double offset) {
    std::vector<sa::Vec> out(n, sa::Vec(64));
    for (auto& v : out) {
      for (auto& c : v) c = offset + normal(rng);
      v = sa::quantize_f32(v);
    }
    return out;
  };
  for (int trial = 0; trial < 50; ++trial) {
    const auto en = centroid_of("en", "native", cloud(20, 0.3));
    const auto ja = centroid_of("ja", "native", cloud(25, -0.2));
    const auto en_ja = centroid_of("ja", "translated-from:en", cloud(15, 0.1));
    const auto ja_en = centroid_of("en", "translated-from:ja", cloud(15, 0.0));
    const auto fwd = sa::compute_mappings(en, ja, en_ja);
    const auto back = sa::compute_mappings(ja, en, ja_en);
    for (std::size_t i = 0; i < 64; ++i) {
      if (fwd.v_align[i] != fwd.v_native[i] - fwd.v_trans[i]) {
        o.require(false, "v_align != v_native - v_trans");
        return o;
      }
      if (back.v_native[i] != -fwd.v_native[i]) {
        o.require(false, "antisymmetry violated");
        return o;
      }
    }
    // Translations that land exactly on the native target centroid need no correction.
    sa::Centroid exact = ja;
    exact.scope = "translated-from:en";
    const auto zero = sa::compute_mappings(en, ja, exact);
    if (!std::all_of(zero.v_align.begin(), zero.v_align.end(), [](double c) { return c == 0.0; })) {
      o.require(false, "zero-correction case is not the zero vector");
      return o;
    }
  }
  if (o.ok) o.detail = "50 random trials exact";
  return o;
}

Outcome criterion5() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  sa::SyntheticSpec spec;
  spec.languages = {"en", "ja", "es"};
  spec.dim = 64;
  spec.samples_per_bucket = 500;
  spec.inter_cluster_separation = 1.0;
  spec.within_cluster_std = 0.2;
  spec.seed = 3;
  const auto world = sa::generate(spec);
  double worst = 1.0;
  for (const auto& src : spec.languages) {
    for (const auto& tgt : spec.languages) {
      if (src == tgt) continue;
      const auto pm = sa::learn_pair_mappings(world.corpus(), world.store(), src, tgt, spec.n_bins);
      for (int b = 0; b < spec.n_bins; ++b) {
        worst = std::min(worst, sa::cosine_similarity(world.planted(src, tgt, b).v_align, pm.at(b).v_align));
      }
    }
  }
  const double s = seconds_since(t0);
  o.require(worst >= 0.99, "min cosine " + fmt("%.5f", worst));
  o.require(s < 10.0, "runtime " + fmt("%.3f", s) + " s");
  if (o.ok) o.detail = "min cosine " + fmt("%.5f", worst) + ", " + fmt("%.2f", s) + " s";
  return o;
}

std::vector<double> labels_of(const sa::VariantReport& vr, bool translated) {
  std::vector<double> out;
  for (const auto& p : vr.pairs) {
    for (const auto& [id, v] : translated ? p.translated_scores : p.original_scores) out.push_back(v);
  }
  return out;
}

double population_std(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size()));
}

Outcome criterion6() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<std::string> parts;

  {
    sa::SyntheticSpec spec;
    spec.languages = {"en", "ja", "es"};
    spec.dim = 8;
    spec.samples_per_bucket = 200;
    spec.distortion = sa::Distortion::parse("identity");
    sa::Pipeline p(testbed_config(spec, scratch("identity"), {sa::Variant::Vanilla}));
    double worst = 0.0;
    for (const auto& pair : p.score(sa::Variant::Vanilla).pairs) {
      worst = std::max(worst, pair.result.A ? std::abs(*pair.result.A - 1.0) : 1.0);
    }
    o.require(worst <= 1e-9, "identity max |A-1| " + fmt("%.3g", worst));
    parts.push_back("identity |A-1|<=" + fmt("%.1g", worst));
  }

  {
    // Uniform labels of width w have std w / sqrt(12); std 0.2 needs w = 0.4 * sqrt(3).
    const double half = 0.2 * std::sqrt(3.0);
    const double sigma_x = 0.2, sigma = 0.1;
    const double closed_form = sigma_x / std::sqrt(sigma_x * sigma_x + sigma * sigma);
    // Monte-Carlo cross-check of the closed form, independent of the testbed.
    std::mt19937_64 mc(99);
    std::uniform_real_distribution<double> ux(0.5 - half, 0.5 + half);
    std::normal_distribution<double> nz(0.0, sigma);
    std::vector<double> mx(200000), my(200000);
    for (std::size_t i = 0; i < mx.size(); ++i) {
      mx[i] = ux(mc);
      my[i] = mx[i] + nz(mc);
    }
    const double monte_carlo = pearson_oracle(mx, my);
    o.require(std::abs(monte_carlo - closed_form) < 0.005, "closed form disagrees with Monte-Carlo");

    sa::SyntheticSpec spec;
    spec.languages = {"en", "ja"};
    spec.dim = 4;
    spec.samples_per_bucket = 10000;
    spec.test_fraction = 0.5;
    spec.label_lo = 0.5 - half;
    spec.label_hi = 0.5 + half;
    spec.distortion = sa::Distortion::parse("gaussian:0.1");
    spec.seed = 5;
    sa::Pipeline p(testbed_config(spec, scratch("gaussian"), {sa::Variant::Vanilla}));
    const auto vr = p.score(sa::Variant::Vanilla);
    for (const auto& pair : vr.pairs) {
      const double a = pair.result.A.value_or(0.0);
      o.require(pair.result.n == 10000, "gaussian pair n=" + std::to_string(pair.result.n));
      o.require(std::abs(a - 0.894) <= 0.03, pair.source + "->" + pair.target + " A=" + fmt("%.4f", a));
      parts.push_back("gaussian " + pair.source + "->" + pair.target + " A=" + fmt("%.4f", a));
    }
    parts.push_back("oracle " + fmt("%.4f", closed_form) + " (MC " + fmt("%.4f", monte_carlo) + ")");
  }

  {
    sa::SyntheticSpec spec;
    spec.languages = {"en", "ja"};
    spec.dim = 4;
    spec.samples_per_bucket = 500;
    spec.label_lo = 0.25;
    spec.label_hi = 0.75;
    spec.distortion = sa::Distortion::parse("shrink:0.5");
    sa::Pipeline p(testbed_config(spec, scratch("shrink"), {sa::Variant::Vanilla}));
    const auto vr = p.score(sa::Variant::Vanilla);
    double worst = 0.0;
    for (const auto& pair : vr.pairs) worst = std::max(worst, pair.result.A ? std::abs(*pair.result.A - 1.0) : 1.0);
    const double ratio = population_std(labels_of(vr, true)) / population_std(labels_of(vr, false));
    o.require(worst <= 1e-9, "shrink max |A-1| " + fmt("%.3g", worst));
    o.require(std::abs(ratio - 0.5) <= 1e-12, "std ratio " + fmt("%.17g", ratio));
    parts.push_back("shrink std ratio " + fmt("%.15f", ratio));
  }

  const double s = seconds_since(t0);
  o.require(s < 60.0, "runtime " + fmt("%.2f", s) + " s");
  if (o.ok) {
    for (const auto& p : parts) o.detail += (o.detail.empty() ? "" : ", ") + p;
    o.detail += ", " + fmt("%.2f", s) + " s";
  }
  return o;
}

Outcome criterion7() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  sa::SyntheticSpec spec;
  spec.languages = {"en", "ja", "es"};
  spec.dim = 64;
  spec.samples_per_bucket = 150;
  spec.distortion = sa::Distortion::parse("planted-style-shift:0.8");
  spec.seed = 17;
  sa::Pipeline p(testbed_config(spec, scratch("planted"), {sa::Variant::Vanilla, sa::Variant::Rasta}));
  double rasta_worst = 0.0, vanilla_best = -1.0;
  for (const auto& pair : p.score(sa::Variant::Rasta).pairs) {
    rasta_worst = std::max(rasta_worst, pair.result.A ? std::abs(*pair.result.A - 1.0) : 1.0);
  }
  for (const auto& pair : p.score(sa::Variant::Vanilla).pairs) {
    vanilla_best = std::max(vanilla_best, pair.result.A.value_or(1.0));
  }
  const double s = seconds_since(t0);
  o.require(rasta_worst <= 1e-6, "RASTA max |A-1| " + fmt("%.3g", rasta_worst));
  o.require(vanilla_best <= 0.95, "vanilla max A " + fmt("%.4f", vanilla_best));
  o.require(s < 30.0, "runtime " + fmt("%.2f", s) + " s");
  if (o.ok) {
    o.detail = "RASTA max |A-1| " + fmt("%.2g", rasta_worst) + ", vanilla max A " + fmt("%.4f", vanilla_best) + ", " +
               fmt("%.2f", s) + " s";
  }
  return o;
}

Outcome criterion8() {
  Outcome o;
  const fs::path golden = fs::path(STYLEALIGN_SOURCE_DIR) / "tests" / "golden";
  const auto templates = sa::PromptTemplates::load(fs::path(STYLEALIGN_SOURCE_DIR) / "templates");
  sa::PromptRequest vanilla{sa::Variant::Vanilla, "Hi", "English", "Japanese", "politeness", std::nullopt, {}, 5};
  sa::PromptRequest preserve{sa::Variant::Preserve, "Could you provide more details, please?", "English", "Spanish",
                             "politeness", std::nullopt, {}, 5};
  sa::PromptRequest rasta{sa::Variant::Rasta,
                          "ご確認ください。",
                          "Japanese",
                          "English",
                          "politeness",
                          0.25,
                          {"Thanks for your help!", "Could you take a look when you get a chance?", "Please fix this.",
                           "I appreciate the quick reply.", "Would you mind checking the sources?"},
                          5};
  const std::vector<std::pair<std::string, sa::PromptRequest>> cases = {
      {"vanilla_en_ja.txt", vanilla}, {"preserve_en_es.txt", preserve}, {"rasta_ja_en.txt", rasta}};
  for (const auto& [file, req] : cases) {
    o.require(sa::render_prompt(req, templates) == sa::read_file(golden / file), file + " (checked-in templates)");
    o.require(sa::render_prompt(req) == sa::read_file(golden / file), file + " (built-in templates)");
  }
  if (o.ok) o.detail = "3 goldens byte-exact";
  return o;
}

/// Counts every prompt that reaches the wrapped backend.
class CountingTranslator : public sa::CompletionBackend {
 public:
  explicit CountingTranslator(std::shared_ptr<sa::CompletionBackend> inner) : inner_(std::move(inner)) {}
  std::string complete(const sa::CompletionRequest& r) override {
    {
      std::lock_guard lock(mutex_);
      ++seen_[r.prompt + "\x1f" + r.model + "\x1f" + std::to_string(r.temperature) + "\x1f" + std::to_string(r.top_p)];
      ++calls_;
    }
    return inner_->complete(r);
  }
  std::size_t calls() const { return calls_; }
  std::size_t duplicates() const {
    std::size_t d = 0;
    for (const auto& [k, n] : seen_) d += n - 1;
    return d;
  }

 private:
  std::shared_ptr<sa::CompletionBackend> inner_;
  std::mutex mutex_;
  std::map<std::string, std::size_t> seen_;
  std::size_t calls_ = 0;
};

Outcome criterion9() {
  Outcome o;
  sa::SyntheticSpec spec;
  spec.languages = {"en", "ja", "es"};
  spec.dim = 16;
  spec.samples_per_bucket = 60;
  spec.distortion = sa::Distortion::parse("planted-style-shift");
  spec.seed = 23;
  const std::vector<sa::Variant> all = {sa::Variant::Vanilla, sa::Variant::Preserve, sa::Variant::Rasta};
  const std::vector<std::string> artifacts = {"report.json",         "report.txt",          "manifest.json",
                                              "heatmap_vanilla.csv", "heatmap_rasta.csv",   "heatmap_preserve.csv",
                                              "centroids.json",      "mappings/politeness_en_ja.json"};

  std::vector<std::map<std::string, std::string>> runs;
  std::size_t first_run_calls = 0;
  for (int run = 0; run < 2; ++run) {
    const fs::path out = scratch("hygiene_" + std::to_string(run));
    auto world = std::make_shared<sa::SyntheticWorld>(sa::generate(spec));
    auto counter = std::make_shared<CountingTranslator>(std::make_shared<sa::MockTranslator>(world, spec.distortion));
    sa::Pipeline::Providers providers;
    providers.translator = counter;
    sa::Pipeline p(testbed_config(spec, out, all), providers);
    const auto report = p.evaluate(all);
    p.emit_report(report);
    p.centroids();
    o.require(counter->duplicates() == 0, "duplicate provider calls: " + std::to_string(counter->duplicates()));
    o.require(report.hygiene.violations == 0 && report.hygiene.exemplar_ids > 0, "hygiene counters");

    // Independent recount of the intersections from the written artifacts.
    std::set<std::string> test_ids = world->corpus().ids(sa::Split::Test), used;
    for (const auto& entry : fs::directory_iterator(out / "mappings")) {
      const auto pm = sa::pair_mappings_from_json(nlohmann::json::parse(sa::read_file(entry.path())));
      used.insert(pm.contributing_ids.begin(), pm.contributing_ids.end());
    }
    std::size_t overlap = 0;
    for (const auto& id : used) overlap += test_ids.count(id);
    o.require(!used.empty() && overlap == 0, "centroid ids intersect test ids: " + std::to_string(overlap));
    o.require(p.translator_client().stats().provider_calls == counter->calls(), "client call count");
    if (run == 0) first_run_calls = counter->calls();

    std::map<std::string, std::string> bytes;
    for (const auto& a : artifacts) bytes[a] = sa::read_file(out / a);
    runs.push_back(std::move(bytes));
  }
  for (const auto& a : artifacts) o.require(runs[0].at(a) == runs[1].at(a), a + " differs between seeded runs");

  // Re-running over the first output directory must be served entirely from cache.
  {
    auto world = std::make_shared<sa::SyntheticWorld>(sa::generate(spec));
    auto counter = std::make_shared<CountingTranslator>(std::make_shared<sa::MockTranslator>(world, spec.distortion));
    sa::Pipeline::Providers providers;
    providers.translator = counter;
    auto cfg = testbed_config(spec, fs::temp_directory_path() / ("stylealign_acc_" + std::to_string(::getpid())) /
                                        "hygiene_0",
                              all);
    sa::Pipeline p(cfg, providers);
    const auto report = p.evaluate(all);
    o.require(counter->calls() == 0, "resumed run made " + std::to_string(counter->calls()) + " provider calls");
    o.require(report.to_json().dump() == nlohmann::json::parse(runs[0].at("report.json")).dump(),
              "resumed report differs");
  }

  // Concurrent duplicate prompts collapse onto one provider call.
  {
    auto world = std::make_shared<sa::SyntheticWorld>(sa::generate(spec));
    auto counter = std::make_shared<CountingTranslator>(std::make_shared<sa::MockTranslator>(world, spec.distortion));
    sa::ProviderConfig pc;
    pc.kind = "testbed";
    pc.model_id = "mock";
    pc.max_in_flight = 8;
    sa::TranslatorClient client(counter, pc);
    std::vector<std::string> prompts;
    sa::PromptRequest req{sa::Variant::Vanilla, "", "English", "Japanese", "politeness", std::nullopt, {}, 5};
    for (int rep = 0; rep < 8; ++rep) {
      for (std::size_t i = 0; i < 20; ++i) {
        req.text = sa::SyntheticWorld::sample_text("en", 0, i);
        prompts.push_back(sa::render_prompt(req));
      }
    }
    client.translate_all(prompts);
    o.require(counter->calls() == 20, "160 prompts (20 unique) made " + std::to_string(counter->calls()) + " calls");
  }

  if (o.ok) {
    o.detail = std::to_string(artifacts.size()) + " artifacts identical across runs, " +
               std::to_string(first_run_calls) + " unique calls, 0 on resume, empty train/test overlap";
  }
  return o;
}

class FixedScorer : public sa::ScorerBackend {
 public:
  explicit FixedScorer(std::function<double(const sa::ScoreRequest&)> f) : f_(std::move(f)) {}
  std::string model_id() const override { return "fixed"; }
  double score(const sa::ScoreRequest& r) override { return f_(r); }

 private:
  std::function<double(const sa::ScoreRequest&)> f_;
};

Outcome criterion10() {
  Outcome o;
  const std::vector<double> constant(101, 0.5);
  const auto c = sa::distribution_stats(constant);
  o.require(c.std == 0.0 && c.neutral_fraction == 1.0, "constant 0.5: std " + fmt("%g", c.std) + ", neutral " +
                                                           fmt("%g", c.neutral_fraction));
  const std::vector<double> ends = {0.0, 1.0};
  const auto e = sa::distribution_stats(ends);
  o.require(e.std == 0.5, "{0,1} std " + fmt("%.17g", e.std));
  o.require(e.low_extreme_fraction == 0.5 && e.high_extreme_fraction == 0.5 && e.neutral_fraction == 0.0,
            "{0,1} endpoint extremes");

  std::vector<sa::StyleSample> samples;
  for (int i = 0; i < 40; ++i) {
    char id[16];
    std::snprintf(id, sizeof(id), "en-%03d", i);
    samples.push_back({id, "en", std::string("text ") + id, static_cast<double>(i % 2), sa::Split::Test});
  }
  const sa::StyleCorpus corpus("politeness", samples);
  const auto test = corpus.select("en", sa::Split::Test);
  sa::ProviderConfig pc;
  pc.kind = "testbed";
  pc.model_id = "fixed";
  sa::ScorerClient perfect(std::make_shared<FixedScorer>([&](const sa::ScoreRequest& r) {
                             return corpus.at(r.id).style_label;
                           }),
                           pc);
  sa::ScorerClient neutral(std::make_shared<FixedScorer>([](const sa::ScoreRequest&) { return 0.5; }), pc);
  const double r0 = sa::validate_scorer(perfect, test, "politeness");
  const double r1 = sa::validate_scorer(neutral, test, "politeness");
  o.require(r0 == 0.0, "perfect RMSE " + fmt("%.17g", r0));
  o.require(r1 == 0.5, "constant RMSE " + fmt("%.17g", r1));
  if (o.ok) o.detail = "std 0 / 0.5, extremes 0.5+0.5, RMSE 0 / 0.5";
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"report arithmetic", criterion1},      {"pearson", criterion2},
      {"retrieval oracle", criterion3},       {"mapping algebra", criterion4},
      {"geometry recovery", criterion5},      {"synthetic alignment", criterion6},
      {"rasta beats vanilla", criterion7},    {"prompt goldens", criterion8},
      {"pipeline hygiene", criterion9},       {"distribution statistics", criterion10},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.ok = false;
      o.detail = std::string("exception: ") + e.what();
    }
    std::printf("%s  %2zu  %-24s %s\n", o.ok ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
    if (!o.ok) ++failures;
  }
  fs::remove_all(fs::temp_directory_path() / ("stylealign_acc_" + std::to_string(::getpid())));
  return failures == 0 ? 0 : 1;
}
