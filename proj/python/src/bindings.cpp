#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "stylealign/alignment.hpp"
#include "stylealign/corpus.hpp"
#include "stylealign/embedding.hpp"
#include "stylealign/error.hpp"
#include "stylealign/metrics.hpp"
#include "stylealign/pipeline.hpp"
#include "stylealign/prompting.hpp"
#include "stylealign/retrieval.hpp"
#include "stylealign/testbed.hpp"

namespace py = pybind11;
namespace sa = stylealign;
using nlohmann::json;

namespace {

// Structured results cross the boundary as JSON text; the Python layer decodes them.
std::string corpus_json(const sa::StyleCorpus& c) {
  json samples = json::array();
  for (const auto& s : c.samples()) {
    samples.push_back({{"id", s.id},
                       {"language", s.language},
                       {"text", s.text},
                       {"style_label", s.style_label},
                       {"split", std::string(sa::to_string(s.split))}});
  }
  return json{{"style_name", c.style_name()}, {"samples", samples}}.dump();
}

std::string report_table_json(const std::string& style, const std::vector<std::string>& languages,
                              const std::vector<std::pair<std::string, std::map<std::string, double>>>& baselines,
                              const std::map<std::string, double>& rasta, int decimals) {
  std::vector<sa::MethodScores> bs;
  for (const auto& [name, values] : baselines) bs.push_back({name, {{"A", values}}});
  const auto t = sa::report_table(style, languages, bs, {"RASTA", {{"A", rasta}}}, decimals);
  json j = t.to_json();
  j["text"] = t.render();
  return j.dump();
}

std::string heatmap_json(const std::vector<std::tuple<std::string, std::string, std::optional<double>>>& cells) {
  std::vector<sa::AlignmentResult> results;
  for (const auto& [s, t, a] : cells) {
    sa::AlignmentResult r;
    r.source = s;
    r.target = t;
    r.A = a;
    results.push_back(r);
  }
  const auto h = sa::build_heatmap(results);
  json j = h.to_json();
  j["csv"] = h.to_csv();
  j["flags_csv"] = h.flags_csv();
  return j.dump();
}

std::string run_pipeline(const std::string& config_json, const std::string& base_dir,
                         const std::vector<std::string>& variants) {
  auto cfg = sa::RunConfig::from_json(json::parse(config_json), base_dir);
  sa::Pipeline p(std::move(cfg));
  std::vector<sa::Variant> vs;
  for (const auto& v : variants) vs.push_back(sa::parse_variant(v));
  if (vs.empty()) vs = p.config().variants;
  py::gil_scoped_release release;
  const auto report = p.evaluate(vs);
  p.emit_report(report);
  return report.to_json().dump();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Retrieval-augmented style alignment for machine translation (C++ core)";

  auto error = py::register_exception<sa::Error>(m, "Error", PyExc_RuntimeError);
  auto data_error = py::register_exception<sa::DataError>(m, "DataError", error.ptr());
  py::register_exception<sa::UndefinedStatistic>(m, "UndefinedStatistic", data_error.ptr());
  py::register_exception<sa::DimensionMismatch>(m, "DimensionMismatch", data_error.ptr());
  py::register_exception<sa::ConfigError>(m, "ConfigError", error.ptr());
  auto provider_error = py::register_exception<sa::ProviderError>(m, "ProviderError", error.ptr());
  py::register_exception<sa::TransientError>(m, "TransientError", provider_error.ptr());
  py::register_exception<sa::ParseError>(m, "ParseError", provider_error.ptr());

  m.def("pearson", [](const std::vector<double>& x, const std::vector<double>& y) { return sa::pearson(x, y); },
        py::arg("x"), py::arg("y"));
  m.def("_alignment_score", [](const std::vector<double>& x, const std::vector<double>& y) {
    return sa::alignment_score(x, y).to_json().dump();
  });
  m.def("_distribution_stats", [](const std::vector<double>& s) { return sa::distribution_stats(s).to_json().dump(); });
  m.def("relative_std_change", [](const std::vector<double>& before, const std::vector<double>& after) {
    return sa::relative_std_change(before, after);
  });
  m.def("round_to", &sa::round_to, py::arg("value"), py::arg("decimals"));
  m.def("format_delta", &sa::format_delta);
  m.def("_report_table", &report_table_json);
  m.def("_build_heatmap", &heatmap_json);
  m.def("correlation_p_value", &sa::correlation_p_value, py::arg("r"), py::arg("n"));

  m.def("bin_style", [](double label, int n_bins) { return sa::bin_style(label, n_bins).index; });
  m.def("normalize_language", [](const std::string& code) { return sa::normalize_language(code); });
  m.def("_load_corpus", [](const std::string& path) { return corpus_json(sa::load_corpus(path)); });

  m.def("cosine_similarity", [](const std::vector<double>& a, const std::vector<double>& b) {
    return sa::cosine_similarity(a, b);
  });

  m.def(
      "render_prompt",
      [](const std::string& variant, const std::string& text, const std::string& source, const std::string& target,
         const std::string& style, std::optional<double> label, const std::vector<std::string>& exemplars,
         std::size_t k, const std::string& templates_dir) {
        sa::PromptRequest req{sa::parse_variant(variant), text, source, target, style, label, exemplars, k};
        const auto t = templates_dir.empty() ? sa::PromptTemplates::builtin() : sa::PromptTemplates::load(templates_dir);
        return sa::render_prompt(req, t);
      },
      py::arg("variant"), py::arg("text"), py::arg("source"), py::arg("target"), py::arg("style") = "",
      py::arg("label") = std::nullopt, py::arg("exemplars") = std::vector<std::string>{}, py::arg("k") = 5,
      py::arg("templates_dir") = "");
  m.def("display_name", [](const std::string& code) { return sa::display_name(code); });

  py::class_<sa::ExemplarIndex>(m, "ExemplarIndex")
      .def(py::init<std::size_t, int>(), py::arg("dim"), py::arg("n_bins"))
      .def(
          "add",
          [](sa::ExemplarIndex& self, const std::string& language, const std::string& id, std::vector<double> vector,
             double label, const std::string& text) {
            self.add(language, sa::bin_style(label, self.n_bins()).index,
                     sa::IndexEntry{id, std::move(vector), 0.0, label, text});
          },
          py::arg("language"), py::arg("id"), py::arg("vector"), py::arg("label"), py::arg("text") = "")
      .def(
          "retrieve",
          [](const sa::ExemplarIndex& self, const std::vector<double>& query, const std::string& language,
             double label, std::size_t k) {
            const auto set = self.retrieve(query, language, sa::bin_style(label, self.n_bins()), k);
            std::vector<std::pair<std::string, double>> out;
            for (const auto& e : set.exemplars) out.emplace_back(e.id, e.similarity);
            return out;
          },
          py::arg("query"), py::arg("language"), py::arg("label"), py::arg("k") = 5)
      .def("__len__", &sa::ExemplarIndex::size);

  m.def(
      "_generate_testbed",
      [](const std::string& spec_json) {
        const auto world = sa::generate(sa::SyntheticSpec::from_json(json::parse(spec_json)));
        json planted = json::array();
        for (const auto& [key, mp] : world.planted_mappings()) {
          planted.push_back({{"source", mp.source}, {"target", mp.target}, {"level", mp.level.index},
                             {"v_align", mp.v_align}});
        }
        json j = json::parse(corpus_json(world.corpus()));
        j["planted"] = planted;
        return j.dump();
      },
      py::arg("spec_json"));
  m.def(
      "mock_translate",
      [](const std::string& id, double label, const std::string& target, const std::string& distortion, int n_bins,
         std::uint64_t seed) {
        sa::StyleSample s{id, "xx", "t", label, sa::Split::Test};
        const auto out = sa::mock_translate(s, target, sa::Distortion::parse(distortion), n_bins, seed);
        return py::make_tuple(out.text, out.label, out.clamped);
      },
      py::arg("id"), py::arg("label"), py::arg("target"), py::arg("distortion"), py::arg("n_bins") = 2,
      py::arg("seed") = 0);

  m.def("_run_pipeline", &run_pipeline, py::arg("config_json"), py::arg("base_dir") = "",
        py::arg("variants") = std::vector<std::string>{});
}
