#include "stylealign/prompting.hpp"

#include <cmath>
#include <cstdio>

#include "stylealign/error.hpp"
#include "stylealign/io.hpp"

namespace stylealign {

namespace {

constexpr std::string_view kVanilla =
    "Translate the following text from <Source> to <Target>.\n"
    "Text: <Sample>\n"
    "Output only the translation.";

constexpr std::string_view kPreserve =
    "Your task is to translate a given piece of text from <Source> to <Target>.\n"
    "When translating, you must ensure the <Style> level of the translation matches the <Style> level of "
    "the original text.\n"
    "Keep in mind that <Style> varies across cultures, so a direct word-for-word translation may not "
    "always ensure the <Style> level will match that of the original text.\n"
    "\n"
    "This is the text you need to translate:\n"
    "<Sample>\n"
    "\n"
    "Now, translate the text so that the translation also has the same <Style> level. Output only the "
    "translation.";

constexpr std::string_view kRasta =
    "Your task is to translate a given piece of text from <Source> to <Target>.\n"
    "When translating, you must ensure the <Style> level of the translation matches the <Style> level of "
    "the original text.\n"
    "Keep in mind that <Style> varies across cultures, so a direct word-for-word translation may not "
    "always ensure the <Style> level will match that of the original text.\n"
    "\n"
    "This is the text you need to translate:\n"
    "<Sample>\n"
    "\n"
    "This text has a <Style> level of {} out of 1 in {}.\n"
    "\n"
    "To help you translate the text in a way that preserves <Style>, here are some examples of text that "
    "have the same <Style> level in {}.\n"
    "Pay attention to the way <Style> is expressed in these examples, and try to reflect it similarly in "
    "your translation.\n"
    "<example 1>\n"
    "\n"
    "<example 2>\n"
    "\n"
    "<example 3>\n"
    "\n"
    "<example 4>\n"
    "\n"
    "<example 5>\n"
    "\n"
    "Now, translate the above text to preserve the content of the message, while also making sure the "
    "<Style> level is similar to the above examples.\n"
    "Specifically, the translation should also have a <Style> level of {} out of 1 in {}. Output only the "
    "translation.";

struct Bindings {
  std::string source;
  std::string target;
  std::string style;
  std::string sample;
  std::string label;
  std::vector<PromptTemplates::Slot> slots;
  const std::vector<std::string>* exemplars = nullptr;
};

/// Locates the run from "<example 1>" to the end of the last "<example N>" marker.
std::pair<std::size_t, std::size_t> exemplar_block(std::string_view tpl) {
  const auto first = tpl.find("<example 1>");
  if (first == std::string_view::npos) return {std::string_view::npos, std::string_view::npos};
  std::size_t end = first;
  std::size_t pos = first;
  while ((pos = tpl.find("<example ", pos)) != std::string_view::npos) {
    const auto close = tpl.find('>', pos);
    if (close == std::string_view::npos) break;
    end = close + 1;
    pos = end;
  }
  return {first, end};
}

/// Single left-to-right pass over the template; substituted values are never rescanned.
std::string substitute(std::string_view tpl, const Bindings& b) {
  static constexpr std::pair<std::string_view, int> kTokens[] = {
      {"<Source>", 0}, {"<Target>", 1}, {"<Style>", 2}, {"<Sample>", 3}, {"{}", 4}};
  const auto [block_begin, block_end] = exemplar_block(tpl);
  std::string out;
  out.reserve(tpl.size() + b.sample.size() + 256);
  std::size_t slot = 0;
  std::size_t i = 0;
  while (i < tpl.size()) {
    if (i == block_begin && b.exemplars != nullptr) {
      for (std::size_t e = 0; e < b.exemplars->size(); ++e) {
        if (e > 0) out += "\n\n";
        out += (*b.exemplars)[e];
      }
      i = block_end;
      continue;
    }
    bool matched = false;
    for (const auto& [token, kind] : kTokens) {
      if (tpl.compare(i, token.size(), token) != 0) continue;
      switch (kind) {
        case 0: out += b.source; break;
        case 1: out += b.target; break;
        case 2: out += b.style; break;
        case 3: out += b.sample; break;
        default: {
          if (slot >= b.slots.size()) throw ConfigError("template has more {} slots than bindings");
          switch (b.slots[slot++]) {
            case PromptTemplates::Slot::Label: out += b.label; break;
            case PromptTemplates::Slot::Target: out += b.target; break;
            case PromptTemplates::Slot::Source: out += b.source; break;
          }
        }
      }
      i += token.size();
      matched = true;
      break;
    }
    if (!matched) out.push_back(tpl[i++]);
  }
  return out;
}

bool blank(const std::string& s) { return s.find_first_not_of(" \t\r\n") == std::string::npos; }

void check_common(const PromptRequest& req) {
  if (req.text.empty()) throw DataError("cannot render a prompt for empty text");
  if (blank(req.source_language) || blank(req.target_language)) {
    throw DataError("language display names must be non-empty");
  }
}

std::string strip_one_newline(std::string s) {
  if (!s.empty() && s.back() == '\n') s.pop_back();
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

}  // namespace

std::string_view to_string(Variant variant) {
  switch (variant) {
    case Variant::Vanilla: return "vanilla";
    case Variant::Preserve: return "preserve";
    case Variant::Rasta: return "rasta";
  }
  return "vanilla";
}

Variant parse_variant(std::string_view text) {
  if (text == "vanilla") return Variant::Vanilla;
  if (text == "preserve") return Variant::Preserve;
  if (text == "rasta") return Variant::Rasta;
  throw ConfigError("unknown prompt variant '" + std::string(text) + "'");
}

PromptTemplates PromptTemplates::builtin() {
  using S = Slot;
  return PromptTemplates{std::string(kVanilla), std::string(kPreserve), std::string(kRasta),
                         {S::Label, S::Target, S::Target, S::Label, S::Target}};
}

PromptTemplates PromptTemplates::load(const std::filesystem::path& dir) {
  auto t = builtin();
  if (std::filesystem::exists(dir / "vanilla.txt")) t.vanilla = strip_one_newline(read_file(dir / "vanilla.txt"));
  if (std::filesystem::exists(dir / "preserve.txt")) t.preserve = strip_one_newline(read_file(dir / "preserve.txt"));
  if (std::filesystem::exists(dir / "rasta.txt")) t.rasta = strip_one_newline(read_file(dir / "rasta.txt"));
  return t;
}

std::string render_vanilla(const PromptRequest& req, const PromptTemplates& templates) {
  if (req.variant != Variant::Vanilla) throw DataError("render_vanilla needs a vanilla request");
  check_common(req);
  return substitute(templates.vanilla, {req.source_language, req.target_language, req.style_name, req.text, {}, {}, nullptr});
}

std::string render_preserve(const PromptRequest& req, const PromptTemplates& templates) {
  if (req.variant != Variant::Preserve) throw DataError("render_preserve needs a preserve request");
  check_common(req);
  if (blank(req.style_name)) throw DataError("preserve prompt requires a style name");
  return substitute(templates.preserve, {req.source_language, req.target_language, req.style_name, req.text, {}, {}, nullptr});
}

std::string render_rasta(const PromptRequest& req, const PromptTemplates& templates) {
  if (req.variant != Variant::Rasta) throw DataError("render_rasta needs a rasta request");
  check_common(req);
  if (blank(req.style_name)) throw DataError("rasta prompt requires a style name");
  if (!req.style_label) throw DataError("rasta prompt requires a style label");
  const double label = *req.style_label;
  if (!std::isfinite(label) || label < 0.0 || label > 1.0) {
    throw DataError("style label " + std::to_string(label) + " outside [0, 1]");
  }
  if (req.exemplars.size() != req.k) {
    throw DataError("rasta prompt needs exactly " + std::to_string(req.k) + " exemplars, got " +
                    std::to_string(req.exemplars.size()));
  }
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", label);
  Bindings b{req.source_language, req.target_language, req.style_name, req.text, buf, templates.rasta_slots,
             &req.exemplars};
  return substitute(templates.rasta, b);
}

std::string render_prompt(const PromptRequest& req, const PromptTemplates& templates) {
  switch (req.variant) {
    case Variant::Vanilla: return render_vanilla(req, templates);
    case Variant::Preserve: return render_preserve(req, templates);
    case Variant::Rasta: return render_rasta(req, templates);
  }
  throw DataError("unknown variant");
}

std::vector<std::string> exemplar_texts(const ExemplarSet& set) {
  std::vector<std::string> out;
  out.reserve(set.exemplars.size());
  for (const auto& e : set.exemplars) out.push_back(e.text);
  return out;
}

std::string display_name(const std::string& code, const std::map<std::string, std::string>& overrides) {
  if (auto it = overrides.find(code); it != overrides.end()) return it->second;
  static const std::map<std::string, std::string> kNames = {
      {"ar", "Arabic"},  {"bn", "Bengali"},    {"cs", "Czech"},     {"da", "Danish"},    {"de", "German"},
      {"el", "Greek"},   {"en", "English"},    {"es", "Spanish"},   {"fa", "Persian"},   {"fi", "Finnish"},
      {"fr", "French"},  {"he", "Hebrew"},     {"hi", "Hindi"},     {"hu", "Hungarian"}, {"id", "Indonesian"},
      {"it", "Italian"}, {"ja", "Japanese"},   {"ko", "Korean"},    {"nl", "Dutch"},     {"no", "Norwegian"},
      {"pl", "Polish"},  {"pt", "Portuguese"}, {"ro", "Romanian"},  {"ru", "Russian"},   {"sv", "Swedish"},
      {"sw", "Swahili"}, {"th", "Thai"},       {"tr", "Turkish"},   {"uk", "Ukrainian"}, {"ur", "Urdu"},
      {"vi", "Vietnamese"}, {"zh", "Chinese"}};
  if (auto it = kNames.find(code); it != kNames.end()) return it->second;
  throw ConfigError("no display name for language '" + code + "'");
}

}  // namespace stylealign
