#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "stylealign/retrieval.hpp"

namespace stylealign {

enum class Variant { Vanilla, Preserve, Rasta };

std::string_view to_string(Variant variant);
Variant parse_variant(std::string_view text);

/// Placeholders recognised in templates:
///   <Source> <Target> <Style> <Sample>   language names, style name, input text
///   {}                                   positional slot, bound per template (see slot_bindings)
///   <example 1> ... <example N>          the exemplar block; the whole run from the first to the
///                                        last marker is replaced by k texts separated by a blank line
struct PromptTemplates {
  enum class Slot { Label, Target, Source };

  std::string vanilla;
  std::string preserve;
  std::string rasta;
  /// Binding of successive "{}" slots in the rasta template.
  std::vector<Slot> rasta_slots;

  static PromptTemplates builtin();
  /// Built-in templates, overridden by any of vanilla.txt / preserve.txt / rasta.txt in `dir`.
  static PromptTemplates load(const std::filesystem::path& dir);
};

struct PromptRequest {
  Variant variant = Variant::Vanilla;
  std::string text;
  std::string source_language;  // display name, e.g. "English"
  std::string target_language;  // display name
  std::string style_name;
  std::optional<double> style_label;
  std::vector<std::string> exemplars;
  std::size_t k = 5;
};

std::string render_vanilla(const PromptRequest& req, const PromptTemplates& templates = PromptTemplates::builtin());
std::string render_preserve(const PromptRequest& req, const PromptTemplates& templates = PromptTemplates::builtin());
std::string render_rasta(const PromptRequest& req, const PromptTemplates& templates = PromptTemplates::builtin());
/// Dispatches on req.variant.
std::string render_prompt(const PromptRequest& req, const PromptTemplates& templates = PromptTemplates::builtin());

/// Exemplar texts in retrieval order.
std::vector<std::string> exemplar_texts(const ExemplarSet& set);

/// English exonym for an ISO-639-1 code ("ja" -> "Japanese"). Throws ConfigError when unknown
/// and absent from `overrides`.
std::string display_name(const std::string& code, const std::map<std::string, std::string>& overrides = {});

}  // namespace stylealign
