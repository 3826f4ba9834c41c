#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "json.hpp"

#include "stylealign/alignment.hpp"
#include "stylealign/clients.hpp"
#include "stylealign/corpus.hpp"
#include "stylealign/embedding.hpp"

namespace stylealign {

enum class DistortionKind { Identity, Shrink, Gaussian, PlantedStyleShift };

/// How the mock translator moves a style label.
///   identity             y = x
///   shrink               y = 0.5 + lambda * (x - 0.5)
///   gaussian             y = x + sigma * z, z ~ N(0, 1) seeded per (sample, target)
///   planted-style-shift  y = x + gamma * (0.5 - center(level)); RASTA prompts add a correction
///                        read off the exemplars (see MockTranslator)
/// Results are clamped to [0, 1].
struct Distortion {
  DistortionKind kind = DistortionKind::Identity;
  double lambda = 0.5;
  double sigma = 0.1;
  double gamma = 0.8;

  nlohmann::json to_json() const;
  static Distortion from_json(const nlohmann::json& j);
  /// "identity", "shrink:0.5", "gaussian:0.1", "planted-style-shift:0.8".
  static Distortion parse(const std::string& text);
};

struct SyntheticSpec {
  std::vector<std::string> languages{"en", "ja"};
  std::string style_name = "politeness";
  int n_bins = 2;
  std::size_t samples_per_bucket = 100;
  std::size_t dim = 64;
  double inter_cluster_separation = 1.0;
  /// Per-component standard deviation of native samples around their cluster mean.
  double within_cluster_std = 0.1;
  /// Per-component noise added to translated-scope embeddings.
  double translation_noise_std = 0.05;
  double test_fraction = 0.2;
  /// Labels are drawn uniformly within each bin intersected with [label_lo, label_hi].
  double label_lo = 0.0;
  double label_hi = 1.0;
  std::size_t min_support = 10;
  /// Optional fixed translation offsets keyed "<source>><target>:<level>"; others are generated.
  std::map<std::string, Vec> planted_trans_offset;
  Distortion distortion;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static SyntheticSpec from_json(const nlohmann::json& j);
};

/// Synthetic corpus, embeddings and planted geometry. Native sample text is the token
/// "syn:<lang>:<level>:<ordinal>" with id "<lang>-<level>-<ordinal>".
class SyntheticWorld {
 public:
  const SyntheticSpec& spec() const { return spec_; }
  const StyleCorpus& corpus() const { return corpus_; }
  /// Native scope for every sample plus translated_scope(src, tgt) for every ordered pair.
  const EmbeddingStore& store() const { return store_; }

  const Vec& cluster_mean(const std::string& language, int level) const;
  /// Ground truth v_native / v_trans / v_align for (source, target, level).
  const MappingSet& planted(const std::string& source, const std::string& target, int level) const;
  const std::map<std::tuple<std::string, std::string, int>, MappingSet>& planted_mappings() const { return planted_; }

  /// Style displacement gamma * (0.5 - center(level)) applied by the planted-style-shift distortion.
  double style_shift(int level) const;
  /// Label change per unit of displacement along the style axis (axis 0).
  double kappa() const { return 1.0 / spec_.inter_cluster_separation; }

  /// Embedding of a translation of sample `source_id` into `target`: native + offset + noise.
  Vec translated_embedding(const std::string& source_id, const std::string& target) const;

  static std::string sample_id(const std::string& language, int level, std::size_t ordinal);
  static std::string sample_text(const std::string& language, int level, std::size_t ordinal);

 private:
  friend SyntheticWorld generate(const SyntheticSpec& spec);

  SyntheticSpec spec_;
  StyleCorpus corpus_;
  EmbeddingStore store_;
  std::map<std::pair<std::string, int>, Vec> means_;
  std::map<std::tuple<std::string, std::string, int>, MappingSet> planted_;
};

SyntheticWorld generate(const SyntheticSpec& spec);

struct MockTranslation {
  std::string text;
  double label = 0.0;
  bool clamped = false;
};

/// Applies a distortion to one sample. `correction` is added before clamping (used for
/// exemplar-informed prompts). Translation text is "tr:<target>:<source id>:<label>".
MockTranslation mock_translate(const StyleSample& sample, const std::string& target, const Distortion& distortion,
                               int n_bins, std::uint64_t seed, double correction = 0.0);

/// Parses the label back out of a mock translation token.
std::optional<double> mock_translation_label(const std::string& text);

/// Completion backend that reads the source token, target language and any exemplar tokens
/// from a rendered prompt. Under planted-style-shift, exemplars move the label by
/// kappa * <mean exemplar cluster mean - (source cluster mean + offset), axis 0>.
class MockTranslator : public CompletionBackend {
 public:
  MockTranslator(std::shared_ptr<const SyntheticWorld> world, Distortion distortion,
                 std::map<std::string, std::string> display_overrides = {});
  std::string complete(const CompletionRequest& request) override;

  std::size_t calls() const { return calls_; }
  std::size_t clamp_events() const { return clamps_; }

 private:
  std::shared_ptr<const SyntheticWorld> world_;
  Distortion distortion_;
  std::map<std::string, std::string> name_to_code_;
  std::atomic<std::size_t> calls_{0};
  std::atomic<std::size_t> clamps_{0};
};

/// Ground-truth scorer: native tokens score their gold label, translation tokens their
/// effective label.
class MockScorer : public ScorerBackend {
 public:
  explicit MockScorer(std::shared_ptr<const SyntheticWorld> world) : world_(std::move(world)) {}
  std::string model_id() const override { return "testbed-scorer"; }
  double score(const ScoreRequest& request) override;

 private:
  std::shared_ptr<const SyntheticWorld> world_;
};

class MockEmbedding : public EmbeddingBackend {
 public:
  explicit MockEmbedding(std::shared_ptr<const SyntheticWorld> world) : world_(std::move(world)) {}
  std::string model_id() const override { return "testbed-embed"; }
  EmbedResponse embed(const std::vector<std::string>& texts) override;
  std::size_t calls() const { return calls_; }

 private:
  std::shared_ptr<const SyntheticWorld> world_;
  std::atomic<std::size_t> calls_{0};
};

/// Quality falls linearly with label drift d = |label(hypothesis) - label(source)|:
/// judge 100 * (1 - d), QE 1 - d.
class MockQuality : public QualityBackend {
 public:
  MockQuality(std::shared_ptr<const SyntheticWorld> world, QualityMetric metric)
      : world_(std::move(world)), metric_(metric) {}
  QualityMetric metric() const override { return metric_; }
  std::string model_id() const override {
    return metric_ == QualityMetric::GembaJudge ? "testbed-judge" : "testbed-qe";
  }
  double score(const QualityRequest& request) override;

 private:
  std::shared_ptr<const SyntheticWorld> world_;
  QualityMetric metric_;
};

}  // namespace stylealign
