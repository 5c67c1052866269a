#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "forage/corpus.hpp"
#include "forage/epochs.hpp"
#include "forage/error.hpp"
#include "forage/modelcompare.hpp"
#include "forage/querysample.hpp"

namespace forage {

/// Invalid configuration; `field` is a dotted path such as "training.k[1]".
class ConfigError : public Error
{
public:
  ConfigError(std::string field, const std::string& message)
      : Error(field + ": " + message), field_(std::move(field))
  {
  }
  const std::string& field() const noexcept { return field_; }

private:
  std::string field_;
};

/// A stage's input has not been produced yet.
class MissingArtifact : public Error
{
public:
  MissingArtifact(std::string artifact, const std::string& producer)
      : Error("missing upstream artifact " + artifact + " (run `" + producer + "` first)"),
        artifact_(std::move(artifact))
  {
  }
  const std::string& artifact() const noexcept { return artifact_; }

private:
  std::string artifact_;
};

inline constexpr int kArtifactFormatVersion = 1;

struct PipelineConfig
{
  std::filesystem::path manifest;
  std::filesystem::path output_dir = "forage_out";
  std::optional<std::uint64_t> seed;
  unsigned threads = 1;

  TokenizerConfig tokenizer;
  FilterConfig filter;
  std::optional<std::filesystem::path> stopwords_file;
  EmptyDocumentPolicy empty_documents = EmptyDocumentPolicy::exclude;

  std::vector<std::size_t> k_values{80, 200};
  double alpha = 0.1;
  double beta = 0.01;
  std::size_t iterations = 500;
  std::size_t replicates = 1;
  std::size_t trace_every = 0;
  std::size_t top_terms = 10;

  /// Model used by measure, null, epochs and fit; defaults to the first k.
  std::optional<std::size_t> measure_k;
  std::vector<SurpriseSpec> modes{SurpriseSpec::t2t(), SurpriseSpec::t2p()};

  std::size_t permutations = 1000;

  std::vector<SurpriseSpec> epoch_modes{SurpriseSpec::t2t(), SurpriseSpec::t2p()};
  std::size_t max_epochs = 3;
  std::size_t min_length = 10;
  VarianceEstimator estimator = VarianceEstimator::mle;

  std::optional<std::filesystem::path> fit_manifest;
  std::size_t fit_samples = 20;
  std::size_t fit_iterations = 100;
  PhiMode phi_mode = PhiMode::drifting;
  std::size_t cluster_k_min = 2;
  std::size_t cluster_k_max = 10;

  VocabularyMerge vocabulary_merge = VocabularyMerge::intersect_renorm;
  double merge_epsilon = 0.0;
  AlignmentStrategy alignment = AlignmentStrategy::basic;
  /// Search settings for the adversarial strategy; the seed is derived per pair.
  AdversarialConfig adversarial;

  /// Model of the k used downstream.
  std::size_t primary_k() const { return measure_k ? *measure_k : k_values.front(); }
};

/// Parses a config object; relative paths resolve against `base_dir`.
/// Unknown keys and bad values throw ConfigError with the field path.
PipelineConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
PipelineConfig load_config(const std::filesystem::path& path);

/// Canonical form of the settings that influence results (not output_dir
/// or threads).
nlohmann::json config_to_json(const PipelineConfig& config);

/// FNV-1a of the canonical JSON text.
std::uint64_t config_hash(const PipelineConfig& config);

enum class Stage { prepare, train, measure, null_model, epochs, fit, compare, pipeline };

const char* to_string(Stage stage);
Stage parse_stage(const std::string& name);

/// Runs one stage (or all of them for Stage::pipeline), reading upstream
/// artifacts from and writing results to config.output_dir. Throws
/// MissingArtifact when an input is absent.
void run_stage(Stage stage, const PipelineConfig& config, std::ostream& log);

/// 0 ok, 1 config or input error, 2 missing upstream artifact, 3 numerical degeneracy.
int exit_code(const std::exception& e);

}  // namespace forage
