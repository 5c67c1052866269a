#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "forage/lda.hpp"
#include "forage/measures.hpp"

namespace forage {

/// How word-topic counts behave while a new document is fitted.
enum class PhiMode
{
  /// Counts reset to the trained snapshot at the start of every sweep.
  locked,
  /// The new document joins the corpus and every document is resampled;
  /// new tokens start from the trained word-topic distribution.
  extended,
  /// The new document's assignments accumulate into the word-topic
  /// counts ("topic drift"); trained documents stay fixed.
  drifting,
};

const char* to_string(PhiMode mode);
PhiMode parse_phi_mode(const std::string& name);

struct FitOptions
{
  std::size_t iterations = 100;
  PhiMode phi_mode = PhiMode::drifting;
  std::uint64_t seed = 0;
};

struct FitResult
{
  TopicDistribution theta;  // smoothed
  double perplexity = 0.0;
  /// Mean over topics of the JS distance between trained and final phi columns.
  double topic_drift = 0.0;
};

/// Fits one out-of-sample document (term ids in the model vocabulary) into
/// the model's topic space. The model is never modified. Throws
/// InvalidArgument("untrainable document") if `doc` is empty.
FitResult fit_document(const TopicModel& model, const std::vector<TermId>& doc, const FitOptions& options);

struct SampleEnsemble
{
  std::string document_id;
  PhiMode phi_mode = PhiMode::drifting;
  std::uint64_t master_seed = 0;
  std::vector<std::uint64_t> seeds;
  std::vector<FitResult> samples;
};

/// n independent fits; sample i uses seed derive_seed(master_seed, i).
/// Results are ordered by sample index whatever the thread count.
SampleEnsemble sample_ensemble(const TopicModel& model, const std::vector<TermId>& doc, std::string document_id,
                               std::size_t n_samples, const FitOptions& options, unsigned threads = 1);

struct ClusterSummary
{
  std::size_t medoid = 0;  // sample index
  std::size_t dominant_topic = 0;
  std::size_t size = 0;
  double perplexity_mean = 0.0;
  double perplexity_min = 0.0;
  double perplexity_max = 0.0;
};

struct ClusterReport
{
  std::size_t chosen_k = 1;
  std::vector<std::size_t> assignments;
  std::vector<ClusterSummary> clusters;
  /// (k, mean silhouette) for every k tried.
  std::vector<std::pair<std::size_t, double>> silhouettes;
  std::string note;
};

/// k-medoids (PAM) under JS distance for each k in [k_min, k_max] (capped
/// at n - 1); keeps the k with the largest mean silhouette, smallest k on
/// ties. Identical samples yield a single cluster with a note.
ClusterReport cluster_ensemble(const SampleEnsemble& ensemble, std::size_t k_min = 2, std::size_t k_max = 10);

/// Lower-level entry points, exposed for testing.
struct Medoids
{
  std::vector<std::size_t> medoids;
  std::vector<std::size_t> assignments;  // index into medoids
};
Medoids k_medoids(const Matrix& distances, std::size_t k);
double mean_silhouette(const Matrix& distances, const std::vector<std::size_t>& assignments, std::size_t k);

nlohmann::json ensemble_to_json(const SampleEnsemble& ensemble);
nlohmann::json cluster_report_to_json(const ClusterReport& report);
/// "sample,seed,dominant_topic,perplexity" rows.
void write_ensemble_csv(std::ostream& out, const SampleEnsemble& ensemble);

}  // namespace forage
