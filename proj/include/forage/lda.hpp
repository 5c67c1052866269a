#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "forage/corpus.hpp"
#include "forage/matrix.hpp"
#include "forage/rng.hpp"

namespace forage {

using TopicId = std::uint32_t;
using Count = std::int32_t;

struct TrainingConfig
{
  std::size_t k = 80;
  double alpha = 0.1;
  double beta = 0.01;
  std::size_t iterations = 500;
  std::uint64_t seed = 0;
  /// Record the collapsed log joint every this many sweeps (0 = never).
  std::size_t trace_every = 0;

  /// Throws InvalidArgument unless k >= 2, alpha > 0 and beta > 0.
  void validate() const;

  bool operator==(const TrainingConfig&) const = default;
};

/// State of a collapsed Gibbs sampler for LDA.
///
/// Count layout is row-major: topic_doc[d * k + t], word_topic[w * k + t].
struct TopicModel
{
  TrainingConfig config;
  std::uint64_t vocabulary_hash = 0;
  std::size_t vocab_size = 0;
  /// Term strings in id order, when known.
  std::vector<std::string> terms;

  std::vector<std::string> doc_ids;
  std::vector<std::vector<TermId>> words;
  std::vector<std::vector<TopicId>> z;

  std::vector<Count> topic_doc;
  std::vector<Count> word_topic;
  std::vector<Count> topic_total;
  std::vector<Count> doc_length;

  std::size_t sweeps = 0;
  /// (sweep, collapsed log p(w, z)) pairs.
  std::vector<std::pair<std::size_t, double>> likelihood_trace;

  std::size_t num_topics() const noexcept { return config.k; }
  std::size_t num_documents() const noexcept { return words.size(); }
  bool initialized() const noexcept { return !z.empty(); }

  Count n_td(std::size_t t, std::size_t d) const { return topic_doc[d * config.k + t]; }
  Count n_wt(std::size_t w, std::size_t t) const { return word_topic[w * config.k + t]; }

  bool operator==(const TopicModel&) const = default;
};

/// Throws FormatError naming the first violated count identity.
void verify_counts(const TopicModel& model);

/// Uniform random topic assignment for every token, counts filled in.
TopicModel initialize_model(const Corpus& corpus, const TrainingConfig& config, Rng& rng);

/// One full sweep in document order. Each token is removed from the counts,
/// resampled from
///   p(t) ∝ (N_wt + beta) / (N_t + V beta) * (N_td + alpha)
/// and added back.
void sweep_in_place(TopicModel& model, Rng& rng);

/// Pure form of sweep_in_place.
TopicModel gibbs_sweep(const TopicModel& model, Rng& rng);

/// Initialization from config.seed followed by config.iterations sweeps.
/// Identical (corpus, config) gives a bit-identical model.
TopicModel train(const Corpus& corpus, const TrainingConfig& config, std::ostream* log = nullptr);

/// Partitioned ("hogwild") training: documents are split into `shards`
/// disjoint groups that sweep concurrently against a stale copy of the
/// word-topic counts; deltas are merged after each sweep. Not covered by
/// any reproducibility guarantee.
TopicModel train_partitioned(const Corpus& corpus, const TrainingConfig& config, unsigned shards);

/// Collapsed log joint log p(w, z | alpha, beta) in nats.
double log_joint(const TopicModel& model);

// ---------------------------------------------------------------------------

enum class Smoothing { off, on };

struct Estimates
{
  Matrix theta;  // D x k, rows sum to 1
  Matrix phi;    // V x k, columns sum to 1
};

/// Unsmoothed: theta = N_td / N_d, phi = N_wt / N_t.
/// Smoothed:   theta = (N_td + alpha) / (N_d + k alpha),
///             phi   = (N_wt + beta) / (N_t + V beta).
/// Unsmoothed estimation of an empty topic throws NumericalError("degenerate topic").
Estimates estimate_distributions(const TopicModel& model, Smoothing smoothing = Smoothing::on);

/// 2^(-mean log2 p(w | d)) with p(w | d) = sum_t theta[d][t] phi[w][t];
/// theta row i belongs to docs[i]. Throws NumericalError on a zero-probability token.
double perplexity(const Matrix& theta, const Matrix& phi, const std::vector<std::vector<TermId>>& docs);

/// Perplexity of a subset of the model's own documents.
double perplexity(const TopicModel& model, std::span<const std::size_t> doc_indices,
                  Smoothing smoothing = Smoothing::on);

struct TopicSummary
{
  TopicId topic = 0;
  /// (term id, phi) sorted by phi descending, ties by ascending id.
  std::vector<std::pair<TermId, double>> top_terms;
  /// Fewest top terms whose phi sums to at least the requested mass.
  std::size_t mass_coverage = 0;
  /// Entropy (bits) of the topic's theta column normalized across documents.
  double document_entropy = 0.0;
  /// Mean theta over documents.
  double mean_probability = 0.0;
};

TopicSummary topic_summary(const TopicModel& model, TopicId t, std::size_t top_n, double mass,
                           Smoothing smoothing = Smoothing::on);

/// Summary from precomputed estimates.
TopicSummary topic_summary(const Estimates& est, TopicId t, std::size_t top_n, double mass);

/// Topic ids ordered by total token count, descending (ties by id). For
/// report labelling only; stored models keep positional labels.
std::vector<TopicId> topics_by_mass(const TopicModel& model);

// ---------------------------------------------------------------------------

inline constexpr int kModelFormatVersion = 1;

nlohmann::json model_to_json(const TopicModel& model);

/// Loads and verifies count invariants. If `expected_vocabulary_hash` is
/// given it must match the stored hash.
TopicModel model_from_json(const nlohmann::json& j, std::optional<std::uint64_t> expected_vocabulary_hash = {});

nlohmann::json training_config_to_json(const TrainingConfig& c);
TrainingConfig training_config_from_json(const nlohmann::json& j);

}  // namespace forage
