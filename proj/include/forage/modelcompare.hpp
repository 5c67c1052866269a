#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "forage/lda.hpp"
#include "forage/matrix.hpp"

namespace forage {

/// A V x k word-topic matrix with its term labels (columns are topics).
struct WordTopicMatrix
{
  std::vector<std::string> terms;
  Matrix phi;

  std::size_t num_topics() const noexcept { return phi.cols(); }
};

/// Smoothed phi of a trained model with its vocabulary.
WordTopicMatrix word_topics(const TopicModel& model);

enum class VocabularyMerge { intersect, intersect_renorm, expand_epsilon };
enum class AlignmentStrategy { naive, basic, adversarial };

const char* to_string(VocabularyMerge s);
const char* to_string(AlignmentStrategy s);
VocabularyMerge parse_vocabulary_merge(const std::string& name);
AlignmentStrategy parse_alignment_strategy(const std::string& name);

/// Puts both matrices on one term list (sorted).
///   intersect         shared terms, columns left as they are
///   intersect_renorm  shared terms, columns renormalized
///   expand_epsilon    union of terms, missing entries set to epsilon
///                     (default 1 / (10 |V_union|)), columns renormalized
/// Intersecting disjoint vocabularies throws InvalidArgument.
std::pair<WordTopicMatrix, WordTopicMatrix> merge_vocabulary(const WordTopicMatrix& a, const WordTopicMatrix& b,
                                                             VocabularyMerge strategy, double epsilon = 0.0);

struct AdversarialConfig
{
  std::size_t population = 24;   // mu
  std::size_t offspring = 48;    // lambda
  std::size_t patience = 200;    // generations without improvement
  std::size_t max_generations = 20000;
  std::uint64_t seed = 0;
};

struct AlignmentPair
{
  std::size_t topic_a = 0;
  std::size_t topic_b = 0;
  double distance = 0.0;  // JS distance between the two columns
};

struct AlignmentResult
{
  AlignmentStrategy strategy = AlignmentStrategy::basic;
  std::vector<AlignmentPair> pairs;  // one per topic of A, in A order
  double mean_distance = 0.0;
  double total_distance = 0.0;

  bool injective() const;
};

/// Pairwise JS distances between columns: d(a, b).
Matrix topic_distances(const WordTopicMatrix& a, const WordTopicMatrix& b);

/// naive: nearest B-topic for each A-topic independently.
/// basic: repeatedly pair the globally closest remaining (A, B) topics.
/// adversarial: (mu + lambda) evolutionary search over injective mappings
///   with swap mutations, stopping after `patience` stale generations.
/// Both matrices must share one term list. Injective strategies need kA <= kB.
AlignmentResult align_topics(const WordTopicMatrix& a, const WordTopicMatrix& b, AlignmentStrategy strategy,
                             const AdversarialConfig& adversarial = {});

/// Alignment from a precomputed distance matrix (rows A, columns B).
AlignmentResult align_distances(const Matrix& distances, AlignmentStrategy strategy,
                                const AdversarialConfig& adversarial = {});

struct ModelDistance
{
  double mean = 0.0;
  double total = 0.0;
};

ModelDistance model_distance(const AlignmentResult& alignment);

/// Topic drift: each topic compared with the same-numbered topic.
AlignmentResult identity_alignment(const WordTopicMatrix& before, const WordTopicMatrix& after);

/// "topic_a,topic_b,distance" rows.
void write_alignment_csv(std::ostream& out, const AlignmentResult& alignment);
nlohmann::json alignment_to_json(const AlignmentResult& alignment);

}  // namespace forage
