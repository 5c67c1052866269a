#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace forage {

/// Tolerance on the total mass of a probability vector.
inline constexpr double kDistributionTolerance = 1e-9;

/// A validated probability vector over k topics (or terms).
class TopicDistribution
{
public:
  TopicDistribution() = default;

  /// Throws InvalidArgument if any entry is negative or non-finite, or if
  /// the entries do not sum to 1 within kDistributionTolerance.
  explicit TopicDistribution(std::vector<double> values);

  /// Divides by the total first. Throws if the total is not positive.
  static TopicDistribution normalized(std::vector<double> weights);

  std::size_t size() const noexcept { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  std::span<const double> values() const noexcept { return values_; }

  /// Index of the largest entry; ties go to the lower index.
  std::size_t argmax() const;

  bool operator==(const TopicDistribution&) const = default;

private:
  std::vector<double> values_;
};

/// Shannon entropy in bits, with 0 log 0 = 0.
double entropy(const TopicDistribution& p);

/// D_KL(q | p) = sum q_i log2(q_i / p_i): the cost, in bits, of meeting q
/// when expecting p. Throws NumericalError("infinite divergence") when some
/// q_i > 0 has p_i = 0.
double kl_divergence(const TopicDistribution& q, const TopicDistribution& p);

/// Unchecked KL on raw spans of equal length. Same zero conventions.
double kl_divergence(std::span<const double> q, std::span<const double> p);

struct JsResult
{
  double divergence = 0.0;  // bits, in [0, 1]
  double distance = 0.0;    // sqrt(divergence); a metric
};

JsResult js_distance(const TopicDistribution& p, const TopicDistribution& q);
JsResult js_distance(std::span<const double> p, std::span<const double> q);

// ---------------------------------------------------------------------------

enum class SurpriseMode { text_to_text, text_to_past, text_to_n };

struct SurpriseSpec
{
  SurpriseMode mode = SurpriseMode::text_to_text;
  /// Window for text_to_n; ignored otherwise.
  std::size_t window = 1;

  static SurpriseSpec t2t() { return {SurpriseMode::text_to_text, 1}; }
  static SurpriseSpec t2p() { return {SurpriseMode::text_to_past, 0}; }
  static SurpriseSpec t2n(std::size_t n) { return {SurpriseMode::text_to_n, n}; }

  /// "T2T", "T2P" or "T2N(n)".
  std::string label() const;
  static SurpriseSpec parse(const std::string& label);
};

/// Surprise at each position i >= 1 of a reading order.
struct SurpriseSeries
{
  SurpriseSpec spec;
  /// values[j] is the surprise at position j + 1.
  std::vector<double> values;
  /// item_ids[j] names the item at position j + 1 (may be empty).
  std::vector<std::string> item_ids;

  double mean() const;
};

/// T2T(i) = KL(d_i | d_{i-1}); T2P(i) = KL(d_i | mean(d_0..d_{i-1}));
/// T2N(i) uses the mean of the previous min(N, i) distributions.
/// Throws InvalidArgument with fewer than two distributions.
SurpriseSeries surprise_series(std::span<const TopicDistribution> dists, SurpriseSpec spec,
                               std::span<const std::string> item_ids = {});

/// Writes "position,item_id,mode,bits" rows. Positions start at 1.
void write_series_csv(std::ostream& out, const SurpriseSeries& series);

// ---------------------------------------------------------------------------

enum class Enclosure { p_encloses_q, q_encloses_p, tie };

/// p encloses q when KL(q | p) < KL(p | q); equal within 1e-12 is a tie.
Enclosure encloses(const TopicDistribution& p, const TopicDistribution& q);

const char* to_string(Enclosure e);

}  // namespace forage
