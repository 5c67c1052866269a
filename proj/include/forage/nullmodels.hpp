#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "forage/error.hpp"
#include "forage/measures.hpp"

namespace forage {

/// One reading slot: the item read there and the dates that constrain it.
struct ReadingItem
{
  std::string id;
  /// Day ordinal of the reading slot (latest interpretation of the read date).
  std::int64_t slot_date = 0;
  /// Day ordinal of publication (earliest interpretation).
  std::int64_t pub_date = 0;
};

/// Items in their observed reading order. A placement is feasible when every
/// slot holds an item with pub_date <= slot_date.
struct ReadingOrder
{
  std::vector<ReadingItem> items;

  std::size_t size() const noexcept { return items.size(); }
  /// True if perm (perm[slot] = item index) satisfies every publication constraint.
  bool feasible(std::span<const std::size_t> perm) const;
};

/// Raised when no feasible placement exists; carries the failing slot.
class InfeasibleOrder : public Error
{
public:
  InfeasibleOrder(std::size_t slot, const std::string& message) : Error(message), slot_(slot) {}
  std::size_t slot() const noexcept { return slot_; }

private:
  std::size_t slot_;
};

/// Fills slots in chronological order (ties by position); each slot draws
/// uniformly among the remaining items published on or before its date.
/// Returns perm with perm[slot] = item index. Throws InfeasibleOrder naming
/// the first slot with no eligible item.
std::vector<std::size_t> constrained_permutation(const ReadingOrder& order, std::uint64_t seed);

/// Throws InfeasibleOrder if no feasible placement exists.
void check_feasible(const ReadingOrder& order);

struct NullEnsemble
{
  std::size_t n = 0;
  std::uint64_t master_seed = 0;
  std::vector<double> t2t_means;  // per permutation
  std::vector<double> t2p_means;
  std::vector<double> t2t_position_mean;  // per position 1..N-1
  std::vector<double> t2p_position_mean;
  /// Kept only when requested.
  std::vector<std::vector<std::size_t>> permutations;
};

struct NullComparison
{
  double actual_t2t_mean = 0.0;
  double actual_t2p_mean = 0.0;
  double null_t2t_mean = 0.0;
  double null_t2p_mean = 0.0;
  /// One-sided (1 + #{null <= actual}) / (n + 1).
  double p_t2t = 1.0;
  double p_t2p = 1.0;
  /// 2.5% and 97.5% quantiles of the permutation means.
  double t2t_ci_low = 0.0, t2t_ci_high = 0.0;
  double t2p_ci_low = 0.0, t2p_ci_high = 0.0;
  /// sum_{j <= i} (actual_j - null_position_mean_j).
  std::vector<double> cumulative_relative_t2t;
  std::vector<double> cumulative_relative_t2p;
};

struct NullResult
{
  NullEnsemble ensemble;
  NullComparison comparison;
};

/// Draws n constrained permutations (draw i seeded by derive_seed(seed, i))
/// and compares the observed order's T2T/T2P surprise against them.
/// dists[i] belongs to order.items[i].
NullResult null_ensemble(const ReadingOrder& order, std::span<const TopicDistribution> dists, std::size_t n,
                         std::uint64_t seed, unsigned threads = 1, bool keep_permutations = false);

/// Compares an arbitrary ordering against an existing ensemble.
NullComparison compare_to_null(const NullEnsemble& ensemble, std::span<const TopicDistribution> dists,
                               std::span<const std::size_t> ordering);

/// Empirical quantile with linear interpolation.
double quantile(std::vector<double> values, double q);

// ---------------------------------------------------------------------------

enum class PathObjective { text_to_text, text_to_past };

/// Starts at `start`, then repeatedly appends the unvisited item with the
/// smallest KL from the current item (T2T) or from the running mean of the
/// visited items (T2P). Ties go to the lowest index.
std::vector<std::size_t> greedy_shortest_path(std::span<const TopicDistribution> dists, std::size_t start,
                                              PathObjective objective);

/// Mean per-step surprise of an ordering.
double mean_step_surprise(std::span<const TopicDistribution> dists, std::span<const std::size_t> ordering,
                          SurpriseSpec spec);

// ---------------------------------------------------------------------------

/// For each step, the rank (1 = nearest) of the chosen next item among the
/// items not yet visited, by KL from the current item.
std::vector<std::size_t> step_ranks(std::span<const TopicDistribution> dists, std::span<const std::size_t> ordering);

struct RankBin
{
  std::size_t low = 1, high = 1;  // inclusive rank range
  double observed = 0.0;          // fraction of steps
  double null_mean = 0.0;
  double null_low = 0.0, null_high = 0.0;  // 2.5% / 97.5% across null orders
  double ratio = 0.0;                      // observed / null_mean
  double ratio_low = 0.0, ratio_high = 0.0;
};

struct RankDistribution
{
  std::vector<std::size_t> ranks;
  std::vector<RankBin> bins;
};

/// Bins {1}, {2,3}, {4..7}, ... up to the largest possible rank.
std::vector<RankBin> log_bins(std::size_t max_rank);

/// Fraction of ranks in each bin.
std::vector<double> bin_masses(const std::vector<RankBin>& bins, std::span<const std::size_t> ranks);

/// Observed rank histogram relative to the rank histograms of null orders.
RankDistribution rank_distribution(std::span<const TopicDistribution> dists, std::span<const std::size_t> ordering,
                                   const std::vector<std::vector<std::size_t>>& null_orderings);

// ---------------------------------------------------------------------------

nlohmann::json null_summary_to_json(const NullResult& result);
/// "permutation,t2t_mean,t2p_mean"
void write_permutation_means_csv(std::ostream& out, const NullEnsemble& ensemble);
/// "position,item_id,t2t_actual,t2t_null_mean,t2t_cumulative_relative,t2p_actual,..."
void write_cumulative_csv(std::ostream& out, const NullResult& result, std::span<const TopicDistribution> dists,
                          const ReadingOrder& order);
nlohmann::json rank_distribution_to_json(const RankDistribution& rd);

}  // namespace forage
