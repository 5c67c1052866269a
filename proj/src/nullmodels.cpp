#include "forage/nullmodels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include "forage/corpus.hpp"
#include "forage/format.hpp"
#include "forage/matrix.hpp"
#include "forage/parallel.hpp"
#include "forage/rng.hpp"

namespace forage {

bool ReadingOrder::feasible(std::span<const std::size_t> perm) const
{
  if (perm.size() != items.size())
    return false;
  std::vector<bool> used(items.size(), false);
  for (std::size_t slot = 0; slot < perm.size(); ++slot) {
    const auto item = perm[slot];
    if (item >= items.size() || used[item])
      return false;
    used[item] = true;
    if (items[item].pub_date > items[slot].slot_date)
      return false;
  }
  return true;
}

namespace {

/// Slots in chronological order, ties by position.
std::vector<std::size_t> chronological_slots(const ReadingOrder& order)
{
  std::vector<std::size_t> slots(order.size());
  std::iota(slots.begin(), slots.end(), std::size_t{0});
  std::stable_sort(slots.begin(), slots.end(), [&](std::size_t a, std::size_t b) {
    return order.items[a].slot_date < order.items[b].slot_date;
  });
  return slots;
}

/// Items sorted by publication date, ties by index.
std::vector<std::size_t> by_publication(const ReadingOrder& order)
{
  std::vector<std::size_t> items(order.size());
  std::iota(items.begin(), items.end(), std::size_t{0});
  std::stable_sort(items.begin(), items.end(),
                   [&](std::size_t a, std::size_t b) { return order.items[a].pub_date < order.items[b].pub_date; });
  return items;
}

/// Fenwick tree over 0/1 availability flags with order-statistic search.
class AvailabilityTree
{
public:
  explicit AvailabilityTree(std::size_t n) : tree_(n + 1, 0)
  {
    for (std::size_t i = 1; i <= n; ++i) {
      tree_[i] += 1;
      const std::size_t parent = i + (i & (~i + 1));
      if (parent <= n)
        tree_[parent] += tree_[i];
    }
  }

  /// Available count in positions [0, end).
  std::size_t prefix(std::size_t end) const
  {
    std::size_t s = 0;
    for (std::size_t i = end; i > 0; i -= i & (~i + 1))
      s += tree_[i];
    return s;
  }

  void take(std::size_t pos)
  {
    for (std::size_t i = pos + 1; i < tree_.size(); i += i & (~i + 1))
      --tree_[i];
  }

  /// Position of the r-th (0-based) available entry.
  std::size_t select(std::size_t r) const
  {
    std::size_t pos = 0;
    std::size_t step = 1;
    while (step * 2 < tree_.size())
      step *= 2;
    for (; step > 0; step /= 2) {
      if (pos + step < tree_.size() && tree_[pos + step] <= r) {
        pos += step;
        r -= tree_[pos];
      }
    }
    return pos;
  }

private:
  std::vector<std::size_t> tree_;
};

std::string describe_slot(const ReadingOrder& order, std::size_t slot)
{
  return "slot " + std::to_string(slot) + " (item '" + order.items[slot].id + "', dated " +
         format_day(order.items[slot].slot_date) + ")";
}

}  // namespace

void check_feasible(const ReadingOrder& order)
{
  const auto slots = chronological_slots(order);
  std::vector<std::int64_t> pubs;
  pubs.reserve(order.size());
  for (const auto& it : order.items)
    pubs.push_back(it.pub_date);
  std::sort(pubs.begin(), pubs.end());
  for (std::size_t r = 0; r < slots.size(); ++r) {
    const auto date = order.items[slots[r]].slot_date;
    const auto eligible = static_cast<std::size_t>(std::upper_bound(pubs.begin(), pubs.end(), date) - pubs.begin());
    if (eligible < r + 1)
      throw InfeasibleOrder(slots[r], "infeasible reading order: no eligible unplaced item for " +
                                          describe_slot(order, slots[r]));
  }
}

std::vector<std::size_t> constrained_permutation(const ReadingOrder& order, std::uint64_t seed)
{
  check_feasible(order);
  const auto slots = chronological_slots(order);
  const auto pub_sorted = by_publication(order);
  AvailabilityTree available(order.size());
  Rng rng(seed);
  std::vector<std::size_t> perm(order.size());
  std::size_t frontier = 0;  // pub_sorted[0, frontier) are published by the current slot
  for (const auto slot : slots) {
    const auto date = order.items[slot].slot_date;
    while (frontier < pub_sorted.size() && order.items[pub_sorted[frontier]].pub_date <= date)
      ++frontier;
    const std::size_t eligible = available.prefix(frontier);
    if (eligible == 0)
      throw InfeasibleOrder(slot, "infeasible reading order: no eligible unplaced item for " + describe_slot(order, slot));
    const std::size_t pos = available.select(rng.below(eligible));
    available.take(pos);
    perm[slot] = pub_sorted[pos];
  }
  return perm;
}

// ---------------------------------------------------------------------------

double quantile(std::vector<double> values, double q)
{
  if (values.empty())
    return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  const double h = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

namespace {

std::vector<TopicDistribution> reorder(std::span<const TopicDistribution> dists, std::span<const std::size_t> ordering)
{
  std::vector<TopicDistribution> out;
  out.reserve(ordering.size());
  for (auto i : ordering)
    out.push_back(dists[i]);
  return out;
}

double p_value(const std::vector<double>& null_means, double actual)
{
  const auto hits = std::count_if(null_means.begin(), null_means.end(), [&](double v) { return v <= actual; });
  return (1.0 + static_cast<double>(hits)) / (static_cast<double>(null_means.size()) + 1.0);
}

std::vector<double> cumulative_relative(const std::vector<double>& actual, const std::vector<double>& null_mean)
{
  std::vector<double> out(actual.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    acc += actual[i] - null_mean[i];
    out[i] = acc;
  }
  return out;
}

}  // namespace

double mean_step_surprise(std::span<const TopicDistribution> dists, std::span<const std::size_t> ordering,
                          SurpriseSpec spec)
{
  const auto seq = reorder(dists, ordering);
  return surprise_series(seq, spec).mean();
}

NullComparison compare_to_null(const NullEnsemble& ens, std::span<const TopicDistribution> dists,
                               std::span<const std::size_t> ordering)
{
  const auto seq = reorder(dists, ordering);
  const auto t2t = surprise_series(seq, SurpriseSpec::t2t());
  const auto t2p = surprise_series(seq, SurpriseSpec::t2p());
  if (t2t.values.size() != ens.t2t_position_mean.size())
    throw InvalidArgument("compare_to_null: ordering length differs from the ensemble");

  NullComparison c;
  c.actual_t2t_mean = t2t.mean();
  c.actual_t2p_mean = t2p.mean();
  c.null_t2t_mean = std::accumulate(ens.t2t_means.begin(), ens.t2t_means.end(), 0.0) / static_cast<double>(ens.n);
  c.null_t2p_mean = std::accumulate(ens.t2p_means.begin(), ens.t2p_means.end(), 0.0) / static_cast<double>(ens.n);
  c.p_t2t = p_value(ens.t2t_means, c.actual_t2t_mean);
  c.p_t2p = p_value(ens.t2p_means, c.actual_t2p_mean);
  c.t2t_ci_low = quantile(ens.t2t_means, 0.025);
  c.t2t_ci_high = quantile(ens.t2t_means, 0.975);
  c.t2p_ci_low = quantile(ens.t2p_means, 0.025);
  c.t2p_ci_high = quantile(ens.t2p_means, 0.975);
  c.cumulative_relative_t2t = cumulative_relative(t2t.values, ens.t2t_position_mean);
  c.cumulative_relative_t2p = cumulative_relative(t2p.values, ens.t2p_position_mean);
  return c;
}

NullResult null_ensemble(const ReadingOrder& order, std::span<const TopicDistribution> dists, std::size_t n,
                         std::uint64_t seed, unsigned threads, bool keep_permutations)
{
  if (n < 1)
    throw InvalidArgument("null_ensemble: need at least one permutation");
  if (dists.size() != order.size())
    throw InvalidArgument("null_ensemble: distributions not aligned with the reading order");
  if (order.size() < 2)
    throw InvalidArgument("null_ensemble: need at least two items");
  check_feasible(order);

  const std::size_t steps = order.size() - 1;
  std::vector<std::vector<double>> t2t(n), t2p(n);
  std::vector<std::vector<std::size_t>> perms(n);
  parallel_for(n, threads, [&](std::size_t i) {
    perms[i] = constrained_permutation(order, derive_seed(seed, i));
    const auto seq = reorder(dists, perms[i]);
    t2t[i] = surprise_series(seq, SurpriseSpec::t2t()).values;
    t2p[i] = surprise_series(seq, SurpriseSpec::t2p()).values;
  });

  NullResult r;
  auto& e = r.ensemble;
  e.n = n;
  e.master_seed = seed;
  e.t2t_position_mean.assign(steps, 0.0);
  e.t2p_position_mean.assign(steps, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double s1 = 0.0, s2 = 0.0;
    for (std::size_t j = 0; j < steps; ++j) {
      e.t2t_position_mean[j] += t2t[i][j];
      e.t2p_position_mean[j] += t2p[i][j];
      s1 += t2t[i][j];
      s2 += t2p[i][j];
    }
    e.t2t_means.push_back(s1 / static_cast<double>(steps));
    e.t2p_means.push_back(s2 / static_cast<double>(steps));
  }
  for (std::size_t j = 0; j < steps; ++j) {
    e.t2t_position_mean[j] /= static_cast<double>(n);
    e.t2p_position_mean[j] /= static_cast<double>(n);
  }
  if (keep_permutations)
    e.permutations = std::move(perms);

  std::vector<std::size_t> identity(order.size());
  std::iota(identity.begin(), identity.end(), std::size_t{0});
  r.comparison = compare_to_null(e, dists, identity);
  return r;
}

// ---------------------------------------------------------------------------

std::vector<std::size_t> greedy_shortest_path(std::span<const TopicDistribution> dists, std::size_t start,
                                              PathObjective objective)
{
  const std::size_t n = dists.size();
  if (n == 0)
    throw InvalidArgument("greedy_shortest_path: no items");
  if (start >= n)
    throw InvalidArgument("greedy_shortest_path: start index out of range");
  const std::size_t k = dists[0].size();

  std::vector<std::size_t> path{start};
  std::vector<bool> visited(n, false);
  visited[start] = true;
  std::vector<double> past_sum(dists[start].values().begin(), dists[start].values().end());
  std::vector<double> reference(k);

  while (path.size() < n) {
    if (objective == PathObjective::text_to_text) {
      const auto cur = dists[path.back()].values();
      reference.assign(cur.begin(), cur.end());
    } else {
      const double total = std::accumulate(past_sum.begin(), past_sum.end(), 0.0);
      for (std::size_t t = 0; t < k; ++t)
        reference[t] = past_sum[t] / total;
    }
    std::size_t best = n;
    double best_kl = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (visited[j])
        continue;
      const double kl = kl_divergence(dists[j].values(), reference);
      if (kl < best_kl) {
        best_kl = kl;
        best = j;
      }
    }
    path.push_back(best);
    visited[best] = true;
    for (std::size_t t = 0; t < k; ++t)
      past_sum[t] += dists[best][t];
  }
  return path;
}

// ---------------------------------------------------------------------------

namespace {

/// kl(i, j) = KL(dists[j] | dists[i]): surprise of moving from i to j.
Matrix transition_kl(std::span<const TopicDistribution> dists)
{
  const std::size_t n = dists.size();
  Matrix kl(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      kl(i, j) = i == j ? 0.0 : kl_divergence(dists[j], dists[i]);
  return kl;
}

std::vector<std::size_t> ranks_from_matrix(const Matrix& kl, std::span<const std::size_t> ordering)
{
  const std::size_t n = kl.rows();
  if (ordering.size() != n)
    throw InvalidArgument("step_ranks: ordering must cover every item");
  std::vector<bool> visited(n, false);
  std::vector<std::size_t> ranks;
  ranks.reserve(n > 0 ? n - 1 : 0);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const auto cur = ordering[i];
    const auto next = ordering[i + 1];
    if (cur >= n || next >= n || visited[cur] || next == cur)
      throw InvalidArgument("step_ranks: ordering is not a permutation");
    visited[cur] = true;
    const double chosen = kl(cur, next);
    std::size_t rank = 1;
    for (std::size_t j = 0; j < n; ++j)
      if (!visited[j] && j != next && kl(cur, j) < chosen)
        ++rank;
    ranks.push_back(rank);
  }
  return ranks;
}

}  // namespace

std::vector<std::size_t> step_ranks(std::span<const TopicDistribution> dists, std::span<const std::size_t> ordering)
{
  return ranks_from_matrix(transition_kl(dists), ordering);
}

std::vector<RankBin> log_bins(std::size_t max_rank)
{
  std::vector<RankBin> bins;
  for (std::size_t low = 1; low <= std::max<std::size_t>(max_rank, 1); low *= 2) {
    RankBin b;
    b.low = low;
    b.high = std::min(2 * low - 1, std::max<std::size_t>(max_rank, 1));
    bins.push_back(b);
  }
  return bins;
}

std::vector<double> bin_masses(const std::vector<RankBin>& bins, std::span<const std::size_t> ranks)
{
  std::vector<double> mass(bins.size(), 0.0);
  if (ranks.empty())
    return mass;
  for (auto r : ranks)
    for (std::size_t b = 0; b < bins.size(); ++b)
      if (r >= bins[b].low && r <= bins[b].high) {
        mass[b] += 1.0;
        break;
      }
  for (double& m : mass)
    m /= static_cast<double>(ranks.size());
  return mass;
}

RankDistribution rank_distribution(std::span<const TopicDistribution> dists, std::span<const std::size_t> ordering,
                                   const std::vector<std::vector<std::size_t>>& null_orderings)
{
  RankDistribution rd;
  const Matrix kl = transition_kl(dists);
  rd.ranks = ranks_from_matrix(kl, ordering);
  rd.bins = log_bins(dists.size() > 1 ? dists.size() - 1 : 1);
  const auto observed = bin_masses(rd.bins, rd.ranks);

  std::vector<std::vector<double>> null_mass(rd.bins.size());
  for (const auto& ord : null_orderings) {
    const auto m = bin_masses(rd.bins, ranks_from_matrix(kl, ord));
    for (std::size_t b = 0; b < m.size(); ++b)
      null_mass[b].push_back(m[b]);
  }
  constexpr double nan = std::numeric_limits<double>::quiet_NaN();
  auto safe_div = [](double a, double b) {
    return b > 0.0 ? a / b : (a > 0.0 ? std::numeric_limits<double>::infinity() : nan);
  };
  for (std::size_t b = 0; b < rd.bins.size(); ++b) {
    auto& bin = rd.bins[b];
    bin.observed = observed[b];
    if (null_mass[b].empty()) {
      bin.null_mean = bin.null_low = bin.null_high = bin.ratio = bin.ratio_low = bin.ratio_high = nan;
      continue;
    }
    bin.null_mean = std::accumulate(null_mass[b].begin(), null_mass[b].end(), 0.0) /
                    static_cast<double>(null_mass[b].size());
    bin.null_low = quantile(null_mass[b], 0.025);
    bin.null_high = quantile(null_mass[b], 0.975);
    bin.ratio = safe_div(bin.observed, bin.null_mean);
    bin.ratio_low = safe_div(bin.observed, bin.null_high);
    bin.ratio_high = safe_div(bin.observed, bin.null_low);
  }
  return rd;
}

// ---------------------------------------------------------------------------

namespace {

nlohmann::json number_or_null(double v)
{
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

}  // namespace

nlohmann::json null_summary_to_json(const NullResult& r)
{
  const auto& c = r.comparison;
  return {{"permutations", r.ensemble.n},
          {"master_seed", r.ensemble.master_seed},
          {"t2t",
           {{"actual_mean", c.actual_t2t_mean},
            {"null_mean", c.null_t2t_mean},
            {"p_value", c.p_t2t},
            {"null_ci95", {c.t2t_ci_low, c.t2t_ci_high}}}},
          {"t2p",
           {{"actual_mean", c.actual_t2p_mean},
            {"null_mean", c.null_t2p_mean},
            {"p_value", c.p_t2p},
            {"null_ci95", {c.t2p_ci_low, c.t2p_ci_high}}}}};
}

void write_permutation_means_csv(std::ostream& out, const NullEnsemble& e)
{
  out << "permutation,t2t_mean,t2p_mean\n";
  for (std::size_t i = 0; i < e.n; ++i)
    out << i << ',' << format_double(e.t2t_means[i]) << ',' << format_double(e.t2p_means[i]) << '\n';
}

void write_cumulative_csv(std::ostream& out, const NullResult& r, std::span<const TopicDistribution> dists,
                          const ReadingOrder& order)
{
  const auto t2t = surprise_series(dists, SurpriseSpec::t2t());
  const auto t2p = surprise_series(dists, SurpriseSpec::t2p());
  out << "position,item_id,t2t_actual,t2t_null_mean,t2t_cumulative_relative,t2p_actual,t2p_null_mean,"
         "t2p_cumulative_relative\n";
  for (std::size_t j = 0; j < t2t.values.size(); ++j) {
    out << (j + 1) << ',' << order.items[j + 1].id << ',' << format_double(t2t.values[j]) << ','
        << format_double(r.ensemble.t2t_position_mean[j]) << ','
        << format_double(r.comparison.cumulative_relative_t2t[j]) << ',' << format_double(t2p.values[j]) << ','
        << format_double(r.ensemble.t2p_position_mean[j]) << ','
        << format_double(r.comparison.cumulative_relative_t2p[j]) << '\n';
  }
}

nlohmann::json rank_distribution_to_json(const RankDistribution& rd)
{
  nlohmann::json bins = nlohmann::json::array();
  for (const auto& b : rd.bins)
    bins.push_back({{"low", b.low},
                    {"high", b.high},
                    {"observed", b.observed},
                    {"null_mean", number_or_null(b.null_mean)},
                    {"null_ci95", {number_or_null(b.null_low), number_or_null(b.null_high)}},
                    {"ratio", number_or_null(b.ratio)},
                    {"ratio_ci95", {number_or_null(b.ratio_low), number_or_null(b.ratio_high)}}});
  return {{"ranks", rd.ranks}, {"bins", std::move(bins)}};
}

}  // namespace forage
