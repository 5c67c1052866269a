#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace forage {

enum class VarianceEstimator
{
  /// Mean and variance divide by the segment length m (maximum likelihood).
  mle,
  /// Mean, variance and the log-likelihood weight all use m - 1 in place
  /// of m. Biased; kept for comparison only.
  printed,
};

struct EpochOptions
{
  VarianceEstimator estimator = VarianceEstimator::mle;
  /// Floor applied to a segment variance; flooring raises `degenerate`.
  double variance_floor = 1e-9;
};

struct SegmentFit
{
  double log_likelihood = 0.0;  // nats
  std::vector<double> mu;
  std::vector<double> sigma2;
  bool degenerate = false;
};

/// Gaussian log-likelihood of a segmentation. `boundaries` holds
/// e_1 = 0 < e_2 < ... < e_{n+1} = series.size(); segments are half-open.
/// Per segment: -(m/2)(1 + ln(2 pi sigma2_hat)). Every segment needs at
/// least two points.
SegmentFit segment_loglik(std::span<const double> series, std::span<const std::size_t> boundaries,
                          const EpochOptions& options = {});

/// 3n - 1: n - 1 interior boundaries plus a mean and variance per epoch.
constexpr std::size_t param_count(std::size_t epochs) { return 3 * epochs - 1; }

struct EpochModel
{
  std::size_t n = 1;
  std::vector<std::size_t> boundaries;  // n + 1 entries
  std::vector<double> mu;
  std::vector<double> sigma2;
  double log_likelihood = 0.0;
  std::size_t param_count = 2;
  bool degenerate = false;
};

/// Exact maximum-likelihood segmentation into n epochs of at least min_len
/// points each, by dynamic programming over boundary positions. Among equal
/// optima the earliest boundary is kept at each step.
EpochModel fit_epochs(std::span<const double> series, std::size_t n, std::size_t min_len,
                      const EpochOptions& options = {});

struct ModelScore
{
  EpochModel model;
  double aic = 0.0;
  /// exp((AIC_min - AIC) / 2); 1 for the best model.
  double relative_likelihood = 1.0;
  /// Log-likelihood gain over the 1-epoch model.
  double delta_loglik = 0.0;
};

struct ModelSelection
{
  std::vector<ModelScore> scores;  // n = 1..max_epochs
  std::size_t best = 0;            // index into scores (minimal AIC, fewest epochs on ties)
};

ModelSelection select_model(std::span<const double> series, std::size_t max_epochs, std::size_t min_len,
                            const EpochOptions& options = {});

/// Report with boundaries as positions and, when `dates` (one label per
/// series position) is given, as dates.
nlohmann::json selection_to_json(const ModelSelection& selection, std::span<const std::string> dates = {});

}  // namespace forage
