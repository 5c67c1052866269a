#include "forage/epochs.hpp"

#include <cmath>
#include <limits>

#include "forage/error.hpp"

namespace forage {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

/// Running mean / sum of squared deviations (Welford).
struct Moments
{
  std::size_t m = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x)
  {
    ++m;
    const double delta = x - mean;
    mean += delta / static_cast<double>(m);
    m2 += delta * (x - mean);
  }
};

struct SegmentStats
{
  double mu = 0.0;
  double sigma2 = 0.0;
  double log_likelihood = 0.0;
  bool degenerate = false;
};

SegmentStats finish(const Moments& mo, const EpochOptions& opt)
{
  SegmentStats s;
  const double m = static_cast<double>(mo.m);
  double weight = m;
  if (opt.estimator == VarianceEstimator::mle) {
    s.mu = mo.mean;
    s.sigma2 = mo.m2 / m;
  } else {
    const double denom = m - 1.0;
    s.mu = mo.mean * m / denom;
    const double shift = mo.mean - s.mu;
    s.sigma2 = (mo.m2 + m * shift * shift) / denom;
    weight = denom;
  }
  if (!(s.sigma2 >= opt.variance_floor)) {
    s.sigma2 = opt.variance_floor;
    s.degenerate = true;
  }
  s.log_likelihood = -0.5 * weight * (1.0 + std::log(kTwoPi * s.sigma2));
  return s;
}

void validate_options(const EpochOptions& opt)
{
  if (!(opt.variance_floor > 0.0))
    throw InvalidArgument("epochs: variance floor must be positive");
}

}  // namespace

SegmentFit segment_loglik(std::span<const double> series, std::span<const std::size_t> boundaries,
                          const EpochOptions& options)
{
  validate_options(options);
  if (boundaries.size() < 2 || boundaries.front() != 0 || boundaries.back() != series.size())
    throw InvalidArgument("segment_loglik: boundaries must start at 0 and end at the series length");
  SegmentFit fit;
  for (std::size_t i = 0; i + 1 < boundaries.size(); ++i) {
    const auto a = boundaries[i];
    const auto b = boundaries[i + 1];
    if (b <= a)
      throw InvalidArgument("segment_loglik: boundaries must be strictly increasing");
    if (b - a < 2)
      throw InvalidArgument("segment_loglik: every segment needs at least two points");
    Moments mo;
    for (std::size_t k = a; k < b; ++k)
      mo.add(series[k]);
    const auto s = finish(mo, options);
    fit.mu.push_back(s.mu);
    fit.sigma2.push_back(s.sigma2);
    fit.log_likelihood += s.log_likelihood;
    fit.degenerate = fit.degenerate || s.degenerate;
  }
  return fit;
}

EpochModel fit_epochs(std::span<const double> series, std::size_t n, std::size_t min_len, const EpochOptions& options)
{
  validate_options(options);
  const std::size_t L = series.size();
  if (n < 1)
    throw InvalidArgument("fit_epochs: need at least one epoch");
  if (min_len < 2)
    throw InvalidArgument("fit_epochs: min_len must be at least 2");
  if (L < n * min_len)
    throw InvalidArgument("fit_epochs: series of length " + std::to_string(L) + " is too short for " +
                          std::to_string(n) + " epochs of at least " + std::to_string(min_len) + " points");

  constexpr double neg_inf = -std::numeric_limits<double>::infinity();
  // best[j][t]: max log-likelihood of splitting series[0, t) into j + 1 epochs.
  std::vector<std::vector<double>> best(n, std::vector<double>(L + 1, neg_inf));
  std::vector<std::vector<std::size_t>> back(n, std::vector<std::size_t>(L + 1, 0));

  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t first_end = (j + 1) * min_len;
    const std::size_t last_end = L - (n - 1 - j) * min_len;
    for (std::size_t t = first_end; t <= last_end; ++t) {
      const std::size_t lowest_start = j * min_len;
      Moments mo;
      // Grow the last segment backwards from t; on ties the smaller start wins.
      for (std::size_t s = t; s-- > lowest_start;) {
        mo.add(series[s]);
        if (t - s < min_len)
          continue;
        const double prev = j == 0 ? (s == 0 ? 0.0 : neg_inf) : best[j - 1][s];
        if (prev == neg_inf)
          continue;
        const double cand = prev + finish(mo, options).log_likelihood;
        if (cand >= best[j][t]) {
          best[j][t] = cand;
          back[j][t] = s;
        }
      }
    }
  }
  if (best[n - 1][L] == neg_inf)
    throw NumericalError("fit_epochs: no feasible segmentation");

  std::vector<std::size_t> bounds(n + 1);
  bounds[n] = L;
  for (std::size_t j = n; j-- > 0;)
    bounds[j] = back[j][bounds[j + 1]];

  const auto fit = segment_loglik(series, bounds, options);
  EpochModel model;
  model.n = n;
  model.boundaries = std::move(bounds);
  model.mu = fit.mu;
  model.sigma2 = fit.sigma2;
  model.log_likelihood = fit.log_likelihood;
  model.param_count = param_count(n);
  model.degenerate = fit.degenerate;
  return model;
}

ModelSelection select_model(std::span<const double> series, std::size_t max_epochs, std::size_t min_len,
                            const EpochOptions& options)
{
  if (max_epochs < 1)
    throw InvalidArgument("select_model: max_epochs must be at least 1");
  ModelSelection sel;
  for (std::size_t n = 1; n <= max_epochs; ++n) {
    ModelScore s;
    s.model = fit_epochs(series, n, min_len, options);
    s.aic = 2.0 * static_cast<double>(s.model.param_count) - 2.0 * s.model.log_likelihood;
    sel.scores.push_back(std::move(s));
  }
  double aic_min = sel.scores[0].aic;
  for (std::size_t i = 1; i < sel.scores.size(); ++i)
    if (sel.scores[i].aic < aic_min) {
      aic_min = sel.scores[i].aic;
      sel.best = i;
    }
  const double null_ll = sel.scores[0].model.log_likelihood;
  for (auto& s : sel.scores) {
    s.relative_likelihood = std::exp((aic_min - s.aic) / 2.0);
    s.delta_loglik = s.model.log_likelihood - null_ll;
  }
  sel.scores[sel.best].relative_likelihood = 1.0;
  return sel;
}

nlohmann::json selection_to_json(const ModelSelection& sel, std::span<const std::string> dates)
{
  nlohmann::json models = nlohmann::json::array();
  for (const auto& s : sel.scores) {
    const auto& m = s.model;
    nlohmann::json epochs = nlohmann::json::array();
    for (std::size_t i = 0; i < m.n; ++i) {
      nlohmann::json e = {{"start", m.boundaries[i]},
                          {"end", m.boundaries[i + 1]},
                          {"mu", m.mu[i]},
                          {"sigma2", m.sigma2[i]},
                          {"sigma", std::sqrt(m.sigma2[i])}};
      if (!dates.empty()) {
        e["start_date"] = dates[m.boundaries[i]];
        e["end_date"] = dates[m.boundaries[i + 1] - 1];
      }
      epochs.push_back(std::move(e));
    }
    nlohmann::json breaks = nlohmann::json::array();
    nlohmann::json break_dates = nlohmann::json::array();
    for (std::size_t i = 1; i < m.n; ++i) {
      breaks.push_back(m.boundaries[i]);
      if (!dates.empty())
        break_dates.push_back(dates[m.boundaries[i]]);
    }
    nlohmann::json row = {{"epochs", m.n},
                          {"breaks", std::move(breaks)},
                          {"k", m.param_count},
                          {"log_likelihood", m.log_likelihood},
                          {"aic", s.aic},
                          {"relative_likelihood", s.relative_likelihood},
                          {"delta_loglik", s.delta_loglik},
                          {"degenerate", m.degenerate},
                          {"boundaries", m.boundaries},
                          {"segments", std::move(epochs)}};
    if (!dates.empty())
      row["break_dates"] = std::move(break_dates);
    models.push_back(std::move(row));
  }
  return {{"best_epochs", sel.scores[sel.best].model.n}, {"models", std::move(models)}};
}

}  // namespace forage
