#include "forage/measures.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "forage/error.hpp"
#include "forage/format.hpp"

namespace forage {

TopicDistribution::TopicDistribution(std::vector<double> values) : values_(std::move(values))
{
  if (values_.empty())
    throw InvalidArgument("empty distribution");
  double total = 0.0;
  for (double v : values_) {
    if (!(v >= 0.0) || !std::isfinite(v))
      throw InvalidArgument("distribution has a negative or non-finite entry");
    total += v;
  }
  if (std::abs(total - 1.0) > kDistributionTolerance)
    throw InvalidArgument("distribution does not sum to 1 (sum = " + format_double(total) + ")");
}

TopicDistribution TopicDistribution::normalized(std::vector<double> weights)
{
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w))
      throw InvalidArgument("weights must be non-negative and finite");
    total += w;
  }
  if (!(total > 0.0))
    throw InvalidArgument("weights sum to zero");
  for (double& w : weights)
    w /= total;
  return TopicDistribution(std::move(weights));
}

std::size_t TopicDistribution::argmax() const
{
  std::size_t best = 0;
  for (std::size_t i = 1; i < values_.size(); ++i)
    if (values_[i] > values_[best])
      best = i;
  return best;
}

double entropy(const TopicDistribution& p)
{
  double h = 0.0;
  for (double v : p.values())
    if (v > 0.0)
      h -= v * std::log2(v);
  return h;
}

double kl_divergence(std::span<const double> q, std::span<const double> p)
{
  if (q.size() != p.size())
    throw InvalidArgument("kl_divergence: length mismatch");
  double d = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (q[i] <= 0.0)
      continue;
    if (p[i] <= 0.0)
      throw NumericalError("infinite divergence: q has mass at index " + std::to_string(i) + " where p has none");
    d += q[i] * std::log2(q[i] / p[i]);
  }
  // Rounding can leave a tiny negative residue for q ~ p.
  return d < 0.0 ? 0.0 : d;
}

double kl_divergence(const TopicDistribution& q, const TopicDistribution& p)
{
  return kl_divergence(q.values(), p.values());
}

JsResult js_distance(std::span<const double> p, std::span<const double> q)
{
  if (p.size() != q.size())
    throw InvalidArgument("js_distance: length mismatch");
  double d = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    if (p[i] > 0.0)
      d += 0.5 * p[i] * std::log2(p[i] / m);
    if (q[i] > 0.0)
      d += 0.5 * q[i] * std::log2(q[i] / m);
  }
  d = std::clamp(d, 0.0, 1.0);
  return {d, std::sqrt(d)};
}

JsResult js_distance(const TopicDistribution& p, const TopicDistribution& q)
{
  return js_distance(p.values(), q.values());
}

// ---------------------------------------------------------------------------

std::string SurpriseSpec::label() const
{
  switch (mode) {
  case SurpriseMode::text_to_text: return "T2T";
  case SurpriseMode::text_to_past: return "T2P";
  case SurpriseMode::text_to_n: return "T2N(" + std::to_string(window) + ")";
  }
  return "?";
}

SurpriseSpec SurpriseSpec::parse(const std::string& label)
{
  if (label == "T2T")
    return t2t();
  if (label == "T2P")
    return t2p();
  if (label.size() > 5 && label.rfind("T2N(", 0) == 0 && label.back() == ')') {
    const auto digits = label.substr(4, label.size() - 5);
    std::size_t used = 0;
    unsigned long n = 0;
    try {
      n = std::stoul(digits, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == digits.size() && n >= 1)
      return t2n(n);
  }
  throw InvalidArgument("unknown surprise mode '" + label + "' (expected T2T, T2P or T2N(n))");
}

double SurpriseSeries::mean() const
{
  if (values.empty())
    return 0.0;
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

namespace {

/// Neumaier-compensated running sum of vectors.
class CompensatedSum
{
public:
  explicit CompensatedSum(std::size_t k) : sum_(k, 0.0), comp_(k, 0.0) {}

  void add(std::span<const double> x, double sign = 1.0)
  {
    for (std::size_t i = 0; i < sum_.size(); ++i) {
      const double v = sign * x[i];
      const double t = sum_[i] + v;
      if (std::abs(sum_[i]) >= std::abs(v))
        comp_[i] += (sum_[i] - t) + v;
      else
        comp_[i] += (v - t) + sum_[i];
      sum_[i] = t;
    }
  }

  /// Renormalized mean.
  std::vector<double> mean() const
  {
    std::vector<double> m(sum_.size());
    double total = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) {
      m[i] = std::max(0.0, sum_[i] + comp_[i]);
      total += m[i];
    }
    for (double& v : m)
      v /= total;
    return m;
  }

private:
  std::vector<double> sum_;
  std::vector<double> comp_;
};

}  // namespace

SurpriseSeries surprise_series(std::span<const TopicDistribution> dists, SurpriseSpec spec,
                               std::span<const std::string> item_ids)
{
  if (dists.size() < 2)
    throw InvalidArgument("surprise_series needs at least two distributions");
  if (!item_ids.empty() && item_ids.size() != dists.size())
    throw InvalidArgument("surprise_series: item ids not aligned with distributions");
  if (spec.mode == SurpriseMode::text_to_n && spec.window == 0)
    throw InvalidArgument("surprise_series: T2N window must be at least 1");
  const std::size_t k = dists[0].size();
  for (const auto& d : dists)
    if (d.size() != k)
      throw InvalidArgument("surprise_series: distributions differ in length");

  SurpriseSeries out;
  out.spec = spec;
  out.values.reserve(dists.size() - 1);
  CompensatedSum past(k);
  past.add(dists[0].values());
  for (std::size_t i = 1; i < dists.size(); ++i) {
    double v = 0.0;
    switch (spec.mode) {
    case SurpriseMode::text_to_text:
      v = kl_divergence(dists[i], dists[i - 1]);
      break;
    case SurpriseMode::text_to_past:
    case SurpriseMode::text_to_n: {
      const auto m = past.mean();
      v = kl_divergence(dists[i].values(), m);
      break;
    }
    }
    out.values.push_back(v);
    if (!item_ids.empty())
      out.item_ids.push_back(item_ids[i]);
    past.add(dists[i].values());
    if (spec.mode == SurpriseMode::text_to_n && i >= spec.window)
      past.add(dists[i - spec.window].values(), -1.0);
  }
  return out;
}

void write_series_csv(std::ostream& out, const SurpriseSeries& series)
{
  out << "position,item_id,mode,bits\n";
  const auto label = series.spec.label();
  for (std::size_t j = 0; j < series.values.size(); ++j) {
    out << (j + 1) << ',' << (series.item_ids.empty() ? std::string() : series.item_ids[j]) << ',' << label << ','
        << format_double(series.values[j]) << '\n';
  }
}

// ---------------------------------------------------------------------------

Enclosure encloses(const TopicDistribution& p, const TopicDistribution& q)
{
  const double q_given_p = kl_divergence(q, p);
  const double p_given_q = kl_divergence(p, q);
  if (std::abs(q_given_p - p_given_q) <= 1e-12)
    return Enclosure::tie;
  return q_given_p < p_given_q ? Enclosure::p_encloses_q : Enclosure::q_encloses_p;
}

const char* to_string(Enclosure e)
{
  switch (e) {
  case Enclosure::p_encloses_q: return "p_encloses_q";
  case Enclosure::q_encloses_p: return "q_encloses_p";
  case Enclosure::tie: return "tie";
  }
  return "?";
}

}  // namespace forage
