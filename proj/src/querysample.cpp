#include "forage/querysample.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include "forage/error.hpp"
#include "forage/format.hpp"
#include "forage/parallel.hpp"

namespace forage {

const char* to_string(PhiMode mode)
{
  switch (mode) {
  case PhiMode::locked: return "locked";
  case PhiMode::extended: return "extended";
  case PhiMode::drifting: return "drifting";
  }
  return "?";
}

PhiMode parse_phi_mode(const std::string& name)
{
  if (name == "locked")
    return PhiMode::locked;
  if (name == "extended")
    return PhiMode::extended;
  if (name == "drifting")
    return PhiMode::drifting;
  throw InvalidArgument("unknown phi mode '" + name + "' (expected locked, extended or drifting)");
}

namespace {

std::size_t draw(std::span<const double> cumulative, Rng& rng)
{
  const double u = rng.uniform() * cumulative.back();
  const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
  return std::min<std::size_t>(static_cast<std::size_t>(it - cumulative.begin()), cumulative.size() - 1);
}

TopicDistribution smoothed_theta(std::span<const Count> td, double alpha)
{
  const double n = std::accumulate(td.begin(), td.end(), 0.0);
  const double denom = n + static_cast<double>(td.size()) * alpha;
  std::vector<double> theta(td.size());
  for (std::size_t t = 0; t < td.size(); ++t)
    theta[t] = (td[t] + alpha) / denom;
  return TopicDistribution::normalized(std::move(theta));
}

/// Mean JS distance between matching columns of two V x k matrices.
double column_drift(const Matrix& before, const Matrix& after)
{
  const std::size_t k = before.cols();
  double total = 0.0;
  for (std::size_t t = 0; t < k; ++t)
    total += js_distance(before.col(t), after.col(t)).distance;
  return total / static_cast<double>(k);
}

Matrix smoothed_phi(const TopicModel& m)
{
  return estimate_distributions(m, Smoothing::on).phi;
}

/// Locked and drifting modes. Only the rows of the words present in the
/// document can differ from the trained counts, so they live in a small
/// overlay instead of a copy of the full matrix.
FitResult fit_with_overlay(const TopicModel& m, const std::vector<TermId>& doc, const FitOptions& opt)
{
  const std::size_t k = m.config.k;
  const double alpha = m.config.alpha;
  const double beta = m.config.beta;
  const double vbeta = static_cast<double>(m.vocab_size) * beta;
  const bool drifting = opt.phi_mode == PhiMode::drifting;

  std::vector<TermId> uniq(doc);
  std::sort(uniq.begin(), uniq.end());
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  std::vector<std::size_t> slot(doc.size());
  for (std::size_t i = 0; i < doc.size(); ++i)
    slot[i] = static_cast<std::size_t>(std::lower_bound(uniq.begin(), uniq.end(), doc[i]) - uniq.begin());

  std::vector<Count> delta_wt(uniq.size() * k, 0);
  std::vector<Count> delta_tt(k, 0);
  std::vector<Count> td(k, 0);
  std::vector<TopicId> z(doc.size());

  Rng rng(opt.seed);
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto t = static_cast<TopicId>(rng.below(k));
    z[i] = t;
    ++td[t];
    if (drifting) {
      ++delta_wt[slot[i] * k + t];
      ++delta_tt[t];
    }
  }

  std::vector<double> cumulative(k);
  for (std::size_t it = 0; it < opt.iterations; ++it) {
    if (!drifting) {
      std::fill(delta_wt.begin(), delta_wt.end(), 0);
      std::fill(delta_tt.begin(), delta_tt.end(), 0);
    }
    for (std::size_t i = 0; i < doc.size(); ++i) {
      const auto w = doc[i];
      Count* dwt = &delta_wt[slot[i] * k];
      const auto old = z[i];
      --td[old];
      if (drifting) {
        --dwt[old];
        --delta_tt[old];
      }
      double acc = 0.0;
      for (std::size_t t = 0; t < k; ++t) {
        acc += (m.word_topic[w * k + t] + dwt[t] + beta) / (m.topic_total[t] + delta_tt[t] + vbeta) * (td[t] + alpha);
        cumulative[t] = acc;
      }
      const auto t = static_cast<TopicId>(draw(cumulative, rng));
      z[i] = t;
      ++td[t];
      ++dwt[t];
      ++delta_tt[t];
    }
  }

  FitResult out;
  out.theta = smoothed_theta(td, alpha);

  // Final word-topic probabilities for the document's words. In locked
  // mode the counts snap back to the trained values.
  auto phi_at = [&](std::size_t s, std::size_t t) {
    const TermId w = uniq[s];
    const double extra_w = drifting ? delta_wt[s * k + t] : 0.0;
    const double extra_t = drifting ? delta_tt[t] : 0.0;
    return (m.word_topic[w * k + t] + extra_w + beta) / (m.topic_total[t] + extra_t + vbeta);
  };
  double log2_sum = 0.0;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    double p = 0.0;
    for (std::size_t t = 0; t < k; ++t)
      p += out.theta[t] * phi_at(slot[i], t);
    log2_sum += std::log2(p);
  }
  out.perplexity = std::exp2(-log2_sum / static_cast<double>(doc.size()));

  if (drifting) {
    const Matrix before = smoothed_phi(m);
    Matrix after(m.vocab_size, k);
    for (std::size_t t = 0; t < k; ++t) {
      const double denom = m.topic_total[t] + delta_tt[t] + vbeta;
      for (std::size_t w = 0; w < m.vocab_size; ++w)
        after(w, t) = (m.word_topic[w * k + t] + beta) / denom;
      for (std::size_t s = 0; s < uniq.size(); ++s)
        after(uniq[s], t) = phi_at(s, t);
    }
    out.topic_drift = column_drift(before, after);
  }
  return out;
}

FitResult fit_extended(const TopicModel& base, const std::vector<TermId>& doc, const FitOptions& opt)
{
  const std::size_t k = base.config.k;
  const Matrix phi0 = smoothed_phi(base);

  TopicModel m = base;
  const std::size_t d = m.words.size();
  m.doc_ids.push_back("<query>");
  m.words.push_back(doc);
  m.z.emplace_back(doc.size());
  m.topic_doc.resize((d + 1) * k, 0);
  m.doc_length.push_back(static_cast<Count>(doc.size()));

  Rng rng(opt.seed);
  std::vector<double> cumulative(k);
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto w = doc[i];
    double acc = 0.0;
    for (std::size_t t = 0; t < k; ++t) {
      acc += phi0(w, t);
      cumulative[t] = acc;
    }
    const auto t = static_cast<TopicId>(draw(cumulative, rng));
    m.z[d][i] = t;
    ++m.topic_doc[d * k + t];
    ++m.word_topic[w * k + t];
    ++m.topic_total[t];
  }
  for (std::size_t it = 0; it < opt.iterations; ++it)
    sweep_in_place(m, rng);

  const auto est = estimate_distributions(m, Smoothing::on);
  FitResult out;
  out.theta = TopicDistribution::normalized({est.theta.row(d).begin(), est.theta.row(d).end()});
  Matrix theta_row(1, k);
  std::copy(out.theta.values().begin(), out.theta.values().end(), theta_row.row(0).begin());
  out.perplexity = perplexity(theta_row, est.phi, {doc});
  out.topic_drift = column_drift(phi0, est.phi);
  return out;
}

}  // namespace

FitResult fit_document(const TopicModel& model, const std::vector<TermId>& doc, const FitOptions& options)
{
  if (!model.initialized())
    throw InvalidArgument("fit_document: model is not trained");
  if (doc.empty())
    throw InvalidArgument("untrainable document: no in-vocabulary tokens");
  for (auto w : doc)
    if (w >= model.vocab_size)
      throw InvalidArgument("fit_document: term id outside the model vocabulary");
  if (options.phi_mode == PhiMode::extended)
    return fit_extended(model, doc, options);
  return fit_with_overlay(model, doc, options);
}

SampleEnsemble sample_ensemble(const TopicModel& model, const std::vector<TermId>& doc, std::string document_id,
                               std::size_t n_samples, const FitOptions& options, unsigned threads)
{
  if (n_samples == 0)
    throw InvalidArgument("sample_ensemble: n_samples must be positive");
  SampleEnsemble ens;
  ens.document_id = std::move(document_id);
  ens.phi_mode = options.phi_mode;
  ens.master_seed = options.seed;
  ens.seeds.resize(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i)
    ens.seeds[i] = derive_seed(options.seed, i);
  ens.samples.resize(n_samples);
  parallel_for(n_samples, threads, [&](std::size_t i) {
    FitOptions o = options;
    o.seed = ens.seeds[i];
    ens.samples[i] = fit_document(model, doc, o);
  });
  return ens;
}

// ---------------------------------------------------------------------------
// Clustering

Medoids k_medoids(const Matrix& dist, std::size_t k)
{
  const std::size_t n = dist.rows();
  if (k == 0 || k > n)
    throw InvalidArgument("k_medoids: k must be in [1, n]");
  constexpr double inf = std::numeric_limits<double>::infinity();

  // BUILD: greedily add the point that lowers total cost the most.
  std::vector<std::size_t> medoids;
  std::vector<bool> is_medoid(n, false);
  std::vector<double> nearest(n, inf);
  while (medoids.size() < k) {
    std::size_t best = n;
    double best_cost = inf;
    for (std::size_t c = 0; c < n; ++c) {
      if (is_medoid[c])
        continue;
      double cost = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        cost += std::min(nearest[i], dist(i, c));
      if (cost < best_cost) {
        best_cost = cost;
        best = c;
      }
    }
    medoids.push_back(best);
    is_medoid[best] = true;
    for (std::size_t i = 0; i < n; ++i)
      nearest[i] = std::min(nearest[i], dist(i, best));
  }

  // SWAP: apply the best improving (medoid, non-medoid) exchange until none.
  std::vector<double> d1(n), d2(n);
  std::vector<std::size_t> owner(n);
  auto refresh = [&] {
    double cost = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d1[i] = d2[i] = inf;
      owner[i] = 0;
      for (std::size_t mi = 0; mi < k; ++mi) {
        const double d = dist(i, medoids[mi]);
        if (d < d1[i]) {
          d2[i] = d1[i];
          d1[i] = d;
          owner[i] = mi;
        } else if (d < d2[i]) {
          d2[i] = d;
        }
      }
      cost += d1[i];
    }
    return cost;
  };
  double current = refresh();
  while (true) {
    double best_cost = current;
    std::size_t best_m = k, best_c = n;
    for (std::size_t mi = 0; mi < k; ++mi) {
      for (std::size_t c = 0; c < n; ++c) {
        if (is_medoid[c])
          continue;
        double cost = 0.0;
        for (std::size_t i = 0; i < n; ++i)
          cost += std::min(dist(i, c), owner[i] == mi ? d2[i] : d1[i]);
        if (cost < best_cost - 1e-12) {
          best_cost = cost;
          best_m = mi;
          best_c = c;
        }
      }
    }
    if (best_m == k)
      break;
    is_medoid[medoids[best_m]] = false;
    is_medoid[best_c] = true;
    medoids[best_m] = best_c;
    current = refresh();
  }

  Medoids out;
  out.medoids = medoids;
  out.assignments.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t mi = 1; mi < k; ++mi)
      if (dist(i, medoids[mi]) < dist(i, medoids[best]))
        best = mi;
    out.assignments[i] = best;
  }
  // Medoids always belong to their own cluster.
  for (std::size_t mi = 0; mi < k; ++mi)
    out.assignments[medoids[mi]] = mi;
  return out;
}

double mean_silhouette(const Matrix& dist, const std::vector<std::size_t>& assignments, std::size_t k)
{
  const std::size_t n = dist.rows();
  std::vector<std::size_t> sizes(k, 0);
  for (auto a : assignments)
    ++sizes[a];
  double total = 0.0;
  std::vector<double> sums(k);
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(sums.begin(), sums.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j)
      if (j != i)
        sums[assignments[j]] += dist(i, j);
    const std::size_t own = assignments[i];
    if (sizes[own] <= 1)
      continue;  // singleton: s = 0
    const double a = sums[own] / static_cast<double>(sizes[own] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c)
      if (c != own && sizes[c] > 0)
        b = std::min(b, sums[c] / static_cast<double>(sizes[c]));
    const double denom = std::max(a, b);
    if (denom > 0.0 && std::isfinite(b))
      total += (b - a) / denom;
  }
  return total / static_cast<double>(n);
}

ClusterReport cluster_ensemble(const SampleEnsemble& ensemble, std::size_t k_min, std::size_t k_max)
{
  const std::size_t n = ensemble.samples.size();
  if (n < 3)
    throw InvalidArgument("cluster_ensemble: need at least 3 samples");
  if (k_min < 2 || k_max < k_min)
    throw InvalidArgument("cluster_ensemble: k range must satisfy 2 <= k_min <= k_max");

  Matrix dist(n, n);
  double max_dist = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d = js_distance(ensemble.samples[i].theta, ensemble.samples[j].theta).distance;
      dist(i, j) = dist(j, i) = d;
      max_dist = std::max(max_dist, d);
    }

  ClusterReport report;
  Medoids chosen;
  if (max_dist <= 1e-12) {
    report.chosen_k = 1;
    report.note = "all samples identical; silhouette undefined";
    chosen.medoids = {0};
    chosen.assignments.assign(n, 0);
  } else {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t k = k_min; k <= std::min(k_max, n - 1); ++k) {
      auto pam = k_medoids(dist, k);
      const double s = mean_silhouette(dist, pam.assignments, k);
      report.silhouettes.emplace_back(k, s);
      if (s > best) {
        best = s;
        report.chosen_k = k;
        chosen = std::move(pam);
      }
    }
  }

  report.assignments = chosen.assignments;
  for (std::size_t c = 0; c < chosen.medoids.size(); ++c) {
    ClusterSummary s;
    s.medoid = chosen.medoids[c];
    s.dominant_topic = ensemble.samples[s.medoid].theta.argmax();
    s.perplexity_min = std::numeric_limits<double>::infinity();
    s.perplexity_max = -std::numeric_limits<double>::infinity();
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (chosen.assignments[i] != c)
        continue;
      const double p = ensemble.samples[i].perplexity;
      ++s.size;
      sum += p;
      s.perplexity_min = std::min(s.perplexity_min, p);
      s.perplexity_max = std::max(s.perplexity_max, p);
    }
    s.perplexity_mean = sum / static_cast<double>(s.size);
    report.clusters.push_back(s);
  }
  return report;
}

// ---------------------------------------------------------------------------

nlohmann::json ensemble_to_json(const SampleEnsemble& e)
{
  nlohmann::json samples = nlohmann::json::array();
  for (std::size_t i = 0; i < e.samples.size(); ++i) {
    const auto& s = e.samples[i];
    samples.push_back({{"seed", e.seeds[i]},
                       {"theta", std::vector<double>(s.theta.values().begin(), s.theta.values().end())},
                       {"perplexity", s.perplexity},
                       {"topic_drift", s.topic_drift}});
  }
  return {{"document_id", e.document_id},
          {"phi_mode", to_string(e.phi_mode)},
          {"master_seed", e.master_seed},
          {"samples", std::move(samples)}};
}

nlohmann::json cluster_report_to_json(const ClusterReport& r)
{
  nlohmann::json clusters = nlohmann::json::array();
  for (const auto& c : r.clusters)
    clusters.push_back({{"medoid", c.medoid},
                        {"dominant_topic", c.dominant_topic},
                        {"size", c.size},
                        {"perplexity_mean", c.perplexity_mean},
                        {"perplexity_min", c.perplexity_min},
                        {"perplexity_max", c.perplexity_max}});
  nlohmann::json sil = nlohmann::json::array();
  for (const auto& [k, s] : r.silhouettes)
    sil.push_back({{"k", k}, {"mean_silhouette", s}});
  nlohmann::json j = {
      {"chosen_k", r.chosen_k}, {"assignments", r.assignments}, {"clusters", std::move(clusters)}, {"silhouettes", sil}};
  if (!r.note.empty())
    j["note"] = r.note;
  return j;
}

void write_ensemble_csv(std::ostream& out, const SampleEnsemble& e)
{
  out << "sample,seed,dominant_topic,perplexity\n";
  for (std::size_t i = 0; i < e.samples.size(); ++i)
    out << i << ',' << e.seeds[i] << ',' << e.samples[i].theta.argmax() << ','
        << format_double(e.samples[i].perplexity) << '\n';
}

}  // namespace forage
