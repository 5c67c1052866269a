#pragma once

// Fixtures and independent oracles shared by the unit and acceptance tests.

#include <cmath>
#include <string>
#include <vector>

#include "forage/corpus.hpp"
#include "forage/epochs.hpp"
#include "forage/lda.hpp"
#include "forage/measures.hpp"
#include "forage/rng.hpp"

namespace testing {

/// Corpus straight from whitespace-separated texts, no filtering.
inline forage::Corpus corpus_from_texts(const std::vector<std::string>& texts)
{
  std::vector<forage::DocumentSpec> specs;
  std::vector<forage::TokenList> tokens;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    forage::DocumentSpec s;
    s.id = "d" + std::to_string(i);
    s.inline_text = texts[i];
    s.order_index = i;
    specs.push_back(s);
    tokens.push_back(forage::tokenize(texts[i]));
  }
  auto vocab = forage::build_vocabulary(tokens, {});
  return forage::encode_corpus(specs, tokens, std::move(vocab));
}

/// Dirichlet(1, ..., 1) draw, optionally sharpened by raising to `power`.
inline forage::TopicDistribution random_distribution(forage::Rng& rng, std::size_t k, double power = 1.0)
{
  std::vector<double> w(k);
  for (auto& x : w)
    x = std::pow(-std::log(1.0 - rng.uniform()), power) + 1e-300;
  return forage::TopicDistribution::normalized(std::move(w));
}

/// Exact LDA posterior p(z | w) over every assignment of a tiny corpus,
/// from the collapsed joint. Index bits: token i of the flattened corpus
/// (documents in order) has topic (index / k^i) % k.
inline std::vector<double> lda_posterior(const std::vector<std::vector<std::size_t>>& docs, std::size_t V,
                                         std::size_t k, double alpha, double beta)
{
  std::vector<std::pair<std::size_t, std::size_t>> tokens;  // (doc, word)
  for (std::size_t d = 0; d < docs.size(); ++d)
    for (auto w : docs[d])
      tokens.emplace_back(d, w);
  std::size_t states = 1;
  for (std::size_t i = 0; i < tokens.size(); ++i)
    states *= k;

  std::vector<double> logp(states);
  for (std::size_t s = 0; s < states; ++s) {
    std::vector<double> ntd(docs.size() * k, 0.0), nwt(V * k, 0.0), nt(k, 0.0);
    std::size_t code = s;
    for (const auto& [d, w] : tokens) {
      const std::size_t t = code % k;
      code /= k;
      ntd[d * k + t] += 1;
      nwt[w * k + t] += 1;
      nt[t] += 1;
    }
    double lp = 0.0;
    for (std::size_t d = 0; d < docs.size(); ++d)
      for (std::size_t t = 0; t < k; ++t)
        lp += std::lgamma(ntd[d * k + t] + alpha);
    for (std::size_t t = 0; t < k; ++t) {
      for (std::size_t w = 0; w < V; ++w)
        lp += std::lgamma(nwt[w * k + t] + beta);
      lp -= std::lgamma(nt[t] + static_cast<double>(V) * beta);
    }
    logp[s] = lp;
  }
  double mx = logp[0];
  for (double v : logp)
    mx = std::max(mx, v);
  double z = 0.0;
  for (auto& v : logp)
    z += (v = std::exp(v - mx));
  for (auto& v : logp)
    v /= z;
  return logp;
}

/// Encodes a model's current assignment in the lda_posterior index scheme.
inline std::size_t assignment_index(const forage::TopicModel& m)
{
  std::size_t code = 0, place = 1;
  for (const auto& zd : m.z)
    for (auto t : zd) {
      code += t * place;
      place *= m.num_topics();
    }
  return code;
}

/// Maximum-likelihood segmentation by exhaustive search over boundaries.
inline std::pair<double, std::vector<std::size_t>> brute_force_epochs(const std::vector<double>& series,
                                                                       std::size_t n, std::size_t min_len)
{
  double best = -INFINITY;
  std::vector<std::size_t> best_b;
  std::vector<std::size_t> b(n + 1);
  b[0] = 0;
  b[n] = series.size();
  auto rec = [&](auto&& self, std::size_t j) -> void {
    if (j == n) {
      if (b[n] - b[n - 1] < min_len)
        return;
      double ll = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double m = static_cast<double>(b[i + 1] - b[i]);
        double mean = 0.0, ss = 0.0;
        for (std::size_t x = b[i]; x < b[i + 1]; ++x)
          mean += series[x];
        mean /= m;
        for (std::size_t x = b[i]; x < b[i + 1]; ++x)
          ss += (series[x] - mean) * (series[x] - mean);
        ll += -0.5 * m * (1.0 + std::log(2.0 * M_PI * (ss / m)));
      }
      if (ll > best) {
        best = ll;
        best_b = b;
      }
      return;
    }
    for (std::size_t e = b[j - 1] + min_len; e + min_len * (n - j) <= series.size(); ++e) {
      b[j] = e;
      self(self, j + 1);
    }
  };
  rec(rec, 1);
  return {best, best_b};
}

}  // namespace testing
