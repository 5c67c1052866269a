#include <doctest.h>

#include <cmath>
#include <map>

#include "forage/error.hpp"
#include "forage/lda.hpp"
#include "support.hpp"

using namespace forage;
using doctest::Approx;

namespace {

/// Model over hand-written assignments, counts filled in from z.
TopicModel hand_model(std::size_t k, std::size_t V, std::vector<std::vector<TermId>> words,
                      std::vector<std::vector<TopicId>> z, double alpha = 0.1, double beta = 0.01)
{
  TopicModel m;
  m.config.k = k;
  m.config.alpha = alpha;
  m.config.beta = beta;
  m.vocab_size = V;
  m.words = std::move(words);
  m.z = std::move(z);
  m.topic_doc.assign(m.words.size() * k, 0);
  m.word_topic.assign(V * k, 0);
  m.topic_total.assign(k, 0);
  for (std::size_t d = 0; d < m.words.size(); ++d) {
    m.doc_ids.push_back("d" + std::to_string(d));
    m.doc_length.push_back(static_cast<Count>(m.words[d].size()));
    for (std::size_t i = 0; i < m.words[d].size(); ++i) {
      const auto t = m.z[d][i];
      ++m.topic_doc[d * k + t];
      ++m.word_topic[m.words[d][i] * k + t];
      ++m.topic_total[t];
    }
  }
  return m;
}

double total_variation(const std::vector<double>& a, const std::vector<double>& b)
{
  double tv = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    tv += std::abs(a[i] - b[i]);
  return tv / 2.0;
}

Corpus fixture_corpus() { return testing::corpus_from_texts({"a a b", "c c b"}); }

}  // namespace

TEST_CASE("config validation")
{
  TrainingConfig c;
  c.k = 1;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c.k = 2;
  c.alpha = 0.0;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c.alpha = 0.1;
  c.beta = -1.0;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
}

TEST_CASE("zero iterations reproduce the random initialization")
{
  const auto corpus = testing::corpus_from_texts({"alpha beta gamma alpha", "beta beta delta", "gamma delta"});
  TrainingConfig c;
  c.k = 3;
  c.iterations = 0;
  c.seed = 42;
  const auto trained = train(corpus, c);
  Rng rng(42);
  const auto init = initialize_model(corpus, c, rng);
  CHECK(trained == init);
  CHECK(trained.sweeps == 0);
}

TEST_CASE("training is deterministic and keeps counts consistent")
{
  const auto corpus = testing::corpus_from_texts(
      {"sun moon star sun moon", "river lake sea river", "sun star star", "lake sea sea river", "moon moon sun"});
  TrainingConfig c;
  c.k = 2;
  c.iterations = 50;
  c.seed = 9;
  const auto a = train(corpus, c);
  const auto b = train(corpus, c);
  CHECK(a.z == b.z);
  CHECK(a == b);
  CHECK_NOTHROW(verify_counts(a));

  c.seed = 10;
  const auto other = train(corpus, c);
  CHECK_NOTHROW(verify_counts(other));
}

TEST_CASE("sweep under a fixed stream is reproducible")
{
  const auto corpus = fixture_corpus();
  TrainingConfig c;
  c.k = 2;
  Rng init(1);
  const auto m0 = initialize_model(corpus, c, init);
  Rng r1(77), r2(77);
  const auto s1 = gibbs_sweep(m0, r1);
  const auto s2 = gibbs_sweep(m0, r2);
  CHECK(s1 == s2);
  CHECK(s1.sweeps == 1);
  CHECK_NOTHROW(verify_counts(s1));
}

TEST_CASE("verify_counts catches corruption")
{
  auto m = hand_model(2, 2, {{0, 1}}, {{0, 1}});
  CHECK_NOTHROW(verify_counts(m));
  m.word_topic[0] += 1;
  CHECK_THROWS_AS(verify_counts(m), FormatError);
}

TEST_CASE("a single token samples its topic uniformly")
{
  const auto corpus = testing::corpus_from_texts({"lonely"});
  TrainingConfig c;
  c.k = 2;
  Rng init(3);
  auto m = initialize_model(corpus, c, init);
  Rng rng(8);
  int ones = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    sweep_in_place(m, rng);
    ones += static_cast<int>(m.z[0][0]);
  }
  // Binomial sd is 0.0035; allow five of them.
  CHECK(static_cast<double>(ones) / n == Approx(0.5).epsilon(0.0354));
}

TEST_CASE("sampler matches the enumerated posterior")
{
  const auto corpus = fixture_corpus();  // a=0, b=1, c=2
  TrainingConfig c;
  c.k = 2;
  c.alpha = 0.1;
  c.beta = 0.01;
  const auto exact = testing::lda_posterior({{0, 0, 1}, {2, 2, 1}}, 3, 2, c.alpha, c.beta);

  Rng init(5);
  auto m = initialize_model(corpus, c, init);
  Rng rng(6);
  for (int i = 0; i < 2000; ++i)
    sweep_in_place(m, rng);
  std::vector<double> hist(exact.size(), 0.0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    sweep_in_place(m, rng);
    hist[testing::assignment_index(m)] += 1.0 / n;
  }
  CHECK(total_variation(hist, exact) < 0.05);
}

TEST_CASE("token order within a document does not change the stationary distribution")
{
  // Compare the law of the count matrices, which ignores token order.
  auto count_law = [](const Corpus& corpus, std::uint64_t seed) {
    TrainingConfig c;
    c.k = 2;
    c.alpha = 0.5;
    c.beta = 0.1;
    Rng init(seed);
    auto m = initialize_model(corpus, c, init);
    Rng rng(seed + 1);
    for (int i = 0; i < 1000; ++i)
      sweep_in_place(m, rng);
    std::map<std::vector<Count>, double> law;
    const int n = 60000;
    for (int i = 0; i < n; ++i) {
      sweep_in_place(m, rng);
      auto key = m.word_topic;
      key.insert(key.end(), m.topic_doc.begin(), m.topic_doc.end());
      law[key] += 1.0 / n;
    }
    return law;
  };
  const auto a = count_law(testing::corpus_from_texts({"a a b", "c c b"}), 10);
  const auto b = count_law(testing::corpus_from_texts({"a b a", "b c c"}), 20);
  std::map<std::vector<Count>, double> diff = a;
  for (const auto& [k, v] : b)
    diff[k] -= v;
  double tv = 0.0;
  for (const auto& [k, v] : diff)
    tv += std::abs(v);
  CHECK(tv / 2.0 < 0.05);
}

TEST_CASE("theta and phi estimates")
{
  std::vector<TermId> words(10, 0);
  std::vector<TopicId> z = {0, 0, 0, 0, 0, 0, 0, 1, 1, 1};
  const auto m = hand_model(2, 1, {words}, {z}, 0.1, 0.01);

  const auto raw = estimate_distributions(m, Smoothing::off);
  CHECK(raw.theta(0, 0) == Approx(0.7));
  CHECK(raw.theta(0, 1) == Approx(0.3));

  const auto smooth = estimate_distributions(m, Smoothing::on);
  CHECK(smooth.theta(0, 0) == Approx(7.1 / 10.2).epsilon(1e-14));
  CHECK(smooth.theta(0, 1) == Approx(3.1 / 10.2).epsilon(1e-14));

  // An empty topic: uniform theta smoothed, error unsmoothed.
  const auto e = hand_model(3, 2, {{0, 1}}, {{0, 0}});
  CHECK_THROWS_AS(estimate_distributions(e, Smoothing::off), NumericalError);
  const auto empty_doc = hand_model(2, 2, {{0, 1}, {}}, {{0, 1}, {}});
  const auto s = estimate_distributions(empty_doc, Smoothing::on);
  CHECK(s.theta(1, 0) == Approx(0.5));
  CHECK(s.theta(1, 1) == Approx(0.5));
}

TEST_CASE("smoothed estimates are probability distributions")
{
  const auto corpus = testing::corpus_from_texts(
      {"one two three one two", "four five six four", "one four seven eight", "two five eight eight"});
  TrainingConfig c;
  c.k = 3;
  c.iterations = 20;
  c.seed = 2;
  const auto m = train(corpus, c);
  const auto est = estimate_distributions(m);
  for (std::size_t d = 0; d < est.theta.rows(); ++d) {
    double s = 0.0;
    for (double v : est.theta.row(d)) {
      CHECK(v > 0.0);
      s += v;
    }
    CHECK(std::abs(s - 1.0) < 1e-9);
  }
  for (std::size_t t = 0; t < est.phi.cols(); ++t) {
    double s = 0.0;
    for (double v : est.phi.col(t))
      s += v;
    CHECK(std::abs(s - 1.0) < 1e-9);
  }
}

TEST_CASE("perplexity")
{
  SUBCASE("uniform model gives V")
  {
    const std::size_t V = 7;
    Matrix theta(1, 2, 0.5), phi(V, 2, 1.0 / V);
    CHECK(perplexity(theta, phi, {{0, 3, 6, 1}}) == Approx(7.0).epsilon(1e-12));
  }
  SUBCASE("certain model gives 1")
  {
    Matrix theta(1, 2);
    theta(0, 0) = 1.0;
    Matrix phi(3, 2);
    phi(2, 0) = 1.0;
    phi(0, 1) = 1.0;
    CHECK(perplexity(theta, phi, {{2, 2, 2}}) == Approx(1.0));
  }
  SUBCASE("hand-built two-topic model")
  {
    Matrix theta(1, 2);
    theta(0, 0) = 0.6;
    theta(0, 1) = 0.4;
    Matrix phi(3, 2);
    const double p0[] = {0.5, 0.3, 0.2}, p1[] = {0.1, 0.1, 0.8};
    for (int w = 0; w < 3; ++w) {
      phi(w, 0) = p0[w];
      phi(w, 1) = p1[w];
    }
    const std::vector<TermId> doc = {0, 2, 2, 1};
    double log2sum = 0.0;
    for (auto w : doc)
      log2sum += std::log2(0.6 * p0[w] + 0.4 * p1[w]);
    CHECK(perplexity(theta, phi, {doc}) == Approx(std::pow(2.0, -log2sum / 4)).epsilon(1e-13));
  }
  SUBCASE("zero-probability token")
  {
    Matrix theta(1, 1, 1.0), phi(2, 1);
    phi(0, 0) = 1.0;
    CHECK_THROWS_AS(perplexity(theta, phi, {{1}}), NumericalError);
  }
}

TEST_CASE("topic summary")
{
  Estimates est{Matrix(4, 2, 0.5), Matrix(4, 2, 0.25)};
  const double col[] = {0.4, 0.3, 0.2, 0.1};
  for (int w = 0; w < 4; ++w)
    est.phi(w, 0) = col[3 - w];  // highest mass on the last term

  const auto s = topic_summary(est, 0, 1, 0.5);
  REQUIRE(s.top_terms.size() == 1);
  CHECK(s.top_terms[0].first == 3);
  CHECK(s.top_terms[0].second == 0.4);
  CHECK(s.mass_coverage == 2);
  CHECK(s.document_entropy == Approx(2.0));  // uniform over 4 documents
  CHECK(s.mean_probability == Approx(0.5));

  // Ties keep ascending term ids.
  const auto tie = topic_summary(est, 1, 4, 1.0);
  CHECK(tie.top_terms[0].first == 0);
  CHECK(tie.top_terms[3].first == 3);
}

TEST_CASE("topics by mass")
{
  const auto m = hand_model(3, 2, {{0, 1, 1, 0, 1}}, {{2, 2, 1, 2, 1}});
  CHECK(topics_by_mass(m) == std::vector<TopicId>{2, 1, 0});
}

TEST_CASE("log joint agrees with the enumeration oracle up to a constant")
{
  const auto corpus = fixture_corpus();
  TrainingConfig c;
  c.k = 2;
  const auto exact = testing::lda_posterior({{0, 0, 1}, {2, 2, 1}}, 3, 2, c.alpha, c.beta);
  Rng rng(12);
  auto m1 = initialize_model(corpus, c, rng);
  auto m2 = m1;
  Rng r(99);
  for (int i = 0; i < 7; ++i)
    sweep_in_place(m2, r);
  const double lhs = log_joint(m1) - log_joint(m2);
  const double rhs = std::log(exact[testing::assignment_index(m1)]) - std::log(exact[testing::assignment_index(m2)]);
  CHECK(lhs == Approx(rhs).epsilon(1e-9));
}

TEST_CASE("model JSON round trip")
{
  const auto corpus = testing::corpus_from_texts({"ant bee cat ant", "bee cat dog dog"});
  TrainingConfig c;
  c.k = 2;
  c.iterations = 5;
  c.trace_every = 2;
  c.seed = 4;
  const auto m = train(corpus, c);
  CHECK(m.likelihood_trace.size() == 3);
  const auto j = nlohmann::json::parse(model_to_json(m).dump());
  const auto back = model_from_json(j, corpus.vocabulary.hash());
  CHECK(back == m);
  CHECK_THROWS_AS(model_from_json(j, corpus.vocabulary.hash() + 1), FormatError);

  auto broken = j;
  broken["format_version"] = 7;
  CHECK_THROWS_AS(model_from_json(broken), FormatError);
}

TEST_CASE("partitioned training keeps counts consistent")
{
  const auto corpus = testing::corpus_from_texts(
      {"a b c a", "b c d", "d e f d", "e f a", "a a b", "f e d", "c c b", "a f"});
  TrainingConfig c;
  c.k = 3;
  c.iterations = 10;
  const auto m = train_partitioned(corpus, c, 3);
  CHECK_NOTHROW(verify_counts(m));
  CHECK(m.sweeps == 10);
}
