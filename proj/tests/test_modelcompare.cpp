#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <sstream>

#include "forage/error.hpp"
#include "forage/modelcompare.hpp"
#include "support.hpp"

using namespace forage;
using doctest::Approx;

namespace {

WordTopicMatrix random_matrix(Rng& rng, std::vector<std::string> terms, std::size_t k, double power = 3.0)
{
  WordTopicMatrix m{std::move(terms), Matrix(0, 0)};
  m.phi = Matrix(m.terms.size(), k);
  for (std::size_t t = 0; t < k; ++t) {
    const auto col = testing::random_distribution(rng, m.terms.size(), power);
    for (std::size_t w = 0; w < m.terms.size(); ++w)
      m.phi(w, t) = col[w];
  }
  return m;
}

std::vector<std::string> terms(std::size_t n, const std::string& prefix = "w")
{
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i)
    out.push_back(prefix + std::to_string(100 + i));
  return out;
}

WordTopicMatrix permuted(const WordTopicMatrix& m, const std::vector<std::size_t>& perm)
{
  // Column perm[t] of the result is column t of m.
  WordTopicMatrix out{m.terms, Matrix(m.phi.rows(), m.phi.cols())};
  for (std::size_t t = 0; t < perm.size(); ++t)
    for (std::size_t w = 0; w < m.phi.rows(); ++w)
      out.phi(w, perm[t]) = m.phi(w, t);
  return out;
}

double brute_force_cost(const Matrix& d)
{
  std::vector<std::size_t> p(d.cols());
  std::iota(p.begin(), p.end(), std::size_t{0});
  double best = INFINITY;
  do {
    double c = 0.0;
    for (std::size_t a = 0; a < d.rows(); ++a)
      c += d(a, p[a]);
    best = std::min(best, c);
  } while (std::next_permutation(p.begin(), p.end()));
  return best;
}

}  // namespace

TEST_CASE("strategy names")
{
  for (auto s : {VocabularyMerge::intersect, VocabularyMerge::intersect_renorm, VocabularyMerge::expand_epsilon})
    CHECK(parse_vocabulary_merge(to_string(s)) == s);
  for (auto s : {AlignmentStrategy::naive, AlignmentStrategy::basic, AlignmentStrategy::adversarial})
    CHECK(parse_alignment_strategy(to_string(s)) == s);
  CHECK_THROWS_AS(parse_alignment_strategy("hungarian"), InvalidArgument);
}

TEST_CASE("identical vocabularies merge unchanged")
{
  Rng rng(1);
  const auto a = random_matrix(rng, terms(12), 3);
  const auto b = random_matrix(rng, terms(12), 4);
  for (auto s : {VocabularyMerge::intersect, VocabularyMerge::intersect_renorm, VocabularyMerge::expand_epsilon}) {
    const auto [ma, mb] = merge_vocabulary(a, b, s);
    CHECK(ma.terms == a.terms);
    CHECK(mb.terms == a.terms);
    for (std::size_t w = 0; w < 12; ++w)
      for (std::size_t t = 0; t < 3; ++t)
        CHECK(ma.phi(w, t) == Approx(a.phi(w, t)).epsilon(1e-12));
  }
}

TEST_CASE("partial overlap")
{
  Rng rng(2);
  const auto a = random_matrix(rng, {"ant", "bee", "cat", "dog"}, 2);
  const auto b = random_matrix(rng, {"bee", "cat", "eel"}, 3);

  const auto [ia, ib] = merge_vocabulary(a, b, VocabularyMerge::intersect);
  CHECK(ia.terms == std::vector<std::string>{"bee", "cat"});
  CHECK(ia.phi(0, 1) == a.phi(1, 1));
  CHECK(ib.phi(1, 2) == b.phi(1, 2));

  const auto [ra, rb] = merge_vocabulary(a, b, VocabularyMerge::intersect_renorm);
  for (std::size_t t = 0; t < 2; ++t)
    CHECK(ra.phi(0, t) + ra.phi(1, t) == Approx(1.0).epsilon(1e-12));

  const auto [ea, eb] = merge_vocabulary(a, b, VocabularyMerge::expand_epsilon);
  CHECK(ea.terms == std::vector<std::string>{"ant", "bee", "cat", "dog", "eel"});
  CHECK(eb.terms == ea.terms);
  for (const auto* m : {&ea, &eb})
    for (std::size_t t = 0; t < m->num_topics(); ++t) {
      double s = 0.0;
      for (std::size_t w = 0; w < 5; ++w) {
        CHECK(m->phi(w, t) > 0.0);
        s += m->phi(w, t);
      }
      CHECK(std::abs(s - 1.0) < 1e-9);
    }
  // An absent term keeps the epsilon ratio to its neighbours after renormalization.
  const double eps = 1.0 / 50.0;
  CHECK(eb.phi(0, 0) / eb.phi(1, 0) == Approx(eps / b.phi(0, 0)).epsilon(1e-12));

  CHECK_THROWS_AS(merge_vocabulary(a, b, VocabularyMerge::expand_epsilon, 0.5), InvalidArgument);
}

TEST_CASE("disjoint vocabularies cannot be intersected")
{
  Rng rng(3);
  const auto a = random_matrix(rng, terms(5, "a"), 2);
  const auto b = random_matrix(rng, terms(5, "b"), 2);
  CHECK_THROWS_AS(merge_vocabulary(a, b, VocabularyMerge::intersect), InvalidArgument);
  CHECK_THROWS_AS(merge_vocabulary(a, b, VocabularyMerge::intersect_renorm), InvalidArgument);
  CHECK_NOTHROW(merge_vocabulary(a, b, VocabularyMerge::expand_epsilon));
  CHECK_THROWS_AS(topic_distances(a, b), InvalidArgument);
}

TEST_CASE("self alignment is the identity at zero distance")
{
  Rng rng(4);
  const auto a = random_matrix(rng, terms(30), 6);
  for (auto s : {AlignmentStrategy::naive, AlignmentStrategy::basic, AlignmentStrategy::adversarial}) {
    const auto r = align_topics(a, a, s);
    REQUIRE(r.pairs.size() == 6);
    for (std::size_t t = 0; t < 6; ++t) {
      CHECK(r.pairs[t].topic_b == t);
      CHECK(r.pairs[t].distance == 0.0);
    }
    CHECK(r.mean_distance == 0.0);
  }
}

TEST_CASE("a permuted copy is recovered")
{
  Rng rng(5);
  const auto a = random_matrix(rng, terms(40), 8);
  const std::vector<std::size_t> perm = {3, 7, 0, 5, 1, 6, 2, 4};
  const auto b = permuted(a, perm);
  for (auto s : {AlignmentStrategy::basic, AlignmentStrategy::adversarial}) {
    const auto r = align_topics(a, b, s);
    for (std::size_t t = 0; t < 8; ++t)
      CHECK(r.pairs[t].topic_b == perm[t]);
    CHECK(r.total_distance == 0.0);
    CHECK(r.injective());
  }
}

TEST_CASE("naive alignment can collapse onto one topic")
{
  // B0 sits between the A topics; B1 and B2 are far from both.
  Matrix d(2, 3);
  d(0, 0) = 0.1, d(0, 1) = 0.5, d(0, 2) = 0.9;
  d(1, 0) = 0.2, d(1, 1) = 0.9, d(1, 2) = 0.4;
  const auto n = align_distances(d, AlignmentStrategy::naive);
  CHECK(!n.injective());
  CHECK(n.pairs[0].topic_b == 0);
  CHECK(n.pairs[1].topic_b == 0);

  const auto b = align_distances(d, AlignmentStrategy::basic);
  CHECK(b.injective());
  CHECK(b.pairs[1].topic_b == 2);
  CHECK(b.total_distance == Approx(0.5));

  // The global optimum differs from the greedy one here.
  Matrix g(2, 2);
  g(0, 0) = 0.1, g(0, 1) = 0.2;
  g(1, 0) = 0.15, g(1, 1) = 0.9;
  CHECK(align_distances(g, AlignmentStrategy::basic).total_distance == Approx(1.0));
  CHECK(align_distances(g, AlignmentStrategy::adversarial).total_distance == Approx(0.35));
}

TEST_CASE("injective strategies need enough target topics")
{
  Matrix d(3, 2, 0.5);
  CHECK_NOTHROW(align_distances(d, AlignmentStrategy::naive));
  CHECK_THROWS_AS(align_distances(d, AlignmentStrategy::basic), InvalidArgument);
  CHECK_THROWS_AS(align_distances(d, AlignmentStrategy::adversarial), InvalidArgument);
}

TEST_CASE("adversarial alignment finds the optimum on small problems")
{
  Rng rng(6);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t kb = 2 + rng.below(5);
    const std::size_t ka = 1 + rng.below(kb);
    Matrix d(ka, kb);
    for (std::size_t i = 0; i < ka; ++i)
      for (std::size_t j = 0; j < kb; ++j)
        d(i, j) = rng.uniform();
    AdversarialConfig cfg;
    cfg.seed = static_cast<std::uint64_t>(trial);
    const auto r = align_distances(d, AlignmentStrategy::adversarial, cfg);
    CHECK(r.injective());
    CHECK(r.total_distance == Approx(brute_force_cost(d)).epsilon(1e-12));
    CHECK(r.total_distance <= align_distances(d, AlignmentStrategy::basic).total_distance + 1e-12);
    // Same seed, same answer.
    const auto again = align_distances(d, AlignmentStrategy::adversarial, cfg);
    CHECK(again.total_distance == r.total_distance);
  }
}

TEST_CASE("distances are bounded and means consistent")
{
  Rng rng(7);
  const auto a = random_matrix(rng, terms(20), 5);
  const auto b = random_matrix(rng, terms(20), 7);
  const auto d = topic_distances(a, b);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 7; ++j) {
      CHECK(d(i, j) >= 0.0);
      CHECK(d(i, j) <= 1.0);
    }
  for (auto s : {AlignmentStrategy::naive, AlignmentStrategy::basic, AlignmentStrategy::adversarial}) {
    const auto r = align_topics(a, b, s);
    double worst = 0.0;
    for (const auto& p : r.pairs)
      worst = std::max(worst, p.distance);
    CHECK(r.mean_distance <= worst + 1e-15);
    CHECK(model_distance(r).total == Approx(r.mean_distance * 5.0));
  }
  // Naive is a lower bound on every injective strategy.
  CHECK(align_topics(a, b, AlignmentStrategy::naive).total_distance <=
        align_topics(a, b, AlignmentStrategy::adversarial).total_distance + 1e-12);
}

TEST_CASE("identity alignment measures drift")
{
  Rng rng(8);
  const auto a = random_matrix(rng, terms(10), 3);
  const auto r = identity_alignment(a, a);
  CHECK(r.total_distance == 0.0);
  const auto b = random_matrix(rng, terms(10), 4);
  CHECK_THROWS_AS(identity_alignment(a, b), InvalidArgument);
}

TEST_CASE("alignment reports")
{
  Matrix d(2, 2);
  d(0, 0) = 0.25, d(0, 1) = 0.5;
  d(1, 0) = 0.75, d(1, 1) = 0.125;
  const auto r = align_distances(d, AlignmentStrategy::basic);
  std::ostringstream out;
  write_alignment_csv(out, r);
  CHECK(out.str() == "topic_a,topic_b,distance\n0,0,0.25\n1,1,0.125\n");
  const auto j = alignment_to_json(r);
  CHECK(j.at("injective") == true);
  CHECK(j.at("total_distance") == 0.375);
}
