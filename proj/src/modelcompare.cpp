#include "forage/modelcompare.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>

#include "forage/error.hpp"
#include "forage/format.hpp"
#include "forage/measures.hpp"
#include "forage/rng.hpp"

namespace forage {

WordTopicMatrix word_topics(const TopicModel& model)
{
  if (model.terms.size() != model.vocab_size)
    throw InvalidArgument("word_topics: model has no term list");
  return {model.terms, estimate_distributions(model, Smoothing::on).phi};
}

const char* to_string(VocabularyMerge s)
{
  switch (s) {
  case VocabularyMerge::intersect: return "intersect";
  case VocabularyMerge::intersect_renorm: return "intersect_renorm";
  case VocabularyMerge::expand_epsilon: return "expand_epsilon";
  }
  return "?";
}

const char* to_string(AlignmentStrategy s)
{
  switch (s) {
  case AlignmentStrategy::naive: return "naive";
  case AlignmentStrategy::basic: return "basic";
  case AlignmentStrategy::adversarial: return "adversarial";
  }
  return "?";
}

VocabularyMerge parse_vocabulary_merge(const std::string& name)
{
  for (auto s : {VocabularyMerge::intersect, VocabularyMerge::intersect_renorm, VocabularyMerge::expand_epsilon})
    if (name == to_string(s))
      return s;
  throw InvalidArgument("unknown vocabulary merge '" + name + "'");
}

AlignmentStrategy parse_alignment_strategy(const std::string& name)
{
  for (auto s : {AlignmentStrategy::naive, AlignmentStrategy::basic, AlignmentStrategy::adversarial})
    if (name == to_string(s))
      return s;
  throw InvalidArgument("unknown alignment strategy '" + name + "'");
}

namespace {

void check_columns(const WordTopicMatrix& m, const char* which)
{
  if (m.phi.rows() != m.terms.size())
    throw InvalidArgument(std::string("merge_vocabulary: matrix ") + which + " rows differ from its term list");
  for (std::size_t t = 0; t < m.phi.cols(); ++t) {
    double sum = 0.0;
    for (std::size_t w = 0; w < m.phi.rows(); ++w) {
      if (!(m.phi(w, t) >= 0.0))
        throw InvalidArgument(std::string("merge_vocabulary: matrix ") + which + " has a negative entry");
      sum += m.phi(w, t);
    }
    if (std::abs(sum - 1.0) > 1e-6)
      throw InvalidArgument(std::string("merge_vocabulary: matrix ") + which + " column " + std::to_string(t) +
                            " is not normalized");
  }
}

void renormalize(Matrix& phi)
{
  for (std::size_t t = 0; t < phi.cols(); ++t) {
    double sum = 0.0;
    for (std::size_t w = 0; w < phi.rows(); ++w)
      sum += phi(w, t);
    if (!(sum > 0.0))
      throw NumericalError("merge_vocabulary: topic " + std::to_string(t) + " has no mass on the merged vocabulary");
    for (std::size_t w = 0; w < phi.rows(); ++w)
      phi(w, t) /= sum;
  }
}

WordTopicMatrix project(const WordTopicMatrix& m, const std::vector<std::string>& terms, double fill)
{
  std::map<std::string_view, std::size_t> index;
  for (std::size_t i = 0; i < m.terms.size(); ++i)
    index.emplace(m.terms[i], i);
  WordTopicMatrix out{terms, Matrix(terms.size(), m.phi.cols(), fill)};
  for (std::size_t r = 0; r < terms.size(); ++r) {
    auto it = index.find(terms[r]);
    if (it == index.end())
      continue;
    for (std::size_t t = 0; t < m.phi.cols(); ++t)
      out.phi(r, t) = m.phi(it->second, t);
  }
  return out;
}

}  // namespace

std::pair<WordTopicMatrix, WordTopicMatrix> merge_vocabulary(const WordTopicMatrix& a, const WordTopicMatrix& b,
                                                             VocabularyMerge strategy, double epsilon)
{
  check_columns(a, "A");
  check_columns(b, "B");
  std::vector<std::string> sa(a.terms), sb(b.terms);
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());

  if (strategy == VocabularyMerge::expand_epsilon) {
    std::vector<std::string> all;
    std::set_union(sa.begin(), sa.end(), sb.begin(), sb.end(), std::back_inserter(all));
    if (epsilon <= 0.0)
      epsilon = 1.0 / (10.0 * static_cast<double>(all.size()));
    if (epsilon > 1.0 / static_cast<double>(all.size()))
      throw InvalidArgument("merge_vocabulary: epsilon must not exceed 1 / |V_union|");
    auto ea = project(a, all, epsilon);
    auto eb = project(b, all, epsilon);
    for (auto* m : {&ea.phi, &eb.phi}) {
      for (std::size_t r = 0; r < m->rows(); ++r)
        for (std::size_t t = 0; t < m->cols(); ++t)
          if ((*m)(r, t) <= 0.0)
            (*m)(r, t) = epsilon;
      renormalize(*m);
    }
    return {std::move(ea), std::move(eb)};
  }

  std::vector<std::string> shared;
  std::set_intersection(sa.begin(), sa.end(), sb.begin(), sb.end(), std::back_inserter(shared));
  if (shared.empty())
    throw InvalidArgument("merge_vocabulary: the models share no terms");
  // Same term set: keep A's order so an identical pair comes back unchanged.
  if (shared.size() == a.terms.size() && shared.size() == b.terms.size())
    shared = a.terms;
  auto ia = project(a, shared, 0.0);
  auto ib = project(b, shared, 0.0);
  if (strategy == VocabularyMerge::intersect_renorm) {
    renormalize(ia.phi);
    renormalize(ib.phi);
  }
  return {std::move(ia), std::move(ib)};
}

// ---------------------------------------------------------------------------

bool AlignmentResult::injective() const
{
  std::vector<std::size_t> used;
  for (const auto& p : pairs)
    used.push_back(p.topic_b);
  std::sort(used.begin(), used.end());
  return std::adjacent_find(used.begin(), used.end()) == used.end();
}

Matrix topic_distances(const WordTopicMatrix& a, const WordTopicMatrix& b)
{
  if (a.terms != b.terms)
    throw InvalidArgument("topic_distances: matrices must share one term list (merge vocabularies first)");
  Matrix d(a.num_topics(), b.num_topics());
  for (std::size_t i = 0; i < a.num_topics(); ++i) {
    const auto ca = a.phi.col(i);
    for (std::size_t j = 0; j < b.num_topics(); ++j)
      d(i, j) = js_distance(ca, b.phi.col(j)).distance;
  }
  return d;
}

namespace {

AlignmentResult finish(AlignmentStrategy strategy, const Matrix& d, const std::vector<std::size_t>& mapping)
{
  AlignmentResult r;
  r.strategy = strategy;
  for (std::size_t a = 0; a < mapping.size(); ++a) {
    r.pairs.push_back({a, mapping[a], d(a, mapping[a])});
    r.total_distance += d(a, mapping[a]);
  }
  r.mean_distance = mapping.empty() ? 0.0 : r.total_distance / static_cast<double>(mapping.size());
  return r;
}

std::vector<std::size_t> align_naive(const Matrix& d)
{
  std::vector<std::size_t> map(d.rows());
  for (std::size_t a = 0; a < d.rows(); ++a) {
    std::size_t best = 0;
    for (std::size_t b = 1; b < d.cols(); ++b)
      if (d(a, b) < d(a, best))
        best = b;
    map[a] = best;
  }
  return map;
}

std::vector<std::size_t> align_basic(const Matrix& d)
{
  const std::size_t ka = d.rows(), kb = d.cols();
  std::vector<std::size_t> map(ka, kb);
  std::vector<bool> used_a(ka, false), used_b(kb, false);
  for (std::size_t round = 0; round < ka; ++round) {
    std::size_t best_a = ka, best_b = kb;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < ka; ++a) {
      if (used_a[a])
        continue;
      for (std::size_t b = 0; b < kb; ++b)
        if (!used_b[b] && d(a, b) < best) {
          best = d(a, b);
          best_a = a;
          best_b = b;
        }
    }
    map[best_a] = best_b;
    used_a[best_a] = used_b[best_b] = true;
  }
  return map;
}

struct Candidate
{
  std::vector<std::size_t> perm;  // full permutation of B topics; first kA entries used
  double cost = 0.0;
};

std::vector<std::size_t> align_adversarial(const Matrix& d, const AdversarialConfig& cfg)
{
  const std::size_t ka = d.rows(), kb = d.cols();
  if (cfg.population == 0 || cfg.offspring == 0)
    throw InvalidArgument("adversarial alignment: population and offspring must be positive");
  Rng rng(cfg.seed);

  auto cost_of = [&](const std::vector<std::size_t>& perm) {
    double c = 0.0;
    for (std::size_t a = 0; a < ka; ++a)
      c += d(a, perm[a]);
    return c;
  };
  auto random_perm = [&] {
    std::vector<std::size_t> p(kb);
    std::iota(p.begin(), p.end(), std::size_t{0});
    for (std::size_t i = kb; i > 1; --i)
      std::swap(p[i - 1], p[rng.below(i)]);
    return p;
  };
  auto less = [&](const Candidate& x, const Candidate& y) {
    if (x.cost != y.cost)
      return x.cost < y.cost;
    return std::lexicographical_compare(x.perm.begin(), x.perm.begin() + static_cast<std::ptrdiff_t>(ka),
                                        y.perm.begin(), y.perm.begin() + static_cast<std::ptrdiff_t>(ka));
  };
  auto same_mapping = [&](const Candidate& x, const Candidate& y) {
    return std::equal(x.perm.begin(), x.perm.begin() + static_cast<std::ptrdiff_t>(ka), y.perm.begin());
  };

  std::vector<Candidate> population;
  for (std::size_t i = 0; i < cfg.population; ++i) {
    auto p = random_perm();
    const double c = cost_of(p);
    population.push_back({std::move(p), c});
  }
  std::sort(population.begin(), population.end(), less);
  double best = population.front().cost;
  std::size_t stale = 0;

  for (std::size_t gen = 0; gen < cfg.max_generations && stale < cfg.patience; ++gen) {
    std::vector<Candidate> pool = population;
    for (std::size_t o = 0; o < cfg.offspring; ++o) {
      Candidate child = population[rng.below(population.size())];
      // One swap touching a used position, plus more with probability 1/2 each.
      do {
        const std::size_t i = rng.below(ka);
        std::size_t j = rng.below(kb - 1);
        if (j >= i)
          ++j;
        std::swap(child.perm[i], child.perm[j]);
      } while (kb > 1 && rng.uniform() < 0.5);
      child.cost = cost_of(child.perm);
      pool.push_back(std::move(child));
    }
    std::sort(pool.begin(), pool.end(), less);
    pool.erase(std::unique(pool.begin(), pool.end(), same_mapping), pool.end());
    if (pool.size() > cfg.population)
      pool.resize(cfg.population);
    population = std::move(pool);
    if (population.front().cost < best - 1e-15) {
      best = population.front().cost;
      stale = 0;
    } else {
      ++stale;
    }
  }
  return {population.front().perm.begin(), population.front().perm.begin() + static_cast<std::ptrdiff_t>(ka)};
}

}  // namespace

AlignmentResult align_distances(const Matrix& d, AlignmentStrategy strategy, const AdversarialConfig& adversarial)
{
  if (d.rows() == 0 || d.cols() == 0)
    throw InvalidArgument("align_topics: empty model");
  if (strategy != AlignmentStrategy::naive && d.rows() > d.cols())
    throw InvalidArgument("align_topics: injective alignment needs kA <= kB");
  switch (strategy) {
  case AlignmentStrategy::naive: return finish(strategy, d, align_naive(d));
  case AlignmentStrategy::basic: return finish(strategy, d, align_basic(d));
  case AlignmentStrategy::adversarial:
    if (d.cols() == 1)
      return finish(strategy, d, {0});
    return finish(strategy, d, align_adversarial(d, adversarial));
  }
  throw InvalidArgument("align_topics: unknown strategy");
}

AlignmentResult align_topics(const WordTopicMatrix& a, const WordTopicMatrix& b, AlignmentStrategy strategy,
                             const AdversarialConfig& adversarial)
{
  return align_distances(topic_distances(a, b), strategy, adversarial);
}

ModelDistance model_distance(const AlignmentResult& alignment)
{
  return {alignment.mean_distance, alignment.total_distance};
}

AlignmentResult identity_alignment(const WordTopicMatrix& before, const WordTopicMatrix& after)
{
  if (before.num_topics() != after.num_topics())
    throw InvalidArgument("identity_alignment: topic counts differ");
  const Matrix d = topic_distances(before, after);
  std::vector<std::size_t> map(before.num_topics());
  std::iota(map.begin(), map.end(), std::size_t{0});
  return finish(AlignmentStrategy::basic, d, map);
}

void write_alignment_csv(std::ostream& out, const AlignmentResult& r)
{
  out << "topic_a,topic_b,distance\n";
  for (const auto& p : r.pairs)
    out << p.topic_a << ',' << p.topic_b << ',' << format_double(p.distance) << '\n';
}

nlohmann::json alignment_to_json(const AlignmentResult& r)
{
  return {{"strategy", to_string(r.strategy)},
          {"topics_a", r.pairs.size()},
          {"injective", r.injective()},
          {"mean_distance", r.mean_distance},
          {"total_distance", r.total_distance}};
}

}  // namespace forage
