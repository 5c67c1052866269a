// Acceptance checks: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>
#include <string>

#include <unistd.h>

#include "forage/epochs.hpp"
#include "forage/lda.hpp"
#include "forage/measures.hpp"
#include "forage/modelcompare.hpp"
#include "forage/nullmodels.hpp"
#include "forage/pipeline.hpp"
#include "forage/synth.hpp"
#include "support.hpp"

using namespace forage;
namespace fs = std::filesystem;

namespace {

// Tolerances.
constexpr double kKlTol = 1e-12;
constexpr double kGibbsTv = 0.05;
constexpr int kGibbsSamples = 100000;
constexpr double kMetricTol = 1e-12;
constexpr double kNullAlpha = 0.01;
constexpr std::size_t kBreakTol = 2;
constexpr int kStationaryNeeded = 95;
constexpr double kAlignTol = 1e-12;

int failures = 0;

void report(const std::string& name, bool ok, const std::string& detail)
{
  std::printf("%s  %-28s %s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
  failures += !ok;
}

void run(const std::string& name, const std::function<std::pair<bool, std::string>()>& check)
{
  const auto start = std::chrono::steady_clock::now();
  std::pair<bool, std::string> r;
  try {
    r = check();
  } catch (const std::exception& e) {
    r = {false, std::string("threw: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  char t[32];
  std::snprintf(t, sizeof t, " [%.2fs]", secs);
  report(name, r.first, r.second + t);
}

template <class... Args>
std::string fmt(const char* f, Args... args)
{
  char buf[200];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::pair<bool, std::string> kl_example()
{
  const double kl = kl_divergence(TopicDistribution({0.25, 0.5, 0.25}), TopicDistribution({0.5, 0.25, 0.25}));
  return {std::abs(kl - 0.25) <= kKlTol, fmt("KL = %.15f bits", kl)};
}

std::pair<bool, std::string> gibbs_oracle()
{
  const auto corpus = testing::corpus_from_texts({"a a b", "c c b"});
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
  for (int i = 0; i < kGibbsSamples; ++i) {
    sweep_in_place(m, rng);
    hist[testing::assignment_index(m)] += 1.0 / kGibbsSamples;
  }
  double tv = 0.0;
  for (std::size_t i = 0; i < hist.size(); ++i)
    tv += std::abs(hist[i] - exact[i]);
  tv /= 2.0;
  return {tv < kGibbsTv, fmt("TV = %.4f over %d samples", tv, kGibbsSamples)};
}

std::pair<bool, std::string> metric_axioms()
{
  Rng rng(2024);
  std::size_t violations = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto p = testing::random_distribution(rng, 80, 2.0);
    const auto q = testing::random_distribution(rng, 80, 2.0);
    const auto r = testing::random_distribution(rng, 80, 2.0);
    const double pq = js_distance(p, q).distance, qp = js_distance(q, p).distance;
    const double qr = js_distance(q, r).distance, pr = js_distance(p, r).distance;
    violations += std::abs(pq - qp) > kMetricTol;
    violations += std::abs(js_distance(p, p).distance) > kMetricTol;
    violations += !(pq > 0.0);
    violations += pr > pq + qr + kMetricTol;
    violations += pq > pr + qr + kMetricTol;
    violations += qr > pq + pr + kMetricTol;
  }
  return {violations == 0, fmt("%zu violations on 1e4 triples", violations)};
}

std::pair<bool, std::string> constrained_null()
{
  // 50 slots, each item published up to 25 slots before it is read.
  Rng rng(50);
  ReadingOrder order;
  for (int i = 0; i < 50; ++i) {
    const std::int64_t slot = 1000 + 10 * i;
    order.items.push_back({"s" + std::to_string(i), slot, slot - static_cast<std::int64_t>(rng.below(250))});
  }
  // A smooth walk through topic space read in order: low surprise by construction.
  std::vector<TopicDistribution> dists;
  for (int i = 0; i < 50; ++i) {
    std::vector<double> w(10);
    for (int t = 0; t < 10; ++t) {
      const double c = 9.0 * i / 49.0 - t;
      w[t] = std::exp(-c * c / 2.0) + 1e-3;
    }
    dists.push_back(TopicDistribution::normalized(w));
  }
  const auto res = null_ensemble(order, dists, 1000, 77, 2, true);
  std::size_t bad = 0;
  for (const auto& p : res.ensemble.permutations) {
    for (std::size_t s = 0; s < p.size(); ++s)
      bad += order.items[p[s]].pub_date > order.items[s].slot_date;
    std::set<std::size_t> u(p.begin(), p.end());
    bad += u.size() != 50;
  }

  // Staggered three-item fixture: sampler support against enumeration.
  ReadingOrder tiny;
  tiny.items = {{"x", 10, 0}, {"y", 20, 5}, {"z", 30, 15}};
  std::set<std::vector<std::size_t>> expected, seen;
  std::vector<std::size_t> perm = {0, 1, 2};
  do {
    bool ok = true;
    for (std::size_t s = 0; s < 3; ++s)
      ok = ok && tiny.items[perm[s]].pub_date <= tiny.items[s].slot_date;
    if (ok)
      expected.insert(perm);
  } while (std::next_permutation(perm.begin(), perm.end()));
  for (int i = 0; i < 4000; ++i)
    seen.insert(constrained_permutation(tiny, derive_seed(9, i)));

  const double p = res.comparison.p_t2t;
  const bool ok = bad == 0 && res.ensemble.permutations.size() == 1000 && seen == expected && p < kNullAlpha;
  return {ok, fmt("%zu infeasible of 1000; 3-item support %s; planted p = %.4f", bad,
                  seen == expected ? "exact" : "MISMATCH", p)};
}

std::vector<double> step_series(std::uint64_t seed)
{
  Rng rng(seed);
  std::vector<double> s(200);
  for (std::size_t i = 0; i < s.size(); ++i)
    s[i] = (i < 100 ? 1.0 : 3.0) + 0.5 * rng.normal();
  return s;
}

std::pair<bool, std::string> planted_changepoint()
{
  const auto s = step_series(42);
  const auto m = fit_epochs(s, 2, 10);
  const std::size_t b = m.boundaries[1];
  const std::size_t err = b > 100 ? b - 100 : 100 - b;
  const auto sel = select_model(s, 2, 10);
  const bool aic = sel.scores[1].aic < sel.scores[0].aic;
  return {err <= kBreakTol && aic,
          fmt("break at %zu (planted 100); AIC n=1 %.1f, n=2 %.1f", b, sel.scores[0].aic, sel.scores[1].aic)};
}

std::pair<bool, std::string> stationary_noise()
{
  Rng rng(7);
  int ones = 0;
  for (int rep = 0; rep < 100; ++rep) {
    std::vector<double> s(200);
    for (auto& x : s)
      x = 2.0 + 0.5 * rng.normal();
    ones += select_model(s, 3, 10).best == 0;
  }
  return {ones >= kStationaryNeeded, fmt("n=1 chosen in %d/100 (need %d)", ones, kStationaryNeeded)};
}

std::pair<bool, std::string> dp_brute_force()
{
  Rng rng(31);
  std::vector<double> s(50);
  double level = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i == 17 || i == 36)
      level += 1.5;
    s[i] = level + rng.normal();
  }
  double worst = 0.0;
  bool same = true;
  for (std::size_t n = 1; n <= 4; ++n) {
    const auto m = fit_epochs(s, n, 2);
    const auto [ll, b] = testing::brute_force_epochs(s, n, 2);
    worst = std::max(worst, std::abs(m.log_likelihood - ll));
    same = same && m.boundaries == b;
  }
  return {same && worst <= 1e-9, fmt("n=1..4, max |dlogL| = %.2e", worst)};
}

std::pair<bool, std::string> parameter_counts()
{
  return {param_count(2) == 5 && param_count(3) == 8,
          fmt("param_count(2)=%zu, param_count(3)=%zu", param_count(2), param_count(3))};
}

std::pair<bool, std::string> greedy_baseline()
{
  Rng rng(100);
  std::vector<TopicDistribution> dists;
  ReadingOrder order;
  for (int i = 0; i < 100; ++i) {
    dists.push_back(testing::random_distribution(rng, 20, 2.0));
    order.items.push_back({"g" + std::to_string(i), i, 0});
  }
  const auto path = greedy_shortest_path(dists, 0, PathObjective::text_to_text);
  const double greedy = mean_step_surprise(dists, path, SurpriseSpec::t2t());
  const auto res = null_ensemble(order, dists, 1000, 11, 2);
  const double null = res.comparison.null_t2t_mean;
  return {greedy <= null, fmt("greedy %.3f bits vs null %.3f bits", greedy, null)};
}

std::pair<bool, std::string> alignment_oracle()
{
  Rng rng(8);
  WordTopicMatrix a{{}, Matrix(60, 10)};
  for (int w = 0; w < 60; ++w)
    a.terms.push_back("t" + std::to_string(100 + w));
  for (std::size_t t = 0; t < 10; ++t) {
    const auto col = testing::random_distribution(rng, 60, 3.0);
    for (std::size_t w = 0; w < 60; ++w)
      a.phi(w, t) = col[w];
  }
  const std::vector<std::size_t> planted = {4, 9, 0, 7, 2, 5, 1, 8, 3, 6};
  WordTopicMatrix b{a.terms, Matrix(60, 10)};
  for (std::size_t t = 0; t < 10; ++t)
    for (std::size_t w = 0; w < 60; ++w)
      b.phi(w, planted[t]) = a.phi(w, t);
  const auto basic = align_topics(a, b, AlignmentStrategy::basic);
  bool recovered = basic.total_distance == 0.0;
  for (std::size_t t = 0; t < 10; ++t)
    recovered = recovered && basic.pairs[t].topic_b == planted[t];

  int optimal = 0, trials = 0;
  for (std::size_t kb = 1; kb <= 6; ++kb)
    for (std::size_t ka = 1; ka <= kb; ++ka)
      for (int rep = 0; rep < 5; ++rep, ++trials) {
        Matrix d(ka, kb);
        for (std::size_t i = 0; i < ka; ++i)
          for (std::size_t j = 0; j < kb; ++j)
            d(i, j) = rng.uniform();
        std::vector<std::size_t> p(kb);
        std::iota(p.begin(), p.end(), std::size_t{0});
        double best = INFINITY;
        do {
          double c = 0.0;
          for (std::size_t i = 0; i < ka; ++i)
            c += d(i, p[i]);
          best = std::min(best, c);
        } while (std::next_permutation(p.begin(), p.end()));
        AdversarialConfig cfg;
        cfg.seed = static_cast<std::uint64_t>(trials);
        const auto r = align_distances(d, AlignmentStrategy::adversarial, cfg);
        optimal += r.injective() && std::abs(r.total_distance - best) <= kAlignTol;
      }
  return {recovered && optimal == trials,
          fmt("planted permutation %s; adversarial optimal on %d/%d problems (k <= 6)",
              recovered ? "recovered" : "MISSED", optimal, trials)};
}

std::pair<bool, std::string> pipeline_determinism()
{
  const fs::path root = fs::temp_directory_path() / ("forage_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(root);
  write_synth_fixture(make_synth_corpus({}), root, 20240601);
  auto config = load_config(root / "config.json");
  std::ostringstream log;
  config.output_dir = root / "run_a";
  run_stage(Stage::pipeline, config, log);
  config.output_dir = root / "run_b";
  config.threads = 4;
  run_stage(Stage::pipeline, config, log);

  std::size_t csvs = 0, differ = 0;
  for (const auto& e : fs::recursive_directory_iterator(root / "run_a")) {
    if (e.path().extension() != ".csv")
      continue;
    ++csvs;
    const auto other = root / "run_b" / fs::relative(e.path(), root / "run_a");
    auto slurp = [](const fs::path& p) {
      std::ifstream in(p, std::ios::binary);
      std::ostringstream s;
      s << in.rdbuf();
      return s.str();
    };
    differ += !fs::exists(other) || slurp(e.path()) != slurp(other);
  }
  fs::remove_all(root);
  return {csvs > 0 && differ == 0,
          fmt("%zu CSV files, %zu differ", csvs, differ)};
}

}  // namespace

int main()
{
  run("kl_worked_example", kl_example);
  run("gibbs_posterior_oracle", gibbs_oracle);
  run("js_metric_axioms", metric_axioms);
  run("constrained_null", constrained_null);
  run("epochs_planted_changepoint", planted_changepoint);
  run("epochs_stationary_noise", stationary_noise);
  run("epochs_dp_equals_brute_force", dp_brute_force);
  run("aic_parameter_counts", parameter_counts);
  run("greedy_below_null", greedy_baseline);
  run("alignment_oracle", alignment_oracle);
  run("pipeline_determinism", pipeline_determinism);
  std::printf("%d failed\n", failures);
  return failures == 0 ? 0 : 1;
}
