#include "forage/lda.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "forage/error.hpp"
#include "forage/format.hpp"
#include "forage/measures.hpp"
#include "forage/parallel.hpp"

namespace forage {

void TrainingConfig::validate() const
{
  if (k < 2)
    throw InvalidArgument("training: k must be at least 2");
  if (!(alpha > 0.0) || !std::isfinite(alpha))
    throw InvalidArgument("training: alpha must be positive");
  if (!(beta > 0.0) || !std::isfinite(beta))
    throw InvalidArgument("training: beta must be positive");
}

void verify_counts(const TopicModel& m)
{
  const std::size_t k = m.config.k;
  const std::size_t D = m.words.size();
  const std::size_t V = m.vocab_size;
  if (m.z.size() != D || m.doc_length.size() != D || m.topic_doc.size() != D * k || m.word_topic.size() != V * k ||
      m.topic_total.size() != k)
    throw FormatError("model count arrays have inconsistent shapes");

  std::vector<Count> td(D * k, 0), wt(V * k, 0), tt(k, 0);
  for (std::size_t d = 0; d < D; ++d) {
    if (m.z[d].size() != m.words[d].size())
      throw FormatError("document " + std::to_string(d) + ": assignment count differs from token count");
    for (std::size_t i = 0; i < m.z[d].size(); ++i) {
      const auto t = m.z[d][i];
      const auto w = m.words[d][i];
      if (t >= k)
        throw FormatError("topic assignment out of range");
      if (w >= V)
        throw FormatError("term id out of range");
      ++td[d * k + t];
      ++wt[w * k + t];
      ++tt[t];
    }
  }
  for (std::size_t d = 0; d < D; ++d) {
    Count row = 0;
    for (std::size_t t = 0; t < k; ++t)
      row += m.topic_doc[d * k + t];
    if (row != m.doc_length[d])
      throw FormatError("sum_t N_td != N_d for document " + std::to_string(d));
  }
  for (std::size_t t = 0; t < k; ++t) {
    Count by_word = 0, by_doc = 0;
    for (std::size_t w = 0; w < V; ++w)
      by_word += m.word_topic[w * k + t];
    for (std::size_t d = 0; d < D; ++d)
      by_doc += m.topic_doc[d * k + t];
    if (by_word != m.topic_total[t])
      throw FormatError("sum_w N_wt != N_t for topic " + std::to_string(t));
    if (by_doc != m.topic_total[t])
      throw FormatError("sum_d N_td != N_t for topic " + std::to_string(t));
  }
  if (td != m.topic_doc || wt != m.word_topic || tt != m.topic_total)
    throw FormatError("count matrices disagree with topic assignments");
}

TopicModel initialize_model(const Corpus& corpus, const TrainingConfig& config, Rng& rng)
{
  config.validate();
  if (corpus.documents.empty())
    throw InvalidArgument("training: empty corpus");

  TopicModel m;
  m.config = config;
  m.vocabulary_hash = corpus.vocabulary.hash();
  m.vocab_size = corpus.vocabulary.size();
  m.terms = corpus.vocabulary.terms();
  const std::size_t k = config.k;
  const std::size_t D = corpus.documents.size();
  m.doc_ids.reserve(D);
  m.words.reserve(D);
  m.z.resize(D);
  m.topic_doc.assign(D * k, 0);
  m.word_topic.assign(m.vocab_size * k, 0);
  m.topic_total.assign(k, 0);
  m.doc_length.assign(D, 0);
  for (std::size_t d = 0; d < D; ++d) {
    const auto& doc = corpus.documents[d];
    if (doc.tokens.empty())
      throw InvalidArgument("training: document '" + doc.spec.id + "' is empty");
    m.doc_ids.push_back(doc.spec.id);
    m.words.push_back(doc.tokens);
    m.z[d].resize(doc.tokens.size());
    for (std::size_t i = 0; i < doc.tokens.size(); ++i) {
      const auto t = static_cast<TopicId>(rng.below(k));
      const auto w = doc.tokens[i];
      if (w >= m.vocab_size)
        throw InvalidArgument("training: token id out of vocabulary range");
      m.z[d][i] = t;
      ++m.topic_doc[d * k + t];
      ++m.word_topic[w * k + t];
      ++m.topic_total[t];
    }
    m.doc_length[d] = static_cast<Count>(doc.tokens.size());
  }
  return m;
}

namespace {

/// Samples an index from unnormalized cumulative weights.
std::size_t draw(const std::vector<double>& cumulative, Rng& rng)
{
  const double u = rng.uniform() * cumulative.back();
  const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
  return std::min<std::size_t>(static_cast<std::size_t>(it - cumulative.begin()), cumulative.size() - 1);
}

/// Sweeps documents [first, last) against the given word-topic counts.
void sweep_range(TopicModel& m, std::size_t first, std::size_t last, std::vector<Count>& word_topic,
                 std::vector<Count>& topic_total, Rng& rng)
{
  const std::size_t k = m.config.k;
  const double alpha = m.config.alpha;
  const double beta = m.config.beta;
  const double vbeta = static_cast<double>(m.vocab_size) * beta;
  std::vector<double> cumulative(k);
  for (std::size_t d = first; d < last; ++d) {
    Count* td = &m.topic_doc[d * k];
    const auto& words = m.words[d];
    auto& z = m.z[d];
    for (std::size_t i = 0; i < words.size(); ++i) {
      const auto w = words[i];
      Count* wt = &word_topic[w * k];
      const auto old = z[i];
      --td[old];
      --wt[old];
      --topic_total[old];
      double acc = 0.0;
      for (std::size_t t = 0; t < k; ++t) {
        acc += (wt[t] + beta) / (topic_total[t] + vbeta) * (td[t] + alpha);
        cumulative[t] = acc;
      }
      const auto t = static_cast<TopicId>(draw(cumulative, rng));
      z[i] = t;
      ++td[t];
      ++wt[t];
      ++topic_total[t];
    }
  }
}

}  // namespace

void sweep_in_place(TopicModel& model, Rng& rng)
{
  if (!model.initialized())
    throw InvalidArgument("gibbs sweep on an uninitialized model");
  sweep_range(model, 0, model.words.size(), model.word_topic, model.topic_total, rng);
  ++model.sweeps;
#ifndef NDEBUG
  verify_counts(model);
#endif
}

TopicModel gibbs_sweep(const TopicModel& model, Rng& rng)
{
  TopicModel next = model;
  sweep_in_place(next, rng);
  return next;
}

TopicModel train(const Corpus& corpus, const TrainingConfig& config, std::ostream* log)
{
  Rng rng(config.seed);
  TopicModel m = initialize_model(corpus, config, rng);
  for (std::size_t it = 0; it < config.iterations; ++it) {
    sweep_in_place(m, rng);
    if (config.trace_every > 0 && (m.sweeps % config.trace_every == 0 || it + 1 == config.iterations)) {
      const double ll = log_joint(m);
      m.likelihood_trace.emplace_back(m.sweeps, ll);
      if (log)
        *log << "sweep " << m.sweeps << " log p(w,z) = " << format_double(ll) << '\n';
    }
  }
  return m;
}

TopicModel train_partitioned(const Corpus& corpus, const TrainingConfig& config, unsigned shards)
{
  Rng init_rng(config.seed);
  TopicModel m = initialize_model(corpus, config, init_rng);
  const std::size_t D = m.words.size();
  shards = static_cast<unsigned>(std::clamp<std::size_t>(shards, 1, D));
  std::vector<std::size_t> bounds(shards + 1);
  for (unsigned s = 0; s <= shards; ++s)
    bounds[s] = D * s / shards;

  for (std::size_t it = 0; it < config.iterations; ++it) {
    const auto snapshot_wt = m.word_topic;
    const auto snapshot_tt = m.topic_total;
    std::vector<std::vector<Count>> local_wt(shards, snapshot_wt);
    std::vector<std::vector<Count>> local_tt(shards, snapshot_tt);
    parallel_for(shards, shards, [&](std::size_t s) {
      Rng rng(derive_seed(derive_seed(config.seed, it), s));
      sweep_range(m, bounds[s], bounds[s + 1], local_wt[s], local_tt[s], rng);
    });
    for (unsigned s = 0; s < shards; ++s) {
      for (std::size_t i = 0; i < m.word_topic.size(); ++i)
        m.word_topic[i] += local_wt[s][i] - snapshot_wt[i];
      for (std::size_t t = 0; t < m.topic_total.size(); ++t)
        m.topic_total[t] += local_tt[s][t] - snapshot_tt[t];
    }
    ++m.sweeps;
  }
  return m;
}

double log_joint(const TopicModel& m)
{
  const std::size_t k = m.config.k;
  const double alpha = m.config.alpha;
  const double beta = m.config.beta;
  const double V = static_cast<double>(m.vocab_size);
  double ll = 0.0;
  // p(w | z)
  ll += static_cast<double>(k) * (std::lgamma(V * beta) - V * std::lgamma(beta));
  for (std::size_t t = 0; t < k; ++t) {
    for (std::size_t w = 0; w < m.vocab_size; ++w) {
      const Count c = m.word_topic[w * k + t];
      if (c > 0)
        ll += std::lgamma(c + beta) - std::lgamma(beta);
    }
    ll -= std::lgamma(m.topic_total[t] + V * beta);
  }
  // p(z)
  const double kd = static_cast<double>(k);
  for (std::size_t d = 0; d < m.words.size(); ++d) {
    ll += std::lgamma(kd * alpha) - std::lgamma(m.doc_length[d] + kd * alpha);
    for (std::size_t t = 0; t < k; ++t) {
      const Count c = m.topic_doc[d * k + t];
      if (c > 0)
        ll += std::lgamma(c + alpha) - std::lgamma(alpha);
    }
  }
  return ll;
}

// ---------------------------------------------------------------------------

Estimates estimate_distributions(const TopicModel& m, Smoothing smoothing)
{
  if (!m.initialized())
    throw InvalidArgument("estimate_distributions: model is not trained");
  const std::size_t k = m.config.k;
  const std::size_t D = m.words.size();
  const std::size_t V = m.vocab_size;
  const bool smooth = smoothing == Smoothing::on;
  const double alpha = smooth ? m.config.alpha : 0.0;
  const double beta = smooth ? m.config.beta : 0.0;

  Estimates est{Matrix(D, k), Matrix(V, k)};
  for (std::size_t d = 0; d < D; ++d) {
    const double denom = m.doc_length[d] + static_cast<double>(k) * alpha;
    if (!(denom > 0.0))
      throw NumericalError("empty document in estimate_distributions");
    for (std::size_t t = 0; t < k; ++t)
      est.theta(d, t) = (m.topic_doc[d * k + t] + alpha) / denom;
  }
  for (std::size_t t = 0; t < k; ++t) {
    const double denom = m.topic_total[t] + static_cast<double>(V) * beta;
    if (!(denom > 0.0))
      throw NumericalError("degenerate topic " + std::to_string(t) + ": no tokens assigned");
    for (std::size_t w = 0; w < V; ++w)
      est.phi(w, t) = (m.word_topic[w * k + t] + beta) / denom;
  }
  return est;
}

double perplexity(const Matrix& theta, const Matrix& phi, const std::vector<std::vector<TermId>>& docs)
{
  if (theta.rows() != docs.size())
    throw InvalidArgument("perplexity: theta rows not aligned with documents");
  if (theta.cols() != phi.cols())
    throw InvalidArgument("perplexity: theta and phi disagree on topic count");
  const std::size_t k = theta.cols();
  double total_log2 = 0.0;
  std::size_t tokens = 0;
  for (std::size_t d = 0; d < docs.size(); ++d) {
    const auto row = theta.row(d);
    for (auto w : docs[d]) {
      if (w >= phi.rows())
        throw InvalidArgument("perplexity: term id outside the model vocabulary");
      double p = 0.0;
      for (std::size_t t = 0; t < k; ++t)
        p += row[t] * phi(w, t);
      if (!(p > 0.0))
        throw NumericalError("perplexity: token with zero probability (term id " + std::to_string(w) + ")");
      total_log2 += std::log2(p);
      ++tokens;
    }
  }
  if (tokens == 0)
    throw InvalidArgument("perplexity: no tokens");
  return std::exp2(-total_log2 / static_cast<double>(tokens));
}

double perplexity(const TopicModel& model, std::span<const std::size_t> doc_indices, Smoothing smoothing)
{
  const auto est = estimate_distributions(model, smoothing);
  Matrix theta(doc_indices.size(), model.config.k);
  std::vector<std::vector<TermId>> docs;
  docs.reserve(doc_indices.size());
  for (std::size_t i = 0; i < doc_indices.size(); ++i) {
    const auto d = doc_indices[i];
    if (d >= model.num_documents())
      throw InvalidArgument("perplexity: document index out of range");
    std::copy(est.theta.row(d).begin(), est.theta.row(d).end(), theta.row(i).begin());
    docs.push_back(model.words[d]);
  }
  return perplexity(theta, est.phi, docs);
}

TopicSummary topic_summary(const Estimates& est, TopicId t, std::size_t top_n, double mass)
{
  if (t >= est.phi.cols())
    throw InvalidArgument("topic_summary: topic " + std::to_string(t) + " out of range");
  TopicSummary s;
  s.topic = t;
  const std::size_t V = est.phi.rows();
  std::vector<TermId> ids(V);
  std::iota(ids.begin(), ids.end(), TermId{0});
  std::stable_sort(ids.begin(), ids.end(), [&](TermId a, TermId b) { return est.phi(a, t) > est.phi(b, t); });

  for (std::size_t i = 0; i < std::min(top_n, V); ++i)
    s.top_terms.emplace_back(ids[i], est.phi(ids[i], t));

  double acc = 0.0;
  s.mass_coverage = V;
  for (std::size_t i = 0; i < V; ++i) {
    acc += est.phi(ids[i], t);
    if (acc >= mass) {
      s.mass_coverage = i + 1;
      break;
    }
  }

  const std::size_t D = est.theta.rows();
  std::vector<double> column = est.theta.col(t);
  const double total = std::accumulate(column.begin(), column.end(), 0.0);
  s.mean_probability = D > 0 ? total / static_cast<double>(D) : 0.0;
  if (total > 0.0)
    s.document_entropy = entropy(TopicDistribution::normalized(std::move(column)));
  return s;
}

TopicSummary topic_summary(const TopicModel& model, TopicId t, std::size_t top_n, double mass, Smoothing smoothing)
{
  if (t >= model.config.k)
    throw InvalidArgument("topic_summary: topic " + std::to_string(t) + " out of range");
  return topic_summary(estimate_distributions(model, smoothing), t, top_n, mass);
}

std::vector<TopicId> topics_by_mass(const TopicModel& model)
{
  std::vector<TopicId> order(model.config.k);
  std::iota(order.begin(), order.end(), TopicId{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](TopicId a, TopicId b) { return model.topic_total[a] > model.topic_total[b]; });
  return order;
}

// ---------------------------------------------------------------------------

nlohmann::json training_config_to_json(const TrainingConfig& c)
{
  return {{"k", c.k},
          {"alpha", c.alpha},
          {"beta", c.beta},
          {"iterations", c.iterations},
          {"seed", c.seed},
          {"trace_every", c.trace_every}};
}

TrainingConfig training_config_from_json(const nlohmann::json& j)
{
  TrainingConfig c;
  c.k = j.at("k").get<std::size_t>();
  c.alpha = j.at("alpha").get<double>();
  c.beta = j.at("beta").get<double>();
  c.iterations = j.at("iterations").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.trace_every = j.value("trace_every", std::size_t{0});
  return c;
}

nlohmann::json model_to_json(const TopicModel& m)
{
  nlohmann::json trace = nlohmann::json::array();
  for (const auto& [s, ll] : m.likelihood_trace)
    trace.push_back({s, ll});
  return {{"format_version", kModelFormatVersion},
          {"kind", "lda_model"},
          {"config", training_config_to_json(m.config)},
          {"vocabulary_hash", format_hex(m.vocabulary_hash)},
          {"vocab_size", m.vocab_size},
          {"terms", m.terms},
          {"doc_ids", m.doc_ids},
          {"words", m.words},
          {"z", m.z},
          {"topic_doc", m.topic_doc},
          {"word_topic", m.word_topic},
          {"topic_total", m.topic_total},
          {"doc_length", m.doc_length},
          {"sweeps", m.sweeps},
          {"likelihood_trace", std::move(trace)}};
}

TopicModel model_from_json(const nlohmann::json& j, std::optional<std::uint64_t> expected_vocabulary_hash)
{
  if (j.value("format_version", -1) != kModelFormatVersion || j.value("kind", std::string()) != "lda_model")
    throw FormatError("not a version " + std::to_string(kModelFormatVersion) + " model file");
  TopicModel m;
  try {
    m.config = training_config_from_json(j.at("config"));
    m.vocabulary_hash = std::stoull(j.at("vocabulary_hash").get<std::string>(), nullptr, 16);
    m.vocab_size = j.at("vocab_size").get<std::size_t>();
    m.terms = j.value("terms", std::vector<std::string>{});
    m.doc_ids = j.at("doc_ids").get<std::vector<std::string>>();
    m.words = j.at("words").get<std::vector<std::vector<TermId>>>();
    m.z = j.at("z").get<std::vector<std::vector<TopicId>>>();
    m.topic_doc = j.at("topic_doc").get<std::vector<Count>>();
    m.word_topic = j.at("word_topic").get<std::vector<Count>>();
    m.topic_total = j.at("topic_total").get<std::vector<Count>>();
    m.doc_length = j.at("doc_length").get<std::vector<Count>>();
    m.sweeps = j.value("sweeps", std::size_t{0});
    for (const auto& e : j.value("likelihood_trace", nlohmann::json::array()))
      m.likelihood_trace.emplace_back(e.at(0).get<std::size_t>(), e.at(1).get<double>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("model file: ") + e.what());
  }
  m.config.validate();
  if (!m.terms.empty()) {
    if (m.terms.size() != m.vocab_size)
      throw FormatError("model file: term list length differs from vocab_size");
    if (Vocabulary(m.terms, std::vector<std::uint64_t>(m.terms.size(), 0)).hash() != m.vocabulary_hash)
      throw FormatError("model file: vocabulary hash does not match stored terms");
  }
  if (expected_vocabulary_hash && *expected_vocabulary_hash != m.vocabulary_hash)
    throw FormatError("model vocabulary hash " + format_hex(m.vocabulary_hash) + " does not match corpus " +
                      format_hex(*expected_vocabulary_hash));
  if (m.doc_ids.size() != m.words.size())
    throw FormatError("model file: doc_ids not aligned with documents");
  verify_counts(m);
  return m;
}

}  // namespace forage
