#include "forage/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include "forage/format.hpp"
#include "forage/lda.hpp"
#include "forage/measures.hpp"
#include "forage/nullmodels.hpp"
#include "forage/parallel.hpp"
#include "forage/rng.hpp"

namespace forage {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

namespace {

/// Reads one JSON object, remembering which keys were consumed.
class Section
{
public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path))
  {
    if (!j_.is_object())
      throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json* find(const std::string& key)
  {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end() || it->is_null())
      return nullptr;
    return &*it;
  }

  std::optional<std::uint64_t> uint(const std::string& key)
  {
    const json* v = find(key);
    if (!v)
      return std::nullopt;
    if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<std::int64_t>() >= 0))
      throw ConfigError(field(key), "expected a non-negative integer");
    return v->get<std::uint64_t>();
  }

  std::optional<double> number(const std::string& key)
  {
    const json* v = find(key);
    if (!v)
      return std::nullopt;
    if (!v->is_number())
      throw ConfigError(field(key), "expected a number");
    return v->get<double>();
  }

  std::optional<bool> boolean(const std::string& key)
  {
    const json* v = find(key);
    if (!v)
      return std::nullopt;
    if (!v->is_boolean())
      throw ConfigError(field(key), "expected true or false");
    return v->get<bool>();
  }

  std::optional<std::string> string(const std::string& key)
  {
    const json* v = find(key);
    if (!v)
      return std::nullopt;
    if (!v->is_string())
      throw ConfigError(field(key), "expected a string");
    return v->get<std::string>();
  }

  std::optional<Section> object(const std::string& key)
  {
    const json* v = find(key);
    if (!v)
      return std::nullopt;
    return Section(*v, field(key));
  }

  const json* array(const std::string& key)
  {
    const json* v = find(key);
    if (v && !v->is_array())
      throw ConfigError(field(key), "expected an array");
    return v;
  }

  void finish() const
  {
    for (const auto& [key, value] : j_.items())
      if (!seen_.count(key))
        throw ConfigError(field(key), "unknown setting");
  }

private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <class T, class F>
void assign(std::optional<T> v, F&& setter)
{
  if (v)
    setter(*v);
}

std::vector<SurpriseSpec> parse_modes(Section& s, const std::string& key, std::vector<SurpriseSpec> fallback)
{
  const json* a = s.array(key);
  if (!a)
    return fallback;
  std::vector<SurpriseSpec> out;
  for (std::size_t i = 0; i < a->size(); ++i) {
    const std::string f = s.field(key) + "[" + std::to_string(i) + "]";
    if (!(*a)[i].is_string())
      throw ConfigError(f, "expected a mode name");
    try {
      out.push_back(SurpriseSpec::parse((*a)[i].get<std::string>()));
    } catch (const InvalidArgument& e) {
      throw ConfigError(f, e.what());
    }
  }
  if (out.empty())
    throw ConfigError(s.field(key), "needs at least one mode");
  return out;
}

fs::path resolve(const fs::path& base, const std::string& p)
{
  const fs::path path(p);
  return (path.is_absolute() || base.empty()) ? path : (base / path).lexically_normal();
}

template <class T, class F>
T parse_enum(const std::string& field, const std::string& value, F&& parser)
{
  try {
    return parser(value);
  } catch (const InvalidArgument& e) {
    throw ConfigError(field, e.what());
  }
}

std::uint64_t fnv1a(std::string_view text)
{
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

json mode_labels(const std::vector<SurpriseSpec>& modes)
{
  json a = json::array();
  for (const auto& m : modes)
    a.push_back(m.label());
  return a;
}

}  // namespace

PipelineConfig config_from_json(const json& j, const fs::path& base_dir)
{
  PipelineConfig c;
  Section root(j, "");

  const auto manifest = root.string("manifest");
  if (!manifest)
    throw ConfigError("manifest", "required");
  c.manifest = resolve(base_dir, *manifest);
  assign(root.string("output_dir"), [&](const std::string& v) { c.output_dir = resolve(base_dir, v); });
  c.seed = root.uint("seed");
  assign(root.uint("threads"), [&](std::uint64_t v) {
    if (v == 0)
      throw ConfigError("threads", "must be at least 1");
    c.threads = static_cast<unsigned>(v);
  });
  assign(root.string("empty_documents"), [&](const std::string& v) {
    if (v == "exclude")
      c.empty_documents = EmptyDocumentPolicy::exclude;
    else if (v == "error")
      c.empty_documents = EmptyDocumentPolicy::error;
    else
      throw ConfigError("empty_documents", "expected \"exclude\" or \"error\"");
  });

  if (auto s = root.object("tokenizer")) {
    assign(s->boolean("merge_line_hyphens"), [&](bool v) { c.tokenizer.merge_line_hyphens = v; });
    assign(s->boolean("strip_edge_punctuation"), [&](bool v) { c.tokenizer.strip_edge_punctuation = v; });
    s->finish();
  }

  if (auto s = root.object("filter")) {
    c.filter.min_count = s->uint("min_count");
    c.filter.max_count = s->uint("max_count");
    auto mass = [&](const char* key, double& dst) {
      assign(s->number(key), [&](double v) {
        if (!(v >= 0.0 && v < 1.0))
          throw ConfigError(s->field(key), "must lie in [0, 1)");
        dst = v;
      });
    };
    mass("top_mass", c.filter.top_mass);
    mass("bottom_mass", c.filter.bottom_mass);
    if (const json* a = s->array("stopwords")) {
      for (std::size_t i = 0; i < a->size(); ++i) {
        if (!(*a)[i].is_string())
          throw ConfigError(s->field("stopwords") + "[" + std::to_string(i) + "]", "expected a string");
        c.filter.stopwords.insert((*a)[i].get<std::string>());
      }
    }
    assign(s->string("stopwords_file"), [&](const std::string& v) { c.stopwords_file = resolve(base_dir, v); });
    s->finish();
  }

  if (auto s = root.object("training")) {
    if (const json* a = s->array("k")) {
      c.k_values.clear();
      for (std::size_t i = 0; i < a->size(); ++i) {
        const std::string f = s->field("k") + "[" + std::to_string(i) + "]";
        if (!(*a)[i].is_number_integer() || (*a)[i].get<std::int64_t>() < 2)
          throw ConfigError(f, "expected an integer >= 2");
        const auto k = (*a)[i].get<std::size_t>();
        if (std::find(c.k_values.begin(), c.k_values.end(), k) != c.k_values.end())
          throw ConfigError(f, "duplicate k");
        c.k_values.push_back(k);
      }
      if (c.k_values.empty())
        throw ConfigError(s->field("k"), "needs at least one value");
    }
    assign(s->number("alpha"), [&](double v) {
      if (!(v > 0.0))
        throw ConfigError(s->field("alpha"), "must be positive");
      c.alpha = v;
    });
    assign(s->number("beta"), [&](double v) {
      if (!(v > 0.0))
        throw ConfigError(s->field("beta"), "must be positive");
      c.beta = v;
    });
    assign(s->uint("iterations"), [&](std::uint64_t v) { c.iterations = v; });
    assign(s->uint("replicates"), [&](std::uint64_t v) {
      if (v == 0)
        throw ConfigError(s->field("replicates"), "must be at least 1");
      c.replicates = v;
    });
    assign(s->uint("trace_every"), [&](std::uint64_t v) { c.trace_every = v; });
    assign(s->uint("top_terms"), [&](std::uint64_t v) { c.top_terms = v; });
    s->finish();
  }

  if (auto s = root.object("measure")) {
    c.measure_k = s->uint("k");
    c.modes = parse_modes(*s, "modes", c.modes);
    s->finish();
  }
  if (c.measure_k && std::find(c.k_values.begin(), c.k_values.end(), *c.measure_k) == c.k_values.end())
    throw ConfigError("measure.k", "is not one of training.k");

  if (auto s = root.object("null")) {
    assign(s->uint("permutations"), [&](std::uint64_t v) {
      if (v == 0)
        throw ConfigError(s->field("permutations"), "must be at least 1");
      c.permutations = v;
    });
    s->finish();
  }

  if (auto s = root.object("epochs")) {
    c.epoch_modes = parse_modes(*s, "modes", c.epoch_modes);
    assign(s->uint("max_epochs"), [&](std::uint64_t v) {
      if (v == 0)
        throw ConfigError(s->field("max_epochs"), "must be at least 1");
      c.max_epochs = v;
    });
    assign(s->uint("min_length"), [&](std::uint64_t v) {
      if (v < 2)
        throw ConfigError(s->field("min_length"), "must be at least 2");
      c.min_length = v;
    });
    assign(s->string("estimator"), [&](const std::string& v) {
      if (v == "mle")
        c.estimator = VarianceEstimator::mle;
      else if (v == "printed")
        c.estimator = VarianceEstimator::printed;
      else
        throw ConfigError(s->field("estimator"), "expected \"mle\" or \"printed\"");
    });
    s->finish();
  }

  if (auto s = root.object("fit")) {
    assign(s->string("manifest"), [&](const std::string& v) { c.fit_manifest = resolve(base_dir, v); });
    assign(s->uint("samples"), [&](std::uint64_t v) {
      if (v == 0)
        throw ConfigError(s->field("samples"), "must be at least 1");
      c.fit_samples = v;
    });
    assign(s->uint("iterations"), [&](std::uint64_t v) { c.fit_iterations = v; });
    assign(s->string("phi_mode"), [&](const std::string& v) {
      c.phi_mode = parse_enum<PhiMode>(s->field("phi_mode"), v, parse_phi_mode);
    });
    assign(s->uint("cluster_k_min"), [&](std::uint64_t v) { c.cluster_k_min = v; });
    assign(s->uint("cluster_k_max"), [&](std::uint64_t v) { c.cluster_k_max = v; });
    s->finish();
    if (c.cluster_k_min < 2 || c.cluster_k_max < c.cluster_k_min)
      throw ConfigError("fit.cluster_k_min", "need 2 <= cluster_k_min <= cluster_k_max");
  }

  if (auto s = root.object("compare")) {
    assign(s->string("vocabulary"), [&](const std::string& v) {
      c.vocabulary_merge = parse_enum<VocabularyMerge>(s->field("vocabulary"), v, parse_vocabulary_merge);
    });
    assign(s->number("epsilon"), [&](double v) {
      if (!(v >= 0.0))
        throw ConfigError(s->field("epsilon"), "must be non-negative");
      c.merge_epsilon = v;
    });
    assign(s->string("strategy"), [&](const std::string& v) {
      c.alignment = parse_enum<AlignmentStrategy>(s->field("strategy"), v, parse_alignment_strategy);
    });
    if (auto a = s->object("adversarial")) {
      auto positive = [&](const char* key, std::size_t& target) {
        assign(a->uint(key), [&](std::uint64_t v) {
          if (v == 0)
            throw ConfigError(a->field(key), "must be at least 1");
          target = static_cast<std::size_t>(v);
        });
      };
      positive("population", c.adversarial.population);
      positive("offspring", c.adversarial.offspring);
      positive("patience", c.adversarial.patience);
      positive("max_generations", c.adversarial.max_generations);
      a->finish();
    }
    s->finish();
  }

  root.finish();
  return c;
}

PipelineConfig load_config(const fs::path& path)
{
  std::ifstream in(path);
  if (!in)
    throw ConfigError("--config", "cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("--config", std::string("not valid JSON: ") + e.what());
  }
  return config_from_json(j, path.parent_path());
}

json config_to_json(const PipelineConfig& c)
{
  json filter = {{"min_count", c.filter.min_count ? json(*c.filter.min_count) : json(nullptr)},
                 {"max_count", c.filter.max_count ? json(*c.filter.max_count) : json(nullptr)},
                 {"top_mass", c.filter.top_mass},
                 {"bottom_mass", c.filter.bottom_mass},
                 {"stopwords", c.filter.stopwords},
                 {"stopwords_file", c.stopwords_file ? json(c.stopwords_file->generic_string()) : json(nullptr)}};
  return {
      {"manifest", c.manifest.generic_string()},
      {"seed", c.seed ? json(*c.seed) : json(nullptr)},
      {"empty_documents", c.empty_documents == EmptyDocumentPolicy::exclude ? "exclude" : "error"},
      {"tokenizer",
       {{"merge_line_hyphens", c.tokenizer.merge_line_hyphens},
        {"strip_edge_punctuation", c.tokenizer.strip_edge_punctuation}}},
      {"filter", std::move(filter)},
      {"training",
       {{"k", c.k_values},
        {"alpha", c.alpha},
        {"beta", c.beta},
        {"iterations", c.iterations},
        {"replicates", c.replicates},
        {"trace_every", c.trace_every},
        {"top_terms", c.top_terms}}},
      {"measure", {{"k", c.primary_k()}, {"modes", mode_labels(c.modes)}}},
      {"null", {{"permutations", c.permutations}}},
      {"epochs",
       {{"modes", mode_labels(c.epoch_modes)},
        {"max_epochs", c.max_epochs},
        {"min_length", c.min_length},
        {"estimator", c.estimator == VarianceEstimator::mle ? "mle" : "printed"}}},
      {"fit",
       {{"manifest", c.fit_manifest ? json(c.fit_manifest->generic_string()) : json(nullptr)},
        {"samples", c.fit_samples},
        {"iterations", c.fit_iterations},
        {"phi_mode", to_string(c.phi_mode)},
        {"cluster_k_min", c.cluster_k_min},
        {"cluster_k_max", c.cluster_k_max}}},
      {"compare",
       {{"vocabulary", to_string(c.vocabulary_merge)},
        {"epsilon", c.merge_epsilon},
        {"strategy", to_string(c.alignment)},
        {"adversarial",
         {{"population", c.adversarial.population},
          {"offspring", c.adversarial.offspring},
          {"patience", c.adversarial.patience},
          {"max_generations", c.adversarial.max_generations}}}}},
  };
}

std::uint64_t config_hash(const PipelineConfig& c) { return fnv1a(config_to_json(c).dump()); }

const char* to_string(Stage s)
{
  switch (s) {
  case Stage::prepare: return "prepare";
  case Stage::train: return "train";
  case Stage::measure: return "measure";
  case Stage::null_model: return "null";
  case Stage::epochs: return "epochs";
  case Stage::fit: return "fit";
  case Stage::compare: return "compare";
  case Stage::pipeline: return "pipeline";
  }
  return "?";
}

Stage parse_stage(const std::string& name)
{
  for (auto s : {Stage::prepare, Stage::train, Stage::measure, Stage::null_model, Stage::epochs, Stage::fit,
                 Stage::compare, Stage::pipeline})
    if (name == to_string(s))
      return s;
  throw InvalidArgument("unknown subcommand '" + name + "'");
}

int exit_code(const std::exception& e)
{
  if (dynamic_cast<const MissingArtifact*>(&e))
    return 2;
  if (dynamic_cast<const NumericalError*>(&e) || dynamic_cast<const InfeasibleOrder*>(&e))
    return 3;
  return 1;
}

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

namespace {

enum Stream : std::uint64_t { train_stream = 1, null_stream = 2, fit_stream = 3, compare_stream = 4 };

struct ModelRef
{
  std::string name;
  std::size_t k = 0;
  std::size_t replicate = 0;
};

class Run
{
public:
  Run(const PipelineConfig& c, std::ostream& log) : c_(c), log_(log)
  {
    if (!c.seed)
      throw ConfigError("seed", "required (set it in the config or pass --seed)");
    seed_ = *c.seed;
    hash_ = config_hash(c);
  }

  void prepare();
  void train();
  void measure();
  void null_model();
  void epochs();
  void fit();
  void compare();

  bool fit_configured() const { return c_.fit_manifest.has_value(); }

private:
  const PipelineConfig& c_;
  std::ostream& log_;
  std::uint64_t seed_ = 0;
  std::uint64_t hash_ = 0;

  std::vector<ModelRef> models() const
  {
    std::vector<ModelRef> out;
    std::vector<std::size_t> ks = c_.k_values;
    std::sort(ks.begin(), ks.end());
    for (auto k : ks)
      for (std::size_t r = 0; r < c_.replicates; ++r)
        out.push_back({c_.replicates == 1 ? "k" + std::to_string(k) : "k" + std::to_string(k) + "_r" + std::to_string(r),
                       k, r});
    return out;
  }

  ModelRef primary_model() const
  {
    for (const auto& m : models())
      if (m.k == c_.primary_k() && m.replicate == 0)
        return m;
    throw ConfigError("measure.k", "is not one of training.k");
  }

  json provenance() const
  {
    return {{"format_version", kArtifactFormatVersion}, {"config_hash", format_hex(hash_)}, {"seed", seed_}};
  }

  fs::path path(const std::string& rel) const { return c_.output_dir / rel; }

  std::ofstream open_csv(const std::string& rel) const
  {
    const fs::path p = path(rel);
    fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out)
      throw FormatError("cannot write " + p.string());
    out << "# forage format_version=" << kArtifactFormatVersion << " config_hash=" << format_hex(hash_)
        << " seed=" << seed_ << '\n';
    return out;
  }

  void write_json(const std::string& rel, json j) const
  {
    j["provenance"] = provenance();
    const fs::path p = path(rel);
    fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out)
      throw FormatError("cannot write " + p.string());
    out << j.dump(1) << '\n';
  }

  json read_json(const std::string& rel, const std::string& producer) const
  {
    const fs::path p = path(rel);
    std::ifstream in(p);
    if (!in)
      throw MissingArtifact(rel, producer);
    json j;
    try {
      j = json::parse(in);
    } catch (const json::parse_error& e) {
      throw FormatError(rel + ": " + e.what());
    }
    if (auto it = j.find("provenance"); it != j.end()) {
      if (it->value("config_hash", std::string()) != format_hex(hash_) || it->value("seed", std::uint64_t{0}) != seed_)
        log_ << "warning: " << rel << " was produced with a different config or seed\n";
    }
    return j;
  }

  Corpus load_corpus() const { return corpus_from_json(read_json("corpus.json", "prepare")); }

  TopicModel load_model(const ModelRef& m, const Corpus& corpus) const
  {
    return model_from_json(read_json("models/" + m.name + ".json", "train"), corpus.vocabulary.hash());
  }

  struct Measured
  {
    std::vector<std::string> ids;
    std::vector<std::string> dates;  // read date or id, per item
    ReadingOrder order;
    std::vector<TopicDistribution> dists;
  };

  Measured load_measure() const;

  std::uint64_t stream(Stream s) const { return derive_seed(seed_, s); }
};

std::string slug(const SurpriseSpec& s)
{
  switch (s.mode) {
  case SurpriseMode::text_to_text: return "t2t";
  case SurpriseMode::text_to_past: return "t2p";
  case SurpriseMode::text_to_n: return "t2n" + std::to_string(s.window);
  }
  return "x";
}

std::string file_safe(const std::string& id)
{
  std::string out;
  for (char ch : id)
    out += (std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_' || ch == '.') ? ch : '_';
  return out;
}

std::string csv_field(const std::string& s)
{
  if (s.find_first_of(",\"\n") == std::string::npos)
    return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"')
      out += '"';
    out += ch;
  }
  return out + "\"";
}

void Run::prepare()
{
  if (!fs::exists(c_.manifest))
    throw ConfigError("manifest", "file not found: " + c_.manifest.string());
  const Manifest manifest = read_manifest(c_.manifest);
  for (const auto& v : manifest.date_violations)
    log_ << "warning: " << v.id << " published " << v.pub_date.to_string() << " after its reading date "
         << v.read_date.to_string() << '\n';

  FilterConfig filter = c_.filter;
  if (c_.stopwords_file) {
    std::ifstream in(*c_.stopwords_file);
    if (!in)
      throw ConfigError("filter.stopwords_file", "cannot open " + c_.stopwords_file->string());
    std::string w;
    while (in >> w)
      filter.stopwords.insert(w);
  }

  std::vector<TokenList> tokens;
  for (const auto& spec : manifest.documents)
    tokens.push_back(tokenize(load_text(spec), c_.tokenizer));
  Vocabulary vocab = build_vocabulary(tokens, filter);
  const Corpus corpus = encode_corpus(manifest.documents, tokens, std::move(vocab), c_.empty_documents);

  write_json("corpus.json", corpus_to_json(corpus));

  auto csv = open_csv("vocabulary.csv");
  csv << "term_id,term,frequency\n";
  for (std::size_t i = 0; i < corpus.vocabulary.size(); ++i)
    csv << i << ',' << corpus.vocabulary.term(static_cast<TermId>(i)) << ','
        << corpus.vocabulary.frequency(static_cast<TermId>(i)) << '\n';

  json violations = json::array();
  for (const auto& v : manifest.date_violations)
    violations.push_back({{"id", v.id}, {"pub_date", v.pub_date.to_string()}, {"read_date", v.read_date.to_string()}});
  json excluded = json::array();
  for (const auto& d : corpus.excluded)
    excluded.push_back(d.spec.id);
  write_json("prepare.json", {{"documents", corpus.num_documents()},
                              {"tokens", corpus.num_tokens()},
                              {"vocabulary_size", corpus.vocabulary.size()},
                              {"excluded", std::move(excluded)},
                              {"date_violations", std::move(violations)}});
  log_ << "prepare: " << corpus.num_documents() << " documents, " << corpus.num_tokens() << " tokens, "
       << corpus.vocabulary.size() << " terms\n";
}

void Run::train()
{
  const Corpus corpus = load_corpus();
  const auto refs = models();
  std::vector<TopicModel> trained(refs.size());
  parallel_for(refs.size(), c_.threads, [&](std::size_t i) {
    TrainingConfig tc;
    tc.k = refs[i].k;
    tc.alpha = c_.alpha;
    tc.beta = c_.beta;
    tc.iterations = c_.iterations;
    tc.trace_every = c_.trace_every;
    tc.seed = derive_seed(derive_seed(stream(train_stream), refs[i].k), refs[i].replicate);
    tc.validate();
    trained[i] = forage::train(corpus, tc);
  });

  json summary = json::array();
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const auto& m = trained[i];
    write_json("models/" + refs[i].name + ".json", model_to_json(m));

    const Estimates est = estimate_distributions(m, Smoothing::on);
    const double ppl = perplexity(est.theta, est.phi, m.words);

    auto csv = open_csv("models/" + refs[i].name + "_topics.csv");
    csv << "topic,rank,term,phi\n";
    json topics = json::array();
    for (TopicId t = 0; t < m.num_topics(); ++t) {
      const auto s = topic_summary(est, t, c_.top_terms, 0.5);
      for (std::size_t r = 0; r < s.top_terms.size(); ++r)
        csv << t << ',' << r + 1 << ',' << m.terms[s.top_terms[r].first] << ',' << format_double(s.top_terms[r].second)
            << '\n';
      topics.push_back({{"topic", t},
                        {"tokens", m.topic_total[t]},
                        {"half_mass_terms", s.mass_coverage},
                        {"document_entropy", s.document_entropy},
                        {"mean_probability", s.mean_probability}});
    }
    json trace = json::array();
    for (const auto& [sweep, ll] : m.likelihood_trace)
      trace.push_back({sweep, ll});
    summary.push_back({{"model", refs[i].name},
                       {"k", refs[i].k},
                       {"replicate", refs[i].replicate},
                       {"seed", m.config.seed},
                       {"perplexity", ppl},
                       {"log_joint", log_joint(m)},
                       {"trace", std::move(trace)},
                       {"topics", std::move(topics)}});
    log_ << "train: " << refs[i].name << " perplexity " << format_double(ppl) << '\n';
  }
  write_json("train.json", {{"models", std::move(summary)}});
}

void Run::measure()
{
  const Corpus corpus = load_corpus();
  const ModelRef ref = primary_model();
  const TopicModel model = load_model(ref, corpus);
  const Estimates est = estimate_distributions(model, Smoothing::on);
  const std::size_t k = model.num_topics();

  std::vector<TopicDistribution> dists;
  for (std::size_t d = 0; d < est.theta.rows(); ++d) {
    const auto row = est.theta.row(d);
    dists.push_back(TopicDistribution::normalized(std::vector<double>(row.begin(), row.end())));
  }

  json items = json::array();
  json theta = json::array();
  auto tcsv = open_csv("measure/theta.csv");
  tcsv << "position,item_id,read_date,pub_date";
  for (std::size_t t = 0; t < k; ++t)
    tcsv << ",topic_" << t;
  tcsv << '\n';
  for (std::size_t d = 0; d < corpus.documents.size(); ++d) {
    const auto& spec = corpus.documents[d].spec;
    const std::string read = spec.read_date ? spec.read_date->to_string() : "";
    const std::string pub = spec.pub_date ? spec.pub_date->to_string() : "";
    items.push_back({{"id", spec.id},
                     {"read_date", read},
                     {"pub_date", pub},
                     {"slot_day", spec.read_date ? json(spec.read_date->latest()) : json(nullptr)},
                     {"pub_day", spec.pub_date ? json(spec.pub_date->earliest()) : json(nullptr)}});
    theta.push_back(std::vector<double>(dists[d].values().begin(), dists[d].values().end()));
    tcsv << d << ',' << csv_field(spec.id) << ',' << read << ',' << pub;
    for (double v : dists[d].values())
      tcsv << ',' << format_double(v);
    tcsv << '\n';
  }

  std::vector<std::string> ids;
  for (const auto& doc : corpus.documents)
    ids.push_back(doc.spec.id);
  json series = json::object();
  for (const auto& mode : c_.modes) {
    const auto s = surprise_series(dists, mode, ids);
    auto csv = open_csv("measure/series_" + slug(mode) + ".csv");
    write_series_csv(csv, s);
    series[mode.label()] = {{"mean", s.mean()}, {"values", s.values}};
    log_ << "measure: " << mode.label() << " mean " << format_double(s.mean()) << " bits\n";
  }
  write_json("measure/measure.json",
             {{"model", ref.name}, {"k", k}, {"items", std::move(items)}, {"theta", std::move(theta)},
              {"series", std::move(series)}});
}

Run::Measured Run::load_measure() const
{
  const json j = read_json("measure/measure.json", "measure");
  Measured m;
  try {
    const auto& items = j.at("items");
    const auto& theta = j.at("theta");
    if (items.size() != theta.size())
      throw FormatError("measure/measure.json: items and theta differ in length");
    for (std::size_t i = 0; i < items.size(); ++i) {
      const auto& it = items[i];
      ReadingItem r;
      r.id = it.at("id").get<std::string>();
      r.slot_date = it.at("slot_day").is_null() ? std::numeric_limits<std::int64_t>::max()
                                                : it.at("slot_day").get<std::int64_t>();
      r.pub_date = it.at("pub_day").is_null() ? std::numeric_limits<std::int64_t>::min()
                                              : it.at("pub_day").get<std::int64_t>();
      m.ids.push_back(r.id);
      const auto read = it.value("read_date", std::string());
      m.dates.push_back(read.empty() ? r.id : read);
      m.order.items.push_back(std::move(r));
      m.dists.emplace_back(theta[i].get<std::vector<double>>());
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("measure/measure.json: ") + e.what());
  }
  return m;
}

void Run::null_model()
{
  const Measured m = load_measure();
  const NullResult res = null_ensemble(m.order, m.dists, c_.permutations, stream(null_stream), c_.threads, true);

  json summary = null_summary_to_json(res);

  // Greedy baselines from the first item read.
  json greedy = json::object();
  auto gcsv = open_csv("null/greedy.csv");
  gcsv << "objective,step,item_id,t2t_bits\n";
  for (auto [objective, name] : {std::pair{PathObjective::text_to_text, "T2T"}, {PathObjective::text_to_past, "T2P"}}) {
    const auto path = greedy_shortest_path(m.dists, 0, objective);
    greedy[name] = {{"mean_t2t", mean_step_surprise(m.dists, path, SurpriseSpec::t2t())},
                    {"mean_t2p", mean_step_surprise(m.dists, path, SurpriseSpec::t2p())}};
    for (std::size_t s = 0; s < path.size(); ++s) {
      const double bits = s == 0 ? 0.0 : kl_divergence(m.dists[path[s]], m.dists[path[s - 1]]);
      gcsv << name << ',' << s << ',' << csv_field(m.ids[path[s]]) << ',' << format_double(bits) << '\n';
    }
  }
  summary["greedy"] = std::move(greedy);

  std::vector<std::size_t> actual(m.dists.size());
  std::iota(actual.begin(), actual.end(), std::size_t{0});
  const auto ranks = rank_distribution(m.dists, actual, res.ensemble.permutations);
  summary["rank_distribution"] = rank_distribution_to_json(ranks);
  write_json("null/null.json", std::move(summary));

  {
    auto csv = open_csv("null/permutations.csv");
    write_permutation_means_csv(csv, res.ensemble);
  }
  {
    auto csv = open_csv("null/cumulative.csv");
    write_cumulative_csv(csv, res, m.dists, m.order);
  }
  {
    auto csv = open_csv("null/rank_bins.csv");
    csv << "rank_low,rank_high,observed,null_mean,null_low,null_high,ratio,ratio_low,ratio_high\n";
    for (const auto& b : ranks.bins)
      csv << b.low << ',' << b.high << ',' << format_double(b.observed) << ',' << format_double(b.null_mean) << ','
          << format_double(b.null_low) << ',' << format_double(b.null_high) << ',' << format_double(b.ratio) << ','
          << format_double(b.ratio_low) << ',' << format_double(b.ratio_high) << '\n';
  }
  const auto& cmp = res.comparison;
  log_ << "null: T2T " << format_double(cmp.actual_t2t_mean) << " vs " << format_double(cmp.null_t2t_mean)
       << " (p=" << format_double(cmp.p_t2t) << "), T2P " << format_double(cmp.actual_t2p_mean) << " vs "
       << format_double(cmp.null_t2p_mean) << " (p=" << format_double(cmp.p_t2p) << ")\n";
}

void Run::epochs()
{
  const Measured m = load_measure();
  const EpochOptions opts{c_.estimator, 1e-9};
  json report = json::object();
  for (const auto& mode : c_.epoch_modes) {
    const auto s = surprise_series(m.dists, mode, m.ids);
    const std::vector<std::string> dates(m.dates.begin() + 1, m.dates.end());
    std::size_t max_epochs = std::min(c_.max_epochs, s.values.size() / c_.min_length);
    if (max_epochs == 0)
      throw ConfigError("epochs.min_length", "longer than the " + std::to_string(s.values.size()) + "-point series");
    if (max_epochs < c_.max_epochs)
      log_ << "epochs: series too short for " << c_.max_epochs << " epochs; trying up to " << max_epochs << '\n';
    const auto sel = select_model(s.values, max_epochs, c_.min_length, opts);
    report[mode.label()] = selection_to_json(sel, dates);

    auto models_csv = open_csv("epochs/" + slug(mode) + "_models.csv");
    models_csv << "epochs,k,log_likelihood,aic,relative_likelihood,breaks\n";
    auto seg_csv = open_csv("epochs/" + slug(mode) + "_segments.csv");
    seg_csv << "epochs,segment,start,end,start_date,end_date,mu,sigma\n";
    for (const auto& score : sel.scores) {
      const auto& em = score.model;
      std::string breaks;
      for (std::size_t i = 1; i < em.n; ++i)
        breaks += (i > 1 ? ";" : "") + std::to_string(em.boundaries[i]);
      models_csv << em.n << ',' << em.param_count << ',' << format_double(em.log_likelihood) << ','
                 << format_double(score.aic) << ',' << format_double(score.relative_likelihood) << ',' << breaks
                 << '\n';
      for (std::size_t i = 0; i < em.n; ++i)
        seg_csv << em.n << ',' << i << ',' << em.boundaries[i] << ',' << em.boundaries[i + 1] << ','
                << csv_field(dates[em.boundaries[i]]) << ',' << csv_field(dates[em.boundaries[i + 1] - 1]) << ','
                << format_double(em.mu[i]) << ',' << format_double(std::sqrt(em.sigma2[i])) << '\n';
    }
    log_ << "epochs: " << mode.label() << " best " << sel.scores[sel.best].model.n << " epoch(s)\n";
  }
  write_json("epochs/epochs.json", std::move(report));
}

void Run::fit()
{
  if (!c_.fit_manifest)
    throw ConfigError("fit.manifest", "required by fit");
  if (!fs::exists(*c_.fit_manifest))
    throw ConfigError("fit.manifest", "file not found: " + c_.fit_manifest->string());
  const Corpus corpus = load_corpus();
  const TopicModel model = load_model(primary_model(), corpus);
  const Manifest writings = read_manifest(*c_.fit_manifest);

  json docs = json::array();
  auto summary = open_csv("fit/summary.csv");
  summary << "item_id,tokens,dropped_tokens,clusters,perplexity_mean,topic_drift_mean\n";
  for (std::size_t i = 0; i < writings.documents.size(); ++i) {
    const auto& spec = writings.documents[i];
    std::size_t dropped = 0;
    const auto ids = encode_tokens(tokenize(load_text(spec), c_.tokenizer), corpus.vocabulary, &dropped);
    if (ids.empty()) {
      log_ << "warning: " << spec.id << " has no in-vocabulary tokens; skipped\n";
      docs.push_back({{"id", spec.id}, {"tokens", 0}, {"dropped_tokens", dropped}, {"skipped", "untrainable document"}});
      continue;
    }
    FitOptions opts;
    opts.iterations = c_.fit_iterations;
    opts.phi_mode = c_.phi_mode;
    opts.seed = derive_seed(stream(fit_stream), i);
    const auto ens = sample_ensemble(model, ids, spec.id, c_.fit_samples, opts, c_.threads);
    const auto clusters = cluster_ensemble(ens, c_.cluster_k_min, c_.cluster_k_max);

    const std::string stem = "fit/" + file_safe(spec.id);
    {
      auto csv = open_csv(stem + "_samples.csv");
      write_ensemble_csv(csv, ens);
    }
    {
      auto csv = open_csv(stem + "_theta.csv");
      csv << "sample,cluster";
      for (std::size_t t = 0; t < model.num_topics(); ++t)
        csv << ",topic_" << t;
      csv << '\n';
      for (std::size_t s = 0; s < ens.samples.size(); ++s) {
        csv << s << ',' << clusters.assignments[s];
        for (double v : ens.samples[s].theta.values())
          csv << ',' << format_double(v);
        csv << '\n';
      }
    }
    double ppl = 0.0, drift = 0.0;
    for (const auto& s : ens.samples) {
      ppl += s.perplexity;
      drift += s.topic_drift;
    }
    ppl /= static_cast<double>(ens.samples.size());
    drift /= static_cast<double>(ens.samples.size());
    summary << csv_field(spec.id) << ',' << ids.size() << ',' << dropped << ',' << clusters.chosen_k << ','
            << format_double(ppl) << ',' << format_double(drift) << '\n';
    docs.push_back({{"id", spec.id},
                    {"tokens", ids.size()},
                    {"dropped_tokens", dropped},
                    {"ensemble", ensemble_to_json(ens)},
                    {"clusters", cluster_report_to_json(clusters)}});
    log_ << "fit: " << spec.id << " " << clusters.chosen_k << " cluster(s), mean perplexity " << format_double(ppl)
         << '\n';
  }
  write_json("fit/fit.json", {{"model", primary_model().name}, {"documents", std::move(docs)}});
}

void Run::compare()
{
  const auto refs = models();
  std::vector<WordTopicMatrix> wt;
  for (const auto& r : refs) {
    // Only the vocabulary hash is checked here; no corpus needed.
    wt.push_back(word_topics(model_from_json(read_json("models/" + r.name + ".json", "train"))));
  }
  json pairs = json::array();
  std::size_t pair_index = 0;
  for (std::size_t a = 0; a < refs.size(); ++a)
    for (std::size_t b = a + 1; b < refs.size(); ++b, ++pair_index) {
      const auto [ma, mb] = merge_vocabulary(wt[a], wt[b], c_.vocabulary_merge, c_.merge_epsilon);
      AdversarialConfig adv = c_.adversarial;
      adv.seed = derive_seed(stream(compare_stream), pair_index);
      const auto al = align_topics(ma, mb, c_.alignment, adv);
      auto csv = open_csv("compare/" + refs[a].name + "__" + refs[b].name + ".csv");
      write_alignment_csv(csv, al);
      json row = alignment_to_json(al);
      row["model_a"] = refs[a].name;
      row["model_b"] = refs[b].name;
      row["shared_terms"] = ma.terms.size();
      pairs.push_back(std::move(row));
      log_ << "compare: " << refs[a].name << " vs " << refs[b].name << " mean JS distance "
           << format_double(al.mean_distance) << '\n';
    }
  json out = {{"vocabulary", to_string(c_.vocabulary_merge)}, {"pairs", std::move(pairs)}};
  if (refs.size() < 2)
    out["note"] = "only one model trained; nothing to compare";
  write_json("compare/compare.json", std::move(out));
}

}  // namespace

void run_stage(Stage stage, const PipelineConfig& config, std::ostream& log)
{
  Run run(config, log);
  switch (stage) {
  case Stage::prepare: run.prepare(); break;
  case Stage::train: run.train(); break;
  case Stage::measure: run.measure(); break;
  case Stage::null_model: run.null_model(); break;
  case Stage::epochs: run.epochs(); break;
  case Stage::fit: run.fit(); break;
  case Stage::compare: run.compare(); break;
  case Stage::pipeline:
    run.prepare();
    run.train();
    run.measure();
    run.null_model();
    run.epochs();
    if (run.fit_configured())
      run.fit();
    else
      log << "fit: skipped (no fit.manifest)\n";
    run.compare();
    break;
  }
}

}  // namespace forage
