#include "forage/synth.hpp"

#include <fstream>

#include <json.hpp>

#include "forage/error.hpp"
#include "forage/rng.hpp"

namespace forage {

namespace {

constexpr std::int64_t kFirstReading = -43829;  // 1850-01-01

std::size_t draw(Rng& rng, const std::vector<double>& cumulative)
{
  const double u = rng.uniform() * cumulative.back();
  std::size_t lo = 0, hi = cumulative.size() - 1;
  while (lo < hi) {
    const std::size_t mid = (lo + hi) / 2;
    if (cumulative[mid] > u)
      hi = mid;
    else
      lo = mid + 1;
  }
  return lo;
}

}  // namespace

std::string synth_word(std::size_t index)
{
  static constexpr char consonants[] = "bdfgklmnprstvz";
  static constexpr char vowels[] = "aeiou";
  std::string w;
  // Syllables of consonant+vowel; at least three so no word is a real stopword.
  std::size_t v = index;
  for (int s = 0; s < 3 || v > 0; ++s) {
    w += consonants[v % 14];
    v /= 14;
    w += vowels[v % 5];
    v /= 5;
  }
  return w;
}

SynthCorpus make_synth_corpus(const SynthConfig& c)
{
  if (c.topics < 2 || c.words_per_topic < 1 || c.documents < 4 || c.doc_length < 1)
    throw InvalidArgument("synth: corpus too small");
  if (!(c.break_fraction > 0.0 && c.break_fraction < 1.0))
    throw InvalidArgument("synth: break_fraction must lie in (0, 1)");
  Rng rng(c.seed);
  SynthCorpus out;
  out.stopwords = {"the", "of", "and", "in", "a"};

  const std::size_t V = c.topics * c.words_per_topic;
  // Topic t puts Zipf weights on its own block and a little on every word.
  std::vector<std::vector<double>> topic_cdf(c.topics, std::vector<double>(V));
  for (std::size_t t = 0; t < c.topics; ++t) {
    double total = 0.0;
    for (std::size_t w = 0; w < V; ++w) {
      const bool own = w / c.words_per_topic == t;
      total += own ? 1.0 / static_cast<double>(w % c.words_per_topic + 1) : 0.002;
      topic_cdf[t][w] = total;
    }
  }

  auto make_text = [&](std::size_t dominant, std::size_t secondary) {
    std::string text;
    for (std::size_t i = 0; i < c.doc_length; ++i) {
      const std::size_t t = rng.uniform() < c.dominant_weight ? dominant : secondary;
      if (!text.empty())
        text += (i % 12 == 0) ? "\n" : " ";
      text += synth_word(draw(rng, topic_cdf[t]));
      if (i % 9 == 0)
        text += " " + out.stopwords[rng.below(out.stopwords.size())];
    }
    return text;
  };

  out.break_position = static_cast<std::size_t>(c.break_fraction * static_cast<double>(c.documents));
  std::size_t dominant = rng.below(c.topics);
  for (std::size_t i = 0; i < c.documents; ++i) {
    if (i >= out.break_position || rng.uniform() >= c.stay_probability)
      dominant = rng.below(c.topics);
    std::size_t secondary = rng.below(c.topics - 1);
    if (secondary >= dominant)
      ++secondary;
    DocumentSpec spec;
    spec.id = "doc" + std::to_string(i);
    spec.inline_text = make_text(dominant, secondary);
    const std::int64_t read = kFirstReading + 7 * static_cast<std::int64_t>(i);
    spec.read_date = PartialDate::parse(format_day(read));
    spec.pub_date = PartialDate::parse(format_day(read - static_cast<std::int64_t>(rng.below(3000))));
    spec.order_index = i;
    out.documents.push_back(std::move(spec));
    out.dominant_topic.push_back(dominant);
  }

  for (std::size_t i = 0; i < c.writings; ++i) {
    const std::size_t a = rng.below(c.topics);
    std::size_t b = rng.below(c.topics - 1);
    if (b >= a)
      ++b;
    DocumentSpec spec;
    spec.id = "writing" + std::to_string(i);
    spec.inline_text = make_text(a, b);
    spec.order_index = i;
    out.writings.push_back(std::move(spec));
  }
  return out;
}

void write_synth_fixture(const SynthCorpus& corpus, const std::filesystem::path& dir, std::uint64_t pipeline_seed)
{
  std::filesystem::create_directories(dir);
  auto write_manifest = [&](const std::filesystem::path& path, const std::vector<DocumentSpec>& docs) {
    std::ofstream out(path);
    if (!out)
      throw FormatError("cannot write " + path.string());
    for (const auto& d : docs)
      out << document_spec_to_json(d).dump() << '\n';
  };
  write_manifest(dir / "manifest.jsonl", corpus.documents);
  write_manifest(dir / "writings.jsonl", corpus.writings);
  {
    std::ofstream out(dir / "stopwords.txt");
    for (const auto& w : corpus.stopwords)
      out << w << '\n';
  }
  const nlohmann::json config = {
      {"manifest", "manifest.jsonl"},
      {"output_dir", "out"},
      {"seed", pipeline_seed},
      {"filter", {{"stopwords_file", "stopwords.txt"}, {"min_count", 2}}},
      {"training", {{"k", {6, 8}}, {"iterations", 200}}},
      {"measure", {{"modes", {"T2T", "T2P", "T2N(5)"}}}},
      {"null", {{"permutations", 1000}}},
      {"epochs", {{"max_epochs", 3}, {"min_length", 10}}},
      {"fit", {{"manifest", "writings.jsonl"}, {"samples", 12}, {"iterations", 60}}},
      {"compare", {{"strategy", "basic"}, {"vocabulary", "intersect_renorm"}}},
  };
  std::ofstream out(dir / "config.json");
  out << config.dump(2) << '\n';
}

}  // namespace forage
