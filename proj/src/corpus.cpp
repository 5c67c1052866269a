#include "forage/corpus.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <chrono>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <unordered_set>

#include "forage/error.hpp"

namespace forage {

namespace {

std::int64_t to_days(int y, unsigned m, unsigned d)
{
  using namespace std::chrono;
  const sys_days sd{year{y} / month{m} / day{d}};
  return sd.time_since_epoch().count();
}

unsigned last_day_of(int y, unsigned m)
{
  using namespace std::chrono;
  return static_cast<unsigned>(year_month_day_last{year{y} / month{m} / last}.day());
}

bool parse_uint(std::string_view s, unsigned& out)
{
  if (s.empty())
    return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size();
}

}  // namespace

PartialDate PartialDate::parse(std::string_view text)
{
  auto fail = [&] { throw FormatError("invalid date '" + std::string(text) + "' (expected YYYY, YYYY-MM or YYYY-MM-DD)"); };
  PartialDate out;
  std::array<std::string_view, 3> parts{};
  std::size_t count = 0;
  std::size_t start = 0;
  while (true) {
    const auto dash = text.find('-', start);
    if (count == 3)
      fail();
    parts[count++] = text.substr(start, dash == std::string_view::npos ? std::string_view::npos : dash - start);
    if (dash == std::string_view::npos)
      break;
    start = dash + 1;
  }
  unsigned year = 0;
  if (parts[0].size() != 4 || !parse_uint(parts[0], year))
    fail();
  out.year = static_cast<int>(year);
  if (count >= 2) {
    if (parts[1].size() != 2 || !parse_uint(parts[1], out.month) || out.month < 1 || out.month > 12)
      fail();
  }
  if (count == 3) {
    if (parts[2].size() != 2 || !parse_uint(parts[2], out.day) || out.day < 1 ||
        out.day > last_day_of(out.year, out.month))
      fail();
  }
  return out;
}

std::int64_t PartialDate::earliest() const
{
  return to_days(year, month == 0 ? 1 : month, day == 0 ? 1 : day);
}

std::int64_t PartialDate::latest() const
{
  const unsigned m = month == 0 ? 12 : month;
  return to_days(year, m, day == 0 ? last_day_of(year, m) : day);
}

std::string PartialDate::to_string() const
{
  char buf[40];
  if (month == 0)
    std::snprintf(buf, sizeof buf, "%04d", year);
  else if (day == 0)
    std::snprintf(buf, sizeof buf, "%04d-%02u", year, month);
  else
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", year, month, day);
  return buf;
}

std::string format_day(std::int64_t days)
{
  using namespace std::chrono;
  const year_month_day ymd{sys_days{std::chrono::days{days}}};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                static_cast<unsigned>(ymd.day()));
  return buf;
}

// ---------------------------------------------------------------------------

Manifest make_manifest(std::vector<DocumentSpec> specs)
{
  Manifest m;
  std::unordered_set<std::string> seen;
  for (const auto& s : specs) {
    if (s.id.empty())
      throw FormatError("document with empty id");
    if (!seen.insert(s.id).second)
      throw FormatError("duplicate document id '" + s.id + "'");
    if (s.read_date && s.pub_date && s.pub_date->earliest() > s.read_date->latest())
      m.date_violations.push_back({s.id, *s.pub_date, *s.read_date});
  }
  std::stable_sort(specs.begin(), specs.end(),
                   [](const DocumentSpec& a, const DocumentSpec& b) { return a.order_index < b.order_index; });
  m.documents = std::move(specs);
  return m;
}

Manifest read_manifest(const std::filesystem::path& path)
{
  std::ifstream in(path);
  if (!in)
    throw FormatError("cannot open manifest " + path.string());
  const auto base = path.parent_path();
  std::vector<DocumentSpec> specs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos)
      continue;
    try {
      auto j = nlohmann::json::parse(line);
      if (!j.contains("order_index"))
        j["order_index"] = specs.size();
      specs.push_back(document_spec_from_json(j, base));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const FormatError& e) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return make_manifest(std::move(specs));
}

std::string load_text(const DocumentSpec& spec)
{
  if (spec.inline_text)
    return *spec.inline_text;
  if (!spec.text_path)
    throw FormatError("document '" + spec.id + "' has neither text nor text_path");
  std::ifstream in(*spec.text_path, std::ios::binary);
  if (!in)
    throw FormatError("cannot read text for '" + spec.id + "': " + spec.text_path->string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// Tokenization

namespace {

// U+00C0 .. U+017F
constexpr std::array<const char*, 192> kLatinTable = {
    "A", "A", "A",  "A",  "A", "A", "AE", "C", "E", "E",  "E", "E", "I",  "I",  "I",  "I",  //
    "D", "N", "O",  "O",  "O", "O", "O",  "x", "O", "U",  "U", "U", "U",  "Y",  "Th", "ss", //
    "a", "a", "a",  "a",  "a", "a", "ae", "c", "e", "e",  "e", "e", "i",  "i",  "i",  "i",  //
    "d", "n", "o",  "o",  "o", "o", "o",  "/", "o", "u",  "u", "u", "u",  "y",  "th", "y",  //
    "A", "a", "A",  "a",  "A", "a", "C",  "c", "C", "c",  "C", "c", "C",  "c",  "D",  "d",  //
    "D", "d", "E",  "e",  "E", "e", "E",  "e", "E", "e",  "E", "e", "G",  "g",  "G",  "g",  //
    "G", "g", "G",  "g",  "H", "h", "H",  "h", "I", "i",  "I", "i", "I",  "i",  "I",  "i",  //
    "I", "i", "IJ", "ij", "J", "j", "K",  "k", "q", "L",  "l", "L", "l",  "L",  "l",  "L",  //
    "l", "L", "l",  "N",  "n", "N", "n",  "N", "n", "'n", "N", "n", "O",  "o",  "O",  "o",  //
    "O", "o", "OE", "oe", "R", "r", "R",  "r", "R", "r",  "S", "s", "S",  "s",  "S",  "s",  //
    "S", "s", "T",  "t",  "T", "t", "T",  "t", "U", "u",  "U", "u", "U",  "u",  "U",  "u",  //
    "U", "u", "U",  "u",  "W", "w", "Y",  "y", "Y", "Z",  "z", "Z", "z",  "Z",  "z",  "s",
};

const char* transliterate_codepoint(char32_t cp)
{
  if (cp >= 0xC0 && cp <= 0x17F)
    return kLatinTable[cp - 0xC0];
  switch (cp) {
  case 0xA0: return " ";
  case 0xAD: return "";  // soft hyphen
  case 0x2018:
  case 0x2019:
  case 0x201A: return "'";
  case 0x201C:
  case 0x201D:
  case 0x201E: return "\"";
  case 0x2010:
  case 0x2011:
  case 0x2012:
  case 0x2013:
  case 0x2014: return "-";
  case 0x2026: return "...";
  case 0x2028:
  case 0x2029: return "\n";
  case 0xFB00: return "ff";
  case 0xFB01: return "fi";
  case 0xFB02: return "fl";
  case 0xFB03: return "ffi";
  case 0xFB04: return "ffl";
  case 0xFB05:
  case 0xFB06: return "st";
  default: return "?";
  }
}

bool is_alpha(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }
bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }
bool is_edge_punct(char c)
{
  switch (c) {
  case '.': case ',': case ';': case ':': case '!': case '?':
  case '"': case '\'': case '(': case ')': case '[': case ']':
    return true;
  default:
    return false;
  }
}

std::string merge_hyphens(const std::string& text)
{
  std::string out;
  out.reserve(text.size());
  const std::size_t n = text.size();
  for (std::size_t i = 0; i < n; ++i) {
    const char c = text[i];
    if (c == '-' && !out.empty() && is_alpha(out.back())) {
      std::size_t j = i + 1;
      while (j < n && (text[j] == ' ' || text[j] == '\t'))
        ++j;
      if (j < n && text[j] == '\r')
        ++j;
      if (j < n && text[j] == '\n') {
        ++j;
        while (j < n && (text[j] == ' ' || text[j] == '\t'))
          ++j;
        if (j < n && is_alpha(text[j])) {
          i = j - 1;
          continue;
        }
      }
    }
    out.push_back(c);
  }
  return out;
}

}  // namespace

std::string transliterate(std::string_view s)
{
  std::string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    const auto b = static_cast<unsigned char>(s[i]);
    if (b < 0x80) {
      out.push_back(static_cast<char>(b));
      ++i;
      continue;
    }
    std::size_t len = 0;
    char32_t cp = 0;
    if ((b & 0xE0) == 0xC0) {
      len = 2;
      cp = b & 0x1F;
    } else if ((b & 0xF0) == 0xE0) {
      len = 3;
      cp = b & 0x0F;
    } else if ((b & 0xF8) == 0xF0) {
      len = 4;
      cp = b & 0x07;
    }
    bool ok = len != 0 && i + len <= s.size();
    for (std::size_t k = 1; ok && k < len; ++k) {
      const auto cb = static_cast<unsigned char>(s[i + k]);
      if ((cb & 0xC0) != 0x80)
        ok = false;
      else
        cp = (cp << 6) | (cb & 0x3F);
    }
    if (!ok) {
      out.push_back('?');
      ++i;
      continue;
    }
    out += transliterate_codepoint(cp);
    i += len;
  }
  return out;
}

TokenList tokenize(std::string_view raw_text, const TokenizerConfig& rules)
{
  std::string text = transliterate(raw_text);
  if (rules.merge_line_hyphens)
    text = merge_hyphens(text);

  TokenList tokens;
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    while (i < n && is_space(text[i]))
      ++i;
    std::size_t j = i;
    while (j < n && !is_space(text[j]))
      ++j;
    if (j > i) {
      std::string_view word(text.data() + i, j - i);
      if (rules.strip_edge_punctuation) {
        while (!word.empty() && is_edge_punct(word.front()))
          word.remove_prefix(1);
        while (!word.empty() && is_edge_punct(word.back()))
          word.remove_suffix(1);
      }
      std::string lower(word);
      bool keep = !lower.empty();
      for (char& c : lower) {
        if (c >= 'A' && c <= 'Z')
          c = static_cast<char>(c - 'A' + 'a');
        else if (c < 'a' || c > 'z')
          keep = false;
      }
      if (keep)
        tokens.push_back(std::move(lower));
    }
    i = j;
  }
  return tokens;
}

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary::Vocabulary(std::vector<std::string> terms, std::vector<std::uint64_t> frequency)
    : terms_(std::move(terms)), frequency_(std::move(frequency))
{
  if (frequency_.size() != terms_.size())
    throw InvalidArgument("vocabulary: term and frequency lists differ in length");
  index_.reserve(terms_.size());
  for (std::size_t i = 0; i < terms_.size(); ++i) {
    if (!index_.emplace(terms_[i], static_cast<TermId>(i)).second)
      throw InvalidArgument("vocabulary: duplicate term '" + terms_[i] + "'");
  }
}

std::optional<TermId> Vocabulary::find(std::string_view term) const
{
  auto it = index_.find(std::string(term));
  if (it == index_.end())
    return std::nullopt;
  return it->second;
}

std::uint64_t Vocabulary::hash() const
{
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](unsigned char c) {
    h ^= c;
    h *= 0x100000001b3ULL;
  };
  for (const auto& t : terms_) {
    for (char c : t)
      feed(static_cast<unsigned char>(c));
    feed(0);
  }
  return h;
}

Vocabulary build_vocabulary(const std::vector<TokenList>& token_docs, const FilterConfig& filter)
{
  if (filter.top_mass < 0.0 || filter.top_mass > 1.0 || filter.bottom_mass < 0.0 || filter.bottom_mass > 1.0)
    throw InvalidArgument("mass bounds must lie in [0, 1]");

  std::map<std::string, std::uint64_t> counts;
  for (const auto& doc : token_docs)
    for (const auto& tok : doc)
      ++counts[tok];
  for (const auto& stop : filter.stopwords)
    counts.erase(stop);

  std::uint64_t total = 0;
  for (const auto& [_, c] : counts)
    total += c;

  std::set<std::string> removed;
  for (const auto& [term, c] : counts) {
    if ((filter.min_count && c < *filter.min_count) || (filter.max_count && c > *filter.max_count))
      removed.insert(term);
  }

  // Frequency classes: count -> terms with that count.
  std::map<std::uint64_t, std::vector<std::string>> classes;
  for (const auto& [term, c] : counts)
    classes[c].push_back(term);

  const double dtotal = static_cast<double>(total);
  if (filter.top_mass > 0.0) {
    std::uint64_t mass = 0;
    for (auto it = classes.rbegin(); it != classes.rend() && static_cast<double>(mass) < filter.top_mass * dtotal;
         ++it) {
      for (const auto& t : it->second)
        removed.insert(t);
      mass += it->first * it->second.size();
    }
  }
  if (filter.bottom_mass > 0.0) {
    std::uint64_t mass = 0;
    for (auto it = classes.begin(); it != classes.end() && static_cast<double>(mass) < filter.bottom_mass * dtotal;
         ++it) {
      for (const auto& t : it->second)
        removed.insert(t);
      mass += it->first * it->second.size();
    }
  }

  std::vector<std::string> terms;
  std::vector<std::uint64_t> freq;
  for (const auto& [term, c] : counts) {
    if (removed.count(term))
      continue;
    terms.push_back(term);
    freq.push_back(c);
  }
  if (terms.empty())
    throw NumericalError("vocabulary exhausted");
  return Vocabulary(std::move(terms), std::move(freq));
}

// ---------------------------------------------------------------------------
// Encoding

std::size_t Corpus::num_tokens() const
{
  std::size_t n = 0;
  for (const auto& d : documents)
    n += d.tokens.size();
  return n;
}

std::vector<TermId> encode_tokens(const TokenList& tokens, const Vocabulary& vocab, std::size_t* dropped)
{
  std::vector<TermId> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) {
    if (auto id = vocab.find(t))
      ids.push_back(*id);
  }
  if (dropped)
    *dropped = tokens.size() - ids.size();
  return ids;
}

TokenList decode_tokens(const std::vector<TermId>& ids, const Vocabulary& vocab)
{
  TokenList out;
  out.reserve(ids.size());
  for (auto id : ids)
    out.push_back(vocab.term(id));
  return out;
}

Corpus encode_corpus(const std::vector<DocumentSpec>& specs, const std::vector<TokenList>& token_docs,
                     Vocabulary vocab, EmptyDocumentPolicy policy)
{
  if (specs.size() != token_docs.size())
    throw InvalidArgument("encode_corpus: specs and token lists are not aligned");
  Corpus corpus;
  corpus.vocabulary = std::move(vocab);
  for (std::size_t i = 0; i < specs.size(); ++i) {
    EncodedDocument doc;
    doc.spec = specs[i];
    doc.tokens = encode_tokens(token_docs[i], corpus.vocabulary, &doc.dropped_tokens);
    if (doc.tokens.empty()) {
      if (policy == EmptyDocumentPolicy::error)
        throw NumericalError("document '" + doc.spec.id + "' has no in-vocabulary tokens");
      std::cerr << "warning: document '" << doc.spec.id << "' has no in-vocabulary tokens; excluded\n";
      corpus.excluded.push_back(std::move(doc));
    } else {
      corpus.documents.push_back(std::move(doc));
    }
  }
  return corpus;
}

// ---------------------------------------------------------------------------
// Serialization

nlohmann::json vocabulary_to_json(const Vocabulary& vocab)
{
  return {{"terms", vocab.terms()}, {"frequency", vocab.frequencies()}};
}

Vocabulary vocabulary_from_json(const nlohmann::json& j)
{
  return Vocabulary(j.at("terms").get<std::vector<std::string>>(), j.at("frequency").get<std::vector<std::uint64_t>>());
}

nlohmann::json document_spec_to_json(const DocumentSpec& spec)
{
  nlohmann::json j;
  j["id"] = spec.id;
  if (spec.text_path)
    j["text_path"] = spec.text_path->string();
  if (spec.inline_text)
    j["text"] = *spec.inline_text;
  j["read_date"] = spec.read_date ? nlohmann::json(spec.read_date->to_string()) : nlohmann::json(nullptr);
  j["pub_date"] = spec.pub_date ? nlohmann::json(spec.pub_date->to_string()) : nlohmann::json(nullptr);
  j["order_index"] = spec.order_index;
  return j;
}

DocumentSpec document_spec_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir)
{
  DocumentSpec s;
  if (!j.is_object())
    throw FormatError("document record is not an object");
  s.id = j.at("id").get<std::string>();
  if (auto it = j.find("text_path"); it != j.end() && !it->is_null()) {
    std::filesystem::path p = it->get<std::string>();
    s.text_path = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
  }
  if (auto it = j.find("text"); it != j.end() && !it->is_null())
    s.inline_text = it->get<std::string>();
  if (auto it = j.find("read_date"); it != j.end() && !it->is_null())
    s.read_date = PartialDate::parse(it->get<std::string>());
  if (auto it = j.find("pub_date"); it != j.end() && !it->is_null())
    s.pub_date = PartialDate::parse(it->get<std::string>());
  if (auto it = j.find("order_index"); it != j.end()) {
    if (!it->is_number_unsigned() && !(it->is_number_integer() && it->get<std::int64_t>() >= 0))
      throw FormatError("order_index must be a non-negative integer");
    s.order_index = it->get<std::uint64_t>();
  }
  return s;
}

namespace {

nlohmann::json encoded_to_json(const EncodedDocument& d)
{
  auto j = document_spec_to_json(d.spec);
  j["tokens"] = d.tokens;
  j["dropped_tokens"] = d.dropped_tokens;
  return j;
}

EncodedDocument encoded_from_json(const nlohmann::json& j, std::size_t vocab_size)
{
  EncodedDocument d;
  d.spec = document_spec_from_json(j);
  d.tokens = j.at("tokens").get<std::vector<TermId>>();
  d.dropped_tokens = j.value("dropped_tokens", std::size_t{0});
  for (auto id : d.tokens)
    if (id >= vocab_size)
      throw FormatError("document '" + d.spec.id + "' has token id out of range");
  return d;
}

}  // namespace

nlohmann::json corpus_to_json(const Corpus& corpus)
{
  nlohmann::json docs = nlohmann::json::array();
  for (const auto& d : corpus.documents)
    docs.push_back(encoded_to_json(d));
  nlohmann::json excl = nlohmann::json::array();
  for (const auto& d : corpus.excluded)
    excl.push_back(encoded_to_json(d));
  return {{"format_version", kCorpusFormatVersion},
          {"kind", "corpus"},
          {"vocabulary", vocabulary_to_json(corpus.vocabulary)},
          {"documents", std::move(docs)},
          {"excluded", std::move(excl)}};
}

Corpus corpus_from_json(const nlohmann::json& j)
{
  if (j.value("format_version", -1) != kCorpusFormatVersion)
    throw FormatError("unsupported corpus format_version");
  Corpus c;
  c.vocabulary = vocabulary_from_json(j.at("vocabulary"));
  for (const auto& d : j.at("documents"))
    c.documents.push_back(encoded_from_json(d, c.vocabulary.size()));
  if (auto it = j.find("excluded"); it != j.end())
    for (const auto& d : *it)
      c.excluded.push_back(encoded_from_json(d, c.vocabulary.size()));
  return c;
}

}  // namespace forage
