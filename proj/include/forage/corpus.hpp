#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

namespace forage {

using TermId = std::uint32_t;
using TokenList = std::vector<std::string>;

// ---------------------------------------------------------------------------
// Dates
// ---------------------------------------------------------------------------

/// ISO-8601 calendar date with optional precision: "YYYY", "YYYY-MM" or
/// "YYYY-MM-DD". Missing components are zero.
struct PartialDate
{
  int year = 0;
  unsigned month = 0;  // 0 = unspecified
  unsigned day = 0;    // 0 = unspecified

  static PartialDate parse(std::string_view text);

  /// Days since 1970-01-01 of the first day the date can denote.
  std::int64_t earliest() const;
  /// Days since 1970-01-01 of the last day the date can denote.
  std::int64_t latest() const;

  std::string to_string() const;

  bool operator==(const PartialDate&) const = default;
};

/// Calendar string for a day ordinal (days since 1970-01-01).
std::string format_day(std::int64_t days);

// ---------------------------------------------------------------------------
// Documents and manifests
// ---------------------------------------------------------------------------

struct DocumentSpec
{
  std::string id;
  std::optional<std::filesystem::path> text_path;
  std::optional<std::string> inline_text;
  std::optional<PartialDate> read_date;
  std::optional<PartialDate> pub_date;
  std::uint64_t order_index = 0;
};

/// A document whose publication date is later than its reading date.
struct DateViolation
{
  std::string id;
  PartialDate pub_date;
  PartialDate read_date;
};

struct Manifest
{
  /// Specs sorted by order_index; ties keep file order.
  std::vector<DocumentSpec> documents;
  /// Reported, never corrected.
  std::vector<DateViolation> date_violations;
};

/// Reads a JSON-lines manifest. Relative text paths resolve against the
/// manifest's directory. Throws FormatError on duplicate ids or bad records.
Manifest read_manifest(const std::filesystem::path& path);

/// Validates and orders an in-memory list of specs the same way.
Manifest make_manifest(std::vector<DocumentSpec> specs);

/// Raw text of a spec (inline text or file contents).
std::string load_text(const DocumentSpec& spec);

// ---------------------------------------------------------------------------
// Tokenization
// ---------------------------------------------------------------------------

struct TokenizerConfig
{
  /// Join "word-\nword" into one token before splitting.
  bool merge_line_hyphens = true;
  /// Drop leading/trailing . , ; : ! ? " ' ( ) [ ] before the punctuation
  /// check. Off by default: a word with any punctuation is removed whole.
  bool strip_edge_punctuation = false;
};

/// Lower-cased ASCII tokens. Words that still contain anything other than
/// a-z after transliteration are removed. Deterministic and idempotent on
/// its own (space-joined) output.
TokenList tokenize(std::string_view raw_text, const TokenizerConfig& rules = {});

/// ASCII transliteration of UTF-8 text. Letters from Latin-1 and Latin
/// Extended-A map to their base letters (ae, oe, ss, ...); typographic
/// quotes and dashes map to ASCII punctuation; anything else becomes '?'.
std::string transliterate(std::string_view utf8);

// ---------------------------------------------------------------------------
// Vocabulary
// ---------------------------------------------------------------------------

struct FilterConfig
{
  /// Types with fewer tokens are removed.
  std::optional<std::uint64_t> min_count;
  /// Types with more tokens are removed.
  std::optional<std::uint64_t> max_count;
  /// Remove the most frequent types, whole frequency classes at a time,
  /// until the removed share of tokens reaches this fraction.
  double top_mass = 0.0;
  /// Same from the rare end.
  double bottom_mass = 0.0;
  std::set<std::string> stopwords;
};

class Vocabulary
{
public:
  Vocabulary() = default;
  /// Terms in id order with their corpus frequencies. Throws on duplicates.
  Vocabulary(std::vector<std::string> terms, std::vector<std::uint64_t> frequency);

  std::size_t size() const noexcept { return terms_.size(); }
  bool empty() const noexcept { return terms_.empty(); }

  std::optional<TermId> find(std::string_view term) const;
  const std::string& term(TermId id) const { return terms_.at(id); }
  std::uint64_t frequency(TermId id) const { return frequency_.at(id); }

  const std::vector<std::string>& terms() const noexcept { return terms_; }
  const std::vector<std::uint64_t>& frequencies() const noexcept { return frequency_; }

  /// FNV-1a over the term list; identifies a vocabulary in model files.
  std::uint64_t hash() const;

private:
  std::vector<std::string> terms_;
  std::vector<std::uint64_t> frequency_;
  std::unordered_map<std::string, TermId> index_;
};

/// Frequency-filtered vocabulary. Ids are assigned in lexicographic term
/// order so the result does not depend on document order.
///
/// Mass fractions are measured against the token total after stopword
/// removal. Throws NumericalError("vocabulary exhausted") if nothing survives.
Vocabulary build_vocabulary(const std::vector<TokenList>& token_docs, const FilterConfig& filter);

// ---------------------------------------------------------------------------
// Encoded corpus
// ---------------------------------------------------------------------------

struct EncodedDocument
{
  DocumentSpec spec;
  std::vector<TermId> tokens;
  std::size_t dropped_tokens = 0;
};

enum class EmptyDocumentPolicy { exclude, error };

struct Corpus
{
  Vocabulary vocabulary;
  /// Non-empty documents in reading order.
  std::vector<EncodedDocument> documents;
  /// Documents that lost every token; excluded from modeling.
  std::vector<EncodedDocument> excluded;

  std::size_t num_documents() const noexcept { return documents.size(); }
  std::size_t num_tokens() const;
};

/// Encodes token lists against a vocabulary, dropping out-of-vocabulary
/// tokens. Empty results go to Corpus::excluded (with a warning on stderr)
/// or throw, per policy.
Corpus encode_corpus(const std::vector<DocumentSpec>& specs, const std::vector<TokenList>& token_docs,
                     Vocabulary vocab, EmptyDocumentPolicy policy = EmptyDocumentPolicy::exclude);

/// Encodes one token list; returns the kept ids and sets `dropped`.
std::vector<TermId> encode_tokens(const TokenList& tokens, const Vocabulary& vocab, std::size_t* dropped = nullptr);

TokenList decode_tokens(const std::vector<TermId>& ids, const Vocabulary& vocab);

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline constexpr int kCorpusFormatVersion = 1;

nlohmann::json vocabulary_to_json(const Vocabulary& vocab);
Vocabulary vocabulary_from_json(const nlohmann::json& j);

nlohmann::json document_spec_to_json(const DocumentSpec& spec);
DocumentSpec document_spec_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});

nlohmann::json corpus_to_json(const Corpus& corpus);
Corpus corpus_from_json(const nlohmann::json& j);

}  // namespace forage
