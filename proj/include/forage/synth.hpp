#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "forage/corpus.hpp"

namespace forage {

/// Planted-topic corpus with a two-epoch reading order. In the first epoch
/// consecutive documents mostly share a dominant topic (low text-to-text
/// surprise); after the break every document picks its dominant topic at
/// random.
struct SynthConfig
{
  std::size_t topics = 6;
  std::size_t words_per_topic = 40;
  std::size_t documents = 120;
  std::size_t doc_length = 150;
  std::size_t writings = 3;
  /// Position of the planted epoch break, as a fraction of `documents`.
  double break_fraction = 0.5;
  /// Chance that a first-epoch document keeps its predecessor's topic.
  double stay_probability = 0.85;
  /// Weight of the dominant topic in each document.
  double dominant_weight = 0.85;
  std::uint64_t seed = 1;
};

struct SynthCorpus
{
  std::vector<DocumentSpec> documents;  // inline text, dated, in reading order
  std::vector<DocumentSpec> writings;   // undated, for query sampling
  std::vector<std::size_t> dominant_topic;
  std::size_t break_position = 0;  // index of the first second-epoch document
  std::vector<std::string> stopwords;
};

/// Term for planted word `index` (letters only).
std::string synth_word(std::size_t index);

SynthCorpus make_synth_corpus(const SynthConfig& config);

/// Writes manifest.jsonl, writings.jsonl, stopwords.txt and a config.json
/// scaled for a quick run into `dir`.
void write_synth_fixture(const SynthCorpus& corpus, const std::filesystem::path& dir, std::uint64_t pipeline_seed);

}  // namespace forage
