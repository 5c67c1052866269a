// forage: batch pipeline over a dated reading corpus.
//
//   forage synth --out fixture --seed 7
//   forage pipeline --config fixture/config.json
//   forage null --config fixture/config.json --threads 4

#include <iostream>

#include <CLI11.hpp>

#include "forage/pipeline.hpp"
#include "forage/synth.hpp"

namespace {

struct Overrides
{
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::string out;
};

void add_common(CLI::App* cmd, Overrides& o)
{
  cmd->add_option("--config", o.config, "Pipeline config (JSON)")->required();
  cmd->add_option("--seed", o.seed, "Master seed (overrides the config)");
  cmd->add_option("--threads", o.threads, "Worker thread cap")->check(CLI::PositiveNumber);
  cmd->add_option("--out", o.out, "Output directory (overrides the config)");
}

}  // namespace

int main(int argc, char** argv)
{
  CLI::App app{"Topic-model surprise analysis of reading orders"};
  app.require_subcommand(1);

  Overrides o;
  std::vector<std::pair<CLI::App*, forage::Stage>> stages;
  for (auto [stage, help] : {std::pair{forage::Stage::prepare, "Tokenize, filter and encode the manifest"},
                             {forage::Stage::train, "Train one topic model per configured k"},
                             {forage::Stage::measure, "Write document distributions and surprise series"},
                             {forage::Stage::null_model, "Publication-constrained null ensemble and p-values"},
                             {forage::Stage::epochs, "Epoch segmentation with AIC model selection"},
                             {forage::Stage::fit, "Query-sample writings against the reading model"},
                             {forage::Stage::compare, "Align topics between trained models"},
                             {forage::Stage::pipeline, "Run every stage in order"}}) {
    auto* cmd = app.add_subcommand(forage::to_string(stage), help);
    add_common(cmd, o);
    stages.emplace_back(cmd, stage);
  }

  forage::SynthConfig synth;
  std::string synth_out;
  std::uint64_t synth_pipeline_seed = 20240601;
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic planted-topic fixture corpus and config");
  synth_cmd->add_option("--out", synth_out, "Fixture directory")->required();
  synth_cmd->add_option("--seed", synth.seed, "Generator seed");
  synth_cmd->add_option("--pipeline-seed", synth_pipeline_seed, "Seed written into the fixture config");
  synth_cmd->add_option("--documents", synth.documents, "Documents in the reading order");
  synth_cmd->add_option("--topics", synth.topics, "Planted topics");
  synth_cmd->add_option("--doc-length", synth.doc_length, "Tokens per document");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (synth_cmd->parsed()) {
      const auto corpus = forage::make_synth_corpus(synth);
      forage::write_synth_fixture(corpus, synth_out, synth_pipeline_seed);
      std::cerr << "synth: " << corpus.documents.size() << " documents, planted break at position "
                << corpus.break_position << '\n';
      return 0;
    }
    for (const auto& [cmd, stage] : stages) {
      if (!cmd->parsed())
        continue;
      auto config = forage::load_config(o.config);
      if (o.seed)
        config.seed = o.seed;
      if (o.threads)
        config.threads = *o.threads;
      if (!o.out.empty())
        config.output_dir = o.out;
      forage::run_stage(stage, config, std::cerr);
    }
  } catch (const forage::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const forage::MissingArtifact& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return forage::exit_code(e);
  }
  return 0;
}
