#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <sys/wait.h>
#include <unistd.h>

#include "forage/pipeline.hpp"
#include "forage/synth.hpp"

using namespace forage;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TempDir
{
  fs::path path;
  explicit TempDir(const std::string& tag)
  {
    path = fs::temp_directory_path() / ("forage_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

json minimal() { return {{"manifest", "m.jsonl"}, {"seed", 1}}; }

std::string field_of(const json& j)
{
  try {
    config_from_json(j);
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "";
}

std::string slurp(const fs::path& p)
{
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::map<std::string, std::string> tree(const fs::path& root)
{
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file())
      out[fs::relative(e.path(), root).string()] = slurp(e.path());
  return out;
}

PipelineConfig small_fixture(const fs::path& dir)
{
  SynthConfig sc;
  sc.documents = 60;
  sc.topics = 4;
  sc.words_per_topic = 20;
  sc.doc_length = 80;
  sc.seed = 5;
  write_synth_fixture(make_synth_corpus(sc), dir, 99);
  auto c = load_config(dir / "config.json");
  c.k_values = {4, 5};
  c.iterations = 60;
  c.permutations = 100;
  c.fit_samples = 4;
  c.fit_iterations = 20;
  c.epoch_modes = {SurpriseSpec::t2t()};
  return c;
}

int run_cli(const std::string& args)
{
  const std::string cmd = std::string(FORAGE_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("config defaults")
{
  const auto c = config_from_json(minimal());
  CHECK(c.k_values == std::vector<std::size_t>{80, 200});
  CHECK(c.alpha == 0.1);
  CHECK(c.beta == 0.01);
  CHECK(c.permutations == 1000);
  CHECK(c.primary_k() == 80);
  CHECK(c.seed == 1u);
}

TEST_CASE("config errors name the offending field")
{
  auto j = minimal();
  j["training"] = {{"k", {10, 0}}};
  CHECK(field_of(j) == "training.k[1]");

  j = minimal();
  j["training"] = {{"k", {10, 10}}};
  CHECK(field_of(j) == "training.k[1]");

  j = minimal();
  j["training"] = {{"kk", 3}};
  CHECK(field_of(j) == "training.kk");

  j = minimal();
  j["colour"] = "red";
  CHECK(field_of(j) == "colour");

  j = minimal();
  j.erase("manifest");
  CHECK(field_of(j) == "manifest");

  j = minimal();
  j["measure"] = {{"modes", {"T2Q"}}};
  CHECK(field_of(j).rfind("measure.modes", 0) == 0);

  j = minimal();
  j["training"] = {{"k", {10}}};
  j["measure"] = {{"k", 11}};
  CHECK(field_of(j) == "measure.k");

  j = minimal();
  j["compare"] = {{"strategy", "hungarian"}};
  CHECK(field_of(j) == "compare.strategy");

  j = minimal();
  j["compare"] = {{"adversarial", {{"patience", 0}}}};
  CHECK(field_of(j) == "compare.adversarial.patience");

  j = minimal();
  j["compare"] = {{"adversarial", {{"offspring", 12}}}};
  CHECK(config_from_json(j).adversarial.offspring == 12);

  j = minimal();
  j["threads"] = 0;
  CHECK(field_of(j) == "threads");
}

TEST_CASE("config hash ignores output location and threads")
{
  auto a = config_from_json(minimal());
  auto b = a;
  b.output_dir = "elsewhere";
  b.threads = 8;
  CHECK(config_hash(a) == config_hash(b));
  b.beta = 0.02;
  CHECK(config_hash(a) != config_hash(b));
}

TEST_CASE("stage names")
{
  for (auto s : {Stage::prepare, Stage::train, Stage::measure, Stage::null_model, Stage::epochs, Stage::fit,
                 Stage::compare, Stage::pipeline})
    CHECK(parse_stage(to_string(s)) == s);
  CHECK_THROWS(parse_stage("report"));
}

TEST_CASE("exit codes")
{
  CHECK(exit_code(ConfigError("seed", "required")) == 1);
  CHECK(exit_code(FormatError("bad")) == 1);
  CHECK(exit_code(InvalidArgument("bad")) == 1);
  CHECK(exit_code(MissingArtifact("measure/measure.json", "measure")) == 2);
  CHECK(exit_code(NumericalError("degenerate")) == 3);
}

TEST_CASE("stages require their inputs and a seed")
{
  TempDir tmp("stages");
  auto c = small_fixture(tmp.path);
  c.output_dir = tmp.path / "fresh";
  std::ostringstream log;
  try {
    run_stage(Stage::null_model, c, log);
    FAIL("expected a missing artifact");
  } catch (const MissingArtifact& e) {
    CHECK(e.artifact() == "measure/measure.json");
  }

  c.seed.reset();
  try {
    run_stage(Stage::prepare, c, log);
    FAIL("expected a config error");
  } catch (const ConfigError& e) {
    CHECK(e.field() == "seed");
  }
}

TEST_CASE("full pipeline is deterministic and labelled")
{
  TempDir tmp("pipeline");
  auto c = small_fixture(tmp.path);
  std::ostringstream log;
  c.output_dir = tmp.path / "run1";
  run_stage(Stage::pipeline, c, log);
  c.output_dir = tmp.path / "run2";
  c.threads = 4;
  run_stage(Stage::pipeline, c, log);

  const auto one = tree(tmp.path / "run1");
  const auto two = tree(tmp.path / "run2");
  for (const auto* name : {"measure/series_t2t.csv", "null/null.json", "null/permutations.csv", "epochs/epochs.json",
                           "epochs/t2t_segments.csv", "compare/compare.json", "fit/fit.json"})
    CHECK_MESSAGE(one.count(name) == 1, name);
  CHECK(one.size() == two.size());
  for (const auto& [name, bytes] : one) {
    REQUIRE(two.count(name) == 1);
    CHECK_MESSAGE(two.at(name) == bytes, name);
  }

  std::ostringstream header;
  header << "# forage format_version=1 config_hash=";
  for (const auto& [name, bytes] : one) {
    if (fs::path(name).extension() == ".csv") {
      CHECK_MESSAGE(bytes.rfind(header.str(), 0) == 0, name);
      CHECK_MESSAGE(bytes.find("seed=" + std::to_string(*c.seed) + "\n") != std::string::npos, name);
    } else if (fs::path(name).extension() == ".json") {
      const auto j = json::parse(bytes);
      CHECK_MESSAGE(j.at("provenance").at("seed") == *c.seed, name);
    }
  }

  const auto null = json::parse(one.at("null/null.json"));
  const double p = null.at("t2t").at("p_value").get<double>();
  CHECK(p > 0.0);
  CHECK(p <= 1.0);
  const auto epochs = json::parse(one.at("epochs/epochs.json"));
  CHECK(epochs.dump().find("aic") != std::string::npos);
}

TEST_CASE("command line exit codes")
{
  TempDir tmp("cli");
  const auto fx = tmp.path / "fx";
  CHECK(run_cli("synth --out " + fx.string() + " --documents 40 --topics 3 --seed 2") == 0);
  CHECK(run_cli("null --config " + (fx / "config.json").string()) == 2);
  CHECK(run_cli("prepare --config " + (tmp.path / "absent.json").string()) == 1);
  CHECK(run_cli("frobnicate") == 1);
  {
    std::ofstream bad(tmp.path / "bad.json");
    bad << R"({"manifest": "m.jsonl", "seed": 1, "training": {"k": [0]}})";
  }
  CHECK(run_cli("prepare --config " + (tmp.path / "bad.json").string()) == 1);
  CHECK(run_cli("prepare --config " + (fx / "config.json").string()) == 0);
  CHECK(fs::exists(fx / "out" / "corpus.json"));
}
