#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "oietd/cli.hpp"
#include "oietd/corpus.hpp"

using namespace oietd;
namespace fs = std::filesystem;

namespace {

struct CliFixture {
  fs::path dir;
  CliFixture() : dir(fs::temp_directory_path() / "oietd_cli_test") {
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~CliFixture() { fs::remove_all(dir); }

  std::string path(const std::string& name) const { return (dir / name).string(); }

  std::string write_config(const std::string& name, const nlohmann::json& config) const {
    const std::string p = path(name);
    std::ofstream(p) << config.dump(2);
    return p;
  }

  int run(std::vector<std::string> args, std::string* out_text = nullptr,
          std::string* err_text = nullptr) const {
    std::ostringstream out, err;
    const int code = cli::dispatch(args, out, err);
    if (out_text) *out_text = out.str();
    if (err_text) *err_text = err.str();
    return code;
  }
};

nlohmann::json tiny_training() {
  return {{"training", {{"epochs", 1}}},
          {"encoder", {{"vocab_size", 128}, {"hidden_size", 8}}}};
}

nlohmann::json tiny_synth_section(const CliFixture& fx) {
  return {{"n_train", 30},     {"n_valid", 10},
          {"n_test", 10},      {"seed", 3},
          {"output_source", fx.path("source.jsonl")},
          {"output_target", fx.path("target.jsonl")}};
}

}  // namespace

TEST_CASE("help and usage errors") {
  CliFixture fx;
  std::string out;
  CHECK(fx.run({"--help"}, &out) == 0);
  CHECK(out.find("stats") != std::string::npos);
  CHECK(out.find("run-matrix") != std::string::npos);
  CHECK(fx.run({"no-such-command"}) == 2);
  CHECK(fx.run({}) == 2);
}

TEST_CASE("config errors use a dedicated exit code") {
  CliFixture fx;
  std::string err;
  // Unknown config key.
  const std::string cfg = fx.write_config("bad.json", {{"training", {{"bogus", 1}}}});
  CHECK(fx.run({"stats", "-c", cfg}, nullptr, &err) == 3);
  CHECK(err.find("config") != std::string::npos);
  // Missing required key.
  const std::string cfg2 = fx.write_config("empty.json", nlohmann::json::object());
  CHECK(fx.run({"stats", "-c", cfg2}, nullptr, &err) == 3);
  // Missing config file.
  CHECK(fx.run({"stats", "-c", fx.path("nope.json")}, nullptr, &err) == 3);
}

TEST_CASE("stats prints the per-split table") {
  CliFixture fx;
  {
    std::ofstream c(fx.path("corpus.jsonl"));
    c << R"({"sentence_id":"a","tokens":["x","y"],"trigger_spans":[[0,1]],"split":"train"})" << "\n"
      << R"({"sentence_id":"b","tokens":["x"],"split":"train"})" << "\n"
      << R"({"sentence_id":"c","tokens":["z","w"],"relation_spans":[[0,2]],"split":"test"})" << "\n";
  }
  std::string out;
  CHECK(fx.run({"stats", "stats.corpus=" + fx.path("corpus.jsonl")}, &out) == 0);
  CHECK(out.find("split\tn_sent\tn_tr\tn_re\n") == 0);
  CHECK(out.find("train\t2\t1\t0") != std::string::npos);
  CHECK(out.find("valid\t0\t0\t0") != std::string::npos);
  CHECK(out.find("test\t1\t0\t1") != std::string::npos);

  // Parse failures on the corpus file exit with the parse code.
  std::ofstream(fx.path("garbage.jsonl")) << "not json\n";
  CHECK(fx.run({"stats", "stats.corpus=" + fx.path("garbage.jsonl")}) == 4);
}

TEST_CASE("synth writes both domains plus meta sidecars") {
  CliFixture fx;
  nlohmann::json cfg;
  cfg["synth"] = tiny_synth_section(fx);
  const std::string cfg_path = fx.write_config("synth.json", cfg);
  CHECK(fx.run({"synth", "-c", cfg_path}) == 0);
  Corpus src = load_corpus(fx.path("source.jsonl"), CorpusFormat::kCanonicalJsonl);
  Corpus tgt = load_corpus(fx.path("target.jsonl"), CorpusFormat::kCanonicalJsonl);
  CHECK(src.stats.at(Split::kTrain).n_sentences == 30);
  CHECK(tgt.stats.at(Split::kTest).n_sentences == 10);
  REQUIRE(fs::exists(fx.path("source.jsonl.meta.json")));
  nlohmann::json meta;
  std::ifstream(fx.path("source.jsonl.meta.json")) >> meta;
  CHECK(meta.at("command") == "synth");
  CHECK(meta.at("config_hash").get<std::string>().size() == 16);
}

TEST_CASE("postprocess-triples attaches merged relations and dedupes") {
  CliFixture fx;
  {
    std::ofstream c(fx.path("corpus.jsonl"));
    c << R"({"sentence_id":"s0","tokens":["a","b","c","d","e"],"split":"train"})" << "\n"
      << R"({"sentence_id":"dup","tokens":["a","b","c","d","e"],"split":"train"})" << "\n"
      << R"({"sentence_id":"s1","tokens":["p","q","r"],"split":"train"})" << "\n";
  }
  {
    std::ofstream e(fx.path("extractions.jsonl"));
    e << R"({"sentence_id":"s0","subject":[0],"relation":[1,2],"object":[3],"extractor":"minie"})" << "\n"
      << R"({"sentence_id":"s0","subject":[0],"relation":[2,3],"object":[4]})" << "\n"
      << R"({"sentence_id":"s1","subject":[0],"relation":[1],"object":[2],"implicit":true})" << "\n";
  }
  nlohmann::json cfg = {{"postprocess_triples",
                         {{"corpus", fx.path("corpus.jsonl")},
                          {"extractions", fx.path("extractions.jsonl")},
                          {"output", fx.path("clean.jsonl")}}}};
  CHECK(fx.run({"postprocess-triples", "-c", fx.write_config("pp.json", cfg)}) == 0);
  Corpus clean = load_corpus(fx.path("clean.jsonl"), CorpusFormat::kCanonicalJsonl);
  // "dup" shares tokens with "s0" and is dropped by dedupe.
  REQUIRE(clean.sentences.size() == 2);
  CHECK(clean.sentences[0].sentence_id == "s0");
  // Overlapping spans (1,3) and (2,4): equal length, smaller start wins.
  CHECK(clean.sentences[0].relation_spans == std::vector<TokenSpan>{{1, 3}});
  // Implicit extraction discarded: all-O relation tagging.
  CHECK(clean.sentences[1].relation_spans.empty());
  CHECK(fs::exists(fx.path("clean.jsonl.meta.json")));
}

TEST_CASE("evaluate reports strict and token metrics") {
  CliFixture fx;
  {
    std::ofstream g(fx.path("gold.jsonl"));
    g << R"({"sentence_id":"a","tokens":["x","y","z"],"trigger_spans":[[0,2]],"split":"test"})" << "\n";
    std::ofstream p(fx.path("pred.jsonl"));
    p << R"({"sentence_id":"a","tokens":["x","y","z"],"trigger_spans":[[0,2],[2,3]],"split":"test"})" << "\n";
  }
  std::string out;
  CHECK(fx.run({"evaluate", "evaluate.gold=" + fx.path("gold.jsonl"),
                "evaluate.pred=" + fx.path("pred.jsonl"),
                "evaluate.output=" + fx.path("eval.json")},
               &out) == 0);
  nlohmann::json result = nlohmann::json::parse(out);
  CHECK(result.at("strict").at("tp") == 1);
  CHECK(result.at("strict").at("fp") == 1);
  CHECK(result.at("strict").at("fn") == 0);
  CHECK(result.at("strict").at("p").get<double>() == Catch::Approx(0.5));
  CHECK(result.at("strict").at("r").get<double>() == Catch::Approx(1.0));
  CHECK(fs::exists(fx.path("eval.json")));

  // Mismatched corpora are a data error.
  std::ofstream(fx.path("short.jsonl"))
      << R"({"sentence_id":"a","tokens":["x"],"split":"test"})" << "\n";
  CHECK(fx.run({"evaluate", "evaluate.gold=" + fx.path("gold.jsonl"),
                "evaluate.pred=" + fx.path("short.jsonl")}) == 6);
}

TEST_CASE("train-source, transfer, run-matrix, report and plot chain end to end") {
  CliFixture fx;
  // 1. synthesize a domain pair
  nlohmann::json synth_cfg;
  synth_cfg["synth"] = tiny_synth_section(fx);
  REQUIRE(fx.run({"synth", "-c", fx.write_config("synth.json", synth_cfg)}) == 0);

  // 2. train on source
  nlohmann::json train_cfg = tiny_training();
  train_cfg["train_source"] = {{"source", fx.path("source.jsonl")},
                               {"design", "explicit"},
                               {"seed", 0},
                               {"output_checkpoint", fx.path("src.ckpt")},
                               {"metric_log", fx.path("train_log.jsonl")}};
  std::string out;
  REQUIRE(fx.run({"train-source", "-c", fx.write_config("train.json", train_cfg)}, &out) == 0);
  CHECK(out.find("selected epoch") != std::string::npos);
  REQUIRE(fs::exists(fx.path("src.ckpt")));
  REQUIRE(fs::exists(fx.path("train_log.jsonl")));

  // 3. sequential transfer from the checkpoint
  nlohmann::json tr_cfg = tiny_training();
  tr_cfg["transfer"] = {{"regime", "sequential_transfer"},
                        {"design", "explicit"},
                        {"target", fx.path("target.jsonl")},
                        {"checkpoint", fx.path("src.ckpt")},
                        {"shots", 5},
                        {"seed", 0}};
  REQUIRE(fx.run({"transfer", "-c", fx.write_config("tr.json", tr_cfg)}, &out) == 0);
  nlohmann::json result = nlohmann::json::parse(out);
  CHECK(result.at("regime") == "sequential_transfer");
  CHECK(result.at("f1").get<double>() >= 0.0);

  // Design mismatch between config and checkpoint is a config error.
  tr_cfg["transfer"]["design"] = "vanilla";
  CHECK(fx.run({"transfer", "-c", fx.write_config("tr_bad.json", tr_cfg)}) == 3);

  // 4. run a small matrix
  nlohmann::json mx_cfg = tiny_training();
  mx_cfg["run_matrix"] = {{"source", fx.path("source.jsonl")},
                          {"target", fx.path("target.jsonl")},
                          {"designs", {"vanilla"}},
                          {"regimes", {"in_domain", "sequential_transfer"}},
                          {"shots", {0, 5}},
                          {"seeds", {0}},
                          {"n_samples", 1},
                          {"records", fx.path("records.jsonl")},
                          {"work_dir", fx.path("work")}};
  REQUIRE(fx.run({"run-matrix", "--deterministic", "-c",
                  fx.write_config("mx.json", mx_cfg)},
                 &out) == 0);
  CHECK(out.find("records: 3") != std::string::npos);  // 1 zero-shot + 2 regimes x 1 x 1

  // Resume: same invocation adds nothing.
  REQUIRE(fx.run({"run-matrix", "--deterministic", "-c", fx.path("mx.json")}, &out) == 0);
  CHECK(out.find("records: 3") != std::string::npos);

  // 5. report
  nlohmann::json rp_cfg = {{"report",
                            {{"records", fx.path("records.jsonl")},
                             {"output_tsv", fx.path("report.tsv")},
                             {"output_md", fx.path("report.md")},
                             {"n_seeds", 1},
                             {"n_samples", 1}}}};
  REQUIRE(fx.run({"report", "-c", fx.write_config("rp.json", rp_cfg)}, &out) == 0);
  CHECK(out.find("regime\tshots\tdesign") == 0);
  CHECK(fs::exists(fx.path("report.tsv")));
  CHECK(fs::exists(fx.path("report.md")));

  // 6. plot
  nlohmann::json pl_cfg = {{"plot",
                            {{"records", fx.path("records.jsonl")},
                             {"output_csv", fx.path("curves.csv")},
                             {"output_svg", fx.path("curves.svg")},
                             {"n_seeds", 1},
                             {"n_samples", 1}}}};
  REQUIRE(fx.run({"plot", "-c", fx.write_config("pl.json", pl_cfg)}, &out) == 0);
  REQUIRE(fs::exists(fx.path("curves.svg")));
  std::ifstream svg_in(fx.path("curves.svg"));
  std::stringstream svg;
  svg << svg_in.rdbuf();
  CHECK(svg.str().find("<svg") == 0);
}
