// CLI entry point: subcommand dispatch over the unified config schema.
//
// Artifacts that cannot embed the producing config hash inline (JSONL
// corpora, reports, plots) get a sidecar "<output>.meta.json" carrying it.
#pragma once

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "oietd/checkpoint.hpp"
#include "oietd/config.hpp"
#include "oietd/corpus.hpp"
#include "oietd/experiment.hpp"
#include "oietd/oie_post.hpp"
#include "oietd/regimes.hpp"
#include "oietd/synth.hpp"

namespace oietd::cli {

inline void write_meta(const std::string& artifact_path, const EffectiveConfig& config,
                       const std::string& command) {
  nlohmann::json meta = {{"config_hash", config.hash}, {"command", command}};
  write_file_atomic(artifact_path + ".meta.json", meta.dump(2) + "\n");
}

inline std::string require_str(const nlohmann::json& section, const char* key,
                               const std::string& section_name) {
  if (!section.contains(key))
    throw ConfigError("missing required config key: " + section_name + "." + std::string(key));
  return section.at(key).get<std::string>();
}

// stats: Table-1-style (#Sent, #Tr, #Re) per split as TSV.
inline int cmd_stats(const EffectiveConfig& config, std::ostream& out) {
  const auto& s = config.section("stats");
  const std::string path = require_str(s, "corpus", "stats");
  const CorpusFormat format = corpus_format_from_string(
      s.value("format", std::string("canonical-jsonl")));
  Corpus corpus = load_corpus(path, format);
  out << "split\tn_sent\tn_tr\tn_re\n";
  for (Split split : {Split::kTrain, Split::kValid, Split::kTest}) {
    const SplitStats st = corpus.stats.count(split) ? corpus.stats.at(split) : SplitStats{};
    out << to_string(split) << "\t" << st.n_sentences << "\t" << st.n_with_triggers << "\t"
        << st.n_with_relations << "\n";
  }
  return 0;
}

inline int cmd_postprocess_triples(const EffectiveConfig& config) {
  const auto& s = config.section("postprocess_triples");
  Corpus corpus = load_corpus(require_str(s, "corpus", "postprocess_triples"),
                              CorpusFormat::kCanonicalJsonl);
  const auto extractions = load_extractions_file(require_str(s, "extractions", "postprocess_triples"));
  Corpus out = attach_relations(corpus, extractions);
  if (s.value("dedupe", true)) out = dedupe_sentences(out);
  std::ostringstream buf;
  save_canonical_jsonl(out, buf);
  const std::string output = require_str(s, "output", "postprocess_triples");
  write_file_atomic(output, buf.str());
  write_meta(output, config, "postprocess-triples");
  return 0;
}

inline int cmd_synth(const EffectiveConfig& config) {
  const auto& s = config.section("synth");
  const SynthConfig sc = synth_config_from(config);
  const SynthPair pair = generate_pair(sc);
  const std::string out_source = require_str(s, "output_source", "synth");
  const std::string out_target = require_str(s, "output_target", "synth");
  std::ostringstream src, tgt;
  save_canonical_jsonl(pair.source, src);
  save_canonical_jsonl(pair.target, tgt);
  write_file_atomic(out_source, src.str());
  write_file_atomic(out_target, tgt.str());
  write_meta(out_source, config, "synth");
  write_meta(out_target, config, "synth");
  return 0;
}

inline std::vector<ModelInput> inputs_for_split(const Corpus& corpus, Split split,
                                                const SubwordTokenizer& tokenizer) {
  std::vector<ModelInput> out;
  for (const auto& s : corpus.sentences)
    if (s.split == split) out.push_back(make_model_input(s, tokenizer));
  return out;
}

inline int cmd_train_source(const EffectiveConfig& config, std::ostream& out) {
  const auto& s = config.section("train_source");
  Corpus source = load_corpus(require_str(s, "source", "train_source"),
                              CorpusFormat::kCanonicalJsonl);
  RegimeConfig rc = training_config_from(config);
  rc.design = design_from_string(s.value("design", std::string("vanilla")));
  rc.seed = s.value("seed", 0ULL);

  SubwordTokenizer tokenizer;
  tokenizer.vocab_size = rc.encoder.vocab_size;
  const auto train = inputs_for_split(source, Split::kTrain, tokenizer);
  const auto valid = inputs_for_split(source, Split::kValid, tokenizer);

  auto encoder_factory = [&rc]() {
    return std::static_pointer_cast<Encoder>(
        std::make_shared<ToyEncoder>(rc.encoder, mix_seed(rc.seed, "encoder")));
  };

  int implicit_d = rc.implicit_d >= 0 ? rc.implicit_d : 300;
  if (rc.design == ModelDesign::kImplicit && s.value("grid_search", false)) {
    const GridSearchResult grid = grid_search_implicit(rc, train, valid, encoder_factory);
    implicit_d = grid.d;
    rc.lr_e = grid.lr_e;
    out << "grid search selected d=" << grid.d << " lr_e=" << grid.lr_e
        << " (valid F1 " << grid.valid_f1 << ")\n";
  }

  ModelBundle bundle(rc.design, encoder_factory(),
                     rc.design == ModelDesign::kImplicit ? implicit_d : 0, rc.mlm,
                     mix_seed(rc.seed, "bundle"));
  bundle.set_rel_embed_lr(rc.lr_e);

  std::vector<ModelInput> mlm_target;
  if (rc.mlm && s.contains("mlm_target")) {
    Corpus target = load_corpus(s.at("mlm_target").get<std::string>(),
                                CorpusFormat::kCanonicalJsonl);
    mlm_target = inputs_for_split(target, Split::kTrain, tokenizer);
  }

  const TrainOutcome outcome = train_on_source(bundle, rc, train, valid, mlm_target);
  CheckpointMeta meta;
  meta.config_hash = config.hash;
  meta.source_valid_f1 = outcome.selection.selected_f1;
  meta.selected_epoch = outcome.selection.selected_epoch;
  save_checkpoint(require_str(s, "output_checkpoint", "train_source"), bundle, meta);

  if (s.contains("metric_log")) {
    std::string log;
    for (const auto& entry : outcome.metric_log) log += entry.dump() + "\n";
    const std::string log_path = s.at("metric_log").get<std::string>();
    write_file_atomic(log_path, log);
    write_meta(log_path, config, "train-source");
  }
  out << "selected epoch " << outcome.selection.selected_epoch << ", source valid F1 "
      << outcome.selection.selected_f1 << "\n";
  return 0;
}

inline int cmd_transfer(const EffectiveConfig& config, std::ostream& out) {
  const auto& s = config.section("transfer");
  const Regime regime = regime_from_string(require_str(s, "regime", "transfer"));
  RegimeConfig rc = training_config_from(config);
  rc.regime = regime;
  rc.design = design_from_string(s.value("design", std::string("vanilla")));
  rc.seed = s.value("seed", 0ULL);
  rc.shots = s.value("shots", 0);
  rc.sample_index = s.value("sample_index", 0);
  const std::uint64_t master_seed = s.value("master_seed", 12345ULL);

  Corpus target = load_corpus(require_str(s, "target", "transfer"),
                              CorpusFormat::kCanonicalJsonl);
  SubwordTokenizer tokenizer;
  tokenizer.vocab_size = rc.encoder.vocab_size;
  const auto target_train = inputs_for_split(target, Split::kTrain, tokenizer);
  const auto target_valid = inputs_for_split(target, Split::kValid, tokenizer);
  const auto target_test = inputs_for_split(target, Split::kTest, tokenizer);

  const FewShotSample sample = draw_fewshot(target, rc.shots, rc.sample_index, master_seed);
  std::vector<ModelInput> fewshot;
  for (const auto& s2 : target.sentences)
    for (const auto& id : sample.sentence_ids)
      if (s2.sentence_id == id) fewshot.push_back(make_model_input(s2, tokenizer));

  std::unique_ptr<ModelBundle> bundle;
  const bool from_checkpoint =
      regime == Regime::kJointTransfer || regime == Regime::kSequentialTransfer;
  if (from_checkpoint) {
    auto loaded = load_checkpoint(require_str(s, "checkpoint", "transfer"));
    bundle = std::move(loaded.bundle);
    if (bundle->design() != rc.design)
      throw ConfigError("checkpoint design " + to_string(bundle->design()) +
                        " does not match configured design " + to_string(rc.design));
    bundle->set_rel_embed_lr(rc.lr_e);
  } else {
    const int d = rc.implicit_d >= 0 ? rc.implicit_d
                                     : rc.resolved_implicit_d();
    bundle = std::make_unique<ModelBundle>(
        rc.design,
        std::make_shared<ToyEncoder>(rc.encoder, mix_seed(rc.seed, "encoder")),
        rc.design == ModelDesign::kImplicit ? d : 0, rc.mlm, mix_seed(rc.seed, "bundle"));
    bundle->set_rel_embed_lr(rc.lr_e);
  }

  nlohmann::json metric_log = nlohmann::json::array();
  EpochSelection selection;
  if (regime == Regime::kInDomain || regime == Regime::kSequentialTransfer) {
    const TrainOutcome outcome =
        finetune_on_fewshot(*bundle, rc, fewshot, target_valid, target_train);
    metric_log = outcome.metric_log;
    selection = outcome.selection;
  } else {
    Corpus source = load_corpus(require_str(s, "source", "transfer"),
                                CorpusFormat::kCanonicalJsonl);
    const auto source_train = inputs_for_split(source, Split::kTrain, tokenizer);
    const auto source_valid = inputs_for_split(source, Split::kValid, tokenizer);
    const TrainOutcome outcome =
        train_joint(*bundle, rc, source_train, fewshot, source_valid);
    metric_log = outcome.metric_log;
    selection = outcome.selection;
  }

  const EvalResult ev = evaluate_td(*bundle, target_test);
  if (s.contains("output_checkpoint")) {
    CheckpointMeta meta;
    meta.config_hash = config.hash;
    meta.source_valid_f1 = selection.selected_f1;
    meta.selected_epoch = selection.selected_epoch;
    save_checkpoint(s.at("output_checkpoint").get<std::string>(), *bundle, meta);
  }
  if (s.contains("metric_log")) {
    std::string log;
    for (const auto& entry : metric_log) log += entry.dump() + "\n";
    const std::string log_path = s.at("metric_log").get<std::string>();
    write_file_atomic(log_path, log);
    write_meta(log_path, config, "transfer");
  }
  nlohmann::json result = {{"regime", to_string(regime)}, {"design", to_string(rc.design)},
                           {"shots", rc.shots},           {"p", ev.precision},
                           {"r", ev.recall},              {"f1", ev.f1},
                           {"config_hash", config.hash}};
  out << result.dump() << "\n";
  return 0;
}

inline int cmd_run_matrix(const EffectiveConfig& config, bool deterministic,
                          std::ostream& out) {
  const auto& s = config.section("run_matrix");
  Corpus source = load_corpus(require_str(s, "source", "run_matrix"),
                              CorpusFormat::kCanonicalJsonl);
  Corpus target = load_corpus(require_str(s, "target", "run_matrix"),
                              CorpusFormat::kCanonicalJsonl);
  RegimeConfig rc = training_config_from(config);

  MatrixSpec spec;
  for (const auto& d : s.value("designs", std::vector<std::string>{"vanilla"}))
    spec.designs.push_back(design_from_string(d));
  for (const auto& r : s.value("regimes", std::vector<std::string>{"sequential_transfer"}))
    spec.regimes.push_back(regime_from_string(r));
  spec.shot_levels = s.value("shots", std::vector<int>{0, 50});
  spec.seeds = s.value("seeds", std::vector<std::uint64_t>{0, 1, 2});
  spec.n_samples = s.value("n_samples", 5);
  spec.master_seed = s.value("master_seed", 12345ULL);
  spec.workers = deterministic ? 1 : s.value("workers", 1);

  const std::string records_path =
      resolve_record_path(require_str(s, "records", "run_matrix"));
  RecordStore store(records_path);
  ExperimentRunner runner(std::move(source), std::move(target), rc,
                          s.value("work_dir", std::string("matrix-work")),
                          extractor_from_string(s.value("extractor", std::string("other"))));
  runner.run_matrix(spec, store);
  out << "records: " << store.records().size() << " in " << records_path << "\n";
  return 0;
}

inline int cmd_evaluate(const EffectiveConfig& config, std::ostream& out) {
  const auto& s = config.section("evaluate");
  Corpus gold = load_corpus(require_str(s, "gold", "evaluate"), CorpusFormat::kCanonicalJsonl);
  Corpus pred = load_corpus(require_str(s, "pred", "evaluate"), CorpusFormat::kCanonicalJsonl);
  if (gold.sentences.size() != pred.sentences.size())
    throw DataError("evaluate: gold has " + std::to_string(gold.sentences.size()) +
                    " sentences, pred has " + std::to_string(pred.sentences.size()));
  std::vector<TagSequence> gold_tags, pred_tags;
  for (std::size_t i = 0; i < gold.sentences.size(); ++i) {
    const auto& g = gold.sentences[i];
    const auto& p = pred.sentences[i];
    if (g.tokens.size() != p.tokens.size())
      throw DataError("evaluate: token count mismatch at sentence " + g.sentence_id);
    const int n = static_cast<int>(g.tokens.size());
    gold_tags.push_back(encode_iob2(g.trigger_spans, n, TagType::kTrigger));
    pred_tags.push_back(encode_iob2(p.trigger_spans, n, TagType::kTrigger));
  }
  const EvalResult strict = strict_micro_prf(gold_tags, pred_tags);
  const EvalResult token = token_micro_prf(gold_tags, pred_tags);
  nlohmann::json result = {{"strict", {{"p", strict.precision}, {"r", strict.recall},
                                       {"f1", strict.f1}, {"tp", strict.tp},
                                       {"fp", strict.fp}, {"fn", strict.fn}}},
                           {"token", {{"p", token.precision}, {"r", token.recall},
                                      {"f1", token.f1}}},
                           {"config_hash", config.hash}};
  const std::string dumped = result.dump(2) + "\n";
  out << dumped;
  if (s.contains("output")) write_file_atomic(s.at("output").get<std::string>(), dumped);
  return 0;
}

inline int cmd_report(const EffectiveConfig& config, std::ostream& out) {
  const auto& s = config.section("report");
  RecordStore store(resolve_record_path(require_str(s, "records", "report")));
  const auto cells =
      aggregate(store.records(), s.value("n_seeds", 3), s.value("n_samples", 5));
  const std::string tsv = report_tsv(cells);
  out << tsv;
  if (s.contains("output_tsv")) {
    const std::string path = s.at("output_tsv").get<std::string>();
    write_file_atomic(path, tsv);
    write_meta(path, config, "report");
  }
  if (s.contains("output_md")) {
    const std::string path = s.at("output_md").get<std::string>();
    write_file_atomic(path, report_markdown(cells));
    write_meta(path, config, "report");
  }
  return 0;
}

inline int cmd_plot(const EffectiveConfig& config, std::ostream& out) {
  const auto& s = config.section("plot");
  RecordStore store(resolve_record_path(require_str(s, "records", "plot")));
  const auto cells =
      aggregate(store.records(), s.value("n_seeds", 3), s.value("n_samples", 5));
  if (s.contains("output_csv")) {
    const std::string path = s.at("output_csv").get<std::string>();
    write_file_atomic(path, plot_csv(cells));
    write_meta(path, config, "plot");
    out << "wrote " << path << "\n";
  }
  if (s.contains("output_svg")) {
    const std::string path = s.at("output_svg").get<std::string>();
    write_file_atomic(path, plot_svg(cells));
    write_meta(path, config, "plot");
    out << "wrote " << path << "\n";
  }
  return 0;
}

inline int dispatch(const std::vector<std::string>& args, std::ostream& out = std::cout,
                    std::ostream& err = std::cerr) {
  CLI::App app{"OIE-assisted trigger detection transfer toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  bool deterministic = false;

  const char* names[] = {"stats",    "postprocess-triples", "synth",
                         "train-source", "transfer",        "run-matrix",
                         "evaluate", "report",              "plot"};
  std::map<std::string, CLI::App*> subs;
  for (const char* name : names) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("-c,--config", config_path, "JSON config file");
    sub->add_option("overrides", overrides, "key=value config overrides");
    sub->add_flag("--deterministic", deterministic,
                  "single-threaded, bit-reproducible outputs");
    subs[name] = sub;
  }

  // CLI11 wants argv in reverse order without the program name.
  std::vector<std::string> rargs(args.rbegin(), args.rend());
  try {
    app.parse(rargs);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return 0;
    }
    err << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    const EffectiveConfig config = load_effective_config(config_path, overrides);
    for (const auto& [name, sub] : subs) {
      if (!sub->parsed()) continue;
      if (name == "stats") return cmd_stats(config, out);
      if (name == "postprocess-triples") return cmd_postprocess_triples(config);
      if (name == "synth") return cmd_synth(config);
      if (name == "train-source") return cmd_train_source(config, out);
      if (name == "transfer") return cmd_transfer(config, out);
      if (name == "run-matrix") return cmd_run_matrix(config, deterministic, out);
      if (name == "evaluate") return cmd_evaluate(config, out);
      if (name == "report") return cmd_report(config, out);
      if (name == "plot") return cmd_plot(config, out);
    }
    err << "error: no subcommand\n";
    return 2;
  } catch (const ConfigError& e) {
    err << "error: config: " << e.what() << "\n";
    return 3;
  } catch (const ParseError& e) {
    err << "error: parse: " << e.what() << "\n";
    return 4;
  } catch (const SpanOutOfRangeError& e) {
    err << "error: span: " << e.what() << "\n";
    return 5;
  } catch (const DataError& e) {
    err << "error: data: " << e.what() << "\n";
    return 6;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace oietd::cli
