// Few-shot sampling protocol, experiment matrix runner, aggregation and
// reporting.
//
// Sampling uses a master seed separate from training seeds, so every regime
// and design sees the identical few-shot draw for a given (corpus, k,
// sample_index). The record store is append-only JSONL; completed config
// hashes are skipped on resume.
#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <tuple>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "oietd/checkpoint.hpp"
#include "oietd/corpus.hpp"
#include "oietd/hash.hpp"
#include "oietd/model.hpp"
#include "oietd/oie_post.hpp"
#include "oietd/regimes.hpp"
#include "oietd/rng.hpp"

namespace oietd {

struct FewShotSample {
  std::string target_corpus;
  int shots = 0;
  int sample_index = 0;
  std::vector<std::string> sentence_ids;
};

// k distinct trigger-containing train sentences, a pure function of
// (corpus, k, sample_index, master_seed). Ids come out in canonical (input)
// order.
inline FewShotSample draw_fewshot(const Corpus& corpus, int k, int sample_index,
                                  std::uint64_t master_seed) {
  std::vector<const Sentence*> pool;
  for (const auto& s : corpus.sentences)
    if (s.split == Split::kTrain && s.has_trigger()) pool.push_back(&s);
  if (static_cast<int>(pool.size()) < k)
    throw DataError("draw_fewshot: trigger-containing pool has " +
                    std::to_string(pool.size()) + " sentences, need " + std::to_string(k));
  Rng rng(mix_seed(master_seed, corpus.name, k, sample_index));
  auto chosen = rng.sample_without_replacement(pool.size(), static_cast<std::size_t>(k));
  std::sort(chosen.begin(), chosen.end());
  FewShotSample out;
  out.target_corpus = corpus.name;
  out.shots = k;
  out.sample_index = sample_index;
  for (auto idx : chosen) out.sentence_ids.push_back(pool[idx]->sentence_id);
  return out;
}

struct RunRecord {
  std::string config_hash;
  std::string regime;  // regime name, or "zero_shot"
  std::string design;
  std::string extractor;
  int shots = 0;
  std::uint64_t seed = 0;
  int sample_index = 0;
  EvalResult eval;
  double wall_time_s = 0.0;
  int selected_epoch = -1;
  nlohmann::json overrides = nlohmann::json::object();

  nlohmann::json to_json() const {
    return {{"config_hash", config_hash},
            {"regime", regime},
            {"design", design},
            {"extractor", extractor},
            {"shots", shots},
            {"seed", seed},
            {"sample_index", sample_index},
            {"p", eval.precision},
            {"r", eval.recall},
            {"f1", eval.f1},
            {"tp", eval.tp},
            {"fp", eval.fp},
            {"fn", eval.fn},
            {"wall_time_s", wall_time_s},
            {"selected_epoch", selected_epoch},
            {"overrides", overrides}};
  }

  static RunRecord from_json(const nlohmann::json& j) {
    RunRecord r;
    r.config_hash = j.at("config_hash").get<std::string>();
    r.regime = j.at("regime").get<std::string>();
    r.design = j.at("design").get<std::string>();
    r.extractor = j.value("extractor", std::string("other"));
    r.shots = j.at("shots").get<int>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.sample_index = j.at("sample_index").get<int>();
    r.eval.precision = j.at("p").get<double>();
    r.eval.recall = j.at("r").get<double>();
    r.eval.f1 = j.at("f1").get<double>();
    r.eval.tp = j.value("tp", 0L);
    r.eval.fp = j.value("fp", 0L);
    r.eval.fn = j.value("fn", 0L);
    r.wall_time_s = j.value("wall_time_s", 0.0);
    r.selected_epoch = j.value("selected_epoch", -1);
    r.overrides = j.value("overrides", nlohmann::json::object());
    return r;
  }
};

// Append-only JSONL record store with atomic appends.
class RecordStore {
 public:
  explicit RecordStore(std::string path) : path_(std::move(path)) {
    if (std::filesystem::exists(path_)) {
      std::ifstream in(path_);
      std::string line;
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        records_.push_back(RunRecord::from_json(nlohmann::json::parse(line)));
        hashes_.insert(records_.back().config_hash);
      }
    }
  }

  bool contains(const std::string& config_hash) const {
    std::lock_guard<std::mutex> lock(mu_);
    return hashes_.count(config_hash) > 0;
  }

  void append(const RunRecord& record) {
    std::lock_guard<std::mutex> lock(mu_);
    if (hashes_.count(record.config_hash)) return;
    std::ofstream out(path_, std::ios::app);
    out << record.to_json().dump() << "\n";
    out.flush();
    records_.push_back(record);
    hashes_.insert(record.config_hash);
  }

  std::vector<RunRecord> records() const {
    std::lock_guard<std::mutex> lock(mu_);
    return records_;
  }

 private:
  std::string path_;
  mutable std::mutex mu_;
  std::vector<RunRecord> records_;
  std::unordered_set<std::string> hashes_;
};

// ---------------------------------------------------------------------------
// Aggregation and reporting

struct CellAggregate {
  std::string regime;
  std::string design;
  int shots = 0;
  double mean_f1 = 0.0;
  double sd_f1 = 0.0;
  int n_runs = 0;
  int n_expected = 0;
  bool partial = false;
};

inline std::vector<CellAggregate> aggregate(const std::vector<RunRecord>& records,
                                            int n_seeds = 3, int n_samples = 5) {
  if (records.empty()) throw DataError("aggregate: empty record set");
  std::map<std::tuple<std::string, std::string, int>, std::vector<double>> cells;
  for (const auto& r : records)
    cells[{r.regime, r.design, r.shots}].push_back(r.eval.f1);
  std::vector<CellAggregate> out;
  for (const auto& [key, f1s] : cells) {
    CellAggregate c;
    std::tie(c.regime, c.design, c.shots) = key;
    c.n_runs = static_cast<int>(f1s.size());
    c.n_expected = c.shots == 0 ? n_seeds : n_seeds * n_samples;
    c.partial = c.n_runs < c.n_expected;
    double sum = 0.0;
    for (double v : f1s) sum += v;
    c.mean_f1 = sum / static_cast<double>(f1s.size());
    double sq = 0.0;
    for (double v : f1s) sq += (v - c.mean_f1) * (v - c.mean_f1);
    c.sd_f1 = f1s.size() > 1 ? std::sqrt(sq / static_cast<double>(f1s.size() - 1)) : 0.0;
    out.push_back(std::move(c));
  }
  return out;
}

inline std::string report_tsv(const std::vector<CellAggregate>& cells) {
  std::string out = "regime\tshots\tdesign\tmean_f1\tsd_f1\tn_runs\tpartial\n";
  for (const auto& c : cells) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%s\t%d\t%s\t%.6f\t%.6f\t%d\t%s\n", c.regime.c_str(),
                  c.shots, c.design.c_str(), c.mean_f1, c.sd_f1, c.n_runs,
                  c.partial ? "yes" : "no");
    out += buf;
  }
  return out;
}

// Markdown table mirroring the regimes-by-shots rows and designs-as-columns
// layout of the main results table.
inline std::string report_markdown(const std::vector<CellAggregate>& cells) {
  std::set<std::string> designs;
  std::map<std::pair<std::string, int>, std::map<std::string, const CellAggregate*>> rows;
  for (const auto& c : cells) {
    designs.insert(c.design);
    rows[{c.regime, c.shots}][c.design] = &c;
  }
  std::string out = "| Regime | Shots |";
  for (const auto& d : designs) out += " " + d + " |";
  out += "\n|---|---|";
  for (std::size_t i = 0; i < designs.size(); ++i) out += "---|";
  out += "\n";
  for (const auto& [key, by_design] : rows) {
    out += "| " + key.first + " | " + std::to_string(key.second) + " |";
    for (const auto& d : designs) {
      auto it = by_design.find(d);
      if (it == by_design.end()) {
        out += " - |";
      } else {
        char buf[64];
        std::snprintf(buf, sizeof(buf), " %.3f%s |", it->second->mean_f1,
                      it->second->partial ? "*" : "");
        out += buf;
      }
    }
    out += "\n";
  }
  return out;
}

inline std::string plot_csv(const std::vector<CellAggregate>& cells) {
  std::string out = "regime,design,shots,mean_f1,sd_f1\n";
  for (const auto& c : cells) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%s,%s,%d,%.6f,%.6f\n", c.regime.c_str(),
                  c.design.c_str(), c.shots, c.mean_f1, c.sd_f1);
    out += buf;
  }
  return out;
}

// F1-vs-shots curves, one panel per regime, ordinal x-axis.
inline std::string plot_svg(const std::vector<CellAggregate>& cells) {
  std::set<std::string> regimes, designs;
  std::set<int> shot_set;
  for (const auto& c : cells) {
    regimes.insert(c.regime);
    designs.insert(c.design);
    shot_set.insert(c.shots);
  }
  const std::vector<int> shots(shot_set.begin(), shot_set.end());
  const std::vector<std::string> design_list(designs.begin(), designs.end());
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};

  const int pw = 320, ph = 240, margin = 44;
  const int width = pw * static_cast<int>(regimes.size());
  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
                    std::to_string(width) + "\" height=\"" + std::to_string(ph + 40) + "\">\n";
  int panel = 0;
  for (const auto& regime : regimes) {
    const int x0 = panel * pw + margin, y0 = ph - margin;
    const int x1 = (panel + 1) * pw - 16, y1 = 16;
    svg += "<text x=\"" + std::to_string((x0 + x1) / 2) + "\" y=\"12\" text-anchor=\"middle\" "
           "font-size=\"12\">" + regime + "</text>\n";
    svg += "<line x1=\"" + std::to_string(x0) + "\" y1=\"" + std::to_string(y0) + "\" x2=\"" +
           std::to_string(x1) + "\" y2=\"" + std::to_string(y0) + "\" stroke=\"black\"/>\n";
    svg += "<line x1=\"" + std::to_string(x0) + "\" y1=\"" + std::to_string(y0) + "\" x2=\"" +
           std::to_string(x0) + "\" y2=\"" + std::to_string(y1) + "\" stroke=\"black\"/>\n";
    auto sx = [&](std::size_t i) {
      return shots.size() > 1
                 ? x0 + static_cast<double>(i) * (x1 - x0) / static_cast<double>(shots.size() - 1)
                 : 0.5 * (x0 + x1);
    };
    auto sy = [&](double f1) { return y0 - f1 * (y0 - y1); };
    for (std::size_t i = 0; i < shots.size(); ++i) {
      svg += "<text x=\"" + std::to_string(sx(i)) + "\" y=\"" + std::to_string(y0 + 14) +
             "\" text-anchor=\"middle\" font-size=\"10\">" + std::to_string(shots[i]) +
             "</text>\n";
    }
    for (std::size_t d = 0; d < design_list.size(); ++d) {
      std::string points;
      for (std::size_t i = 0; i < shots.size(); ++i) {
        for (const auto& c : cells) {
          if (c.regime == regime && c.design == design_list[d] && c.shots == shots[i]) {
            points += std::to_string(sx(i)) + "," + std::to_string(sy(c.mean_f1)) + " ";
          }
        }
      }
      if (!points.empty()) {
        svg += "<polyline fill=\"none\" stroke=\"" + std::string(colors[d % 5]) +
               "\" stroke-width=\"1.5\" points=\"" + points + "\"/>\n";
      }
      if (panel == 0) {
        svg += "<text x=\"" + std::to_string(x0 + 4) + "\" y=\"" +
               std::to_string(y1 + 12 + 12 * static_cast<int>(d)) + "\" font-size=\"10\" fill=\"" +
               colors[d % 5] + "\">" + design_list[d] + "</text>\n";
      }
    }
    ++panel;
  }
  svg += "</svg>\n";
  return svg;
}

// ---------------------------------------------------------------------------
// Matrix runner

struct MatrixSpec {
  std::vector<ModelDesign> designs;
  std::vector<Regime> regimes;
  std::vector<int> shot_levels;          // 0 entries become regime-less zero-shot runs
  std::vector<std::uint64_t> seeds{0, 1, 2};
  int n_samples = 5;
  std::uint64_t master_seed = 12345;
  int workers = 1;
};

// Drives full runs against prepared corpora. The source/target corpora must
// already carry relation spans for multi-task designs.
class ExperimentRunner {
 public:
  ExperimentRunner(Corpus source, Corpus target, RegimeConfig base_config,
                   std::string work_dir, Extractor extractor = Extractor::kOther)
      : source_(std::move(source)),
        target_(std::move(target)),
        base_(std::move(base_config)),
        work_dir_(std::move(work_dir)),
        extractor_(extractor) {
    std::filesystem::create_directories(work_dir_);
    std::filesystem::create_directories(work_dir_ + "/checkpoints");
    tokenizer_.vocab_size = base_.encoder.vocab_size;
    prepare_inputs();
  }

  const SubwordTokenizer& tokenizer() const { return tokenizer_; }

  nlohmann::json cell_config(const std::string& regime, ModelDesign design, int shots,
                             std::uint64_t seed, int sample_index,
                             std::uint64_t master_seed) const {
    return {{"regime", regime},
            {"design", to_string(design)},
            {"shots", shots},
            {"seed", seed},
            {"sample_index", sample_index},
            {"master_seed", master_seed},
            {"source", source_.name},
            {"target", target_.name},
            {"extractor", to_string(extractor_)},
            {"epochs", base_.epochs},
            {"batch_size", base_.batch_size},
            {"lr", base_.lr},
            {"lr_decay_factor", base_.lr_decay_factor},
            {"grad_clip", base_.grad_clip},
            {"mlm", base_.mlm},
            {"implicit_d", base_.implicit_d},
            {"lr_e", base_.lr_e},
            {"encoder_vocab", base_.encoder.vocab_size},
            {"encoder_hidden", base_.encoder.hidden_size}};
  }

  static std::string config_hash_of(const nlohmann::json& config) {
    return hash_hex(fnv1a(config.dump()));
  }

  std::shared_ptr<Encoder> make_encoder(std::uint64_t seed) const {
    return std::make_shared<ToyEncoder>(base_.encoder, mix_seed(seed, "encoder"));
  }

  std::unique_ptr<ModelBundle> make_bundle(ModelDesign design, std::uint64_t seed,
                                           int implicit_d) const {
    auto bundle = std::make_unique<ModelBundle>(design, make_encoder(seed),
                                                design == ModelDesign::kImplicit ? implicit_d : 0,
                                                base_.mlm, mix_seed(seed, "bundle"));
    if (design == ModelDesign::kImplicit) bundle->set_rel_embed_lr(base_.lr_e);
    return bundle;
  }

  // Source checkpoint per (design, seed); trained on demand and cached on
  // disk for transfer regimes and zero-shot evaluation.
  std::string source_checkpoint(ModelDesign design, std::uint64_t seed) {
    const int d = base_.implicit_d >= 0 ? base_.implicit_d : 300;
    nlohmann::json cfg = cell_config("source", design, -1, seed, -1, 0);
    const std::string hash = config_hash_of(cfg);
    const std::string path = work_dir_ + "/checkpoints/source-" + hash + ".ckpt";
    {
      std::lock_guard<std::mutex> lock(ckpt_mu_);
      if (std::filesystem::exists(path)) return path;
    }
    auto bundle = make_bundle(design, seed, d);
    RegimeConfig config = base_;
    config.seed = seed;
    const TrainOutcome outcome = train_on_source(
        *bundle, config, source_train_, source_valid_,
        base_.mlm ? target_train_ : std::vector<ModelInput>{});
    CheckpointMeta meta;
    meta.config_hash = hash;
    meta.source_valid_f1 = outcome.selection.selected_f1;
    meta.selected_epoch = outcome.selection.selected_epoch;
    std::lock_guard<std::mutex> lock(ckpt_mu_);
    if (!std::filesystem::exists(path)) save_checkpoint(path, *bundle, meta);
    return path;
  }

  RunRecord run_cell(const std::string& regime_name, ModelDesign design, int shots,
                     std::uint64_t seed, int sample_index, std::uint64_t master_seed) {
    const auto t0 = std::chrono::steady_clock::now();
    RunRecord record;
    record.regime = regime_name;
    record.design = to_string(design);
    record.extractor = to_string(extractor_);
    record.shots = shots;
    record.seed = seed;
    record.sample_index = sample_index;
    const nlohmann::json cfg =
        cell_config(regime_name, design, shots, seed, sample_index, master_seed);
    record.config_hash = config_hash_of(cfg);
    if (base_.lr_overridden) record.overrides["lr"] = base_.lr;
    if (base_.epochs_overridden) record.overrides["epochs"] = base_.epochs;

    RegimeConfig config = base_;
    config.design = design;
    config.seed = seed;
    config.shots = shots;
    config.sample_index = sample_index;

    if (regime_name == "zero_shot") {
      const auto loaded = load_checkpoint(source_checkpoint(design, seed));
      record.eval = zero_shot_eval(*loaded.bundle, target_test_);
      record.selected_epoch = loaded.meta.selected_epoch;
    } else {
      config.regime = regime_from_string(regime_name);
      const FewShotSample sample = draw_fewshot(target_, shots, sample_index, master_seed);
      std::vector<ModelInput> fewshot;
      for (const auto& id : sample.sentence_ids) fewshot.push_back(target_inputs_.at(id));

      std::unique_ptr<ModelBundle> bundle;
      EpochSelection selection;
      switch (config.regime) {
        case Regime::kInDomain: {
          bundle = make_bundle(design, seed, base_.implicit_d >= 0 ? base_.implicit_d : 10);
          selection =
              finetune_on_fewshot(*bundle, config, fewshot, target_valid_, target_train_)
                  .selection;
          break;
        }
        case Regime::kJointTraining: {
          bundle = make_bundle(design, seed, base_.implicit_d >= 0 ? base_.implicit_d : 300);
          selection =
              train_joint(*bundle, config, source_train_, fewshot, source_valid_).selection;
          break;
        }
        case Regime::kJointTransfer: {
          auto loaded = load_checkpoint(source_checkpoint(design, seed));
          bundle = std::move(loaded.bundle);
          if (design == ModelDesign::kImplicit) bundle->set_rel_embed_lr(base_.lr_e);
          selection =
              train_joint(*bundle, config, source_train_, fewshot, source_valid_).selection;
          break;
        }
        case Regime::kSequentialTransfer: {
          auto loaded = load_checkpoint(source_checkpoint(design, seed));
          bundle = std::move(loaded.bundle);
          if (design == ModelDesign::kImplicit) bundle->set_rel_embed_lr(base_.lr_e);
          selection =
              finetune_on_fewshot(*bundle, config, fewshot, target_valid_, target_train_)
                  .selection;
          break;
        }
      }
      record.eval = evaluate_td(*bundle, target_test_);
      record.selected_epoch = selection.selected_epoch;
    }
    record.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return record;
  }

  // Executes every cell of the matrix, skipping config hashes already in the
  // store. Independent runs may execute concurrently.
  void run_matrix(const MatrixSpec& spec, RecordStore& store) {
    struct Cell {
      std::string regime;
      ModelDesign design;
      int shots;
      std::uint64_t seed;
      int sample_index;
    };
    std::vector<Cell> cells;
    for (ModelDesign design : spec.designs) {
      for (std::uint64_t seed : spec.seeds) {
        if (std::find(spec.shot_levels.begin(), spec.shot_levels.end(), 0) !=
            spec.shot_levels.end())
          cells.push_back({"zero_shot", design, 0, seed, 0});
        for (Regime regime : spec.regimes) {
          for (int shots : spec.shot_levels) {
            if (shots == 0) continue;
            for (int sample = 0; sample < spec.n_samples; ++sample)
              cells.push_back({to_string(regime), design, shots, seed, sample});
          }
        }
      }
    }

    // Transfer regimes need the source checkpoints; build them up front so
    // concurrent workers only read.
    const bool needs_source =
        std::find_if(cells.begin(), cells.end(), [](const Cell& c) {
          return c.regime == "zero_shot" || c.regime == "joint_transfer" ||
                 c.regime == "sequential_transfer";
        }) != cells.end();
    if (needs_source)
      for (ModelDesign design : spec.designs)
        for (std::uint64_t seed : spec.seeds) source_checkpoint(design, seed);

    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= cells.size()) return;
        const Cell& c = cells[i];
        const std::string hash = config_hash_of(
            cell_config(c.regime, c.design, c.shots, c.seed, c.sample_index, spec.master_seed));
        if (store.contains(hash)) continue;
        store.append(run_cell(c.regime, c.design, c.shots, c.seed, c.sample_index,
                              spec.master_seed));
      }
    };
    const int n_workers = std::max(1, spec.workers);
    if (n_workers == 1) {
      worker();
    } else {
      std::vector<std::thread> threads;
      for (int i = 0; i < n_workers; ++i) threads.emplace_back(worker);
      for (auto& t : threads) t.join();
    }
  }

  const std::vector<ModelInput>& source_train() const { return source_train_; }
  const std::vector<ModelInput>& target_test() const { return target_test_; }

 private:
  void prepare_inputs() {
    for (const auto& s : source_.sentences) {
      ModelInput in = make_model_input(s, tokenizer_);
      if (s.split == Split::kTrain) source_train_.push_back(in);
      if (s.split == Split::kValid) source_valid_.push_back(in);
    }
    for (const auto& s : target_.sentences) {
      ModelInput in = make_model_input(s, tokenizer_);
      target_inputs_[s.sentence_id] = in;
      if (s.split == Split::kTrain) target_train_.push_back(in);
      if (s.split == Split::kValid) target_valid_.push_back(in);
      if (s.split == Split::kTest) target_test_.push_back(in);
    }
  }

  Corpus source_, target_;
  RegimeConfig base_;
  std::string work_dir_;
  Extractor extractor_;
  SubwordTokenizer tokenizer_;
  std::vector<ModelInput> source_train_, source_valid_;
  std::vector<ModelInput> target_train_, target_valid_, target_test_;
  std::map<std::string, ModelInput> target_inputs_;
  std::mutex ckpt_mu_;
};

}  // namespace oietd
