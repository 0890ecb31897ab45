// Configuration schema shared by all CLI subcommands.
//
// One JSON file with per-subcommand sections plus a shared "training"
// section. Unknown keys are errors. The effective config is file plus
// key=value overrides, and its hash is stamped into every artifact.
#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "oietd/encoder.hpp"
#include "oietd/errors.hpp"
#include "oietd/hash.hpp"
#include "oietd/regimes.hpp"
#include "oietd/synth.hpp"

namespace oietd {

inline const std::map<std::string, std::set<std::string>>& config_schema() {
  static const std::map<std::string, std::set<std::string>> schema = {
      {"", {"version", "stats", "postprocess_triples", "synth", "train_source", "transfer",
            "run_matrix", "evaluate", "report", "plot", "training", "encoder"}},
      {"stats", {"corpus", "format"}},
      {"postprocess_triples", {"corpus", "extractions", "output", "dedupe"}},
      {"synth",
       {"vocab_size", "n_train", "n_valid", "n_test", "min_len", "max_len", "trigger_rate",
        "relation_rate", "distractor_rate", "overlap", "vocab_shift", "relation_max_extra",
        "seed", "output_source", "output_target"}},
      {"train_source",
       {"source", "design", "seed", "output_checkpoint", "metric_log", "grid_search",
        "mlm_target"}},
      {"transfer",
       {"regime", "design", "source", "target", "checkpoint", "shots", "sample_index", "seed",
        "master_seed", "output_checkpoint", "metric_log"}},
      {"run_matrix",
       {"source", "target", "designs", "regimes", "shots", "seeds", "n_samples", "master_seed",
        "records", "work_dir", "workers", "extractor"}},
      {"evaluate", {"gold", "pred", "output"}},
      {"report", {"records", "output_tsv", "output_md", "n_seeds", "n_samples"}},
      {"plot", {"records", "output_csv", "output_svg", "n_seeds", "n_samples"}},
      {"training",
       {"epochs", "batch_size", "lr", "lr_decay_factor", "grad_clip", "mlm", "mask_prob",
        "implicit_d", "lr_e"}},
      {"encoder", {"type", "vocab_size", "hidden_size", "max_subwords", "feature_file"}},
  };
  return schema;
}

inline void validate_config_keys(const nlohmann::json& config) {
  const auto& schema = config_schema();
  auto check = [&](const nlohmann::json& obj, const std::string& section) {
    auto it = schema.find(section);
    if (it == schema.end()) throw ConfigError("unknown config section: " + section);
    for (const auto& [key, value] : obj.items()) {
      if (!it->second.count(key))
        throw ConfigError("unknown config key: " +
                          (section.empty() ? key : section + "." + key));
    }
  };
  check(config, "");
  for (const auto& [key, value] : config.items()) {
    if (value.is_object() && key != "version") check(value, key);
  }
}

// Applies a dotted-path override like "training.lr=0.001". Values parse as
// JSON when possible, otherwise as strings.
inline void apply_override(nlohmann::json& config, const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos)
    throw ConfigError("override must have the form key=value: " + spec);
  const std::string path = spec.substr(0, eq);
  const std::string raw = spec.substr(eq + 1);
  nlohmann::json value;
  try {
    value = nlohmann::json::parse(raw);
  } catch (const nlohmann::json::exception&) {
    value = raw;
  }
  nlohmann::json* node = &config;
  std::size_t start = 0;
  for (;;) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot - start);
    if (key.empty()) throw ConfigError("bad override path: " + path);
    if (dot == std::string::npos) {
      (*node)[key] = value;
      break;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

struct EffectiveConfig {
  nlohmann::json data;
  std::string hash;

  const nlohmann::json& section(const std::string& name) const {
    static const nlohmann::json empty = nlohmann::json::object();
    auto it = data.find(name);
    return it == data.end() ? empty : *it;
  }
};

inline EffectiveConfig load_effective_config(const std::string& config_path,
                                             const std::vector<std::string>& overrides) {
  nlohmann::json config = nlohmann::json::object();
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw ConfigError("cannot open config file: " + config_path);
    try {
      in >> config;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(config_path + ": " + e.what());
    }
  }
  for (const auto& o : overrides) apply_override(config, o);
  validate_config_keys(config);
  EffectiveConfig out;
  out.data = std::move(config);
  out.hash = hash_hex(fnv1a(out.data.dump()));
  return out;
}

inline RegimeConfig training_config_from(const EffectiveConfig& config) {
  RegimeConfig rc;
  const auto& t = config.section("training");
  rc.epochs = t.value("epochs", 10);
  rc.epochs_overridden = rc.epochs != 10;
  rc.batch_size = t.value("batch_size", 32);
  rc.lr = t.value("lr", 1e-5);
  rc.lr_overridden = rc.lr != 1e-5;
  rc.lr_decay_factor = t.value("lr_decay_factor", 0.99);
  rc.grad_clip = t.value("grad_clip", 1.0);
  rc.mlm = t.value("mlm", false);
  rc.mask_prob = t.value("mask_prob", 0.15);
  rc.implicit_d = t.value("implicit_d", -1);
  rc.lr_e = t.value("lr_e", 1e-4);
  const auto& e = config.section("encoder");
  rc.encoder.vocab_size = e.value("vocab_size", 512);
  rc.encoder.hidden_size = e.value("hidden_size", 32);
  rc.encoder.max_subwords = e.value("max_subwords", 256);
  return rc;
}

inline SynthConfig synth_config_from(const EffectiveConfig& config) {
  SynthConfig sc;
  const auto& s = config.section("synth");
  sc.vocab_size = s.value("vocab_size", sc.vocab_size);
  sc.n_train = s.value("n_train", sc.n_train);
  sc.n_valid = s.value("n_valid", sc.n_valid);
  sc.n_test = s.value("n_test", sc.n_test);
  sc.min_len = s.value("min_len", sc.min_len);
  sc.max_len = s.value("max_len", sc.max_len);
  sc.trigger_rate = s.value("trigger_rate", sc.trigger_rate);
  sc.relation_rate = s.value("relation_rate", sc.relation_rate);
  sc.distractor_rate = s.value("distractor_rate", sc.distractor_rate);
  sc.overlap = s.value("overlap", sc.overlap);
  sc.vocab_shift = s.value("vocab_shift", sc.vocab_shift);
  sc.relation_max_extra = s.value("relation_max_extra", sc.relation_max_extra);
  sc.seed = s.value("seed", sc.seed);
  return sc;
}

// Record-store root: explicit path wins; relative paths resolve against
// $OIETD_RECORD_ROOT when it is set.
inline std::string resolve_record_path(const std::string& path) {
  if (path.empty()) throw ConfigError("record store path is required");
  std::filesystem::path p(path);
  if (p.is_absolute()) return path;
  const char* root = std::getenv("OIETD_RECORD_ROOT");
  if (root && *root) return (std::filesystem::path(root) / p).string();
  return path;
}

// Atomic file write: temp file then rename.
inline void write_file_atomic(const std::string& path, const std::string& content) {
  const std::filesystem::path target(path);
  if (target.has_parent_path()) std::filesystem::create_directories(target.parent_path());
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw DataError("cannot write file: " + path);
    out << content;
    if (!out) throw DataError("short write: " + path);
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace oietd
