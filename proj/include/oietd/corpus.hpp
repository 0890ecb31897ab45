// Corpus data model, loaders and split construction.
//
// Canonical on-disk format is JSONL, one sentence object per line:
//   {"sentence_id": str, "doc_id": str, "tokens": [str, ...],
//    "trigger_spans": [[start, end), ...], "relation_spans": [[start, end), ...],
//    "split": "train"|"valid"|"test"}
// Dataset-specific formats (MAVEN JSON, CoNLL-like) are converted into this
// model at load time.
#pragma once

#include <algorithm>
#include <array>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "oietd/errors.hpp"
#include "oietd/hash.hpp"
#include "oietd/rng.hpp"

namespace oietd {

using TokenSpan = std::pair<int, int>;  // [start, end) in token indices

enum class Split { kTrain, kValid, kTest };

inline std::string to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kValid: return "valid";
    case Split::kTest: return "test";
  }
  return "train";
}

inline Split split_from_string(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "valid" || s == "dev" || s == "validation") return Split::kValid;
  if (s == "test") return Split::kTest;
  throw ParseError("unknown split name: " + s);
}

inline bool spans_disjoint(const std::vector<TokenSpan>& spans) {
  std::vector<TokenSpan> sorted = spans;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    if (sorted[i].first < sorted[i - 1].second) return false;
  }
  return true;
}

struct Sentence {
  std::string sentence_id;
  std::string doc_id;
  std::vector<std::string> tokens;
  std::vector<TokenSpan> trigger_spans;
  std::vector<TokenSpan> relation_spans;
  Split split = Split::kTrain;

  bool has_trigger() const { return !trigger_spans.empty(); }
  bool has_relation() const { return !relation_spans.empty(); }

  void validate() const {
    if (tokens.empty())
      throw DataError("sentence " + sentence_id + ": empty token list");
    auto check_spans = [this](const std::vector<TokenSpan>& spans, const char* kind) {
      for (const auto& [s, e] : spans) {
        if (s < 0 || s >= e || e > static_cast<int>(tokens.size())) {
          throw SpanOutOfRangeError("sentence " + sentence_id + ": " + kind + " span (" +
                                    std::to_string(s) + ", " + std::to_string(e) +
                                    ") out of range for " + std::to_string(tokens.size()) +
                                    " tokens");
        }
      }
      if (!spans_disjoint(spans))
        throw DataError("sentence " + sentence_id + ": overlapping " + kind + " spans");
    };
    check_spans(trigger_spans, "trigger");
    check_spans(relation_spans, "relation");
  }
};

struct SplitStats {
  int n_sentences = 0;
  int n_with_triggers = 0;
  int n_with_relations = 0;

  bool operator==(const SplitStats&) const = default;
};

struct Corpus {
  std::string name;
  std::vector<Sentence> sentences;
  std::map<Split, SplitStats> stats;

  void recompute_stats() {
    stats.clear();
    stats[Split::kTrain];
    stats[Split::kValid];
    stats[Split::kTest];
    for (const auto& s : sentences) {
      auto& st = stats[s.split];
      ++st.n_sentences;
      if (s.has_trigger()) ++st.n_with_triggers;
      if (s.has_relation()) ++st.n_with_relations;
    }
  }

  std::map<Split, SplitStats> computed_stats() const {
    Corpus tmp;
    tmp.sentences = sentences;
    tmp.recompute_stats();
    return tmp.stats;
  }

  void validate() const {
    std::unordered_set<std::string> ids;
    for (const auto& s : sentences) {
      s.validate();
      if (!ids.insert(s.sentence_id).second)
        throw DataError("duplicate sentence_id: " + s.sentence_id);
    }
    if (!stats.empty() && stats != computed_stats())
      throw DataError("corpus " + name + ": stored stats do not match sentences");
  }

  std::vector<const Sentence*> split_sentences(Split split) const {
    std::vector<const Sentence*> out;
    for (const auto& s : sentences)
      if (s.split == split) out.push_back(&s);
    return out;
  }
};

// ---------------------------------------------------------------------------
// Canonical JSONL

inline Sentence sentence_from_json(const nlohmann::json& j) {
  Sentence s;
  s.sentence_id = j.at("sentence_id").get<std::string>();
  s.doc_id = j.value("doc_id", std::string{});
  s.tokens = j.at("tokens").get<std::vector<std::string>>();
  auto read_spans = [&j](const char* key) {
    std::vector<TokenSpan> spans;
    if (j.contains(key)) {
      for (const auto& sp : j.at(key)) {
        if (!sp.is_array() || sp.size() != 2)
          throw ParseError(std::string(key) + ": span must be a [start, end] pair");
        spans.emplace_back(sp[0].get<int>(), sp[1].get<int>());
      }
    }
    return spans;
  };
  s.trigger_spans = read_spans("trigger_spans");
  s.relation_spans = read_spans("relation_spans");
  s.split = split_from_string(j.value("split", std::string("train")));
  s.validate();
  return s;
}

inline nlohmann::json sentence_to_json(const Sentence& s) {
  nlohmann::json spans_t = nlohmann::json::array();
  for (const auto& [a, b] : s.trigger_spans) spans_t.push_back({a, b});
  nlohmann::json spans_r = nlohmann::json::array();
  for (const auto& [a, b] : s.relation_spans) spans_r.push_back({a, b});
  return {{"sentence_id", s.sentence_id}, {"doc_id", s.doc_id},
          {"tokens", s.tokens},           {"trigger_spans", spans_t},
          {"relation_spans", spans_r},    {"split", to_string(s.split)}};
}

inline Corpus load_canonical_jsonl(std::istream& in, const std::string& name) {
  Corpus c;
  c.name = name;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(name + ":" + std::to_string(lineno) + ": " + e.what());
    }
    c.sentences.push_back(sentence_from_json(j));
  }
  c.recompute_stats();
  c.validate();
  return c;
}

inline void save_canonical_jsonl(const Corpus& c, std::ostream& out) {
  for (const auto& s : c.sentences) out << sentence_to_json(s).dump() << "\n";
}

// ---------------------------------------------------------------------------
// MAVEN JSON (one document object per line; train/valid files carry events,
// test files only candidates). Trigger offsets are token indices [start, end).

inline std::vector<Sentence> load_maven_document(const nlohmann::json& doc, Split split) {
  const std::string doc_id = doc.at("id").get<std::string>();
  std::vector<Sentence> sents;
  int idx = 0;
  for (const auto& content : doc.at("content")) {
    Sentence s;
    s.doc_id = doc_id;
    s.sentence_id = doc_id + ":" + std::to_string(idx++);
    s.tokens = content.at("tokens").get<std::vector<std::string>>();
    s.split = split;
    sents.push_back(std::move(s));
  }
  if (doc.contains("events")) {
    for (const auto& ev : doc.at("events")) {
      for (const auto& mention : ev.at("mention")) {
        const int sent_id = mention.at("sent_id").get<int>();
        const auto& off = mention.at("offset");
        if (sent_id < 0 || sent_id >= static_cast<int>(sents.size()))
          throw ParseError("MAVEN doc " + doc_id + ": mention sent_id out of range");
        sents[sent_id].trigger_spans.emplace_back(off[0].get<int>(), off[1].get<int>());
      }
    }
  }
  for (auto& s : sents) {
    std::sort(s.trigger_spans.begin(), s.trigger_spans.end());
    s.validate();
  }
  return sents;
}

inline Corpus load_maven_json(std::istream& in, const std::string& name, Split split) {
  Corpus c;
  c.name = name;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(name + ":" + std::to_string(lineno) + ": " + e.what());
    }
    for (auto& s : load_maven_document(j, split)) c.sentences.push_back(std::move(s));
  }
  c.recompute_stats();
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// CoNLL-like: one token + IOB2 tag per line, blank line between sentences.
// Optional "# id = ..." / "# doc = ..." comment lines before a sentence.

inline Corpus load_conll_like(std::istream& in, const std::string& name, Split split) {
  Corpus c;
  c.name = name;
  std::vector<std::string> tokens;
  std::vector<std::string> tags;
  std::string sent_id, doc_id;
  int auto_id = 0;

  auto flush = [&]() {
    if (tokens.empty()) {
      sent_id.clear();
      doc_id.clear();
      return;
    }
    Sentence s;
    s.sentence_id = sent_id.empty() ? name + ":" + std::to_string(auto_id) : sent_id;
    ++auto_id;
    s.doc_id = doc_id;
    s.tokens = tokens;
    s.split = split;
    int open = -1;
    for (int i = 0; i < static_cast<int>(tags.size()); ++i) {
      const std::string& t = tags[i];
      const bool begins = t.rfind("B-", 0) == 0;
      const bool inside = t.rfind("I-", 0) == 0;
      if (begins || (inside && open < 0)) {
        if (open >= 0) s.trigger_spans.emplace_back(open, i);
        open = i;
      } else if (!inside && open >= 0) {
        s.trigger_spans.emplace_back(open, i);
        open = -1;
      }
    }
    if (open >= 0) s.trigger_spans.emplace_back(open, static_cast<int>(tags.size()));
    s.validate();
    c.sentences.push_back(std::move(s));
    tokens.clear();
    tags.clear();
    sent_id.clear();
    doc_id.clear();
  };

  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) {
      flush();
      continue;
    }
    if (line[0] == '#') {
      const auto eq = line.find('=');
      if (eq != std::string::npos) {
        std::string key = line.substr(1, eq - 1);
        std::string val = line.substr(eq + 1);
        auto trim = [](std::string& s) {
          s.erase(0, s.find_first_not_of(" \t"));
          s.erase(s.find_last_not_of(" \t") + 1);
        };
        trim(key);
        trim(val);
        if (key == "id") sent_id = val;
        if (key == "doc") doc_id = val;
      }
      continue;
    }
    const auto tab = line.find_last_of(" \t");
    if (tab == std::string::npos)
      throw ParseError(name + ":" + std::to_string(lineno) + ": expected 'token<TAB>tag'");
    tokens.push_back(line.substr(0, tab));
    tags.push_back(line.substr(tab + 1));
  }
  flush();
  c.recompute_stats();
  c.validate();
  return c;
}

enum class CorpusFormat { kCanonicalJsonl, kMavenJson, kConllLike };

inline CorpusFormat corpus_format_from_string(const std::string& s) {
  if (s == "canonical-jsonl") return CorpusFormat::kCanonicalJsonl;
  if (s == "maven-json") return CorpusFormat::kMavenJson;
  if (s == "conll-like") return CorpusFormat::kConllLike;
  throw ConfigError("unknown corpus format: " + s);
}

inline Corpus load_corpus(const std::string& path, CorpusFormat format,
                          Split split_for_file = Split::kTrain) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open corpus file: " + path);
  switch (format) {
    case CorpusFormat::kCanonicalJsonl: return load_canonical_jsonl(in, path);
    case CorpusFormat::kMavenJson: return load_maven_json(in, path, split_for_file);
    case CorpusFormat::kConllLike: return load_conll_like(in, path, split_for_file);
  }
  throw ConfigError("unreachable corpus format");
}

// ---------------------------------------------------------------------------
// Split construction

// Moves a `fraction` share of train sentences to valid; the previous valid
// split (if any) becomes test. MAVEN convention. Train keeps
// floor((1 - fraction) * n), so e.g. 32431 at 0.2 gives 25944/6487.
inline Corpus resplit_holdout(const Corpus& corpus, double fraction, std::uint64_t seed) {
  if (fraction <= 0.0 || fraction >= 1.0)
    throw ConfigError("resplit_holdout: fraction must be in (0, 1)");
  std::vector<std::size_t> train_idx;
  for (std::size_t i = 0; i < corpus.sentences.size(); ++i)
    if (corpus.sentences[i].split == Split::kTrain) train_idx.push_back(i);
  if (train_idx.empty()) throw DataError("resplit_holdout: empty train split");

  const auto n_keep = static_cast<std::size_t>((1.0 - fraction) * static_cast<double>(train_idx.size()));
  const std::size_t n_valid = train_idx.size() - n_keep;
  Rng rng(seed);
  const auto chosen = rng.sample_without_replacement(train_idx.size(), n_valid);
  std::unordered_set<std::size_t> to_valid;
  for (auto c : chosen) to_valid.insert(train_idx[c]);

  Corpus out = corpus;
  for (std::size_t i = 0; i < out.sentences.size(); ++i) {
    auto& s = out.sentences[i];
    if (s.split == Split::kValid) {
      s.split = Split::kTest;
    } else if (s.split == Split::kTrain && to_valid.count(i)) {
      s.split = Split::kValid;
    }
  }
  out.recompute_stats();
  return out;
}

// Article-level 70/10/20 (or custom) assignment; all sentences of a doc share
// a split. Greedy largest-first fill keeps realized ratios close at article
// granularity.
inline Corpus split_by_article(const Corpus& corpus,
                               std::array<double, 3> ratios,
                               std::uint64_t seed) {
  for (const auto& s : corpus.sentences)
    if (s.doc_id.empty()) throw DataError("split_by_article: sentence without doc_id");

  std::map<std::string, int> doc_sizes;
  for (const auto& s : corpus.sentences) ++doc_sizes[s.doc_id];
  if (doc_sizes.size() < 3) throw DataError("split_by_article: need at least 3 articles");

  std::vector<std::pair<std::string, int>> docs(doc_sizes.begin(), doc_sizes.end());
  Rng rng(seed);
  rng.shuffle(docs);
  // Stable sort by size descending; the shuffle above breaks size ties randomly.
  std::stable_sort(docs.begin(), docs.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });

  const double total = static_cast<double>(corpus.sentences.size());
  std::array<double, 3> want{ratios[0] * total, ratios[1] * total, ratios[2] * total};
  std::array<double, 3> have{0, 0, 0};
  std::array<int, 3> doc_count{0, 0, 0};
  std::map<std::string, Split> assignment;
  static constexpr Split kSplits[3] = {Split::kTrain, Split::kValid, Split::kTest};
  for (const auto& [doc, size] : docs) {
    // Largest deficit relative to target gets the next article.
    int best = 0;
    double best_deficit = -1e300;
    for (int k = 0; k < 3; ++k) {
      const double deficit = want[k] - have[k];
      if (deficit > best_deficit) {
        best_deficit = deficit;
        best = k;
      }
    }
    assignment[doc] = kSplits[best];
    have[best] += size;
    ++doc_count[best];
  }
  // Every split must receive at least one article.
  for (int k = 0; k < 3; ++k) {
    if (doc_count[k] == 0) {
      // Steal the smallest article from the most populated split.
      int donor = 0;
      for (int j = 1; j < 3; ++j)
        if (doc_count[j] > doc_count[donor]) donor = j;
      std::string smallest;
      int smallest_size = std::numeric_limits<int>::max();
      for (const auto& [doc, sp] : assignment) {
        if (sp == kSplits[donor] && doc_sizes[doc] < smallest_size) {
          smallest = doc;
          smallest_size = doc_sizes[doc];
        }
      }
      assignment[smallest] = kSplits[k];
      --doc_count[donor];
      ++doc_count[k];
    }
  }

  Corpus out = corpus;
  for (auto& s : out.sentences) s.split = assignment.at(s.doc_id);
  out.recompute_stats();
  return out;
}

}  // namespace oietd
