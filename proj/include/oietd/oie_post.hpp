// Post-processing of raw OIE triple extractions into clean, pairwise
// disjoint relation spans and RD tag sequences.
//
// Filter rules, in order: drop implicit extractions, drop any triple with a
// non-consecutive slot, drop relations longer than five tokens, drop triples
// not in strict subject-relation-object order. Surviving relation spans are
// merged per overlap cluster (transitive closure of token sharing), keeping
// the longest span, ties to the smallest start, then input order.
#pragma once

#include <algorithm>
#include <array>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "oietd/corpus.hpp"
#include "oietd/errors.hpp"
#include "oietd/tagging_eval.hpp"

namespace oietd {

enum class Extractor { kMinie, kStanford, kOther };

inline Extractor extractor_from_string(const std::string& s) {
  if (s == "minie") return Extractor::kMinie;
  if (s == "stanford") return Extractor::kStanford;
  return Extractor::kOther;
}

inline std::string to_string(Extractor e) {
  switch (e) {
    case Extractor::kMinie: return "minie";
    case Extractor::kStanford: return "stanford";
    case Extractor::kOther: return "other";
  }
  return "other";
}

struct TripleExtraction {
  std::string sentence_id;
  TokenSpan subject_span{0, 0};
  TokenSpan relation_span{0, 0};
  TokenSpan object_span{0, 0};
  // Raw per-slot token index lists: subject, relation, object. Used to
  // detect non-consecutive slots; empty list means the slot is missing.
  std::array<std::vector<int>, 3> slot_token_indices;
  bool is_implicit = false;
  Extractor extractor = Extractor::kOther;
};

inline bool slot_consecutive(const std::vector<int>& idx) {
  if (idx.empty()) return false;
  for (std::size_t i = 1; i < idx.size(); ++i)
    if (idx[i] != idx[i - 1] + 1) return false;
  return true;
}

inline TokenSpan slot_span(const std::vector<int>& idx) {
  return {idx.front(), idx.back() + 1};
}

inline std::vector<TripleExtraction> filter_extractions(
    const std::vector<TripleExtraction>& extractions) {
  std::vector<TripleExtraction> out;
  for (const auto& ex : extractions) {
    if (ex.is_implicit) continue;
    bool consecutive = true;
    for (const auto& slot : ex.slot_token_indices)
      if (!slot_consecutive(slot)) consecutive = false;
    if (!consecutive) continue;
    const int rel_len = ex.relation_span.second - ex.relation_span.first;
    if (rel_len > 5) continue;
    if (ex.subject_span.second > ex.relation_span.first) continue;
    if (ex.relation_span.second > ex.object_span.first) continue;
    out.push_back(ex);
  }
  return out;
}

// Keeps disjoint spans as-is; within each overlap cluster exactly one span
// survives. Output sorted by start.
inline std::vector<TokenSpan> merge_relations(const std::vector<TokenSpan>& relation_spans) {
  const std::size_t n = relation_spans.size();
  if (n == 0) return {};

  // Union-find over input indices.
  std::vector<std::size_t> parent(n);
  for (std::size_t i = 0; i < n; ++i) parent[i] = i;
  std::function<std::size_t(std::size_t)> find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  auto overlaps = [](TokenSpan a, TokenSpan b) {
    return a.first < b.second && b.first < a.second;
  };
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (overlaps(relation_spans[i], relation_spans[j])) parent[find(i)] = find(j);

  // Per cluster: longest span, ties to smallest start, then earliest input.
  std::map<std::size_t, std::size_t> winner;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t root = find(i);
    auto it = winner.find(root);
    if (it == winner.end()) {
      winner[root] = i;
      continue;
    }
    const TokenSpan cur = relation_spans[it->second];
    const TokenSpan cand = relation_spans[i];
    const int cur_len = cur.second - cur.first;
    const int cand_len = cand.second - cand.first;
    if (cand_len > cur_len || (cand_len == cur_len && cand.first < cur.first))
      it->second = i;
  }

  std::vector<TokenSpan> out;
  out.reserve(winner.size());
  for (const auto& [root, idx] : winner) out.push_back(relation_spans[idx]);
  std::sort(out.begin(), out.end());
  return out;
}

struct RelationTagging {
  std::string sentence_id;
  std::vector<TokenSpan> relation_spans;
  TagSequence tags;
};

// Full per-sentence pipeline: filter, drop S/O information, merge, encode.
// A sentence where nothing survives carries all-O tags.
inline RelationTagging build_relation_tagging(const Sentence& sentence,
                                              const std::vector<TripleExtraction>& extractions) {
  const int n = static_cast<int>(sentence.tokens.size());
  std::vector<TokenSpan> spans;
  for (const auto& ex : filter_extractions(extractions)) {
    if (ex.sentence_id != sentence.sentence_id)
      throw DataError("build_relation_tagging: extraction for foreign sentence " + ex.sentence_id);
    const auto& [s, e] = ex.relation_span;
    if (s < 0 || s >= e || e > n)
      throw SpanOutOfRangeError("build_relation_tagging: relation span out of range in " +
                                sentence.sentence_id);
    spans.push_back(ex.relation_span);
  }
  RelationTagging out;
  out.sentence_id = sentence.sentence_id;
  out.relation_spans = merge_relations(spans);
  out.tags = encode_iob2(out.relation_spans, n, TagType::kRelation);
  return out;
}

// Sentences with identical token sequences reduced to the first occurrence,
// per split. Stats recomputed.
inline Corpus dedupe_sentences(const Corpus& corpus) {
  Corpus out;
  out.name = corpus.name;
  std::unordered_set<std::string> seen;
  for (const auto& s : corpus.sentences) {
    std::string key = to_string(s.split);
    for (const auto& t : s.tokens) {
      key.push_back('\x1f');
      key += t;
    }
    if (seen.insert(std::move(key)).second) out.sentences.push_back(s);
  }
  out.recompute_stats();
  return out;
}

// ---------------------------------------------------------------------------
// Extraction-file adapter: JSONL, one record per extraction.
//   {"sentence_id": str, "subject": [ints], "relation": [ints],
//    "object": [ints], "implicit": bool, "extractor": str}
// Missing slots are empty lists.

inline std::vector<TripleExtraction> load_extractions(std::istream& in,
                                                      const std::string& name) {
  std::vector<TripleExtraction> out;
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
    TripleExtraction ex;
    ex.sentence_id = j.at("sentence_id").get<std::string>();
    ex.slot_token_indices[0] = j.value("subject", std::vector<int>{});
    ex.slot_token_indices[1] = j.value("relation", std::vector<int>{});
    ex.slot_token_indices[2] = j.value("object", std::vector<int>{});
    ex.is_implicit = j.value("implicit", false);
    ex.extractor = extractor_from_string(j.value("extractor", std::string("other")));
    for (int k = 0; k < 3; ++k) {
      const auto& idx = ex.slot_token_indices[static_cast<std::size_t>(k)];
      if (!idx.empty()) {
        TokenSpan sp{idx.front(), idx.back() + 1};
        if (k == 0) ex.subject_span = sp;
        if (k == 1) ex.relation_span = sp;
        if (k == 2) ex.object_span = sp;
      }
    }
    out.push_back(std::move(ex));
  }
  return out;
}

inline std::vector<TripleExtraction> load_extractions_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open extraction file: " + path);
  return load_extractions(in, path);
}

// Attaches merged relation spans to every sentence of the corpus; sentences
// without surviving extractions get empty relation_spans (all-O tags).
inline Corpus attach_relations(const Corpus& corpus,
                               const std::vector<TripleExtraction>& extractions) {
  std::unordered_map<std::string, std::vector<TripleExtraction>> by_sentence;
  for (const auto& ex : extractions) by_sentence[ex.sentence_id].push_back(ex);
  Corpus out = corpus;
  for (auto& s : out.sentences) {
    auto it = by_sentence.find(s.sentence_id);
    if (it == by_sentence.end()) {
      s.relation_spans.clear();
      continue;
    }
    s.relation_spans = build_relation_tagging(s, it->second).relation_spans;
  }
  out.recompute_stats();
  return out;
}

}  // namespace oietd
