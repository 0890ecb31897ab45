// IOB2 encoding/decoding, validity repair, subword loss masks and strict
// span-level micro P/R/F1.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "oietd/corpus.hpp"
#include "oietd/errors.hpp"

namespace oietd {

enum class Tag : std::uint8_t { kO = 0, kB = 1, kI = 2 };

enum class TagType : std::uint8_t { kTrigger, kRelation };

inline std::string tag_label(Tag t, TagType type) {
  const char* suffix = type == TagType::kTrigger ? "TRG" : "REL";
  switch (t) {
    case Tag::kO: return "O";
    case Tag::kB: return std::string("B-") + suffix;
    case Tag::kI: return std::string("I-") + suffix;
  }
  return "O";
}

struct TagSequence {
  TagType type = TagType::kTrigger;
  std::vector<Tag> tags;

  std::size_t size() const { return tags.size(); }

  bool is_valid_iob2() const {
    Tag prev = Tag::kO;
    for (Tag t : tags) {
      if (t == Tag::kI && prev == Tag::kO) return false;
      prev = t;
    }
    return true;
  }
};

inline TagSequence encode_iob2(const std::vector<TokenSpan>& spans, int length, TagType type) {
  if (!spans_disjoint(spans)) throw DataError("encode_iob2: overlapping spans");
  TagSequence seq;
  seq.type = type;
  seq.tags.assign(static_cast<std::size_t>(length), Tag::kO);
  for (const auto& [s, e] : spans) {
    if (s < 0 || s >= e || e > length) throw SpanOutOfRangeError("encode_iob2: span out of range");
    seq.tags[static_cast<std::size_t>(s)] = Tag::kB;
    for (int i = s + 1; i < e; ++i) seq.tags[static_cast<std::size_t>(i)] = Tag::kI;
  }
  return seq;
}

// Deterministic repair for classifier output: stray I (after O or at the
// sequence start) becomes B. Idempotent.
inline TagSequence repair_iob2(const TagSequence& seq) {
  TagSequence out = seq;
  Tag prev = Tag::kO;
  for (auto& t : out.tags) {
    if (t == Tag::kI && prev == Tag::kO) t = Tag::kB;
    prev = t;
  }
  return out;
}

inline std::vector<TokenSpan> decode_iob2(const TagSequence& seq, bool repair = true) {
  TagSequence s = seq;
  if (repair) {
    s = repair_iob2(seq);
  } else if (!seq.is_valid_iob2()) {
    throw DataError("decode_iob2: invalid IOB2 transition with repair disabled");
  }
  std::vector<TokenSpan> spans;
  int open = -1;
  for (int i = 0; i < static_cast<int>(s.tags.size()); ++i) {
    if (s.tags[static_cast<std::size_t>(i)] == Tag::kB) {
      if (open >= 0) spans.emplace_back(open, i);
      open = i;
    } else if (s.tags[static_cast<std::size_t>(i)] == Tag::kO) {
      if (open >= 0) spans.emplace_back(open, i);
      open = -1;
    }
  }
  if (open >= 0) spans.emplace_back(open, static_cast<int>(s.tags.size()));
  return spans;
}

struct EvalResult {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  long tp = 0;
  long fp = 0;
  long fn = 0;
};

inline EvalResult prf_from_counts(long tp, long fp, long fn) {
  EvalResult r;
  r.tp = tp;
  r.fp = fp;
  r.fn = fn;
  r.precision = (tp + fp) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  r.recall = (tp + fn) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  r.f1 = (r.precision + r.recall) > 0.0
             ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
             : 0.0;
  return r;
}

// Strict mode: a predicted span counts iff an identical (start, end, type)
// span exists in gold for the same sentence. Micro-aggregated.
inline EvalResult strict_micro_prf(const std::vector<TagSequence>& gold,
                                   const std::vector<TagSequence>& pred) {
  if (gold.size() != pred.size())
    throw DataError("strict_micro_prf: gold/pred sentence counts differ");
  long tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i].size() != pred[i].size())
      throw DataError("strict_micro_prf: length mismatch at sentence " + std::to_string(i));
    const auto g = decode_iob2(gold[i]);
    const auto p = decode_iob2(pred[i]);
    std::set<std::tuple<int, int, TagType>> gold_set;
    for (const auto& sp : g) gold_set.insert({sp.first, sp.second, gold[i].type});
    for (const auto& sp : p) {
      if (gold_set.erase({sp.first, sp.second, pred[i].type})) {
        ++tp;
      } else {
        ++fp;
      }
    }
    fn += static_cast<long>(gold_set.size());
  }
  return prf_from_counts(tp, fp, fn);
}

// Token-level micro P/R/F1 over non-O tags; diagnostic companion to the
// strict span metric.
inline EvalResult token_micro_prf(const std::vector<TagSequence>& gold,
                                  const std::vector<TagSequence>& pred) {
  if (gold.size() != pred.size())
    throw DataError("token_micro_prf: gold/pred sentence counts differ");
  long tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i].size() != pred[i].size())
      throw DataError("token_micro_prf: length mismatch at sentence " + std::to_string(i));
    for (std::size_t j = 0; j < gold[i].size(); ++j) {
      const bool g = gold[i].tags[j] != Tag::kO;
      const bool p = pred[i].tags[j] != Tag::kO;
      if (p && g && gold[i].tags[j] == pred[i].tags[j]) {
        ++tp;
      } else {
        if (p) ++fp;
        if (g) ++fn;
      }
    }
  }
  return prf_from_counts(tp, fp, fn);
}

// True exactly at the first subword of each word; loss and predictions for a
// word are read from that position only.
inline std::vector<bool> first_subword_mask(std::size_t n_words,
                                            const std::vector<int>& subword_to_word) {
  std::vector<bool> mask(subword_to_word.size(), false);
  int prev = -1;
  for (std::size_t i = 0; i < subword_to_word.size(); ++i) {
    const int w = subword_to_word[i];
    if (w < prev || w >= static_cast<int>(n_words) || w < 0)
      throw DataError("first_subword_mask: alignment not non-decreasing or out of range");
    if (w > prev + 1) throw DataError("first_subword_mask: word with zero subwords");
    if (w != prev) mask[i] = true;
    prev = w;
  }
  if (prev + 1 != static_cast<int>(n_words))
    throw DataError("first_subword_mask: alignment does not cover all words");
  return mask;
}

}  // namespace oietd
