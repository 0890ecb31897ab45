// Synthetic source/target domain-pair generator.
//
// Sentences follow a SUBJ PRED OBJ template with padding on both sides; the
// predicate slot draws from a designated predicate vocabulary slice and
// carries the trigger span. With probability `overlap` a sentence's relation
// span is placed to cover its trigger; otherwise it lands elsewhere. The
// target domain swaps a `vocab_shift` fraction of every vocabulary slice for
// unseen types. Learnable structure for a toy encoder, not linguistic
// realism.
#pragma once

#include <algorithm>
#include <array>
#include <string>
#include <vector>

#include "oietd/corpus.hpp"
#include "oietd/errors.hpp"
#include "oietd/rng.hpp"

namespace oietd {

struct SynthConfig {
  int vocab_size = 200;           // total across the four slices
  int n_train = 300;
  int n_valid = 60;
  int n_test = 120;
  int min_len = 5;
  int max_len = 12;
  double trigger_rate = 0.9;
  double relation_rate = 0.9;
  // P(a non-trigger sentence puts a predicate-slice word in the predicate
  // slot anyway). Distractors make word identity insufficient for trigger
  // detection, so relation evidence carries real signal when overlap is high.
  double distractor_rate = 0.0;
  double overlap = 1.0;           // P(relation span contains the trigger span)
  double vocab_shift = 0.5;       // fraction of target vocab disjoint from source
  int relation_max_extra = 2;     // how far a covering relation may extend past the trigger
  std::uint64_t seed = 0;

  void validate() const {
    auto in01 = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!in01(trigger_rate) || !in01(relation_rate) || !in01(overlap) || !in01(vocab_shift) ||
        !in01(distractor_rate))
      throw ConfigError("synth: rates must lie in [0, 1]");
    if (vocab_size < 8) throw ConfigError("synth: vocab_size must be at least 8");
    if (min_len < 4 || max_len < min_len)
      throw ConfigError("synth: need max_len >= min_len >= 4 for the SUBJ PRED OBJ template");
    if (n_train <= 0 || n_valid <= 0 || n_test <= 0)
      throw ConfigError("synth: split sizes must be positive");
  }
};

namespace synth_detail {

struct VocabSlice {
  std::vector<std::string> words;
};

// Four equal slices; the target domain replaces the first shift-fraction of
// each slice with primed variants.
inline std::array<VocabSlice, 4> build_vocab(const SynthConfig& config, bool target) {
  const int per_slice = std::max(2, config.vocab_size / 4);
  static const char* prefixes[4] = {"sub", "evt", "obj", "pad"};
  std::array<VocabSlice, 4> slices;
  const int shifted = static_cast<int>(config.vocab_shift * per_slice);
  for (int s = 0; s < 4; ++s) {
    for (int i = 0; i < per_slice; ++i) {
      std::string w = std::string(prefixes[s]) + std::to_string(i);
      // Shifted target words get a fresh leading character so they share no
      // leading subword chunk with any source word: a real lexical gap the
      // encoder cannot bridge for free, rather than a cosmetic suffix.
      if (target && i < shifted) w = "q" + w;
      slices[static_cast<std::size_t>(s)].words.push_back(std::move(w));
    }
  }
  return slices;
}

}  // namespace synth_detail

// Slice order: 0 subject, 1 predicate, 2 object, 3 padding.
inline Corpus generate_domain(const SynthConfig& config, const std::string& name, bool target,
                              std::uint64_t seed) {
  config.validate();
  const auto slices = synth_detail::build_vocab(config, target);
  // Sentence structure and relation placement draw from separate streams, so
  // changing `overlap` (or any relation knob) moves relation spans only: the
  // token sequences and trigger labels stay bit-identical. Corpora that
  // differ only in overlap are then exactly matched controls.
  Rng rng(mix_seed(seed, "sentence"));
  Rng rel_rng(mix_seed(seed, "relation"));
  Corpus corpus;
  corpus.name = name;

  auto pick = [&](int slice) {
    const auto& words = slices[static_cast<std::size_t>(slice)].words;
    return words[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(words.size()) - 1))];
  };

  struct SplitPlan {
    Split split;
    int count;
  };
  const SplitPlan plan[] = {{Split::kTrain, config.n_train},
                            {Split::kValid, config.n_valid},
                            {Split::kTest, config.n_test}};
  int counter = 0;
  for (const auto& [split, count] : plan) {
    for (int i = 0; i < count; ++i) {
      const int length = static_cast<int>(rng.uniform_int(config.min_len, config.max_len));
      const int front_pad = static_cast<int>(rng.uniform_int(0, length - 4));
      const int subj_pos = front_pad;
      const int pred_pos = front_pad + 1;
      const int obj_pos = front_pad + 2;

      Sentence s;
      s.sentence_id = name + ":" + to_string(split) + ":" + std::to_string(i);
      s.doc_id = name + ":doc" + std::to_string(counter / 10);
      ++counter;
      s.split = split;
      const bool has_trigger = rng.bernoulli(config.trigger_rate);
      const bool distractor = !has_trigger && rng.bernoulli(config.distractor_rate);
      for (int p = 0; p < length; ++p) {
        if (p == subj_pos) {
          s.tokens.push_back(pick(0));
        } else if (p == pred_pos) {
          s.tokens.push_back(has_trigger || distractor ? pick(1) : pick(3));
        } else if (p == obj_pos) {
          s.tokens.push_back(pick(2));
        } else {
          s.tokens.push_back(pick(3));
        }
      }
      if (has_trigger) s.trigger_spans.emplace_back(pred_pos, pred_pos + 1);

      if (rel_rng.bernoulli(config.relation_rate)) {
        const bool cover = has_trigger && rel_rng.bernoulli(config.overlap);
        if (cover) {
          const int left = static_cast<int>(rel_rng.uniform_int(0, config.relation_max_extra));
          const int right = static_cast<int>(rel_rng.uniform_int(0, config.relation_max_extra));
          const int start = std::max(0, pred_pos - left);
          const int end = std::min(length, pred_pos + 1 + right);
          s.relation_spans.emplace_back(start, end);
        } else {
          // A random span that avoids the predicate slot entirely (the
          // trigger, or a distractor look-alike) so relation evidence never
          // points at an unlabeled predicate-slice word.
          for (int attempt = 0; attempt < 32; ++attempt) {
            const int span_len = static_cast<int>(rel_rng.uniform_int(1, 3));
            if (span_len > length) continue;
            const int start = static_cast<int>(rel_rng.uniform_int(0, length - span_len));
            const int end = start + span_len;
            if ((has_trigger || distractor) && start <= pred_pos && pred_pos < end) continue;
            s.relation_spans.emplace_back(start, end);
            break;
          }
        }
      }
      s.validate();
      corpus.sentences.push_back(std::move(s));
    }
  }
  corpus.recompute_stats();
  return corpus;
}

struct SynthPair {
  Corpus source;
  Corpus target;
};

inline SynthPair generate_pair(const SynthConfig& config) {
  config.validate();
  SynthPair pair;
  pair.source = generate_domain(config, "synth-source", false, mix_seed(config.seed, "source"));
  pair.target = generate_domain(config, "synth-target", true, mix_seed(config.seed, "target"));
  return pair;
}

}  // namespace oietd
