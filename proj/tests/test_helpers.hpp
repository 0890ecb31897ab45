#pragma once

#include <string>
#include <vector>

#include "oietd/corpus.hpp"

namespace oietd::testing {

inline Sentence make_sentence(const std::string& id, int n_tokens,
                              std::vector<TokenSpan> triggers = {},
                              std::vector<TokenSpan> relations = {},
                              Split split = Split::kTrain,
                              const std::string& doc_id = "doc0") {
  Sentence s;
  s.sentence_id = id;
  s.doc_id = doc_id;
  for (int i = 0; i < n_tokens; ++i) s.tokens.push_back("w" + std::to_string(i));
  s.trigger_spans = std::move(triggers);
  s.relation_spans = std::move(relations);
  s.split = split;
  return s;
}

}  // namespace oietd::testing
