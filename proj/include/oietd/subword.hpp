// Hashing subword tokenizer used by the toy encoder.
//
// Words are split into chunks of at most four characters; each chunk hashes
// into a fixed-size vocabulary. Id 0 is reserved for the mask token.
#pragma once

#include <string>
#include <vector>

#include "oietd/hash.hpp"

namespace oietd {

constexpr int kMaskTokenId = 0;
constexpr int kNumSpecialTokens = 1;

struct SubwordSequence {
  std::vector<int> ids;
  std::vector<int> word_index;  // owning word for each subword, non-decreasing
};

inline int hash_subword(const std::string& chunk, int vocab_size) {
  const auto h = fnv1a(chunk);
  return kNumSpecialTokens +
         static_cast<int>(h % static_cast<std::uint64_t>(vocab_size - kNumSpecialTokens));
}

struct SubwordTokenizer {
  int vocab_size = 4096;
  std::size_t chunk_len = 4;

  SubwordSequence tokenize(const std::vector<std::string>& words) const {
    SubwordSequence out;
    for (std::size_t w = 0; w < words.size(); ++w) {
      const std::string& word = words[w];
      std::size_t pos = 0;
      do {
        const std::string chunk = word.substr(pos, chunk_len);
        out.ids.push_back(hash_subword(chunk, vocab_size));
        out.word_index.push_back(static_cast<int>(w));
        pos += chunk_len;
      } while (pos < word.size());
    }
    return out;
  }
};

}  // namespace oietd
