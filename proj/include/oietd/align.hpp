// Character-span to token-span alignment.
//
// Whitespace runs in the raw text are collapsed to single spaces before any
// offset arithmetic; input character spans are remapped through the same
// collapse. A span aligns only when it starts on a token start and ends on a
// token end. Any span that cuts through a token yields a drop signal for the
// whole sentence (caller logs and discards).
#pragma once

#include <cctype>
#include <optional>
#include <string>
#include <vector>

#include "oietd/corpus.hpp"
#include "oietd/errors.hpp"

namespace oietd {

using CharSpan = std::pair<int, int>;  // [start, end) character offsets

struct NormalizedText {
  std::string text;
  std::vector<int> raw_to_norm;  // size raw.size() + 1, end-inclusive mapping
};

inline NormalizedText normalize_whitespace(const std::string& raw) {
  NormalizedText out;
  out.raw_to_norm.resize(raw.size() + 1, 0);
  bool pending_space = false;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    out.raw_to_norm[i] = static_cast<int>(out.text.size());
    const unsigned char c = static_cast<unsigned char>(raw[i]);
    if (std::isspace(c)) {
      pending_space = !out.text.empty();
    } else {
      if (pending_space) {
        out.text.push_back(' ');
        out.raw_to_norm[i] = static_cast<int>(out.text.size());
        pending_space = false;
      }
      out.text.push_back(raw[i]);
    }
  }
  out.raw_to_norm[raw.size()] = static_cast<int>(out.text.size());
  return out;
}

// Start offset of each token in the normalized single-space join.
inline std::vector<int> token_char_starts(const std::vector<std::string>& tokens) {
  std::vector<int> starts;
  starts.reserve(tokens.size());
  int pos = 0;
  for (const auto& t : tokens) {
    starts.push_back(pos);
    pos += static_cast<int>(t.size()) + 1;
  }
  return starts;
}

// nullopt is the drop signal: at least one span does not fall on exact token
// boundaries.
inline std::optional<std::vector<TokenSpan>> align_spans(
    const std::string& raw_text, const std::vector<std::string>& tokens,
    const std::vector<CharSpan>& char_spans) {
  const NormalizedText norm = normalize_whitespace(raw_text);

  std::string joined;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) joined.push_back(' ');
    joined += tokens[i];
  }
  if (joined != norm.text)
    throw DataError("align_spans: tokens are inconsistent with raw text");

  const std::vector<int> starts = token_char_starts(tokens);
  std::vector<TokenSpan> out;
  out.reserve(char_spans.size());
  for (const auto& [raw_s, raw_e] : char_spans) {
    if (raw_s < 0 || raw_e > static_cast<int>(raw_text.size()) || raw_s >= raw_e)
      throw SpanOutOfRangeError("align_spans: character span out of range");
    const int s = norm.raw_to_norm[raw_s];
    const int e = norm.raw_to_norm[raw_e];

    int tok_start = -1;
    int tok_end = -1;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (starts[i] == s) tok_start = static_cast<int>(i);
      if (starts[i] + static_cast<int>(tokens[i].size()) == e) tok_end = static_cast<int>(i) + 1;
    }
    if (tok_start < 0 || tok_end < 0 || tok_start >= tok_end) return std::nullopt;
    out.emplace_back(tok_start, tok_end);
  }
  return out;
}

// Inverse projection for the round-trip property: token span back to
// normalized character offsets.
inline CharSpan project_to_chars(const std::vector<std::string>& tokens, TokenSpan span) {
  const std::vector<int> starts = token_char_starts(tokens);
  return {starts[span.first],
          starts[span.second - 1] + static_cast<int>(tokens[span.second - 1].size())};
}

}  // namespace oietd
