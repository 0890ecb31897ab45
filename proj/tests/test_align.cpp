#include <catch2/catch_amalgamated.hpp>

#include <string>
#include <vector>

#include "oietd/align.hpp"
#include "oietd/rng.hpp"

using namespace oietd;

TEST_CASE("normalize_whitespace collapses runs and trims edges") {
  NormalizedText n = normalize_whitespace("  markets\t\tfell \n");
  CHECK(n.text == "markets fell");
  // Offsets through the map land on the normalized string.
  CHECK(n.raw_to_norm[2] == 0);   // 'm'
  CHECK(n.raw_to_norm[16] == 12); // end
}

TEST_CASE("span on token boundaries aligns, mid-token span drops") {
  const std::string raw = "markets fell";
  const std::vector<std::string> toks{"markets", "fell"};
  auto ok = align_spans(raw, toks, {{8, 12}});
  REQUIRE(ok.has_value());
  CHECK((*ok) == std::vector<TokenSpan>{{1, 2}});

  auto drop = align_spans(raw, toks, {{8, 10}});
  CHECK_FALSE(drop.has_value());

  // One bad span drops the whole set.
  auto mixed = align_spans(raw, toks, {{0, 7}, {8, 10}});
  CHECK_FALSE(mixed.has_value());
}

TEST_CASE("alignment survives messy whitespace in the raw text") {
  const std::string raw = " The  big \t dog  barked ";
  const std::vector<std::string> toks{"The", "big", "dog", "barked"};
  auto got = align_spans(raw, toks, {{1, 9}, {12, 15}});
  REQUIRE(got.has_value());
  CHECK((*got) == std::vector<TokenSpan>{{0, 2}, {2, 3}});
}

TEST_CASE("inconsistent tokens raise a data error") {
  CHECK_THROWS_AS(align_spans("markets fell", {"markets", "rose"}, {}), DataError);
}

TEST_CASE("out-of-range character spans raise") {
  const std::vector<std::string> toks{"a", "b"};
  CHECK_THROWS_AS(align_spans("a b", toks, {{0, 9}}), SpanOutOfRangeError);
  CHECK_THROWS_AS(align_spans("a b", toks, {{2, 1}}), SpanOutOfRangeError);
  CHECK_THROWS_AS(align_spans("a b", toks, {{-1, 2}}), SpanOutOfRangeError);
}

TEST_CASE("round trip: 1000 random token spans project and realign exactly") {
  Rng rng(2024);
  for (int iter = 0; iter < 1000; ++iter) {
    const int n = static_cast<int>(rng.uniform_int(1, 10));
    std::vector<std::string> toks;
    for (int i = 0; i < n; ++i) {
      const int len = static_cast<int>(rng.uniform_int(1, 6));
      std::string t;
      for (int k = 0; k < len; ++k)
        t.push_back(static_cast<char>('a' + rng.uniform_int(0, 25)));
      toks.push_back(t);
    }
    std::string raw;
    for (int i = 0; i < n; ++i) {
      if (i) raw.push_back(' ');
      raw += toks[i];
    }
    const int s = static_cast<int>(rng.uniform_int(0, n - 1));
    const int e = static_cast<int>(rng.uniform_int(s + 1, n));
    const TokenSpan span{s, e};
    const CharSpan cs = project_to_chars(toks, span);
    auto back = align_spans(raw, toks, {cs});
    REQUIRE(back.has_value());
    REQUIRE(back->size() == 1);
    CHECK((*back)[0] == span);
  }
}
