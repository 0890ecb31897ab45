#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <sstream>
#include <vector>

#include "oietd/oie_post.hpp"
#include "oietd/rng.hpp"
#include "test_helpers.hpp"

using namespace oietd;
using oietd::testing::make_sentence;

namespace {

TripleExtraction triple(const std::string& sid, std::vector<int> subj,
                        std::vector<int> rel, std::vector<int> obj,
                        bool implicit = false) {
  TripleExtraction ex;
  ex.sentence_id = sid;
  ex.slot_token_indices = {std::move(subj), std::move(rel), std::move(obj)};
  for (int k = 0; k < 3; ++k) {
    const auto& idx = ex.slot_token_indices[static_cast<std::size_t>(k)];
    if (idx.empty()) continue;
    TokenSpan sp{*std::min_element(idx.begin(), idx.end()),
                 *std::max_element(idx.begin(), idx.end()) + 1};
    if (k == 0) ex.subject_span = sp;
    if (k == 1) ex.relation_span = sp;
    if (k == 2) ex.object_span = sp;
  }
  ex.is_implicit = implicit;
  return ex;
}

// Reference merge: grow overlap clusters to a fixed point, then pick the
// winner by (length desc, start asc, input index asc) within each cluster.
std::vector<TokenSpan> reference_merge(const std::vector<TokenSpan>& spans) {
  const std::size_t n = spans.size();
  std::vector<int> cluster(n);
  for (std::size_t i = 0; i < n; ++i) cluster[i] = static_cast<int>(i);
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const bool overlap = spans[i].first < spans[j].second &&
                             spans[j].first < spans[i].second;
        if (overlap && cluster[i] != cluster[j]) {
          const int lo = std::min(cluster[i], cluster[j]);
          const int hi = std::max(cluster[i], cluster[j]);
          for (auto& c : cluster)
            if (c == hi) c = lo;
          changed = true;
        }
      }
  }
  std::vector<TokenSpan> out;
  std::vector<int> roots = cluster;
  std::sort(roots.begin(), roots.end());
  roots.erase(std::unique(roots.begin(), roots.end()), roots.end());
  for (int r : roots) {
    int best = -1;
    for (std::size_t i = 0; i < n; ++i) {
      if (cluster[i] != r) continue;
      if (best < 0) {
        best = static_cast<int>(i);
        continue;
      }
      const int bl = spans[static_cast<std::size_t>(best)].second -
                     spans[static_cast<std::size_t>(best)].first;
      const int il = spans[i].second - spans[i].first;
      if (il > bl ||
          (il == bl && spans[i].first < spans[static_cast<std::size_t>(best)].first))
        best = static_cast<int>(i);
    }
    out.push_back(spans[static_cast<std::size_t>(best)]);
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST_CASE("filter drops implicit extractions") {
  auto kept = filter_extractions({triple("s", {0}, {1}, {2}, true),
                                  triple("s", {0}, {1}, {2}, false)});
  REQUIRE(kept.size() == 1);
  CHECK_FALSE(kept[0].is_implicit);
}

TEST_CASE("filter drops non-consecutive slots") {
  auto kept = filter_extractions({triple("s", {0, 2}, {3}, {4}),
                                  triple("s", {0}, {1, 3}, {4}),
                                  triple("s", {0}, {1}, {2, 5}),
                                  triple("s", {0}, {1, 2}, {3, 4})});
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].relation_span == TokenSpan{1, 3});
}

TEST_CASE("filter drops empty slots") {
  CHECK(filter_extractions({triple("s", {}, {1}, {2})}).empty());
  CHECK(filter_extractions({triple("s", {0}, {}, {2})}).empty());
  CHECK(filter_extractions({triple("s", {0}, {1}, {})}).empty());
}

TEST_CASE("filter drops relations longer than five tokens") {
  auto five = triple("s", {0}, {1, 2, 3, 4, 5}, {6});
  auto six = triple("s", {0}, {1, 2, 3, 4, 5, 6}, {7});
  auto kept = filter_extractions({five, six});
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].relation_span == TokenSpan{1, 6});
}

TEST_CASE("filter enforces strict subject-relation-object order") {
  CHECK(filter_extractions({triple("s", {3}, {1}, {5})}).empty());   // R before S
  CHECK(filter_extractions({triple("s", {0}, {4}, {2})}).empty());   // O before R
  CHECK(filter_extractions({triple("s", {0, 1}, {1, 2}, {3})}).empty());  // S/R overlap
  CHECK(filter_extractions({triple("s", {0}, {1}, {2})}).size() == 1);
}

TEST_CASE("filter preserves input order of survivors") {
  auto a = triple("s", {0}, {1}, {2});
  auto b = triple("s", {2}, {3}, {4});
  auto kept = filter_extractions({b, a});
  REQUIRE(kept.size() == 2);
  CHECK(kept[0].relation_span == TokenSpan{3, 4});
  CHECK(kept[1].relation_span == TokenSpan{1, 2});
}

TEST_CASE("merge keeps disjoint spans and resolves overlap clusters") {
  CHECK(merge_relations({}) == std::vector<TokenSpan>{});
  CHECK(merge_relations({{0, 2}, {4, 6}}) == std::vector<TokenSpan>{{0, 2}, {4, 6}});
  // Chain 0-3, 2-5, 4-7: one cluster via transitive closure; all length 3,
  // smallest start wins.
  CHECK(merge_relations({{2, 5}, {0, 3}, {4, 7}}) == std::vector<TokenSpan>{{0, 3}});
  // Longest wins regardless of position.
  CHECK(merge_relations({{0, 2}, {1, 5}}) == std::vector<TokenSpan>{{1, 5}});
  // Equal length and start: first input wins (indistinguishable spans).
  CHECK(merge_relations({{3, 5}, {3, 5}}) == std::vector<TokenSpan>{{3, 5}});
}

TEST_CASE("merge matches the fixed-point reference on fuzz") {
  Rng rng(404);
  for (int iter = 0; iter < 500; ++iter) {
    const int n = static_cast<int>(rng.uniform_int(0, 12));
    std::vector<TokenSpan> spans;
    for (int i = 0; i < n; ++i) {
      const int s = static_cast<int>(rng.uniform_int(0, 15));
      const int e = static_cast<int>(rng.uniform_int(s + 1, std::min(s + 6, 16)));
      spans.push_back({s, e});
    }
    auto got = merge_relations(spans);
    auto want = reference_merge(spans);
    CHECK(got == want);
    CHECK(spans_disjoint(got));
  }
}

TEST_CASE("build_relation_tagging runs the full per-sentence pipeline") {
  Sentence s = make_sentence("sent", 8);
  auto tagging = build_relation_tagging(
      s, {triple("sent", {0}, {1, 2}, {3}), triple("sent", {1}, {2, 3, 4}, {5}),
          triple("sent", {5}, {6}, {7}, true)});
  CHECK(tagging.relation_spans == std::vector<TokenSpan>{{2, 5}});
  CHECK(tagging.tags.type == TagType::kRelation);
  CHECK(decode_iob2(tagging.tags) == tagging.relation_spans);

  // Nothing survives: all-O tags, correct length.
  auto empty = build_relation_tagging(s, {triple("sent", {0}, {1}, {2}, true)});
  CHECK(empty.relation_spans.empty());
  CHECK(empty.tags.size() == 8);
  for (Tag t : empty.tags.tags) CHECK(t == Tag::kO);
}

TEST_CASE("build_relation_tagging rejects foreign and out-of-range extractions") {
  Sentence s = make_sentence("sent", 4);
  CHECK_THROWS_AS(build_relation_tagging(s, {triple("other", {0}, {1}, {2})}), DataError);
  CHECK_THROWS_AS(build_relation_tagging(s, {triple("sent", {0}, {5}, {6})}),
                  SpanOutOfRangeError);
}

TEST_CASE("dedupe keeps first occurrence per split") {
  Corpus c;
  c.sentences.push_back(make_sentence("a", 3, {{0, 1}}, {}, Split::kTrain));
  c.sentences.push_back(make_sentence("b", 3, {}, {}, Split::kTrain));   // same tokens as a
  c.sentences.push_back(make_sentence("c", 3, {}, {}, Split::kTest));    // same tokens, other split
  c.sentences.push_back(make_sentence("d", 4, {}, {}, Split::kTrain));
  c.recompute_stats();
  Corpus deduped = dedupe_sentences(c);
  REQUIRE(deduped.sentences.size() == 3);
  CHECK(deduped.sentences[0].sentence_id == "a");
  CHECK(deduped.sentences[1].sentence_id == "c");
  CHECK(deduped.sentences[2].sentence_id == "d");
  CHECK(deduped.stats == deduped.computed_stats());
}

TEST_CASE("extraction JSONL adapter parses records and spans") {
  std::istringstream in(
      R"({"sentence_id":"s0","subject":[0],"relation":[1,2],"object":[3],"implicit":false,"extractor":"minie"})"
      "\n"
      R"({"sentence_id":"s1","subject":[],"relation":[0],"object":[1],"implicit":true})"
      "\n");
  auto exs = load_extractions(in, "test");
  REQUIRE(exs.size() == 2);
  CHECK(exs[0].relation_span == TokenSpan{1, 3});
  CHECK(exs[0].extractor == Extractor::kMinie);
  CHECK(exs[1].is_implicit);
  CHECK(exs[1].slot_token_indices[0].empty());
  CHECK(exs[1].extractor == Extractor::kOther);
}

TEST_CASE("attach_relations merges per sentence and clears absent ones") {
  Corpus c;
  c.sentences.push_back(make_sentence("s0", 6, {}, {{0, 6}}, Split::kTrain));
  c.sentences.push_back(make_sentence("s1", 4, {}, {}, Split::kTrain));
  c.recompute_stats();
  Corpus out = attach_relations(c, {triple("s0", {0}, {1, 2}, {3})});
  CHECK(out.sentences[0].relation_spans == std::vector<TokenSpan>{{1, 3}});
  CHECK(out.sentences[1].relation_spans.empty());
  CHECK(out.stats.at(Split::kTrain).n_with_relations == 1);
}
