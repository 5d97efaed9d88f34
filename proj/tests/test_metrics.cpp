#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "cobwebtm/error.hpp"
#include "cobwebtm/metrics/cooccurrence.hpp"
#include "cobwebtm/metrics/metrics.hpp"
#include "support/oracles.hpp"

using namespace cobwebtm;

namespace {

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ' ') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

std::vector<std::vector<std::string>> random_corpus(std::mt19937_64& rng, std::size_t docs, std::size_t vocab) {
  std::vector<std::vector<std::string>> out(docs);
  for (auto& d : out) {
    const std::size_t len = rng() % 25;
    for (std::size_t i = 0; i < len; ++i) {
      // skewed so some words are frequent and pairs vary
      const std::size_t w = std::min(rng() % vocab, rng() % vocab);
      d.push_back("w" + std::to_string(w));
    }
  }
  return out;
}

TopicDescriptor node_topic(NodeId node, NodeId parent, std::vector<std::string> words) {
  TopicDescriptor t;
  t.topic_id = node;
  t.node_id = node;
  t.parent_node = parent;
  for (auto& w : words) t.top_words.emplace_back(std::move(w), 1.0);
  return t;
}

}  // namespace

TEST_CASE("window counts for the a b a example") {
  const auto t = build_cooccurrence({split("a b a")}, 2);
  CHECK(t.window_count() == 2);
  CHECK(t.word_count("a") == 2);
  CHECK(t.word_count("b") == 2);
  CHECK(t.pair_count("a", "b") == 2);
  CHECK(t.pair_count("b", "a") == 2);
  CHECK(npmi("a", "b", t) == 1.0);
}

TEST_CASE("short and empty documents") {
  CHECK(build_cooccurrence({split("a b c d e")}, 5).window_count() == 1);
  CHECK(build_cooccurrence({split("a b")}, 5).window_count() == 1);
  CHECK(build_cooccurrence({split("a b c d e"), {}}, 2).window_count() == 4);
  CHECK_THROWS_AS(build_cooccurrence({}, 2), ValidationError);
  CHECK_THROWS_AS(build_cooccurrence({split("a")}, 0), ValidationError);
}

TEST_CASE("window counts match explicit enumeration") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const auto docs = random_corpus(rng, 15, 10);
    const std::size_t size = 1 + rng() % 8;
    const auto t = build_cooccurrence(docs, size);
    const auto wins = oracle::windows(docs, size);
    CHECK(t.window_count() == wins.size());
    for (const auto& a : t.vocabulary()) {
      std::uint64_t na = 0;
      for (const auto& w : wins) na += w.contains(a);
      CHECK(t.word_count(a) == na);
      for (const auto& b : t.vocabulary()) {
        std::uint64_t nab = 0;
        for (const auto& w : wins) nab += w.contains(a) && (a == b || w.contains(b));
        CHECK(t.pair_count(a, b) == nab);
        CHECK(t.pair_count(a, b) <= std::min(t.word_count(a), t.word_count(b)));
      }
    }
  }
}

TEST_CASE("NPMI conventions and bounds") {
  SUBCASE("perfect association") {
    const auto t = build_cooccurrence({split("x y"), split("x y z"), split("q")}, 5);
    CHECK(npmi("x", "y", t) == doctest::Approx(1.0).epsilon(1e-9));
  }
  SUBCASE("never together") {
    const auto t = build_cooccurrence({split("x"), split("y")}, 5);
    CHECK(npmi("x", "y", t) == -1.0);
  }
  SUBCASE("independent words") {
    // P(a)=P(b)=1/2, P(a,b)=1/4
    const auto t = build_cooccurrence({split("a b"), split("a"), split("b"), split("c")}, 5);
    CHECK(std::abs(npmi("a", "b", t)) < 1e-9);
  }
  SUBCASE("symmetric and bounded on random corpora") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 10; ++trial) {
      const auto docs = random_corpus(rng, 20, 12);
      const auto t = build_cooccurrence(docs, 4);
      const auto wins = oracle::windows(docs, 4);
      for (const auto& a : t.vocabulary()) {
        for (const auto& b : t.vocabulary()) {
          const double v = npmi(a, b, t);
          CHECK(v >= -1.0);
          CHECK(v <= 1.0);
          CHECK(v == npmi(b, a, t));
          CHECK(std::abs(v - oracle::npmi(wins, a, b)) < 1e-9);
        }
      }
    }
  }
  SUBCASE("unknown words are an error, not a zero") {
    const auto t = build_cooccurrence({split("a b")}, 2);
    CHECK_THROWS_AS(npmi("a", "zzz", t), OutOfVocabulary);
    try {
      npmi("nope", "a", t);
    } catch (const OutOfVocabulary& e) {
      CHECK(e.word() == "nope");
    }
  }
}

TEST_CASE("topic NPMI") {
  const auto t = build_cooccurrence({split("a b"), split("a b"), split("c"), split("d")}, 5);
  CHECK(*topic_npmi({"a", "b"}, t).value == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(*topic_npmi({"c", "d"}, t).value == -1.0);
  const MetricValue partial = topic_npmi({"a", "b", "ghost"}, t);
  CHECK(*partial.value == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(partial.flags == std::vector<std::string>{"oov:ghost"});
  CHECK(!topic_npmi({"a", "ghost"}, t).value);
  CHECK(!topic_npmi({"a"}, t).value);

  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const auto docs = random_corpus(rng, 30, 10);
    const auto t2 = build_cooccurrence(docs, 5);
    const auto wins = oracle::windows(docs, 5);
    const auto& v = t2.vocabulary();
    if (v.size() < 4) continue;
    std::vector<std::string> words(v.begin(), v.begin() + 4);
    double sum = 0;
    for (int i = 0; i < 4; ++i) {
      for (int j = i + 1; j < 4; ++j) sum += oracle::npmi(wins, words[i], words[j]);
    }
    CHECK(std::abs(*topic_npmi(words, t2).value - sum / 6.0) < 1e-9);
  }
}

TEST_CASE("C_v matches the direct formula on random topics") {
  std::mt19937_64 rng(10);
  int checked = 0;
  while (checked < 50) {
    const auto docs = random_corpus(rng, 25, 14);
    const auto t = build_cooccurrence(docs, 6);
    const auto wins = oracle::windows(docs, 6);
    std::vector<std::string> vocab = t.vocabulary();
    if (vocab.size() < 5) continue;
    std::shuffle(vocab.begin(), vocab.end(), rng);
    const std::vector<std::string> words(vocab.begin(), vocab.begin() + 5);
    const MetricValue got = cv_coherence(words, t);
    REQUIRE(got.value);
    CHECK(std::abs(*got.value - oracle::cv(wins, words)) < 1e-9);
    auto reversed = words;
    std::reverse(reversed.begin(), reversed.end());
    CHECK(std::abs(*cv_coherence(reversed, t).value - *got.value) < 1e-12);
    ++checked;
  }
}

TEST_CASE("C_v of perfect associates and of a single pair") {
  const auto t = build_cooccurrence({split("a b c"), split("a b c")}, 5);
  CHECK(*cv_coherence({"a", "b", "c"}, t).value == doctest::Approx(1.0).epsilon(1e-12));
  const auto t2 = build_cooccurrence({split("a b"), split("a"), split("c")}, 5);
  const double n = npmi("a", "b", t2);
  const double expected = (n + n) / (std::sqrt(1 + n * n) * std::sqrt(n * n + 1));
  CHECK(*cv_coherence({"a", "b"}, t2).value == doctest::Approx(expected).epsilon(1e-12));
  CHECK_THROWS_AS(cv_coherence({"a"}, t2), ValidationError);
  CHECK_THROWS_AS(cv_coherence({"a", "ghost"}, t2), OutOfVocabulary);
}

TEST_CASE("ARI against pair counting") {
  const std::vector<std::int64_t> a{0, 0, 1, 1};
  const std::vector<std::int64_t> b{0, 1, 0, 1};
  CHECK(adjusted_rand_index(a, b) == oracle::pair_counting_ari(a, b));
  CHECK(adjusted_rand_index(a, b) == doctest::Approx(-0.5));
  CHECK(adjusted_rand_index(a, a) == 1.0);

  std::mt19937_64 rng(14);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng() % 40;
    const std::int64_t ka = 1 + static_cast<std::int64_t>(rng() % 6);
    const std::int64_t kb = 1 + static_cast<std::int64_t>(rng() % 6);
    std::vector<std::int64_t> x(n);
    std::vector<std::int64_t> y(n);
    for (auto& v : x) v = static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(ka));
    for (auto& v : y) v = static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(kb)) - 1;
    const double got = adjusted_rand_index(x, y);
    CHECK(got == oracle::pair_counting_ari(x, y));
    CHECK(got <= 1.0);
    // permuting label names on one side changes nothing
    std::vector<std::int64_t> relabeled(n);
    for (std::size_t i = 0; i < n; ++i) relabeled[i] = 1000 - 7 * x[i];
    CHECK(adjusted_rand_index(relabeled, y) == got);
    CHECK(adjusted_rand_index(x, x) == 1.0);
  }
}

TEST_CASE("ARI degenerate cases and errors") {
  const std::vector<std::int64_t> ones{4, 4, 4};
  const std::vector<std::int64_t> singles{1, 2, 3};
  CHECK(adjusted_rand_index(ones, ones) == 1.0);
  CHECK(adjusted_rand_index(singles, singles) == 1.0);
  CHECK(adjusted_rand_index(ones, singles) == oracle::pair_counting_ari({4, 4, 4}, {1, 2, 3}));
  CHECK_THROWS_AS(adjusted_rand_index(std::vector<std::int64_t>{1}, std::vector<std::int64_t>{1}), ValidationError);
  CHECK_THROWS_AS(adjusted_rand_index(ones, std::vector<std::int64_t>{1, 2}), ValidationError);
  const std::map<DocId, TopicId> m1{{"a", 0}, {"b", 0}, {"c", 1}};
  const std::map<DocId, TopicId> m2{{"a", 5}, {"b", 5}, {"d", 1}};
  CHECK_THROWS_AS(adjusted_rand_index(m1, m2), ValidationError);
  const std::map<DocId, TopicId> m3{{"a", 5}, {"b", 5}, {"c", 2}};
  CHECK(adjusted_rand_index(m1, m3) == 1.0);
}

TEST_CASE("ARI is exact on large inputs") {
  std::vector<std::int64_t> a(30000);
  std::vector<std::int64_t> b(30000);
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = static_cast<std::int64_t>(i % 3);
    b[i] = static_cast<std::int64_t>(i % 3);
  }
  CHECK(adjusted_rand_index(a, b) == 1.0);
  b[0] = 1;
  CHECK(adjusted_rand_index(a, b) < 1.0);
}

TEST_CASE("TCD of identical, orthogonal and antipodal centroids") {
  TopicAlignment al;
  al.matched = {{0, 10, 1.0}};
  CHECK(*topic_centroid_drift(al, {{0, {1, 0}}}, {{10, {2, 0}}}).value == 0.0);
  CHECK(*topic_centroid_drift(al, {{0, {1, 0}}}, {{10, {0, 3}}}).value == 1.0);
  CHECK(*topic_centroid_drift(al, {{0, {1, 0}}}, {{10, {-1, 0}}}).value == 2.0);

  al.matched = {{0, 10, 1.0}, {1, 11, 1.0}};
  const MetricValue mixed = topic_centroid_drift(al, {{0, {1, 0}}, {1, {0, 0}}}, {{10, {0, 1}}, {11, {1, 1}}});
  CHECK(*mixed.value == 1.0);
  CHECK(mixed.flags.size() == 1);
  CHECK(!topic_centroid_drift(TopicAlignment{}, {}, {}).value);
  al.matched = {{0, 10, 1.0}};
  CHECK_THROWS_AS(topic_centroid_drift(al, {}, {{10, {1, 0}}}), ValidationError);
}

TEST_CASE("ISIM with identical and orthogonal vectors") {
  const WordVectorTable same({"a", "b", "c", "d"}, 2, {1, 1, 1, 1, 1, 1, 1, 1});
  CHECK(*intruder_similarity({{"a", "b"}}, same, 2, 0).value == doctest::Approx(1.0).epsilon(1e-12));
  const WordVectorTable ortho({"a", "b", "x", "y"}, 3, {1, 0, 0, 2, 0, 0, 0, 1, 0, 0, 0, 3});
  CHECK(*intruder_similarity({{"a", "b"}}, ortho, 2, 3).value == 0.0);
  CHECK_THROWS_AS(intruder_similarity({{"a", "missing"}}, ortho, 2, 0), ValidationError);
  try {
    intruder_similarity({{"a", "missing"}}, ortho, 2, 0);
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("missing") != std::string::npos);
  }
  CHECK_THROWS_AS(intruder_similarity({{"a", "b", "x", "y"}}, ortho, 2, 0), ValidationError);
  CHECK_THROWS_AS(intruder_similarity({{"a"}}, ortho, 0, 0), ValidationError);
}

TEST_CASE("ISIM matches exhaustive enumeration on a toy vocabulary") {
  // 3 topics over 7 words in 3-D.
  const std::vector<std::string> words{"t1a", "t1b", "t2a", "t2b", "t3a", "t3b", "free"};
  const std::vector<double> vals{1, 0, 0, 0.9, 0.1, 0, 0, 1, 0, 0.1, 0.8, 0.2, 0, 0, 1, 0.3, 0, 0.9, 1, 1, 1};
  const WordVectorTable table(words, 3, vals);
  const std::vector<std::vector<std::string>> topics{{"t1a", "t1b"}, {"t2a", "t2b"}, {"t3a", "t3b"}};
  auto cosine = [&](const std::string& a, const std::string& b) {
    const auto x = table.vector(a);
    const auto y = table.vector(b);
    double dot = 0, nx = 0, ny = 0;
    for (std::size_t i = 0; i < 3; ++i) {
      dot += x[i] * y[i];
      nx += x[i] * x[i];
      ny += y[i] * y[i];
    }
    return dot / std::sqrt(nx * ny);
  };
  auto intruder_score = [&](const std::vector<std::string>& topic, const std::string& w) {
    double s = 0;
    for (const auto& t : topic) s += cosine(w, t);
    return s / static_cast<double>(topic.size());
  };
  // With as many intruders as candidates, every candidate is drawn whatever the seed.
  double total = 0;
  for (const auto& topic : topics) {
    double sum = 0;
    for (const auto& w : words) {
      if (std::find(topic.begin(), topic.end(), w) == topic.end()) sum += intruder_score(topic, w);
    }
    total += sum / 5.0;
  }
  for (std::uint64_t seed : {0u, 1u, 99u}) {
    CHECK(std::abs(*intruder_similarity(topics, table, 5, seed).value - total / 3.0) < 1e-12);
  }
  // With fewer intruders the result is the mean over one 2-subset of the 5 candidates.
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const double got = *intruder_similarity({topics[0]}, table, 2, seed).value;
    std::vector<std::string> cand{"t2a", "t2b", "t3a", "t3b", "free"};
    bool found = false;
    for (std::size_t i = 0; i < cand.size(); ++i) {
      for (std::size_t j = i + 1; j < cand.size(); ++j) {
        const double v = (intruder_score(topics[0], cand[i]) + intruder_score(topics[0], cand[j])) / 2.0;
        found = found || std::abs(v - got) < 1e-12;
      }
    }
    CHECK(found);
    CHECK(got == *intruder_similarity({topics[0]}, table, 2, seed).value);
  }
}

TEST_CASE("PCC cases") {
  const auto t = build_cooccurrence({split("a b x y"), split("a b x y"), split("q")}, 10);
  const MetricValue same = parent_child_coherence({"a", "b"}, {"b", "a"}, t);
  CHECK(!same.value);
  CHECK(same.flags == std::vector<std::string>{"pcc:empty_after_overlap_removal"});
  CHECK(*parent_child_coherence({"a", "b"}, {"x", "y"}, t).value == doctest::Approx(1.0).epsilon(1e-9));
  // overlap words are dropped before pairing
  CHECK(*parent_child_coherence({"a", "q"}, {"a", "x"}, t).value == -1.0);
  CHECK_THROWS_AS(parent_child_coherence({}, {"a"}, t), ValidationError);

  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const auto docs = random_corpus(rng, 30, 9);
    const auto t2 = build_cooccurrence(docs, 4);
    const auto wins = oracle::windows(docs, 4);
    auto v = t2.vocabulary();
    if (v.size() < 6) continue;
    std::shuffle(v.begin(), v.end(), rng);
    const std::vector<std::string> child(v.begin(), v.begin() + 3);
    const std::vector<std::string> parent(v.begin() + 3, v.begin() + 6);
    double sum = 0;
    for (const auto& c : child) {
      for (const auto& p : parent) sum += oracle::npmi(wins, c, p);
    }
    CHECK(std::abs(*parent_child_coherence(child, parent, t2).value - sum / 9.0) < 1e-9);
  }
}

TEST_CASE("sibling diversity") {
  CHECK(sibling_diversity({{"a", "b", "c"}, {"c", "d"}, {"d", "e"}}) == 0.6);
  CHECK(sibling_diversity({{"a", "b"}, {"c"}, {"d", "e"}}) == 1.0);
  CHECK(sibling_diversity({{"a", "b"}, {"b", "a"}}) == 0.0);
  CHECK_THROWS_AS(sibling_diversity({{"a"}}), ValidationError);
}

TEST_CASE("hierarchy scores aggregate edges and sibling groups") {
  const auto t = build_cooccurrence({split("r a b"), split("r c d"), split("a b"), split("c d")}, 10);
  const std::vector<std::vector<TopicDescriptor>> levels{
      {node_topic(0, kNoNode, {"r", "a"})},
      {node_topic(1, 0, {"a", "b"}), node_topic(2, 0, {"c", "d"})},
      {node_topic(3, 1, {"a", "b"})},
  };
  const HierarchyScores s = hierarchy_scores(levels, t);
  REQUIRE(s.npmi_per_level.size() == 3);
  CHECK(*s.npmi_per_level[1].value == doctest::Approx(1.0).epsilon(1e-9));
  // Edge 1->0 pairs b with r; 2->0 pairs {c,d} with {r,a}; 3->1 overlaps fully.
  const double e1 = npmi("b", "r", t);
  const double e2 = (npmi("c", "r", t) + npmi("c", "a", t) + npmi("d", "r", t) + npmi("d", "a", t)) / 4.0;
  CHECK(*s.pcc.value == doctest::Approx((e1 + e2) / 2.0).epsilon(1e-12));
  CHECK(s.pcc.flags == std::vector<std::string>{"pcc:empty_after_overlap_removal"});
  CHECK(*s.sd.value == 1.0);
}

TEST_CASE("mean_of skips undefined values") {
  const MetricValue m = mean_of({{1.0, {}}, {std::nullopt, {"x"}}, {3.0, {"y"}}});
  CHECK(*m.value == 2.0);
  CHECK(m.flags == std::vector<std::string>{"x", "y"});
  CHECK(!mean_of({{std::nullopt, {}}}).value);
}
