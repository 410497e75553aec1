#include <gtest/gtest.h>

#include <cmath>

#include "rtriage/error.hpp"
#include "rtriage/featurize.hpp"
#include "rtriage/random.hpp"
#include "test_support.hpp"

using namespace rtriage;
using namespace rtriage::testing;

namespace {

Tokens random_doc(Rng& rng, std::size_t vocab, std::size_t max_len) {
  Tokens d;
  const std::size_t n = 1 + rng.index(max_len);
  for (std::size_t i = 0; i < n; ++i) d.push_back("t" + std::to_string(rng.index(vocab)));
  return d;
}

std::size_t count_ones(const std::vector<std::uint8_t>& v) {
  std::size_t n = 0;
  for (auto x : v) n += x;
  return n;
}

}  // namespace

TEST(ComposeText, Modes) {
  ReplayEvent e = failed_event("e", "S", 1, "select * from X", "cannot find table X");
  EXPECT_EQ(preprocess(compose_text(e, std::nullopt, FeatureMode::em_ss)),
            preprocess("cannot find table x select * from x"));
  EXPECT_EQ(compose_text(e, std::nullopt, FeatureMode::em_ss), "cannot find table X select * from X");
  EXPECT_EQ(compose_text(e, std::string("summary words"), FeatureMode::em), "cannot find table X");
  EXPECT_EQ(compose_text(e, std::string("summary words"), FeatureMode::em_ss_summary),
            "cannot find table X select * from X summary words");
  EXPECT_EQ(compose_text(e, std::string("summary words"), FeatureMode::em_summary),
            "cannot find table X summary words");
  EXPECT_EQ(compose_text(e, std::nullopt, FeatureMode::em_summary), "cannot find table X");
  EXPECT_TRUE(uses_summary(FeatureMode::em_ss_summary));
  EXPECT_FALSE(uses_summary(FeatureMode::em_ss));
  EXPECT_EQ(parse_feature_mode("em_summary"), FeatureMode::em_summary);
  EXPECT_THROW(parse_feature_mode("bogus"), ValidationError);
}

TEST(Preprocess, Rules) {
  EXPECT_EQ(preprocess("Cannot find table/view X12"), (Tokens{"cannot", "find", "table", "view", "x12"}));
  EXPECT_TRUE(preprocess("123 456").empty());
  EXPECT_TRUE(preprocess("").empty());
  EXPECT_EQ(preprocess("a bb 7 c3"), (Tokens{"bb", "c3"}));
}

TEST(Tfidf, HandComputedIdf) {
  const auto s = fit_tfidf({{"a", "b"}, {"a", "c"}});
  ASSERT_EQ(s.terms, (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_DOUBLE_EQ(s.idf[0], 1.0);
  EXPECT_NEAR(s.idf[1], std::log(1.5) + 1, 1e-15);
  EXPECT_NEAR(s.idf[1], 1.4055, 1e-4);
  EXPECT_DOUBLE_EQ(s.idf[1], s.idf[2]);
}

TEST(Tfidf, SingleDocumentHasEqualIdf) {
  const auto s = fit_tfidf({{"x", "y", "z", "x"}});
  for (double v : s.idf) EXPECT_DOUBLE_EQ(v, s.idf[0]);
}

TEST(Tfidf, EmptyCorpusIsAnError) { EXPECT_THROW(fit_tfidf({}), PreconditionError); }

TEST(Tfidf, TransformHandComputed) {
  const auto s = fit_tfidf({{"a", "b"}, {"a", "c"}});
  const auto v = transform_tfidf(s, {"a", "a", "b"});
  const double b = std::log(1.5) + 1;
  const double n = std::sqrt(4 + b * b);
  EXPECT_NEAR(v[0], 2 / n, 1e-15);
  EXPECT_NEAR(v[1], b / n, 1e-15);
  EXPECT_EQ(v[2], 0.0);
}

TEST(Tfidf, UnseenAndEmptyGiveZeroVector) {
  const auto s = fit_tfidf({{"a", "b"}});
  EXPECT_EQ(l2_norm(transform_tfidf(s, {"zzz", "qqq"})), 0.0);
  EXPECT_EQ(l2_norm(transform_tfidf(s, {})), 0.0);
}

TEST(Tfidf, SelfCosineIsOne) {
  Rng rng(3);
  std::vector<Tokens> corpus;
  for (int i = 0; i < 30; ++i) corpus.push_back(random_doc(rng, 40, 10));
  const auto s = fit_tfidf(corpus);
  for (const auto& d : corpus) {
    const auto v = transform_tfidf(s, d);
    EXPECT_NEAR(cosine(v, v), 1.0, 1e-12);
    EXPECT_NEAR(l2_norm(v), 1.0, 1e-9);
  }
}

TEST(Tfidf, MaxTermsKeepsMostFrequent) {
  const auto s = fit_tfidf({{"a", "b"}, {"a", "c"}, {"a", "b"}}, 2);
  EXPECT_EQ(s.terms, (std::vector<std::string>{"a", "b"}));
}

TEST(Subword, EmptyAndDeterminism) {
  const auto s = fit_subword({}, 128, 3, 6, 17);
  EXPECT_EQ(l2_norm(transform_subword(s, {})), 0.0);
  const auto a = transform_subword(s, {"table", "view"});
  const auto b = transform_subword(fit_subword({}, 128, 3, 6, 17), {"table", "view"});
  EXPECT_EQ(a, b);
  EXPECT_NEAR(l2_norm(a), 1.0, 1e-9);
  EXPECT_NE(transform_subword(fit_subword({}, 128, 3, 6, 18), {"table"}), transform_subword(s, {"table"}));
  EXPECT_THROW(fit_subword({}, 4, 3, 6, 1), PreconditionError);
}

TEST(Subword, SharedNgramsAreCloser) {
  const auto s = fit_subword({}, 128, 3, 6, 0x5eed);
  const auto x1 = transform_subword(s, {"table_x1"});
  const auto x2 = transform_subword(s, {"table_x2"});
  const auto conn = transform_subword(s, {"connection"});
  EXPECT_GT(cosine(x1, x2), cosine(x1, conn));
}

TEST(Subword, UnitsAreBoundaryMarked) {
  const auto u = subword_units("ab", 3, 6);
  EXPECT_EQ(u, (std::vector<std::string>{"<ab", "ab>", "<ab>", "w:<ab>"}));
}

TEST(Transform, BatchMatchesSingle) {
  Rng rng(4);
  std::vector<Tokens> docs;
  for (int i = 0; i < 20; ++i) docs.push_back(random_doc(rng, 15, 6));
  for (const auto& state : {fit_tfidf(docs), fit_subword(docs, 32, 3, 5, 9)}) {
    const auto batch = transform_batch(state, docs);
    for (std::size_t i = 0; i < docs.size(); ++i) EXPECT_EQ(batch[i], transform(state, docs[i]));
  }
}

TEST(Transform, StateIsFrozen) {
  Rng rng(5);
  std::vector<Tokens> docs;
  for (int i = 0; i < 10; ++i) docs.push_back(random_doc(rng, 10, 5));
  const auto s = fit_tfidf(docs);
  const auto copy = s;
  const auto before = transform(s, docs[0]);
  for (int i = 0; i < 10; ++i) transform(s, random_doc(rng, 50, 8));
  EXPECT_EQ(transform(s, docs[0]), before);
  EXPECT_EQ(s, copy);
}

TEST(VectorizerState, JsonRoundTripIsBitExact) {
  Rng rng(6);
  std::vector<Tokens> docs;
  for (int i = 0; i < 10; ++i) docs.push_back(random_doc(rng, 10, 5));
  for (const auto& state : {fit_tfidf(docs), fit_subword(docs, 16, 2, 4, 3)}) {
    const auto back = nlohmann::json::parse(nlohmann::json(state).dump()).get<TextVectorizerState>();
    EXPECT_EQ(back, state);
    for (const auto& d : docs) EXPECT_EQ(transform(back, d), transform(state, d));
  }
}

TEST(RankEquivalence, EuclideanAndCosineIdentity) {
  Rng rng(7);
  for (int i = 0; i < 1000; ++i) {
    const auto a = random_unit(rng, 16), b = random_unit(rng, 16);
    double sq = 0;
    for (std::size_t j = 0; j < a.size(); ++j) sq += (a[j] - b[j]) * (a[j] - b[j]);
    EXPECT_NEAR(sq, 2 - 2 * cosine(a, b), 1e-9);
  }
}

TEST(Chi2, HandComputedTwoByTwo) {
  std::vector<Tokens> corpus;
  std::vector<std::string> labels;
  for (int i = 0; i < 10; ++i) {
    corpus.push_back({"marker", "common"});
    labels.push_back("A");
  }
  for (int i = 0; i < 10; ++i) {
    corpus.push_back({"common"});
    labels.push_back("B");
  }
  const auto r = chi2_importance(corpus, labels);
  ASSERT_EQ(r.ranked.size(), 2u);
  EXPECT_EQ(r.ranked[0].term, "marker");
  EXPECT_NEAR(r.ranked[0].score, 20.0, 1e-12);
  EXPECT_EQ(r.ranked[1].term, "common");
  EXPECT_EQ(r.ranked[1].score, 0.0);
  EXPECT_NEAR(r.per_class_top.at("A").front().score, 20.0, 1e-12);
}

TEST(Chi2, SingleClassIsAnError) {
  EXPECT_THROW(chi2_importance({{"a"}, {"b"}}, {"x", "x"}), PreconditionError);
}

TEST(Chi2, MatchesBruteForceOnRandomCorpora) {
  Rng rng(8);
  for (int round = 0; round < 200; ++round) {
    std::vector<Tokens> corpus;
    std::vector<std::string> labels;
    const std::size_t n = 2 + rng.index(49);
    const std::size_t classes = 2 + rng.index(4);
    for (std::size_t i = 0; i < n; ++i) {
      corpus.push_back(random_doc(rng, 12, 5));
      labels.push_back("c" + std::to_string(i < classes ? i : rng.index(classes)));
    }
    const auto r = chi2_importance(corpus, labels);
    const auto expected = oracle::chi2(corpus, labels);
    ASSERT_EQ(r.ranked.size(), expected.size());
    for (std::size_t i = 0; i < r.ranked.size(); ++i) {
      EXPECT_NEAR(r.ranked[i].score, expected.at(r.ranked[i].term), 1e-9);
      EXPECT_GE(r.ranked[i].score, 0.0);
      if (i > 0) EXPECT_GE(r.ranked[i - 1].score, r.ranked[i].score);
    }
  }
}

TEST(TermFilter, Rules) {
  const auto s = fit_tfidf({{"a", "b"}, {"a"}, {"a"}, {"a"}, {"a"}, {"a"}, {"a"}, {"a"}});
  const double idf_a = s.idf[*s.term_index("a")], idf_b = s.idf[*s.term_index("b")];
  ASSERT_GT(idf_b, 2 * idf_a);
  EXPECT_EQ(tfidf_term_filter({"a", "a", "b"}, s, 1), (Tokens{"b"}));
  EXPECT_EQ(tfidf_term_filter({"a", "a", "b"}, s, 2), (Tokens{"a", "a", "b"}));
  EXPECT_EQ(tfidf_term_filter({"a", "a", "b"}, s, 10), (Tokens{"a", "a", "b"}));
}

TEST(TermFilter, OutputIsSubsequenceAndNeverLonger) {
  Rng rng(9);
  std::vector<Tokens> corpus;
  for (int i = 0; i < 30; ++i) corpus.push_back(random_doc(rng, 20, 8));
  const auto s = fit_tfidf(corpus);
  for (int i = 0; i < 500; ++i) {
    const Tokens in = random_doc(rng, 25, 12);
    const Tokens out = tfidf_term_filter(in, s, 1 + rng.index(6));
    EXPECT_LE(out.size(), in.size());
    std::size_t j = 0;
    for (const auto& t : in)
      if (j < out.size() && out[j] == t) ++j;
    EXPECT_EQ(j, out.size());
  }
}

TEST(Encode, OneHotAndOov) {
  std::vector<ReplayEvent> events = {failed_event("a", "S", 1, "s", "m", -303), failed_event("b", "S", 2, "s", "m", 111),
                                     failed_event("c", "S", 3, "s", "m", 100)};
  std::vector<const ReplayEvent*> ptrs;
  for (const auto& e : events) ptrs.push_back(&e);
  const auto schema = CategoricalSchema::fit(ptrs);
  const auto code_block = [&](const FeatureVector& f) {
    const auto dense = f.categorical_dense();
    const std::size_t off = schema.attribute_offset(CategoricalAttribute::error_code);
    return std::vector<std::uint8_t>(dense.begin() + static_cast<std::ptrdiff_t>(off),
                                     dense.begin() + static_cast<std::ptrdiff_t>(off + 4));
  };
  const auto f = encode(events[1], {}, schema);
  EXPECT_EQ(code_block(f), (std::vector<std::uint8_t>{0, 1, 0, 0}));
  EXPECT_EQ(count_ones(f.categorical_dense()), 4u);

  const auto unseen = encode(failed_event("d", "S", 4, "s", "m", 999), {}, schema);
  EXPECT_EQ(code_block(unseen), (std::vector<std::uint8_t>{0, 0, 0, 1}));
  EXPECT_EQ(count_ones(unseen.categorical_dense()), 4u);

  EXPECT_THROW(encode(events[0], {0.5, 0.5}, schema), PreconditionError);
  EXPECT_NO_THROW(encode(events[0], {0.6, 0.8}, schema));
}

TEST(FeatureVector, JsonRoundTrip) {
  Rng rng(10);
  FeatureVector f;
  f.categorical = {1, 5, 7, 9};
  f.categorical_width = 12;
  f.text = random_unit(rng, 8);
  EXPECT_EQ(nlohmann::json::parse(nlohmann::json(f).dump()).get<FeatureVector>(), f);
}
