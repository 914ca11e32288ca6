#include <gtest/gtest.h>

#include "ngram_oaxe/eval.hpp"
#include "ngram_oaxe/rng.hpp"

using namespace ngram_oaxe;

namespace {

constexpr TokenId a = 2, b = 3, c = 4, d = 5, e = 6;

// Hand-counted fixture (clipped against the per-ngram max over refs):
//   [a b a b] vs {a b c d}:         unigrams 2/4, bigrams 1/3, trigrams 0/2
//   [c c c]   vs {c d e}, {c c e}:  unigrams 2/3, bigrams 1/2, trigrams 0/1
//   [d e]     vs {e d}, {d e}:      unigrams 2/2, bigrams 1/1
const std::vector<TokenSeq> kOutputs{TokenSeq{a, b, a, b}, TokenSeq{c, c, c}, TokenSeq{d, e}};
const std::vector<RefSet> kRefs{
    {TokenSeq{a, b, c, d}},
    {TokenSeq{c, d, e}, TokenSeq{c, c, e}},
    {TokenSeq{e, d}, TokenSeq{d, e}},
};

}  // namespace

TEST(Repetition, SimpleCases) {
  EXPECT_EQ(repetition_rate(std::vector<TokenSeq>{TokenSeq{a, b, c}}), 0.0);
  EXPECT_EQ(repetition_rate(std::vector<TokenSeq>{TokenSeq{a, a, b, b}}), 0.5);
  EXPECT_THROW(repetition_rate(std::vector<TokenSeq>{}), ValidationError);
}

TEST(Repetition, MatchesReferenceLoop) {
  Rng rng = make_stream(1, "test/eval");
  std::uniform_int_distribution<TokenId> tok(2, 4);
  std::uniform_int_distribution<std::size_t> len(1, 8);
  std::vector<TokenSeq> outs;
  std::size_t repeats = 0, total = 0;
  for (int k = 0; k < 50; ++k) {
    std::vector<TokenId> ids(len(rng));
    for (auto& t : ids) t = tok(rng);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      ++total;
      if (i > 0 && ids[i] == ids[i - 1]) ++repeats;
    }
    outs.emplace_back(ids);
  }
  EXPECT_DOUBLE_EQ(repetition_rate(outs), static_cast<double>(repeats) / static_cast<double>(total));
}

TEST(Precision, ExactMatchIsOne) {
  const std::vector<TokenSeq> outs{TokenSeq{a, b, c, d}};
  const std::vector<RefSet> refs{{TokenSeq{d, c, b, a}, TokenSeq{a, b, c, d}}};
  for (std::size_t n = 1; n <= 4; ++n) EXPECT_EQ(ngram_precision(outs, refs, n), 1.0);
}

TEST(Precision, DisjointIsZero) {
  const std::vector<TokenSeq> outs{TokenSeq{a, b}};
  const std::vector<RefSet> refs{{TokenSeq{c, d}}};
  EXPECT_EQ(ngram_precision(outs, refs, 1), 0.0);
}

TEST(Precision, HandCountedFixture) {
  EXPECT_DOUBLE_EQ(ngram_precision(kOutputs, kRefs, 1), 6.0 / 9.0);
  EXPECT_DOUBLE_EQ(ngram_precision(kOutputs, kRefs, 2), 3.0 / 6.0);
  EXPECT_DOUBLE_EQ(ngram_precision(kOutputs, kRefs, 3), 0.0);
  EXPECT_DOUBLE_EQ(ngram_precision(kOutputs, kRefs, 4), 0.0);
  EXPECT_THROW(ngram_precision(kOutputs, kRefs, 5), ValidationError);
  EXPECT_THROW(ngram_precision(kOutputs, kRefs, 0), ValidationError);
}

TEST(Precision, RejectsMismatchedBatches) {
  EXPECT_THROW(ngram_precision(kOutputs, std::vector<RefSet>(kRefs.begin(), kRefs.end() - 1), 1), ValidationError);
}

TEST(ModeMatch, AllEqualToSecondRef) {
  const std::vector<TokenSeq> outs{TokenSeq{c, c, e}, TokenSeq{d, e}};
  const std::vector<RefSet> refs{kRefs[1], kRefs[2]};
  EXPECT_EQ(mode_match_rate(outs, refs), 1.0);
}

TEST(ModeMatch, MixedModeHalvesMatchNothing) {
  // Modes [a b c d] and [c d a b]; outputs splice halves of the two.
  const RefSet modes{TokenSeq{a, b, c, d}, TokenSeq{c, d, a, b}};
  const std::vector<TokenSeq> outs{TokenSeq{a, b, a, b}, TokenSeq{c, d, c, d}};
  EXPECT_EQ(mode_match_rate(outs, std::vector<RefSet>{modes, modes}), 0.0);
}

TEST(ModeMatch, MixedBatchAndDedup) {
  const RefSet modes{TokenSeq{a, b, c, d}, TokenSeq{c, d, a, b}};
  const std::vector<TokenSeq> outs{
      TokenSeq{a, b, c, d},     // match
      TokenSeq{a, a, b, c, d},  // match after dedup
      TokenSeq{c, d, a, a},     // no
      TokenSeq{c, d, a, b},     // match
  };
  EXPECT_DOUBLE_EQ(mode_match_rate(outs, std::vector<RefSet>(4, modes)), 0.75);
}

TEST(Report, BucketsAndJson) {
  const std::vector<TokenSeq> outs{TokenSeq{a, b}, TokenSeq{a, b, c, d, e}};
  const std::vector<RefSet> refs{{TokenSeq{a, b}}, {TokenSeq{a, b, c, d, e}}};
  const auto r = build_report(outs, refs);
  EXPECT_EQ(r.n_examples, 2u);
  EXPECT_EQ(r.per_length_buckets[0].n_examples, 1u);
  EXPECT_EQ(r.per_length_buckets[1].n_examples, 1u);
  EXPECT_EQ(r.per_length_buckets[2].n_examples, 0u);
  EXPECT_FALSE(r.per_length_buckets[0].ngram_precision[2].has_value());
  EXPECT_EQ(r.ngram_precision[3], 1.0);

  const auto j = to_json(r);
  for (const char* key : {"repetition_rate", "ngram_precision", "mode_match_rate", "per_length_buckets", "n_examples"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
  EXPECT_TRUE(j["per_length_buckets"]["1-4"]["ngram_precision"]["3"].is_null());
  EXPECT_TRUE(j["per_length_buckets"]["13+"]["mode_match_rate"].is_null());
  EXPECT_EQ(j["ngram_precision"]["1"], 1.0);
}

TEST(Report, LengthBuckets) {
  EXPECT_EQ(length_bucket(1), 0u);
  EXPECT_EQ(length_bucket(4), 0u);
  EXPECT_EQ(length_bucket(5), 1u);
  EXPECT_EQ(length_bucket(12), 2u);
  EXPECT_EQ(length_bucket(13), 3u);
}
