#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "ngram_oaxe/figure1.hpp"
#include "ngram_oaxe/loss.hpp"
#include "ngram_oaxe/oracles.hpp"
#include "ngram_oaxe/verify.hpp"

using namespace ngram_oaxe;

namespace {

// One-hot distributions placing tokens[t] at position t.
LogProbBatch one_hot(const std::vector<TokenId>& tokens, std::size_t V) {
  Tensor3 v(1, tokens.size(), V, -std::numeric_limits<double>::infinity());
  for (std::size_t t = 0; t < tokens.size(); ++t) v(0, t, static_cast<std::size_t>(tokens[t])) = 0.0;
  return LogProbBatch(std::move(v), {tokens.size()});
}

LogProbBatch uniform(std::size_t B, std::size_t T, std::size_t V) {
  return LogProbBatch(Tensor3(B, T, V, -std::log(static_cast<double>(V))), std::vector<std::size_t>(B, T));
}

struct Instance {
  LogProbBatch lp;
  std::vector<TokenSeq> y;
};

Instance random_instance(std::uint64_t seed, std::vector<std::size_t> lens, std::size_t V = 10) {
  Rng rng = make_stream(seed, "test/loss");
  std::size_t T = *std::max_element(lens.begin(), lens.end());
  auto lp = log_softmax(oracle::random_logits(lens.size(), T, V, rng), lens);
  auto y = oracle::random_targets(lens, V, rng);
  return {std::move(lp), std::move(y)};
}

}  // namespace

TEST(NgramSpec, Range) {
  EXPECT_NO_THROW(NgramSpec(1));
  EXPECT_NO_THROW(NgramSpec(8));
  EXPECT_THROW(NgramSpec(0), ValidationError);
  EXPECT_THROW(NgramSpec(9), ValidationError);
}

TEST(TruncationConfig, Range) {
  EXPECT_NO_THROW(TruncationConfig::with_margin(0.0));
  EXPECT_NO_THROW(TruncationConfig::with_margin(1.0));
  EXPECT_THROW(TruncationConfig::with_margin(1.5), ValidationError);
  EXPECT_THROW(TruncationConfig::with_margin(-0.1), ValidationError);
  EXPECT_THROW(TruncationConfig::with_margin(std::nan("")), ValidationError);
}

TEST(TokenCost, FirstPositionEntry) {
  const auto lp = figure1::log_probs();
  const std::vector<TokenSeq> y{figure1::target()};
  EXPECT_NEAR(build_token_cost(lp, y, 0)(0, 0), -std::log(0.2), 1e-12);
}

TEST(TokenCost, OneHotHasZeroDiagonal) {
  const auto lp = one_hot({2, 3, 4}, 6);
  const std::vector<TokenSeq> y{TokenSeq{2, 3, 4}};
  const auto c = build_token_cost(lp, y, 0);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      if (i == j) {
        EXPECT_EQ(c(i, j), 0.0);
      } else {
        EXPECT_GT(c(i, j), 0.0);
      }
    }
  }
}

TEST(TokenCost, MatchesNaiveLoop) {
  const auto inst = random_instance(1, {5, 3});
  for (std::size_t b = 0; b < 2; ++b) {
    const auto c = build_token_cost(inst.lp, inst.y, b);
    ASSERT_EQ(c.size(), inst.lp.length(b));
    for (std::size_t i = 0; i < c.size(); ++i) {
      for (std::size_t j = 0; j < c.size(); ++j) {
        EXPECT_EQ(c(i, j), -inst.lp(b, i, static_cast<std::size_t>(inst.y[b][j])));
      }
    }
  }
  EXPECT_THROW(build_token_cost(inst.lp, inst.y, 2), ValidationError);
}

TEST(Lift, BigramProbabilityProduct) {
  const auto lp = figure1::log_probs();
  const std::vector<TokenSeq> y{figure1::target()};
  const auto lifted = lift_to_ngram_cost(build_token_cost(lp, y, 0), NgramSpec(2));
  EXPECT_EQ(lifted.size(), 4u);
  EXPECT_NEAR(lifted(0, 0), -std::log(0.02), 1e-12);
}

TEST(Lift, UnigramIsIdentity) {
  Rng rng = make_stream(4, "test/lift");
  const auto c = verify::random_cost(5, rng);
  const auto lifted = lift_to_ngram_cost(c, NgramSpec(1));
  EXPECT_TRUE(std::equal(c.entries().begin(), c.entries().end(), lifted.entries().begin()));
}

TEST(Lift, TrigramMatchesProbabilityDomain) {
  const auto inst = random_instance(5, {6});
  const auto lifted = lift_to_ngram_cost(build_token_cost(inst.lp, inst.y, 0), NgramSpec(3));
  ASSERT_EQ(lifted.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      EXPECT_NEAR(lifted(i, j), -std::log(oracle::ngram_probability(inst.lp, 0, inst.y[0], i, j, 3)), 1e-9);
    }
  }
}

TEST(Lift, RejectsShortSentence) {
  Rng rng = make_stream(6, "test/lift");
  EXPECT_THROW(lift_to_ngram_cost(verify::random_cost(2, rng), NgramSpec(3)), ValidationError);
}

TEST(XeLoss, PerfectPredictionIsZero) {
  const std::vector<TokenSeq> y{TokenSeq{2, 3, 4}};
  EXPECT_EQ(xe_loss(one_hot({2, 3, 4}, 5), y).value, 0.0);
}

TEST(XeLoss, UniformIsIlogV) {
  const std::vector<TokenSeq> y{TokenSeq{1, 2, 3}};
  EXPECT_NEAR(xe_loss(uniform(1, 3, 4), y).value, 3.0 * std::log(4.0), 1e-12);
}

TEST(XeLoss, MatchesNaiveLoopAndGradient) {
  const auto inst = random_instance(7, {4, 6});
  const auto out = xe_loss(inst.lp, inst.y);
  double want = 0.0;
  for (std::size_t b = 0; b < 2; ++b) {
    for (std::size_t i = 0; i < inst.lp.length(b); ++i) {
      want -= inst.lp(b, i, static_cast<std::size_t>(inst.y[b][i]));
      EXPECT_EQ(out.grad(b, i, static_cast<std::size_t>(inst.y[b][i])), -1.0);
    }
  }
  EXPECT_NEAR(out.value, want, 1e-12);
}

TEST(OaxeLoss, ForgivesWordOrder) {
  // Prediction is a permutation of the target.
  const std::vector<TokenSeq> y{TokenSeq{2, 3, 4, 5}};
  const auto lp = one_hot({4, 2, 5, 3}, 7);
  EXPECT_EQ(oaxe_loss(lp, y, TruncationConfig::none(), 1).value, 0.0);
  EXPECT_GT(xe_loss(lp, y).value, 100.0);
}

TEST(OaxeLoss, NeverExceedsXe) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto inst = random_instance(100 + seed, {7, 3, 5});
    EXPECT_LE(oaxe_loss(inst.lp, inst.y, TruncationConfig::none(), 1).value,
              xe_loss(inst.lp, inst.y).value + 1e-12);
  }
}

TEST(OaxeLoss, MatchesEnumerationOverSixFactorial) {
  const auto inst = random_instance(8, {6});
  EXPECT_NEAR(oaxe_loss(inst.lp, inst.y, TruncationConfig::none(), 1).value,
              oracle::enumerate_ngram_loss(inst.lp, 0, inst.y[0], 1), 1e-9);
}

TEST(NgramLoss, UnigramEqualsOaxe) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto inst = random_instance(200 + seed, {6, 2, 8});
    EXPECT_EQ(ngram_oaxe_loss(inst.lp, inst.y, NgramSpec(1), TruncationConfig::with_margin(0.0), 1).value,
              oaxe_loss(inst.lp, inst.y, TruncationConfig::with_margin(0.0), 1).value);
  }
}

TEST(NgramLoss, BigramMatchesEnumerationAtLengthFive) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto inst = random_instance(300 + seed, {5});
    EXPECT_NEAR(ngram_oaxe_loss(inst.lp, inst.y, NgramSpec(2), TruncationConfig::none(), 1).value,
                oracle::enumerate_ngram_loss(inst.lp, 0, inst.y[0], 2), 1e-9);
  }
}

TEST(NgramLoss, RepeatedTokensHandled) {
  // Target with a repeated token: any of the equal-cost matchings gives the same value.
  const std::vector<TokenSeq> y{TokenSeq{2, 2, 3, 2}};
  const auto inst = random_instance(9, {4}, 5);
  const auto out = ngram_oaxe_loss(inst.lp, y, NgramSpec(2), TruncationConfig::none(), 1);
  EXPECT_NEAR(out.value, oracle::enumerate_ngram_loss(inst.lp, 0, y[0], 2), 1e-9);
}

TEST(NgramLoss, ShortSentenceUsesWholeSentence) {
  const auto inst = random_instance(10, {2, 5});
  const auto out = ngram_oaxe_loss(inst.lp, inst.y, NgramSpec(3), TruncationConfig::none(), 1);
  EXPECT_EQ(out.sentences[0].ngram_size, 2u);
  EXPECT_EQ(out.sentences[0].pairs.size(), 1u);
  EXPECT_EQ(out.sentences[1].ngram_size, 3u);
  EXPECT_EQ(out.sentences[1].pairs.size(), 3u);
}

TEST(NgramLoss, OutputInvariants) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto inst = random_instance(400 + seed, {6, 4, 7});
    for (int n : {1, 2, 3}) {
      const auto out = ngram_oaxe_loss(inst.lp, inst.y, NgramSpec(n), TruncationConfig::with_margin(0.15), 1);
      EXPECT_GE(out.value, 0.0);
      double kept = 0.0;
      Tensor3 covered(3, 7, 10, 0.0);
      for (std::size_t b = 0; b < 3; ++b) {
        const auto& s = out.sentences[b];
        EXPECT_GE(std::count(s.kept.begin(), s.kept.end(), true), 1);
        for (std::size_t k = 0; k < s.pairs.size(); ++k) {
          if (!s.kept[k]) continue;
          kept += s.pairs[k].cost;
          for (std::size_t o = 0; o < s.ngram_size; ++o) {
            covered(b, s.pairs[k].window + o, static_cast<std::size_t>(inst.y[b][s.pairs[k].ngram + o])) = 1.0;
          }
        }
      }
      EXPECT_NEAR(out.value, kept, 1e-9);
      for (std::size_t i = 0; i < covered.data().size(); ++i) {
        if (covered.data()[i] == 0.0) {
          EXPECT_EQ(out.grad.data()[i], 0.0);
        }
      }
    }
  }
}

TEST(NgramLoss, ThreadCountDoesNotChangeResult) {
  const auto inst = random_instance(11, {8, 7, 8, 5, 6, 8, 3, 8});
  const auto a = ngram_oaxe_loss(inst.lp, inst.y, NgramSpec(2), TruncationConfig::with_margin(0.1), 1);
  const auto b = ngram_oaxe_loss(inst.lp, inst.y, NgramSpec(2), TruncationConfig::with_margin(0.1), 4);
  EXPECT_EQ(a.value, b.value);
  EXPECT_EQ(a.grad, b.grad);
}

TEST(Truncation, ZeroMarginKeepsAll) {
  const std::vector<MatchedPair> pairs{{0, 0, 50.0}, {1, 1, 80.0}};
  const auto kept = truncate_matches(pairs, NgramSpec(2), TruncationConfig::with_margin(0.0));
  EXPECT_EQ(kept, (std::vector<bool>{true, true}));
}

TEST(Truncation, GeometricMeanThreshold) {
  // exp(-(-ln 0.02) / 2) = sqrt(0.02) ~ 0.141
  const std::vector<MatchedPair> pairs{{0, 0, 0.1}, {1, 1, -std::log(0.02)}};
  EXPECT_EQ(truncate_matches(pairs, NgramSpec(2), TruncationConfig::with_margin(0.15)),
            (std::vector<bool>{true, false}));
  EXPECT_EQ(truncate_matches(pairs, NgramSpec(2), TruncationConfig::with_margin(0.10)),
            (std::vector<bool>{true, true}));
}

TEST(Truncation, BestPairAlwaysSurvives) {
  const std::vector<MatchedPair> pairs{{0, 1, 40.0}, {1, 0, 30.0}, {2, 2, 30.0}};
  EXPECT_EQ(truncate_matches(pairs, NgramSpec(1), TruncationConfig::with_margin(1.0)),
            (std::vector<bool>{false, true, false}));
}

TEST(Truncation, MonotoneOverMarginGrid) {
  const auto r = verify::truncation(20, 3);
  EXPECT_TRUE(r.ok()) << r.counterexample->dump();
}

TEST(Gradient, BigramChainOverlap) {
  // Identity prediction, I=3, N=2: both bigrams are kept and chain through position 1.
  const std::vector<TokenSeq> y{TokenSeq{2, 3, 4}};
  const auto out = ngram_oaxe_loss(one_hot({2, 3, 4}, 5), y, NgramSpec(2), TruncationConfig::none(), 1);
  EXPECT_EQ(out.grad(0, 0, 2), -1.0);
  EXPECT_EQ(out.grad(0, 1, 3), -2.0);
  EXPECT_EQ(out.grad(0, 2, 4), -1.0);
  EXPECT_EQ(out.kept_count(), 2u);
}

TEST(Gradient, MatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto inst = random_instance(500 + seed, {6, 4});
    for (int n : {1, 2, 3}) {
      const auto out = ngram_oaxe_loss(inst.lp, inst.y, NgramSpec(n), TruncationConfig::with_margin(0.1), 1);
      const Tensor3& base = inst.lp.values();
      auto f = [&](std::span<const double> x) {
        Tensor3 t = base;
        std::copy(x.begin(), x.end(), t.data().begin());
        return frozen_loss_value(t, inst.y, out.sentences);
      };
      const auto fd = oracle::central_differences(f, std::vector<double>(base.data().begin(), base.data().end()), 1e-5);
      EXPECT_LT(oracle::relative_error(out.grad.data(), fd), 1e-5);
    }
  }
}

TEST(Gradient, RejectsStaleAssignment) {
  const auto inst = random_instance(12, {5});
  auto out = ngram_oaxe_loss(inst.lp, inst.y, NgramSpec(2), TruncationConfig::none(), 1);
  out.sentences[0].pairs[0].window = 4;
  EXPECT_THROW(loss_gradient(inst.lp, inst.y, out.sentences), ValidationError);
}

TEST(Figure1, SelectionAndTruncation) {
  const auto demo = figure1::run();
  EXPECT_NEAR(demo.bigram_probs[0][0], 0.02, 1e-12);
  ASSERT_EQ(demo.selected.size(), 4u);
  EXPECT_EQ(demo.selected[0].phrase, "this afternoon");
  EXPECT_EQ(demo.selected[1].phrase, "pizza this");
  EXPECT_EQ(demo.selected[2].phrase, "I ate");
  EXPECT_EQ(demo.selected[3].phrase, "ate pizza");
  EXPECT_TRUE(demo.selected[0].kept);
  EXPECT_FALSE(demo.selected[1].kept);
  EXPECT_TRUE(demo.selected[2].kept);
  EXPECT_TRUE(demo.selected[3].kept);
  EXPECT_NEAR(demo.selected[1].probability, 0.01, 1e-12);
  EXPECT_TRUE(verify::figure1_suite().ok());
}

TEST(Figure1, ZeroMarginKeepsPizzaThis) {
  const auto demo = figure1::run(0.0);
  for (const auto& s : demo.selected) EXPECT_TRUE(s.kept);
}

TEST(VerifySuites, ReductionOracleAndGradient) {
  for (const auto& r : {verify::reduction(20, 1), verify::oracle_loss(5, 1), verify::gradient(3, 1)}) {
    EXPECT_TRUE(r.ok()) << r.name << ": " << r.counterexample->dump();
  }
}
