#include <gtest/gtest.h>

#include <filesystem>
#include <map>
#include <set>
#include <sstream>

#include "ngram_oaxe/datagen.hpp"

using namespace ngram_oaxe;

namespace {

GenConfig small_config(std::uint64_t seed = 0) {
  GenConfig c;
  c.n_examples = 100;
  c.eval_examples = 20;
  c.seed = seed;
  return c;
}

std::vector<TokenId> source_phrase_ids(const SyntheticExample& ex) {
  return {ex.src.ids().begin(), ex.src.ids().end() - 1};
}

}  // namespace

TEST(Vocabs, Layout) {
  const Vocab src = make_source_vocab(4);
  EXPECT_EQ(src.size(), 7u);
  EXPECT_EQ(src.id("<m>"), kMarkerId);
  EXPECT_EQ(src.id("p0"), kFirstPhraseSourceId);
  const Vocab tgt = make_target_vocab(30);
  EXPECT_EQ(tgt.size(), 32u);
  EXPECT_EQ(tgt.id("t0"), kFirstTargetTokenId);
}

TEST(GenCorpus, SingleModeIsDeterministic) {
  auto c = small_config();
  c.mode_count = 1;
  for (const auto& ex : gen_corpus(c).train) {
    ASSERT_EQ(ex.refs.size(), 1u);
    EXPECT_EQ(ex.target, ex.refs[0]);
  }
}

TEST(GenCorpus, TwoPhrasesTwoModesGivesBothOrders) {
  auto c = small_config();
  c.n_phrases = 2;
  c.mode_count = 2;
  for (const auto& ex : gen_corpus(c).train) {
    ASSERT_EQ(ex.refs.size(), 2u);
    std::vector<TokenId> ab = ex.phrases[0], ba = ex.phrases[1];
    ab.insert(ab.end(), ex.phrases[1].begin(), ex.phrases[1].end());
    ba.insert(ba.end(), ex.phrases[0].begin(), ex.phrases[0].end());
    const std::set<std::vector<TokenId>> want{ab, ba};
    const std::set<std::vector<TokenId>> got{ex.refs[0].ids(), ex.refs[1].ids()};
    EXPECT_EQ(got, want);
  }
}

TEST(GenCorpus, ModeSamplingIsUniform) {
  auto c = small_config();
  const auto ex = gen_corpus(c).train.front();
  ASSERT_EQ(ex.refs.size(), 2u);
  Rng rng = make_stream(1, "test/sampling");
  std::size_t first = 0;
  const std::size_t n = 10000;
  for (std::size_t k = 0; k < n; ++k) first += sample_target(ex, rng) == ex.refs[0] ? 1 : 0;
  EXPECT_NEAR(static_cast<double>(first) / n, 0.5, 0.02);
}

TEST(GenCorpus, TrainTargetsCoverBothModes) {
  // Across the corpus the realized target is the first ref about half the time.
  GenConfig c;
  const auto corpus = gen_corpus(c).train;
  std::size_t first = 0;
  for (const auto& ex : corpus) first += ex.target == ex.refs[0] ? 1 : 0;
  EXPECT_NEAR(static_cast<double>(first) / corpus.size(), 0.5, 0.05);
}

TEST(GenCorpus, RefsAreValidConcatenations) {
  const auto g = gen_corpus(small_config(4));
  for (const auto* split : {&g.train, &g.eval}) {
    for (const auto& ex : *split) {
      EXPECT_EQ(ex.refs.size(), 2u);
      std::set<std::vector<TokenId>> distinct;
      for (const auto& r : ex.refs) {
        EXPECT_TRUE(is_phrase_concatenation(r, ex.phrases));
        EXPECT_EQ(r.length(), ex.refs.front().length());
        distinct.insert(r.ids());
      }
      EXPECT_EQ(distinct.size(), ex.refs.size());
      EXPECT_NE(std::find(ex.refs.begin(), ex.refs.end(), ex.target), ex.refs.end());
      EXPECT_EQ(ex.src.ids().back(), kMarkerId);
      // Source phrase ids resolve to the example's phrases through the inventory.
      const auto ids = source_phrase_ids(ex);
      for (std::size_t k = 0; k < ids.size(); ++k) {
        EXPECT_EQ(g.inventory.phrases[static_cast<std::size_t>(ids[k] - kFirstPhraseSourceId)], ex.phrases[k]);
      }
    }
  }
}

TEST(GenCorpus, InventoryPhrasesAreDistinct) {
  auto c = small_config();
  c.phrase_len = 3;
  const auto g = gen_corpus(c);
  const std::set<std::vector<TokenId>> distinct(g.inventory.phrases.begin(), g.inventory.phrases.end());
  EXPECT_EQ(distinct.size(), g.inventory.phrases.size());
  for (const auto& p : g.inventory.phrases) {
    EXPECT_EQ(p.size(), 3u);
    for (TokenId t : p) EXPECT_GE(t, kFirstTargetTokenId);
  }
}

TEST(GenCorpus, EvalIsDisjointByPhraseCombination) {
  const auto g = gen_corpus(small_config(5));
  std::set<std::vector<TokenId>> train;
  for (const auto& ex : g.train) train.insert(source_phrase_ids(ex));
  for (const auto& ex : g.eval) EXPECT_FALSE(train.contains(source_phrase_ids(ex)));
  EXPECT_EQ(g.train.size(), 100u);
  EXPECT_EQ(g.eval.size(), 20u);
}

TEST(GenCorpus, PureFunctionOfConfig) {
  const auto a = gen_corpus(small_config(7));
  const auto b = gen_corpus(small_config(7));
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.eval, b.eval);
  EXPECT_NE(gen_corpus(small_config(8)).train, a.train);
}

TEST(GenCorpus, RejectsImpossibleModeCount) {
  auto c = small_config();
  c.n_phrases = 2;
  c.mode_count = 10;
  try {
    gen_corpus(c);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_STREQ(e.what(), "mode_count exceeds 2! = 2");
  }
  c = small_config();
  c.phrase_len = 5;
  EXPECT_THROW(gen_corpus(c), ValidationError);
  c = small_config();
  c.n_examples = 1000000;
  EXPECT_THROW(gen_corpus(c), ValidationError);
}

TEST(Jsonl, RoundTrip) {
  const auto corpus = gen_corpus(small_config(9)).train;
  std::istringstream in(to_jsonl(corpus));
  EXPECT_EQ(parse_jsonl(in), corpus);
}

TEST(Jsonl, FileRoundTripIsByteStable) {
  const auto corpus = gen_corpus(small_config(10)).eval;
  const auto path = std::filesystem::temp_directory_path() / "ngram_oaxe_test_corpus.jsonl";
  write_jsonl(corpus, path);
  EXPECT_EQ(read_jsonl(path), corpus);
  std::ifstream f(path);
  const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  EXPECT_EQ(bytes, to_jsonl(corpus));
  EXPECT_FALSE(std::filesystem::exists(path.string() + ".tmp"));
  std::filesystem::remove(path);
}

TEST(Jsonl, Schema) {
  SyntheticExample ex{TokenSeq{3, 4, 2}, TokenSeq{5, 6, 7, 8}, {TokenSeq{5, 6, 7, 8}, TokenSeq{7, 8, 5, 6}},
                      {{5, 6}, {7, 8}}};
  EXPECT_EQ(to_json(ex).dump(),
            R"({"phrases":[[5,6],[7,8]],"refs":[[5,6,7,8],[7,8,5,6]],"src":[3,4,2],"target":[5,6,7,8]})");
}

TEST(Jsonl, MissingFieldNamesFieldAndLine) {
  std::istringstream in(
      "{\"src\":[3,2],\"target\":[4],\"refs\":[[4]],\"phrases\":[[4]]}\n"
      "{\"src\":[3,2],\"target\":[4],\"phrases\":[[4]]}\n");
  try {
    parse_jsonl(in);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_STREQ(e.what(), "line 2: missing field 'refs'");
  }
}

TEST(Jsonl, MalformedLineIsRejectedWithLineNumber) {
  std::istringstream in("{\"src\":[3,2],\"target\":[4],\"refs\":[[4]],\"phrases\":[[4]]}\n{oops\n");
  try {
    parse_jsonl(in);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_EQ(std::string(e.what()).rfind("line 2:", 0), 0u);
  }
  std::istringstream bad_pad("{\"src\":[3,0,2],\"target\":[4],\"refs\":[[4]],\"phrases\":[[4]]}\n");
  EXPECT_THROW(parse_jsonl(bad_pad), ValidationError);
}

TEST(Jsonl, TrailingNewlinesAccepted) {
  std::istringstream in("{\"src\":[3,2],\"target\":[4],\"refs\":[[4]],\"phrases\":[[4]]}\n\n");
  EXPECT_EQ(parse_jsonl(in).size(), 1u);
  std::istringstream no_newline("{\"src\":[3,2],\"target\":[4],\"refs\":[[4]],\"phrases\":[[4]]}");
  EXPECT_EQ(parse_jsonl(no_newline).size(), 1u);
}

TEST(PhraseConcatenation, Segmentation) {
  const std::vector<std::vector<TokenId>> phrases{{2, 3}, {3, 4}};
  EXPECT_TRUE(is_phrase_concatenation(TokenSeq{3, 4, 2, 3}, phrases));
  EXPECT_TRUE(is_phrase_concatenation(TokenSeq{2, 3, 3, 4}, phrases));
  EXPECT_FALSE(is_phrase_concatenation(TokenSeq{3, 2, 3, 4}, phrases));
  EXPECT_FALSE(is_phrase_concatenation(TokenSeq{2, 3, 2, 3}, phrases));
  EXPECT_FALSE(is_phrase_concatenation(TokenSeq{2, 3}, phrases));
}
