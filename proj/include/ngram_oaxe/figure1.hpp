#pragma once

// Worked bigram example on "I ate pizza this afternoon". Anchor values:
//   P(I | 1) = 0.2, P(ate | 2) = 0.1, P(ate | 4) = 0.4;
// the rest of the table is filled in so that the optimal bigram ordering is
//   (this afternoon | 1,2) (pizza this | 2,3) (I ate | 3,4) (ate pizza | 4,5)
// and only (pizza this | 2,3) falls below a margin of 0.15 (geometric mean
// 0.1). Remaining mass goes to an <other> token; pad and unk get zero.

#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "ngram_oaxe/core.hpp"
#include "ngram_oaxe/loss.hpp"

namespace ngram_oaxe::figure1 {

inline const std::vector<std::string>& words() {
  static const std::vector<std::string> w{"I", "ate", "pizza", "this", "afternoon", "<other>"};
  return w;
}

inline Vocab vocab() { return Vocab(words()); }

// "I ate pizza this afternoon"
inline TokenSeq target() { return TokenSeq{2, 3, 4, 5, 6}; }

// probs[position][word], word order as in words() minus <other>.
inline constexpr std::array<std::array<double, 5>, 5> kProbs{{
    //  I     ate   pizza  this  afternoon
    {0.20, 0.05, 0.05, 0.50, 0.05},  // Pos:1
    {0.05, 0.10, 0.10, 0.05, 0.40},  // Pos:2
    {0.50, 0.05, 0.05, 0.10, 0.05},  // Pos:3
    {0.10, 0.40, 0.05, 0.10, 0.05},  // Pos:4
    {0.05, 0.05, 0.50, 0.05, 0.10},  // Pos:5
}};

inline LogProbBatch log_probs() {
  const std::size_t V = vocab().size();
  Tensor3 values(1, kProbs.size(), V, -std::numeric_limits<double>::infinity());
  for (std::size_t t = 0; t < kProbs.size(); ++t) {
    double rest = 1.0;
    for (std::size_t w = 0; w < kProbs[t].size(); ++w) {
      values(0, t, 2 + w) = std::log(kProbs[t][w]);
      rest -= kProbs[t][w];
    }
    values(0, t, V - 1) = std::log(rest);
  }
  return LogProbBatch(std::move(values), {kProbs.size()});
}

inline constexpr double kMargin = 0.15;

struct SelectedBigram {
  std::string phrase;
  std::size_t first_position = 0;  // 1-based, as in the illustration
  double probability = 0.0;
  bool kept = false;
};

struct Demo {
  std::array<std::array<double, 4>, 4> bigram_probs{};  // [window][bigram]
  std::vector<SelectedBigram> selected;                // in window order
  double loss = 0.0;
};

inline Demo run(double margin = kMargin) {
  const LogProbBatch lp = log_probs();
  const TokenSeq y = target();
  const std::vector<TokenSeq> ys{y};
  const Vocab v = vocab();

  Demo demo;
  const CostMatrix lifted = lift_to_ngram_cost(build_token_cost(lp, ys, 0), NgramSpec(2));
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) demo.bigram_probs[i][j] = std::exp(-lifted(i, j));
  }
  const LossOutput out = ngram_oaxe_loss(lp, ys, NgramSpec(2), TruncationConfig::with_margin(margin), 1);
  const SentenceMatch& s = out.sentences.front();
  for (std::size_t k = 0; k < s.pairs.size(); ++k) {
    const auto& p = s.pairs[k];
    demo.selected.push_back({v.token(y[p.ngram]) + " " + v.token(y[p.ngram + 1]), p.window + 1,
                             std::exp(-p.cost), static_cast<bool>(s.kept[k])});
  }
  demo.loss = out.value;
  return demo;
}

}  // namespace ngram_oaxe::figure1
