#pragma once

// XE, OaXE and ngram-OaXE losses with envelope gradients w.r.t. log-probs.
//
// ngram-OaXE for one sentence of length I and ngram size N:
//   1. token cost   C[t][j] = -log P(y_j | position t)            (I x I)
//   2. ngram lift   G[i][j] = sum_{k<N} C[i+k][j+k]               (I-N+1 square)
//   3. matching     perm = argmin_perm sum_i G[i][perm[i]]         (Hungarian)
//   4. truncation   drop matched ngrams whose per-token geometric-mean
//                   probability exp(-G/N) falls below the margin
// Window i covers positions i..i+N-1; ngram j is y_j..y_{j+N-1}. Windows and
// ngrams overlap, so interior tokens enter up to N terms.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "ngram_oaxe/assignment.hpp"
#include "ngram_oaxe/core.hpp"
#include "ngram_oaxe/parallel.hpp"

namespace ngram_oaxe {

class NgramSpec {
 public:
  static constexpr int kMaxN = 8;

  NgramSpec() = default;
  explicit NgramSpec(int n) : n_(n) {
    detail::require(n >= 1 && n <= kMaxN,
                    "ngram size must be in [1, " + std::to_string(kMaxN) + "], got " + std::to_string(n));
  }
  int n() const { return n_; }

 private:
  int n_ = 1;
};

struct TruncationConfig {
  double margin = 0.0;  // pi
  bool enabled = false;

  static TruncationConfig none() { return {}; }
  static TruncationConfig with_margin(double pi) {
    TruncationConfig tc{pi, true};
    tc.validate();
    return tc;
  }
  void validate() const {
    detail::require(std::isfinite(margin) && margin >= 0.0 && margin <= 1.0,
                    "truncation margin must be in [0, 1], got " + std::to_string(margin));
  }
  bool active() const { return enabled && margin > 0.0; }
};

struct MatchedPair {
  std::size_t window = 0;
  std::size_t ngram = 0;
  double cost = 0.0;  // -log P_G(ngram | window)
};

struct SentenceMatch {
  std::size_t ngram_size = 1;  // effective N for this sentence
  std::vector<MatchedPair> pairs;
  std::vector<bool> kept;
};

struct LossOutput {
  double value = 0.0;
  std::vector<SentenceMatch> sentences;
  Tensor3 grad;  // d value / d log P, shaped like the log-prob batch

  std::size_t pair_count() const {
    std::size_t n = 0;
    for (const auto& s : sentences) n += s.pairs.size();
    return n;
  }
  std::size_t kept_count() const {
    std::size_t n = 0;
    for (const auto& s : sentences) n += static_cast<std::size_t>(std::count(s.kept.begin(), s.kept.end(), true));
    return n;
  }
  double keep_rate() const {
    const std::size_t total = pair_count();
    return total == 0 ? 1.0 : static_cast<double>(kept_count()) / static_cast<double>(total);
  }
};

// cost[i][j] = -lp[b][i][y_j] over the I_b valid positions.
inline CostMatrix build_token_cost(const LogProbBatch& lp, std::span<const TokenSeq> targets,
                                   std::size_t b) {
  detail::require(b < lp.batch(), "sentence index " + std::to_string(b) + " out of range");
  detail::require(b < targets.size(), "sentence index " + std::to_string(b) + " has no target");
  const TokenSeq& y = targets[b];
  const std::size_t len = lp.length(b);
  detail::require(y.length() == len, "sentence " + std::to_string(b) + ": target length mismatch");
  y.check_vocab(lp.vocab_size());
  std::vector<double> cost(len * len);
  for (std::size_t i = 0; i < len; ++i) {
    for (std::size_t j = 0; j < len; ++j) {
      cost[i * len + j] = -lp(b, i, static_cast<std::size_t>(y[j]));
    }
  }
  return CostMatrix(len, std::move(cost));
}

// Sums N diagonal-shifted slices: out[i][j] = sum_{k<N} c[i+k][j+k].
inline CostMatrix lift_to_ngram_cost(const CostMatrix& c, NgramSpec spec) {
  const std::size_t len = c.size();
  const auto n = static_cast<std::size_t>(spec.n());
  detail::require(len >= n, "sentence length " + std::to_string(len) + " < ngram size " +
                                std::to_string(n));
  const std::size_t m = len - n + 1;
  std::vector<double> out(m * m, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < m; ++j) out[i * m + j] += c(i + k, j + k);
    }
  }
  return CostMatrix(m, std::move(out));
}

// Keep mask for one sentence's matched pairs. A pair is dropped when its
// per-token geometric-mean probability exp(-cost / N) is below the margin;
// the lowest-cost pair (first on ties) always survives.
inline std::vector<bool> truncate_matches(std::span<const MatchedPair> pairs, NgramSpec spec,
                                          const TruncationConfig& tc) {
  tc.validate();
  std::vector<bool> kept(pairs.size(), true);
  if (!tc.active() || pairs.empty()) return kept;
  const double n = static_cast<double>(spec.n());
  std::size_t best = 0;
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    kept[k] = std::exp(-pairs[k].cost / n) >= tc.margin;
    if (pairs[k].cost < pairs[best].cost) best = k;
  }
  kept[best] = true;
  return kept;
}

namespace detail {

inline void check_sentences(const LogProbBatch& lp, std::span<const TokenSeq> targets,
                            std::span<const SentenceMatch> sentences) {
  check_targets(lp, targets);
  require(sentences.size() == lp.batch(), "assignment batch size does not match log-probs");
  for (std::size_t b = 0; b < sentences.size(); ++b) {
    const auto& s = sentences[b];
    const std::size_t len = lp.length(b);
    require(s.ngram_size >= 1 && s.ngram_size <= len,
            "sentence " + std::to_string(b) + ": stale assignment (ngram size)");
    const std::size_t m = len - s.ngram_size + 1;
    require(s.pairs.size() == s.kept.size(), "sentence " + std::to_string(b) + ": mask size mismatch");
    for (const auto& p : s.pairs) {
      require(p.window < m && p.ngram < m,
              "sentence " + std::to_string(b) + ": stale assignment (index out of range)");
    }
  }
}

// Value of the kept terms of `sentences` evaluated on arbitrary log-prob
// values (not necessarily normalized).
inline double frozen_value(const Tensor3& logp, std::span<const TokenSeq> targets,
                           std::span<const SentenceMatch> sentences) {
  double total = 0.0;
  for (std::size_t b = 0; b < sentences.size(); ++b) {
    const auto& s = sentences[b];
    for (std::size_t k = 0; k < s.pairs.size(); ++k) {
      if (!s.kept[k]) continue;
      for (std::size_t o = 0; o < s.ngram_size; ++o) {
        total -= logp(b, s.pairs[k].window + o, static_cast<std::size_t>(targets[b][s.pairs[k].ngram + o]));
      }
    }
  }
  return total;
}

}  // namespace detail

// With assignments and mask held fixed: grad[b][t][v] = -(number of kept
// ngram terms placing token v at position t).
inline Tensor3 loss_gradient(const LogProbBatch& lp, std::span<const TokenSeq> targets,
                             std::span<const SentenceMatch> sentences) {
  detail::check_sentences(lp, targets, sentences);
  Tensor3 grad(lp.batch(), lp.positions(), lp.vocab_size(), 0.0);
  for (std::size_t b = 0; b < sentences.size(); ++b) {
    const auto& s = sentences[b];
    for (std::size_t k = 0; k < s.pairs.size(); ++k) {
      if (!s.kept[k]) continue;
      for (std::size_t o = 0; o < s.ngram_size; ++o) {
        grad(b, s.pairs[k].window + o, static_cast<std::size_t>(targets[b][s.pairs[k].ngram + o])) -= 1.0;
      }
    }
  }
  return grad;
}

// Loss of a frozen selection (from an earlier forward pass) on new log-prob
// values; the objective whose exact gradient loss_gradient returns.
inline double frozen_loss_value(const Tensor3& logp, std::span<const TokenSeq> targets,
                                std::span<const SentenceMatch> sentences) {
  detail::require(logp.dim0() == sentences.size() && targets.size() == sentences.size(),
                  "frozen selection does not match batch");
  for (std::size_t b = 0; b < sentences.size(); ++b) {
    const auto& s = sentences[b];
    for (const auto& p : s.pairs) {
      detail::require(p.window + s.ngram_size <= logp.dim1() &&
                          p.ngram + s.ngram_size <= targets[b].length(),
                      "frozen selection out of range for sentence " + std::to_string(b));
    }
  }
  return detail::frozen_value(logp, targets, sentences);
}

// Position-aligned cross entropy: -sum_b sum_{i<I_b} lp[b][i][y_i].
inline LossOutput xe_loss(const LogProbBatch& lp, std::span<const TokenSeq> targets) {
  detail::check_targets(lp, targets);
  LossOutput out;
  out.sentences.resize(lp.batch());
  for (std::size_t b = 0; b < lp.batch(); ++b) {
    auto& s = out.sentences[b];
    s.ngram_size = 1;
    for (std::size_t i = 0; i < lp.length(b); ++i) {
      const double cost = -lp(b, i, static_cast<std::size_t>(targets[b][i]));
      s.pairs.push_back({i, i, cost});
      out.value += cost;
    }
    s.kept.assign(s.pairs.size(), true);
  }
  out.grad = loss_gradient(lp, targets, out.sentences);
  return out;
}

// Sentences shorter than N are scored with N = I_b. Sentences are solved
// independently (optionally in parallel) and summed in order.
inline LossOutput ngram_oaxe_loss(const LogProbBatch& lp, std::span<const TokenSeq> targets,
                                  NgramSpec spec, const TruncationConfig& tc,
                                  std::size_t threads = configured_threads()) {
  detail::check_targets(lp, targets);
  tc.validate();
  LossOutput out;
  out.sentences.resize(lp.batch());
  parallel_for(lp.batch(), threads, [&](std::size_t b) {
    const std::size_t len = lp.length(b);
    const NgramSpec eff(static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(spec.n()), len)));
    const CostMatrix ngram_cost = lift_to_ngram_cost(build_token_cost(lp, targets, b), eff);
    const Assignment a = hungarian_solve(ngram_cost);
    auto& s = out.sentences[b];
    s.ngram_size = static_cast<std::size_t>(eff.n());
    s.pairs.reserve(a.perm.size());
    for (std::size_t i = 0; i < a.perm.size(); ++i) s.pairs.push_back({i, a.perm[i], ngram_cost(i, a.perm[i])});
    s.kept = truncate_matches(s.pairs, eff, tc);
  });
  for (const auto& s : out.sentences) {
    for (std::size_t k = 0; k < s.pairs.size(); ++k) {
      if (s.kept[k]) out.value += s.pairs[k].cost;
    }
  }
  out.grad = loss_gradient(lp, targets, out.sentences);
  return out;
}

// Order-agnostic cross entropy: the N = 1 case of ngram_oaxe_loss.
inline LossOutput oaxe_loss(const LogProbBatch& lp, std::span<const TokenSeq> targets,
                            const TruncationConfig& tc, std::size_t threads = configured_threads()) {
  return ngram_oaxe_loss(lp, targets, NgramSpec(1), tc, threads);
}

}  // namespace ngram_oaxe
