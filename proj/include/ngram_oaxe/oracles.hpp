#pragma once

// Reference computations used by the verification suites and tests. They work
// directly from log-probabilities and avoid the cost-matrix, lift and
// Hungarian code paths they are meant to check.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "ngram_oaxe/core.hpp"
#include "ngram_oaxe/rng.hpp"

namespace ngram_oaxe::oracle {

// Probability that positions window..window+n-1 emit y[ngram..ngram+n-1],
// as a plain product of probabilities.
inline double ngram_probability(const LogProbBatch& lp, std::size_t b, const TokenSeq& y, std::size_t window,
                                std::size_t ngram, std::size_t n) {
  double p = 1.0;
  for (std::size_t k = 0; k < n; ++k) p *= std::exp(lp(b, window + k, static_cast<std::size_t>(y[ngram + k])));
  return p;
}

// min over all window->ngram bijections of the summed -log ngram
// probabilities, by enumeration of (I-N+1)! permutations.
inline double enumerate_ngram_loss(const LogProbBatch& lp, std::size_t b, const TokenSeq& y, std::size_t n) {
  const std::size_t len = lp.length(b);
  const std::size_t m = len - n + 1;
  std::vector<std::size_t> perm(m);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  double best = std::numeric_limits<double>::infinity();
  do {
    double total = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t k = 0; k < n; ++k) total -= lp(b, i + k, static_cast<std::size_t>(y[perm[i] + k]));
    }
    best = std::min(best, total);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

inline Tensor3 random_logits(std::size_t B, std::size_t T, std::size_t V, Rng& rng, double scale = 2.0) {
  Tensor3 t(B, T, V);
  std::normal_distribution<double> normal(0.0, scale);
  for (double& x : t.data()) x = normal(rng);
  return t;
}

// Random targets over content ids [2, V) with the given lengths.
inline std::vector<TokenSeq> random_targets(std::span<const std::size_t> lengths, std::size_t V, Rng& rng,
                                            bool distinct = false) {
  std::uniform_int_distribution<TokenId> tok(2, static_cast<TokenId>(V) - 1);
  std::vector<TokenSeq> out;
  for (std::size_t len : lengths) {
    std::vector<TokenId> ids;
    while (ids.size() < len) {
      const TokenId t = tok(rng);
      if (distinct && std::find(ids.begin(), ids.end(), t) != ids.end()) continue;
      ids.push_back(t);
    }
    out.emplace_back(std::move(ids));
  }
  return out;
}

// Central differences of f at x for every coordinate.
inline std::vector<double> central_differences(const std::function<double(std::span<const double>)>& f,
                                               std::vector<double> x, double step) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + step;
    const double up = f(x);
    x[i] = orig - step;
    const double down = f(x);
    x[i] = orig;
    g[i] = (up - down) / (2.0 * step);
  }
  return g;
}

// ||a - b|| / max(||b||, tiny), Euclidean norms.
inline double relative_error(std::span<const double> a, std::span<const double> b) {
  double diff = 0.0, ref = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    ref += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max(std::sqrt(ref), 1e-12);
}

}  // namespace ngram_oaxe::oracle
