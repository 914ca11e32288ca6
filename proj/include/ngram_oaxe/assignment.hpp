#pragma once

// Exact minimum-cost perfect matching on square cost matrices.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "ngram_oaxe/error.hpp"

namespace ngram_oaxe {

// Entries above this are clamped before solving.
inline constexpr double kCostCap = 1e4;

// Square matrix of finite, nonnegative costs (row = position window,
// column = target ngram).
class CostMatrix {
 public:
  CostMatrix() = default;

  CostMatrix(std::size_t n, std::vector<double> entries) : n_(n), entries_(std::move(entries)) {
    detail::require(entries_.size() == n_ * n_, "cost matrix is not square: " +
                                                    std::to_string(entries_.size()) +
                                                    " entries for side " + std::to_string(n_));
    for (std::size_t k = 0; k < entries_.size(); ++k) {
      const double x = entries_[k];
      detail::require(std::isfinite(x), "non-finite cost at (" + std::to_string(k / n_) + ", " +
                                            std::to_string(k % n_) + ")");
      detail::require(x >= 0.0, "negative cost at (" + std::to_string(k / n_) + ", " +
                                    std::to_string(k % n_) + ")");
      entries_[k] = std::min(x, kCostCap);
    }
  }

  static CostMatrix from_rows(const std::vector<std::vector<double>>& rows) {
    std::vector<double> flat;
    flat.reserve(rows.size() * rows.size());
    for (const auto& r : rows) {
      detail::require(r.size() == rows.size(), "cost matrix is not square");
      flat.insert(flat.end(), r.begin(), r.end());
    }
    return CostMatrix(rows.size(), std::move(flat));
  }

  std::size_t size() const { return n_; }
  double operator()(std::size_t i, std::size_t j) const { return entries_[i * n_ + j]; }
  std::span<const double> entries() const { return entries_; }

 private:
  std::size_t n_ = 0;
  std::vector<double> entries_;
};

struct Assignment {
  std::vector<std::size_t> perm;  // row -> column
  double total_cost = 0.0;
};

namespace detail {

inline void check_perm(std::span<const std::size_t> perm, std::size_t n) {
  require(perm.size() == n, "permutation size " + std::to_string(perm.size()) +
                                " != matrix side " + std::to_string(n));
  std::vector<bool> seen(n, false);
  for (std::size_t c : perm) {
    require(c < n && !seen[c], "permutation is not a bijection on {0.." +
                                   std::to_string(n > 0 ? n - 1 : 0) + "}");
    seen[c] = true;
  }
}

inline double sum_along(const CostMatrix& c, std::span<const std::size_t> perm) {
  double s = 0.0;
  for (std::size_t i = 0; i < perm.size(); ++i) s += c(i, perm[i]);
  return s;
}

}  // namespace detail

inline double assignment_cost(const CostMatrix& c, std::span<const std::size_t> perm) {
  detail::check_perm(perm, c.size());
  return detail::sum_along(c, perm);
}

namespace detail {

// Rewrites an optimal matching into the lexicographically smallest optimal
// one. Every optimal matching lives on the tight edges of an optimal dual, so
// rows are fixed in order to their smallest tight column that still admits a
// perfect matching on the remaining rows (checked by an alternating path).
inline void lexicographic_optimum(const std::vector<std::vector<std::size_t>>& tight,
                                  std::vector<std::size_t>& col_of_row) {
  const std::size_t n = col_of_row.size();
  std::vector<std::size_t> row_of_col(n);
  for (std::size_t i = 0; i < n; ++i) row_of_col[col_of_row[i]] = i;

  std::vector<bool> fixed(n, false);
  std::vector<std::size_t> parent(n);
  std::vector<bool> visited(n);
  std::deque<std::size_t> queue;

  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c : tight[i]) {
      if (fixed[c]) continue;
      if (c == col_of_row[i]) break;
      const std::size_t start = row_of_col[c];
      const std::size_t target = col_of_row[i];
      std::fill(visited.begin(), visited.end(), false);
      queue.assign(1, start);
      bool found = false;
      while (!queue.empty() && !found) {
        const std::size_t q = queue.front();
        queue.pop_front();
        for (std::size_t d : tight[q]) {
          if (fixed[d] || d == c || visited[d]) continue;
          visited[d] = true;
          parent[d] = q;
          if (d == target) {
            found = true;
            break;
          }
          queue.push_back(row_of_col[d]);
        }
      }
      if (!found) continue;
      std::size_t d = target;
      while (true) {
        const std::size_t q = parent[d];
        const std::size_t prev = col_of_row[q];
        col_of_row[q] = d;
        row_of_col[d] = q;
        if (q == start) break;
        d = prev;
      }
      col_of_row[i] = c;
      row_of_col[c] = i;
      break;
    }
    fixed[col_of_row[i]] = true;
  }
}

}  // namespace detail

// Minimum-cost perfect matching by shortest augmenting paths with potentials
// (Jonker-Volgenant style Hungarian method), O(n^3). Among optima the
// lexicographically smallest permutation is returned.
inline Assignment hungarian_solve(const CostMatrix& c) {
  const std::size_t n = c.size();
  if (n == 0) return {};
  constexpr double kInf = std::numeric_limits<double>::infinity();

  // 1-based: column 0 is the virtual root of each search.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> row_of(n + 1, 0), way(n + 1, 0);
  std::vector<bool> used(n + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    row_of[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), kInf);
    std::fill(used.begin(), used.end(), false);
    do {
      used[j0] = true;
      const std::size_t i0 = row_of[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = c(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[row_of[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (row_of[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      row_of[j0] = row_of[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<std::size_t> perm(n);
  for (std::size_t j = 1; j <= n; ++j) perm[row_of[j] - 1] = j - 1;

  double scale = 1.0;
  for (double x : c.entries()) scale = std::max(scale, x);
  const double eps = 1e-11 * scale;
  std::vector<std::vector<std::size_t>> tight(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (c(i, j) - u[i + 1] - v[j + 1] <= eps || j == perm[i]) tight[i].push_back(j);
    }
  }
  detail::lexicographic_optimum(tight, perm);

  Assignment out;
  out.total_cost = detail::sum_along(c, perm);
  out.perm = std::move(perm);
  return out;
}

inline constexpr std::size_t kBruteForceMaxSize = 9;

// Exhaustive search over all n! permutations in lexicographic order; the first
// strict minimum wins, so ties resolve to the lexicographically smallest perm.
inline Assignment brute_force_solve(const CostMatrix& c) {
  const std::size_t n = c.size();
  detail::require(n <= kBruteForceMaxSize, "brute_force_solve supports n <= " +
                                               std::to_string(kBruteForceMaxSize) + ", got n = " +
                                               std::to_string(n));
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Assignment best{perm, detail::sum_along(c, perm)};
  while (std::next_permutation(perm.begin(), perm.end())) {
    const double cost = detail::sum_along(c, perm);
    if (cost < best.total_cost) best = {perm, cost};
  }
  return best;
}

}  // namespace ngram_oaxe
