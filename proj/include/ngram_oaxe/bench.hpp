#pragma once

// Wall-time of loss evaluation over a grid of ngram sizes, sentence lengths
// and batch sizes, with the Hungarian solves timed separately.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "ngram_oaxe/assignment.hpp"
#include "ngram_oaxe/loss.hpp"
#include "ngram_oaxe/oracles.hpp"
#include "ngram_oaxe/rng.hpp"

namespace ngram_oaxe::bench {

struct BenchConfig {
  std::vector<int> ngram_sizes{1, 2, 4};
  std::vector<std::size_t> lengths{8, 16, 32, 64};
  std::vector<std::size_t> batches{1, 32};
  std::size_t reps = 30;
  std::size_t vocab = 64;
  double pi = 0.15;
  std::uint64_t seed = 0;
};

struct BenchRow {
  int n = 1;
  std::size_t length = 0;
  std::size_t batch = 0;
  std::size_t reps = 0;
  double median_loss_us = 0.0;       // one full ngram_oaxe_loss call
  double median_hungarian_us = 0.0;  // the batch's Hungarian solves alone
};

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

namespace detail {

template <class F>
double time_us(F&& f) {
  const auto t0 = std::chrono::steady_clock::now();
  f();
  return std::chrono::duration<double, std::micro>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace detail

// Single-threaded; each repetition draws a fresh random instance.
inline std::vector<BenchRow> run(const BenchConfig& cfg) {
  ngram_oaxe::detail::require(cfg.reps >= 1, "bench needs at least one repetition");
  std::vector<BenchRow> rows;
  for (int n : cfg.ngram_sizes) {
    for (std::size_t len : cfg.lengths) {
      for (std::size_t batch : cfg.batches) {
        Rng rng = make_stream(cfg.seed, "bench", (static_cast<std::uint64_t>(n) << 32) ^ (len << 16) ^ batch);
        std::vector<double> loss_t, hung_t;
        std::vector<std::size_t> lens(batch, len);
        double sink = 0.0;
        for (std::size_t r = 0; r < cfg.reps; ++r) {
          const LogProbBatch lp = log_softmax(oracle::random_logits(batch, len, cfg.vocab, rng, 1.0), lens);
          const auto y = oracle::random_targets(lens, cfg.vocab, rng);
          loss_t.push_back(detail::time_us([&] {
            sink += ngram_oaxe_loss(lp, y, NgramSpec(n), TruncationConfig::with_margin(cfg.pi), 1).value;
          }));
          std::vector<CostMatrix> costs;
          for (std::size_t b = 0; b < batch; ++b) {
            costs.push_back(lift_to_ngram_cost(build_token_cost(lp, y, b), NgramSpec(n)));
          }
          hung_t.push_back(detail::time_us([&] {
            for (const auto& c : costs) sink += hungarian_solve(c).total_cost;
          }));
        }
        if (!std::isfinite(sink)) throw RuntimeFailure("bench produced a non-finite loss");
        rows.push_back({n, len, batch, cfg.reps, median(loss_t), median(hung_t)});
      }
    }
  }
  return rows;
}

// Least-squares slope of log(y) against log(x).
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  ngram_oaxe::detail::require(x.size() == y.size() && x.size() >= 2, "slope fit needs at least two points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(x.size());
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

inline const BenchRow* find(const std::vector<BenchRow>& rows, int n, std::size_t len, std::size_t batch) {
  for (const auto& r : rows) {
    if (r.n == n && r.length == len && r.batch == batch) return &r;
  }
  return nullptr;
}

// Hungarian log-log slope over all lengths at (n, batch).
inline double hungarian_slope(const std::vector<BenchRow>& rows, int n, std::size_t batch) {
  std::vector<double> x, y;
  for (const auto& r : rows) {
    if (r.n == n && r.batch == batch) {
      x.push_back(static_cast<double>(r.length));
      y.push_back(r.median_hungarian_us);
    }
  }
  return loglog_slope(x, y);
}

inline std::string to_csv(const std::vector<BenchRow>& rows) {
  std::string s = "n,length,batch,reps,median_loss_us,median_hungarian_us\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%zu,%zu,%zu,%.3f,%.3f\n", r.n, r.length, r.batch, r.reps, r.median_loss_us,
                  r.median_hungarian_us);
    s += buf;
  }
  return s;
}

}  // namespace ngram_oaxe::bench
