#pragma once

// Output metrics: repeated-token rate, clipped ngram precision against
// multiple references, and exact mode-match rate.

#include <algorithm>
#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "ngram_oaxe/core.hpp"
#include "ngram_oaxe/error.hpp"

namespace ngram_oaxe {

using RefSet = std::vector<TokenSeq>;

// Collapses runs of identical adjacent tokens.
inline TokenSeq dedup(const TokenSeq& seq) {
  std::vector<TokenId> out;
  for (std::size_t i = 0; i < seq.length(); ++i) {
    if (out.empty() || out.back() != seq[i]) out.push_back(seq[i]);
  }
  return TokenSeq(std::move(out));
}

// Fraction of non-pad tokens equal to their immediate predecessor.
inline double repetition_rate(std::span<const TokenSeq> outputs) {
  detail::require(!outputs.empty(), "repetition_rate: empty batch");
  std::size_t repeats = 0, total = 0;
  for (const auto& o : outputs) {
    total += o.length();
    for (std::size_t i = 1; i < o.length(); ++i) repeats += o[i] == o[i - 1] ? 1 : 0;
  }
  detail::require(total > 0, "repetition_rate: no tokens");
  return static_cast<double>(repeats) / static_cast<double>(total);
}

namespace detail {

using NgramCounts = std::map<std::vector<TokenId>, std::size_t>;

inline NgramCounts count_ngrams(const TokenSeq& seq, std::size_t n) {
  NgramCounts counts;
  const auto& ids = seq.ids();
  for (std::size_t i = 0; i + n <= seq.length(); ++i) {
    ++counts[std::vector<TokenId>(ids.begin() + static_cast<std::ptrdiff_t>(i),
                                  ids.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return counts;
}

struct PrecisionCounts {
  std::size_t matched = 0;
  std::size_t total = 0;
};

// Clipped counts: each output ngram is credited up to its maximum count in
// any single reference.
inline PrecisionCounts clipped_counts(const TokenSeq& output, const RefSet& refs, std::size_t n) {
  PrecisionCounts pc;
  const NgramCounts out = count_ngrams(output, n);
  NgramCounts max_ref;
  for (const auto& r : refs) {
    for (const auto& [g, c] : count_ngrams(r, n)) max_ref[g] = std::max(max_ref[g], c);
  }
  for (const auto& [g, c] : out) {
    pc.total += c;
    auto it = max_ref.find(g);
    if (it != max_ref.end()) pc.matched += std::min(c, it->second);
  }
  return pc;
}

inline void check_pairs(std::span<const TokenSeq> outputs, std::span<const RefSet> refs) {
  require(outputs.size() == refs.size(), "outputs and reference sets differ in count");
}

}  // namespace detail

// Corpus-level clipped ngram precision (no brevity penalty).
inline double ngram_precision(std::span<const TokenSeq> outputs, std::span<const RefSet> refs, std::size_t n) {
  detail::require(n >= 1, "ngram_precision: n must be >= 1");
  detail::check_pairs(outputs, refs);
  detail::PrecisionCounts sum;
  for (std::size_t k = 0; k < outputs.size(); ++k) {
    const auto pc = detail::clipped_counts(outputs[k], refs[k], n);
    sum.matched += pc.matched;
    sum.total += pc.total;
  }
  detail::require(sum.total > 0, "ngram_precision: n = " + std::to_string(n) + " exceeds every output length");
  return static_cast<double>(sum.matched) / static_cast<double>(sum.total);
}

// Fraction of outputs equal to some reference, both compared after
// de-duplication.
inline double mode_match_rate(std::span<const TokenSeq> outputs, std::span<const RefSet> refs) {
  detail::check_pairs(outputs, refs);
  if (outputs.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t k = 0; k < outputs.size(); ++k) {
    const TokenSeq o = dedup(outputs[k]);
    hits += std::any_of(refs[k].begin(), refs[k].end(), [&](const TokenSeq& r) { return dedup(r) == o; }) ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(outputs.size());
}

struct MetricSet {
  std::size_t n_examples = 0;
  std::array<std::optional<double>, 4> ngram_precision{};  // n = 1..4; empty when undefined
  std::optional<double> mode_match_rate;
};

struct EvalReport {
  static constexpr std::array<const char*, 4> kBucketNames{"1-4", "5-8", "9-12", "13+"};

  double repetition_rate = 0.0;
  std::array<std::optional<double>, 4> ngram_precision{};
  double mode_match_rate = 0.0;
  std::array<MetricSet, 4> per_length_buckets{};
  std::size_t n_examples = 0;
};

inline std::size_t length_bucket(std::size_t ref_len) {
  if (ref_len <= 4) return 0;
  if (ref_len <= 8) return 1;
  if (ref_len <= 12) return 2;
  return 3;
}

namespace detail {

inline MetricSet metric_set(std::span<const TokenSeq> outputs, std::span<const RefSet> refs) {
  MetricSet m;
  m.n_examples = outputs.size();
  if (outputs.empty()) return m;
  for (std::size_t n = 1; n <= 4; ++n) {
    std::size_t total = 0;
    for (const auto& o : outputs) total += o.length() >= n ? o.length() - n + 1 : 0;
    if (total > 0) m.ngram_precision[n - 1] = ngram_precision(outputs, refs, n);
  }
  m.mode_match_rate = mode_match_rate(outputs, refs);
  return m;
}

}  // namespace detail

// Reference length is taken from the first reference (all references of a
// synthetic example have equal length).
inline EvalReport build_report(std::span<const TokenSeq> outputs, std::span<const RefSet> refs) {
  detail::check_pairs(outputs, refs);
  detail::require(!outputs.empty(), "build_report: empty evaluation set");
  EvalReport r;
  r.n_examples = outputs.size();
  r.repetition_rate = repetition_rate(outputs);
  const MetricSet all = detail::metric_set(outputs, refs);
  r.ngram_precision = all.ngram_precision;
  r.mode_match_rate = all.mode_match_rate.value_or(0.0);
  std::array<std::vector<TokenSeq>, 4> bucket_out;
  std::array<std::vector<RefSet>, 4> bucket_refs;
  for (std::size_t k = 0; k < outputs.size(); ++k) {
    detail::require(!refs[k].empty(), "example " + std::to_string(k) + " has no references");
    const std::size_t b = length_bucket(refs[k].front().length());
    bucket_out[b].push_back(outputs[k]);
    bucket_refs[b].push_back(refs[k]);
  }
  for (std::size_t b = 0; b < 4; ++b) r.per_length_buckets[b] = detail::metric_set(bucket_out[b], bucket_refs[b]);
  return r;
}

namespace detail {

inline nlohmann::json precision_json(const std::array<std::optional<double>, 4>& p) {
  nlohmann::json j = nlohmann::json::object();
  for (std::size_t n = 0; n < 4; ++n) {
    j[std::to_string(n + 1)] = p[n] ? nlohmann::json(*p[n]) : nlohmann::json(nullptr);
  }
  return j;
}

}  // namespace detail

inline nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json j;
  j["repetition_rate"] = r.repetition_rate;
  j["ngram_precision"] = detail::precision_json(r.ngram_precision);
  j["mode_match_rate"] = r.mode_match_rate;
  nlohmann::json buckets = nlohmann::json::object();
  for (std::size_t b = 0; b < 4; ++b) {
    const auto& m = r.per_length_buckets[b];
    buckets[EvalReport::kBucketNames[b]] = {
        {"n_examples", m.n_examples},
        {"ngram_precision", detail::precision_json(m.ngram_precision)},
        {"mode_match_rate", m.mode_match_rate ? nlohmann::json(*m.mode_match_rate) : nlohmann::json(nullptr)},
    };
  }
  j["per_length_buckets"] = buckets;
  j["n_examples"] = r.n_examples;
  return j;
}

}  // namespace ngram_oaxe
