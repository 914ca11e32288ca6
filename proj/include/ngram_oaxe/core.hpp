#pragma once

// Numeric substrate: vocabularies, token sequences, rank-3 tensors and
// batched log-probability distributions.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ngram_oaxe/error.hpp"

namespace ngram_oaxe {

using TokenId = std::int32_t;

inline constexpr TokenId kPadId = 0;
inline constexpr TokenId kUnkId = 1;

// ln(1e-30). Every log-probability is clamped to at least this value so that
// the derived costs stay finite.
inline constexpr double kLogProbFloor = -69.07755278982137;

class Vocab {
 public:
  static constexpr const char* kPadSymbol = "<pad>";
  static constexpr const char* kUnkSymbol = "<unk>";

  Vocab() : Vocab(std::vector<std::string>{}) {}

  // `symbols` excludes the reserved pad/unk entries, which are prepended.
  explicit Vocab(const std::vector<std::string>& symbols) {
    add(kPadSymbol);
    add(kUnkSymbol);
    for (const auto& s : symbols) add(s);
  }

  // Rebuilds a vocabulary from a full token list (as stored in checkpoints).
  static Vocab from_tokens(const std::vector<std::string>& tokens) {
    detail::require(tokens.size() >= 2 && tokens[0] == kPadSymbol && tokens[1] == kUnkSymbol,
                    "vocab must start with <pad>, <unk>");
    return Vocab(std::vector<std::string>(tokens.begin() + 2, tokens.end()));
  }

  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  TokenId id(const std::string& symbol) const {
    auto it = index_.find(symbol);
    return it == index_.end() ? kUnkId : it->second;
  }

  const std::string& token(TokenId id) const {
    detail::require(id >= 0 && static_cast<std::size_t>(id) < tokens_.size(),
                    "token id " + std::to_string(id) + " out of vocab range");
    return tokens_[static_cast<std::size_t>(id)];
  }

  bool operator==(const Vocab& other) const { return tokens_ == other.tokens_; }

 private:
  void add(const std::string& symbol) {
    detail::require(!index_.contains(symbol), "duplicate vocab symbol '" + symbol + "'");
    index_.emplace(symbol, static_cast<TokenId>(tokens_.size()));
    tokens_.push_back(symbol);
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

// A token sequence; pad ids may only appear as a trailing suffix.
class TokenSeq {
 public:
  TokenSeq() = default;

  explicit TokenSeq(std::vector<TokenId> ids) : ids_(std::move(ids)) {
    bool in_pad = false;
    for (std::size_t i = 0; i < ids_.size(); ++i) {
      detail::require(ids_[i] >= 0, "negative token id at index " + std::to_string(i));
      if (ids_[i] == kPadId) {
        in_pad = true;
      } else {
        detail::require(!in_pad, "pad id inside sequence at index " + std::to_string(i));
        ++length_;
      }
    }
  }

  TokenSeq(std::initializer_list<TokenId> ids) : TokenSeq(std::vector<TokenId>(ids)) {}

  const std::vector<TokenId>& ids() const { return ids_; }
  // Count of non-pad tokens.
  std::size_t length() const { return length_; }
  TokenId operator[](std::size_t i) const { return ids_[i]; }

  void check_vocab(std::size_t vocab_size) const {
    for (std::size_t i = 0; i < ids_.size(); ++i) {
      detail::require(static_cast<std::size_t>(ids_[i]) < vocab_size,
                      "token id " + std::to_string(ids_[i]) + " at index " + std::to_string(i) +
                          " exceeds vocab size " + std::to_string(vocab_size));
    }
  }

  bool operator==(const TokenSeq& other) const { return ids_ == other.ids_; }

 private:
  std::vector<TokenId> ids_;
  std::size_t length_ = 0;
};

// Dense row-major rank-3 array.
class Tensor3 {
 public:
  Tensor3() = default;
  Tensor3(std::size_t d0, std::size_t d1, std::size_t d2, double fill = 0.0)
      : d0_(d0), d1_(d1), d2_(d2), data_(d0 * d1 * d2, fill) {}

  std::size_t dim0() const { return d0_; }
  std::size_t dim1() const { return d1_; }
  std::size_t dim2() const { return d2_; }

  double& operator()(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * d1_ + j) * d2_ + k];
  }
  double operator()(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * d1_ + j) * d2_ + k];
  }

  std::span<double> row(std::size_t i, std::size_t j) {
    return {data_.data() + (i * d1_ + j) * d2_, d2_};
  }
  std::span<const double> row(std::size_t i, std::size_t j) const {
    return {data_.data() + (i * d1_ + j) * d2_, d2_};
  }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  bool same_shape(const Tensor3& o) const { return d0_ == o.d0_ && d1_ == o.d1_ && d2_ == o.d2_; }

  bool operator==(const Tensor3& o) const = default;

 private:
  std::size_t d0_ = 0, d1_ = 0, d2_ = 0;
  std::vector<double> data_;
};

inline double log_sum_exp(std::span<const double> row) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : row) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : row) s += std::exp(x - m);
  return m + std::log(s);
}

// Per-position log distributions over the target vocabulary, B x T x V.
// Entries are floored at kLogProbFloor; rows t < lengths[b] are normalized.
class LogProbBatch {
 public:
  static constexpr double kNormTolerance = 1e-6;

  LogProbBatch(Tensor3 values, std::vector<std::size_t> lengths)
      : values_(std::move(values)), lengths_(std::move(lengths)) {
    detail::require(lengths_.size() == values_.dim0(), "lengths size does not match batch size");
    detail::require(values_.dim2() >= 1, "empty vocab axis");
    for (std::size_t b = 0; b < lengths_.size(); ++b) {
      detail::require(lengths_[b] >= 1 && lengths_[b] <= values_.dim1(),
                      "sentence " + std::to_string(b) + " length out of range");
    }
    for (std::size_t b = 0; b < values_.dim0(); ++b) {
      for (std::size_t t = 0; t < values_.dim1(); ++t) {
        auto r = values_.row(b, t);
        for (double& x : r) {
          detail::require(!std::isnan(x) && x != std::numeric_limits<double>::infinity(),
                          "non-finite log-prob at (b=" + std::to_string(b) +
                              ", t=" + std::to_string(t) + ")");
          x = std::max(x, kLogProbFloor);
        }
        if (t < lengths_[b]) {
          const double lse = log_sum_exp(r);
          detail::require(std::abs(lse) <= kNormTolerance,
                          "row (b=" + std::to_string(b) + ", t=" + std::to_string(t) +
                              ") is not normalized");
        }
      }
    }
  }

  std::size_t batch() const { return values_.dim0(); }
  std::size_t positions() const { return values_.dim1(); }
  std::size_t vocab_size() const { return values_.dim2(); }
  std::span<const std::size_t> lengths() const { return lengths_; }
  std::size_t length(std::size_t b) const { return lengths_[b]; }
  const Tensor3& values() const { return values_; }
  double operator()(std::size_t b, std::size_t t, std::size_t v) const { return values_(b, t, v); }

 private:
  Tensor3 values_;
  std::vector<std::size_t> lengths_;
};

// Normalizes every row of `logits` (B x T x V) with max-subtraction.
inline LogProbBatch log_softmax(const Tensor3& logits, std::vector<std::size_t> lengths) {
  Tensor3 out(logits.dim0(), logits.dim1(), logits.dim2());
  for (std::size_t b = 0; b < logits.dim0(); ++b) {
    for (std::size_t t = 0; t < logits.dim1(); ++t) {
      auto in = logits.row(b, t);
      for (double x : in) {
        detail::require(std::isfinite(x), "non-finite logit at (b=" + std::to_string(b) +
                                              ", t=" + std::to_string(t) + ")");
      }
      const double lse = log_sum_exp(in);
      auto o = out.row(b, t);
      for (std::size_t v = 0; v < in.size(); ++v) o[v] = in[v] - lse;
    }
  }
  return LogProbBatch(std::move(out), std::move(lengths));
}

namespace detail {

inline void check_targets(const LogProbBatch& lp, std::span<const TokenSeq> targets) {
  require(targets.size() == lp.batch(), "target batch size " + std::to_string(targets.size()) +
                                            " != log-prob batch size " + std::to_string(lp.batch()));
  for (std::size_t b = 0; b < targets.size(); ++b) {
    require(targets[b].length() == lp.length(b),
            "sentence " + std::to_string(b) + ": target length " +
                std::to_string(targets[b].length()) + " != log-prob length " +
                std::to_string(lp.length(b)));
    targets[b].check_vocab(lp.vocab_size());
  }
}

}  // namespace detail

// out[b][t][i] = lp[b][t][y_b[i]], shape B x T x T. Entries with t or i past
// the sentence length hold kLogProbFloor.
inline Tensor3 gather_target_logprobs(const LogProbBatch& lp, std::span<const TokenSeq> targets) {
  detail::check_targets(lp, targets);
  const std::size_t T = lp.positions();
  Tensor3 out(lp.batch(), T, T, kLogProbFloor);
  for (std::size_t b = 0; b < lp.batch(); ++b) {
    const std::size_t len = lp.length(b);
    for (std::size_t t = 0; t < len; ++t) {
      for (std::size_t i = 0; i < len; ++i) {
        out(b, t, i) = lp(b, t, static_cast<std::size_t>(targets[b][i]));
      }
    }
  }
  return out;
}

}  // namespace ngram_oaxe
