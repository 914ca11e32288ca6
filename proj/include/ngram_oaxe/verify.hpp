#pragma once

// Property suites behind `ngram-oaxe verify`. Each suite runs a number of
// randomized trials and keeps the first counterexample.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "ngram_oaxe/assignment.hpp"
#include "ngram_oaxe/core.hpp"
#include "ngram_oaxe/figure1.hpp"
#include "ngram_oaxe/loss.hpp"
#include "ngram_oaxe/model.hpp"
#include "ngram_oaxe/oracles.hpp"
#include "ngram_oaxe/rng.hpp"

namespace ngram_oaxe::verify {

struct SuiteResult {
  explicit SuiteResult(std::string suite) : name(std::move(suite)) {}

  std::string name;
  std::size_t passed = 0;
  std::size_t total = 0;
  std::optional<nlohmann::json> counterexample;
  std::vector<std::string> notes;  // human-readable extras

  bool ok() const { return passed == total; }

  void record(bool pass, const std::function<nlohmann::json()>& describe) {
    ++total;
    if (pass) {
      ++passed;
    } else if (!counterexample) {
      counterexample = describe();
    }
  }
};

inline nlohmann::json matrix_json(const CostMatrix& c) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < c.size(); ++i) {
    std::vector<double> r(c.entries().begin() + static_cast<std::ptrdiff_t>(i * c.size()),
                          c.entries().begin() + static_cast<std::ptrdiff_t>((i + 1) * c.size()));
    rows.push_back(r);
  }
  return rows;
}

inline CostMatrix random_cost(std::size_t n, Rng& rng, double hi = 10.0) {
  std::uniform_real_distribution<double> u(0.0, hi);
  std::vector<double> e(n * n);
  for (double& x : e) x = u(rng);
  return CostMatrix(n, std::move(e));
}

// Hungarian vs brute force. size == 0 sweeps n = 2..7.
inline SuiteResult hungarian(std::size_t trials, std::size_t size, std::uint64_t seed) {
  SuiteResult r{"hungarian"};
  Rng rng = make_stream(seed, "verify/hungarian");
  std::vector<std::size_t> sizes;
  if (size == 0) {
    for (std::size_t n = 2; n <= 7; ++n) sizes.push_back(n);
  } else {
    sizes.push_back(size);
  }
  for (std::size_t n : sizes) {
    for (std::size_t k = 0; k < trials; ++k) {
      const CostMatrix c = random_cost(n, rng);
      const Assignment h = hungarian_solve(c);
      const Assignment bf = brute_force_solve(c);
      r.record(std::abs(h.total_cost - bf.total_cost) <= 1e-9, [&] {
        return nlohmann::json{{"matrix", matrix_json(c)}, {"hungarian", h.total_cost}, {"brute_force", bf.total_cost}};
      });
    }
  }
  return r;
}

struct RandomInstance {
  LogProbBatch lp;
  std::vector<TokenSeq> targets;
};

inline RandomInstance random_instance(std::size_t B, std::size_t len, std::size_t V, Rng& rng) {
  std::vector<std::size_t> lens(B, len);
  return {log_softmax(oracle::random_logits(B, len, V, rng), lens), oracle::random_targets(lens, V, rng)};
}

// ngram-OaXE with N = 1 against OaXE, both untruncated.
inline SuiteResult reduction(std::size_t trials, std::uint64_t seed) {
  SuiteResult r{"reduction"};
  Rng rng = make_stream(seed, "verify/reduction");
  std::uniform_int_distribution<std::size_t> len(1, 10);
  for (std::size_t k = 0; k < trials; ++k) {
    const std::size_t I = len(rng);
    const auto inst = random_instance(2, I, 12, rng);
    const double a = ngram_oaxe_loss(inst.lp, inst.targets, NgramSpec(1), TruncationConfig::none(), 1).value;
    const double b = oaxe_loss(inst.lp, inst.targets, TruncationConfig::none(), 1).value;
    r.record(std::abs(a - b) <= 1e-12, [&] { return nlohmann::json{{"I", I}, {"ngram_n1", a}, {"oaxe", b}}; });
  }
  return r;
}

// Loss value against enumeration of all window->ngram permutations.
inline SuiteResult oracle_loss(std::size_t trials, std::uint64_t seed) {
  SuiteResult r{"oracle"};
  Rng rng = make_stream(seed, "verify/oracle");
  for (std::size_t I = 4; I <= 8; ++I) {
    for (std::size_t n = 1; n <= 3; ++n) {
      for (std::size_t k = 0; k < trials; ++k) {
        const auto inst = random_instance(1, I, 10, rng);
        const double got =
            ngram_oaxe_loss(inst.lp, inst.targets, NgramSpec(static_cast<int>(n)), TruncationConfig::none(), 1).value;
        const double want = oracle::enumerate_ngram_loss(inst.lp, 0, inst.targets[0], n);
        r.record(std::abs(got - want) <= 1e-9,
                 [&] { return nlohmann::json{{"I", I}, {"N", n}, {"loss", got}, {"enumeration", want}}; });
      }
    }
  }
  return r;
}

// --- gradient checks -------------------------------------------------------

inline constexpr double kFdStep = 1e-5;

inline LossOutput loss_of_kind(LossKind kind, const LogProbBatch& lp, std::span<const TokenSeq> y) {
  return compute_loss(kind, lp, y, 2, 0.0, 1);
}

// d loss / d logP, analytic vs central differences with the selection frozen.
inline double logprob_gradient_error(LossKind kind, Rng& rng) {
  const auto inst = random_instance(2, 5, 7, rng);
  const LossOutput out = loss_of_kind(kind, inst.lp, inst.targets);
  const auto& values = inst.lp.values();
  auto f = [&](std::span<const double> x) {
    Tensor3 t(values.dim0(), values.dim1(), values.dim2());
    std::copy(x.begin(), x.end(), t.data().begin());
    return frozen_loss_value(t, inst.targets, out.sentences);
  };
  const auto fd = oracle::central_differences(
      f, std::vector<double>(values.data().begin(), values.data().end()), kFdStep);
  return oracle::relative_error(out.grad.data(), fd);
}

struct TinyModelCase {
  ModelParams params;
  std::vector<TokenSeq> src;
  std::vector<TokenSeq> targets;
  std::vector<std::size_t> lens;
};

inline TinyModelCase tiny_model_case(Rng& rng) {
  TinyModelCase c;
  const ModelDims dims{8, 7, 6, 3, 4};
  c.params = ModelParams::random(dims, rng, 0.5);
  for (Matrix* m : {&c.params.hidden_b, &c.params.out_b}) {
    std::normal_distribution<double> normal(0.0, 0.5);
    for (double& x : m->data) x = normal(rng);
  }
  c.lens = {5, 4};
  std::uniform_int_distribution<TokenId> src_tok(2, 7);
  for (std::size_t b = 0; b < c.lens.size(); ++b) c.src.push_back(TokenSeq{src_tok(rng), src_tok(rng), src_tok(rng)});
  c.targets = oracle::random_targets(c.lens, dims.tgt_vocab, rng);
  return c;
}

// Full-model parameter gradients vs central differences, selection frozen.
inline double model_gradient_error(LossKind kind, Rng& rng) {
  TinyModelCase c = tiny_model_case(rng);
  const ForwardResult fr = forward(c.params, c.src, c.lens);
  const LossOutput out = loss_of_kind(kind, fr.logp, c.targets);
  const ModelParams analytic = backward(c.params, fr.cache, out.grad);

  std::vector<double> flat, flat_grad;
  for (const Matrix* m : c.params.tensors()) flat.insert(flat.end(), m->data.begin(), m->data.end());
  for (const Matrix* m : analytic.tensors()) flat_grad.insert(flat_grad.end(), m->data.begin(), m->data.end());

  auto f = [&](std::span<const double> x) {
    ModelParams p = c.params;
    std::size_t off = 0;
    for (Matrix* m : p.tensors()) {
      std::copy(x.begin() + static_cast<std::ptrdiff_t>(off), x.begin() + static_cast<std::ptrdiff_t>(off + m->data.size()),
                m->data.begin());
      off += m->data.size();
    }
    return frozen_loss_value(forward(p, c.src, c.lens).logp.values(), c.targets, out.sentences);
  };
  const auto fd = oracle::central_differences(f, flat, kFdStep);
  return oracle::relative_error(flat_grad, fd);
}

inline SuiteResult gradient(std::size_t trials, std::uint64_t seed, double tolerance = 1e-4) {
  SuiteResult r{"gradient"};
  Rng rng = make_stream(seed, "verify/gradient");
  for (LossKind kind : {LossKind::xe, LossKind::oaxe, LossKind::ngram_oaxe}) {
    for (std::size_t k = 0; k < trials; ++k) {
      const double e1 = logprob_gradient_error(kind, rng);
      r.record(e1 < tolerance, [&] {
        return nlohmann::json{{"loss", to_string(kind)}, {"level", "logprob"}, {"relative_error", e1}};
      });
      const double e2 = model_gradient_error(kind, rng);
      r.record(e2 < tolerance, [&] {
        return nlohmann::json{{"loss", to_string(kind)}, {"level", "model"}, {"relative_error", e2}};
      });
    }
  }
  return r;
}

// --- fixtures ---------------------------------------------------------------

inline SuiteResult figure1_suite() {
  SuiteResult r{"figure1"};
  const auto demo = figure1::run();
  r.record(std::abs(demo.bigram_probs[0][0] - 0.02) <= 1e-12,
           [&] { return nlohmann::json{{"P(I ate | 1,2)", demo.bigram_probs[0][0]}}; });
  const std::vector<std::pair<std::string, std::size_t>> want_kept{{"this afternoon", 1}, {"I ate", 3}, {"ate pizza", 4}};
  const std::pair<std::string, std::size_t> want_dropped{"pizza this", 2};
  std::vector<std::pair<std::string, std::size_t>> kept, dropped;
  for (const auto& s : demo.selected) {
    (s.kept ? kept : dropped).emplace_back(s.phrase, s.first_position);
    r.notes.push_back((s.kept ? "selected  (" : "truncated (") + s.phrase + " | Pos:" +
                      std::to_string(s.first_position) + "," + std::to_string(s.first_position + 1) +
                      ")  p=" + std::to_string(s.probability));
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second < b.second; });
  r.record(kept == want_kept && dropped.size() == 1 && dropped.front() == want_dropped, [&] {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& s : demo.selected) j.push_back({{"phrase", s.phrase}, {"position", s.first_position}, {"kept", s.kept}});
    return nlohmann::json{{"selected", j}};
  });
  return r;
}

inline const std::vector<double>& margin_grid() {
  static const std::vector<double> grid{0.0, 0.05, 0.10, 0.15, 0.20};
  return grid;
}

// Kept-ngram count over the margin grid on one fixed forward pass.
inline std::vector<std::size_t> kept_counts_over_grid(const LogProbBatch& lp, std::span<const TokenSeq> y, int n) {
  std::vector<std::size_t> counts;
  for (double pi : margin_grid()) {
    counts.push_back(ngram_oaxe_loss(lp, y, NgramSpec(n), TruncationConfig::with_margin(pi), 1).kept_count());
  }
  return counts;
}

inline SuiteResult truncation(std::size_t trials, std::uint64_t seed) {
  SuiteResult r{"truncation"};
  Rng rng = make_stream(seed, "verify/truncation");
  for (std::size_t k = 0; k < trials; ++k) {
    const auto inst = random_instance(8, 6, 6, rng);
    for (int n : {1, 2, 3}) {
      const auto counts = kept_counts_over_grid(inst.lp, inst.targets, n);
      const std::size_t total = ngram_oaxe_loss(inst.lp, inst.targets, NgramSpec(n), TruncationConfig::none(), 1).pair_count();
      const bool ok = counts.front() == total && std::is_sorted(counts.rbegin(), counts.rend());
      r.record(ok, [&] { return nlohmann::json{{"N", n}, {"kept_counts", counts}, {"pairs", total}}; });
    }
  }
  return r;
}

}  // namespace ngram_oaxe::verify
