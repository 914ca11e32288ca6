#pragma once

// Tiny non-autoregressive model with hand-written backprop and Adam.
//
//   pooled   = mean_s src_embed[src_s]
//   hidden_t = tanh((pooled + pos_embed[t]) * hidden_w + hidden_b)
//   logP_t   = log_softmax(hidden_t * out_w + out_b)
//
// Positions are conditionally independent given the source, and the mean
// pooling makes the output invariant to source order.

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "ngram_oaxe/core.hpp"
#include "ngram_oaxe/datagen.hpp"
#include "ngram_oaxe/error.hpp"
#include "ngram_oaxe/eval.hpp"
#include "ngram_oaxe/loss.hpp"
#include "ngram_oaxe/rng.hpp"

namespace ngram_oaxe {

struct Matrix {
  std::size_t rows = 0, cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
  std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
  bool operator==(const Matrix&) const = default;
};

struct ModelDims {
  std::size_t src_vocab = 0;
  std::size_t tgt_vocab = 0;
  std::size_t max_len = 16;
  std::size_t embed = 32;
  std::size_t hidden = 64;

  bool operator==(const ModelDims&) const = default;
};

struct ModelParams {
  ModelDims dims;
  Matrix src_embed;  // src_vocab x embed
  Matrix pos_embed;  // max_len x embed
  Matrix hidden_w;   // embed x hidden
  Matrix hidden_b;   // 1 x hidden
  Matrix out_w;      // hidden x tgt_vocab
  Matrix out_b;      // 1 x tgt_vocab

  static constexpr std::array<const char*, 6> kNames{"src_embed", "pos_embed", "hidden_w",
                                                     "hidden_b",  "out_w",     "out_b"};

  static ModelParams zeros(const ModelDims& d) {
    detail::require(d.src_vocab >= 1 && d.tgt_vocab >= 2 && d.max_len >= 1 && d.embed >= 1 && d.hidden >= 1,
                    "invalid model dimensions");
    ModelParams p;
    p.dims = d;
    p.src_embed = Matrix(d.src_vocab, d.embed);
    p.pos_embed = Matrix(d.max_len, d.embed);
    p.hidden_w = Matrix(d.embed, d.hidden);
    p.hidden_b = Matrix(1, d.hidden);
    p.out_w = Matrix(d.hidden, d.tgt_vocab);
    p.out_b = Matrix(1, d.tgt_vocab);
    return p;
  }

  // Gaussian init; biases start at zero.
  static ModelParams random(const ModelDims& d, Rng& rng, double scale = 0.1) {
    ModelParams p = zeros(d);
    std::normal_distribution<double> normal(0.0, scale);
    for (Matrix* m : {&p.src_embed, &p.pos_embed, &p.hidden_w, &p.out_w}) {
      for (double& x : m->data) x = normal(rng);
    }
    return p;
  }

  std::array<Matrix*, 6> tensors() { return {&src_embed, &pos_embed, &hidden_w, &hidden_b, &out_w, &out_b}; }
  std::array<const Matrix*, 6> tensors() const {
    return {&src_embed, &pos_embed, &hidden_w, &hidden_b, &out_w, &out_b};
  }

  bool operator==(const ModelParams&) const = default;
};

struct ForwardCache {
  ModelDims dims;
  std::vector<std::vector<TokenId>> src;  // non-pad source ids per sentence
  std::vector<std::size_t> target_len;
  Matrix pooled;   // B x embed
  Tensor3 hidden;  // B x T x hidden (post tanh)
  Tensor3 probs;   // B x T x tgt_vocab
};

struct ForwardResult {
  LogProbBatch logp;
  ForwardCache cache;
};

inline ForwardResult forward(const ModelParams& params, std::span<const TokenSeq> src,
                             std::span<const std::size_t> target_len) {
  const ModelDims& d = params.dims;
  detail::require(src.size() == target_len.size(), "source and length batch sizes differ");
  detail::require(!src.empty(), "empty batch");
  std::size_t T = 0;
  for (std::size_t b = 0; b < target_len.size(); ++b) {
    detail::require(target_len[b] >= 1 && target_len[b] <= d.max_len,
                    "sentence " + std::to_string(b) + ": target length " + std::to_string(target_len[b]) +
                        " exceeds max positions " + std::to_string(d.max_len));
    detail::require(src[b].length() >= 1, "sentence " + std::to_string(b) + ": empty source");
    src[b].check_vocab(d.src_vocab);
    T = std::max(T, target_len[b]);
  }
  const std::size_t B = src.size(), E = d.embed, H = d.hidden, V = d.tgt_vocab;

  ForwardCache cache;
  cache.dims = d;
  cache.target_len.assign(target_len.begin(), target_len.end());
  cache.pooled = Matrix(B, E);
  cache.hidden = Tensor3(B, T, H);
  cache.probs = Tensor3(B, T, V, 1.0 / static_cast<double>(V));
  Tensor3 logits(B, T, V, 0.0);

  std::vector<double> x(E);
  for (std::size_t b = 0; b < B; ++b) {
    const std::size_t len = src[b].length();
    cache.src.emplace_back(src[b].ids().begin(), src[b].ids().begin() + static_cast<std::ptrdiff_t>(len));
    for (TokenId s : cache.src.back()) {
      for (std::size_t e = 0; e < E; ++e) cache.pooled(b, e) += params.src_embed(static_cast<std::size_t>(s), e);
    }
    for (std::size_t e = 0; e < E; ++e) cache.pooled(b, e) /= static_cast<double>(len);

    for (std::size_t t = 0; t < target_len[b]; ++t) {
      for (std::size_t e = 0; e < E; ++e) x[e] = cache.pooled(b, e) + params.pos_embed(t, e);
      auto h = cache.hidden.row(b, t);
      for (std::size_t k = 0; k < H; ++k) h[k] = params.hidden_b(0, k);
      for (std::size_t e = 0; e < E; ++e) {
        const double xe = x[e];
        const auto w = params.hidden_w.row(e);
        for (std::size_t k = 0; k < H; ++k) h[k] += xe * w[k];
      }
      for (double& hk : h) hk = std::tanh(hk);
      auto z = logits.row(b, t);
      for (std::size_t v = 0; v < V; ++v) z[v] = params.out_b(0, v);
      for (std::size_t k = 0; k < H; ++k) {
        const double hk = h[k];
        const auto w = params.out_w.row(k);
        for (std::size_t v = 0; v < V; ++v) z[v] += hk * w[v];
      }
    }
  }

  LogProbBatch logp = log_softmax(logits, cache.target_len);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t t = 0; t < target_len[b]; ++t) {
      auto p = cache.probs.row(b, t);
      for (std::size_t v = 0; v < V; ++v) p[v] = std::exp(logp(b, t, v));
    }
  }
  return {std::move(logp), std::move(cache)};
}

// Exact parameter gradients given d loss / d logP (positions past a
// sentence's length must carry zero gradient).
inline ModelParams backward(const ModelParams& params, const ForwardCache& cache, const Tensor3& grad_logp) {
  const ModelDims& d = params.dims;
  detail::require(cache.dims == d, "forward cache was produced by a model with different dimensions");
  detail::require(grad_logp.same_shape(cache.probs), "gradient shape does not match forward cache");
  const std::size_t B = cache.src.size(), E = d.embed, H = d.hidden, V = d.tgt_vocab;
  ModelParams g = ModelParams::zeros(d);

  std::vector<double> dz(V), dpre(H), dx(E), dpooled(E);
  for (std::size_t b = 0; b < B; ++b) {
    std::fill(dpooled.begin(), dpooled.end(), 0.0);
    for (std::size_t t = 0; t < cache.target_len[b]; ++t) {
      const auto gl = grad_logp.row(b, t);
      const auto p = cache.probs.row(b, t);
      double gsum = 0.0;
      for (double x : gl) gsum += x;
      for (std::size_t v = 0; v < V; ++v) dz[v] = gl[v] - p[v] * gsum;

      const auto h = cache.hidden.row(b, t);
      for (std::size_t v = 0; v < V; ++v) g.out_b(0, v) += dz[v];
      for (std::size_t k = 0; k < H; ++k) {
        double da = 0.0;
        const auto w = params.out_w.row(k);
        for (std::size_t v = 0; v < V; ++v) {
          g.out_w(k, v) += h[k] * dz[v];
          da += w[v] * dz[v];
        }
        dpre[k] = da * (1.0 - h[k] * h[k]);
        g.hidden_b(0, k) += dpre[k];
      }
      for (std::size_t e = 0; e < E; ++e) {
        const double xe = cache.pooled(b, e) + params.pos_embed(t, e);
        const auto w = params.hidden_w.row(e);
        double acc = 0.0;
        for (std::size_t k = 0; k < H; ++k) {
          g.hidden_w(e, k) += xe * dpre[k];
          acc += w[k] * dpre[k];
        }
        dx[e] = acc;
        g.pos_embed(t, e) += acc;
        dpooled[e] += acc;
      }
    }
    const double inv_len = 1.0 / static_cast<double>(cache.src[b].size());
    for (TokenId s : cache.src[b]) {
      for (std::size_t e = 0; e < E; ++e) g.src_embed(static_cast<std::size_t>(s), e) += dpooled[e] * inv_len;
    }
  }
  return g;
}

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  ModelParams m, v;
  std::uint64_t step = 0;

  static AdamState for_params(const ModelParams& p) { return {ModelParams::zeros(p.dims), ModelParams::zeros(p.dims), 0}; }
};

inline void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state, const AdamConfig& cfg) {
  detail::require(grads.dims == params.dims && state.m.dims == params.dims && state.v.dims == params.dims,
                  "optimizer state does not match parameters");
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  auto p = params.tensors();
  auto m = state.m.tensors();
  auto v = state.v.tensors();
  const auto g = grads.tensors();
  for (std::size_t k = 0; k < p.size(); ++k) {
    for (std::size_t i = 0; i < p[k]->data.size(); ++i) {
      const double gi = g[k]->data[i];
      double& mi = m[k]->data[i];
      double& vi = v[k]->data[i];
      mi = cfg.beta1 * mi + (1.0 - cfg.beta1) * gi;
      vi = cfg.beta2 * vi + (1.0 - cfg.beta2) * gi * gi;
      p[k]->data[i] -= cfg.lr * (mi / bc1) / (std::sqrt(vi / bc2) + cfg.eps);
    }
  }
}

// Per-position argmax (lowest id on ties); optionally collapses adjacent repeats.
inline std::vector<TokenSeq> decode(const ModelParams& params, std::span<const TokenSeq> src,
                                    std::span<const std::size_t> target_len, bool dedup_output) {
  const ForwardResult fr = forward(params, src, target_len);
  std::vector<TokenSeq> out;
  out.reserve(src.size());
  for (std::size_t b = 0; b < src.size(); ++b) {
    std::vector<TokenId> ids;
    for (std::size_t t = 0; t < target_len[b]; ++t) {
      const auto row = fr.logp.values().row(b, t);
      // Pad is never emitted.
      std::size_t best = 1;
      for (std::size_t v = 2; v < row.size(); ++v) {
        if (row[v] > row[best]) best = v;
      }
      ids.push_back(static_cast<TokenId>(best));
    }
    TokenSeq seq(std::move(ids));
    out.push_back(dedup_output ? dedup(seq) : std::move(seq));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training

enum class LossKind { xe, oaxe, ngram_oaxe };

inline const char* to_string(LossKind k) {
  switch (k) {
    case LossKind::xe: return "xe";
    case LossKind::oaxe: return "oaxe";
    case LossKind::ngram_oaxe: return "ngram_oaxe";
  }
  return "?";
}

inline LossKind parse_loss_kind(const std::string& s) {
  if (s == "xe") return LossKind::xe;
  if (s == "oaxe") return LossKind::oaxe;
  if (s == "ngram_oaxe") return LossKind::ngram_oaxe;
  throw ValidationError("unknown loss kind '" + s + "' (expected xe, oaxe or ngram_oaxe)");
}

struct TrainConfig {
  LossKind loss_kind = LossKind::ngram_oaxe;
  int n = 2;
  double pi = 0.15;
  std::size_t pretrain_steps = 500;
  AdamConfig adam;
  std::size_t steps = 5000;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  std::size_t embed = 32;
  std::size_t hidden = 64;
  std::size_t max_len = 16;
  double init_scale = 0.1;
  std::size_t eval_every = 0;  // 0 disables periodic evaluation
  std::size_t threads = 1;

  void validate() const {
    detail::require(pretrain_steps <= steps, "pretrain steps exceed total steps");
    detail::require(adam.lr > 0.0, "learning rate must be positive");
    detail::require(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0,
                    "Adam betas must be in [0, 1)");
    detail::require(adam.eps > 0.0, "Adam epsilon must be positive");
    detail::require(batch_size >= 1, "batch size must be positive");
    detail::require(init_scale >= 0.0, "init scale must be nonnegative");
    (void)NgramSpec(n);
    (void)TruncationConfig::with_margin(pi);
  }

  // Loss used at `step`: XE during pretraining, the configured loss after.
  LossKind loss_at(std::size_t step) const { return step < pretrain_steps ? LossKind::xe : loss_kind; }

  int effective_n() const { return loss_kind == LossKind::ngram_oaxe ? n : 1; }
};

inline LossOutput compute_loss(LossKind kind, const LogProbBatch& lp, std::span<const TokenSeq> targets, int n,
                               double pi, std::size_t threads) {
  switch (kind) {
    case LossKind::xe: return xe_loss(lp, targets);
    case LossKind::oaxe: return oaxe_loss(lp, targets, TruncationConfig::with_margin(pi), threads);
    case LossKind::ngram_oaxe:
      return ngram_oaxe_loss(lp, targets, NgramSpec(n), TruncationConfig::with_margin(pi), threads);
  }
  throw ValidationError("unknown loss kind");
}

struct StepRecord {
  std::size_t step = 0;
  double loss = 0.0;  // batch loss divided by batch size
  double keep_rate = 1.0;

  bool operator==(const StepRecord&) const = default;
};

struct EvalRecord {
  std::size_t step = 0;
  EvalReport report;
};

struct History {
  std::vector<StepRecord> steps;
  std::vector<EvalRecord> evals;
};

struct TrainResult {
  ModelParams params;
  History history;
};

class TrainingDiverged : public RuntimeFailure {
 public:
  TrainingDiverged(std::size_t step, History partial)
      : RuntimeFailure("training diverged (non-finite loss) at step " + std::to_string(step)),
        step_(step),
        partial_(std::move(partial)) {}
  std::size_t step() const { return step_; }
  const History& partial_history() const { return partial_; }

 private:
  std::size_t step_;
  History partial_;
};

inline ModelDims dims_for(const TrainConfig& cfg, std::size_t src_vocab, std::size_t tgt_vocab) {
  return {src_vocab, tgt_vocab, cfg.max_len, cfg.embed, cfg.hidden};
}

inline void check_corpus(const Corpus& corpus, const ModelDims& d) {
  for (std::size_t k = 0; k < corpus.size(); ++k) {
    const auto& ex = corpus[k];
    try {
      ex.src.check_vocab(d.src_vocab);
      ex.target.check_vocab(d.tgt_vocab);
      for (const auto& r : ex.refs) r.check_vocab(d.tgt_vocab);
    } catch (const ValidationError& e) {
      throw ValidationError("example " + std::to_string(k) + ": vocab mismatch: " + e.what());
    }
    detail::require(ex.target.length() <= d.max_len,
                    "example " + std::to_string(k) + ": target longer than model max length");
  }
}

// Decodes with oracle target lengths (first reference) and scores the outputs.
inline EvalReport evaluate(const ModelParams& params, const Corpus& corpus, bool dedup_output) {
  detail::require(!corpus.empty(), "empty evaluation corpus");
  std::vector<TokenSeq> src;
  std::vector<std::size_t> lens;
  std::vector<RefSet> refs;
  for (const auto& ex : corpus) {
    src.push_back(ex.src);
    lens.push_back(ex.refs.front().length());
    refs.push_back(ex.refs);
  }
  const auto outputs = decode(params, src, lens, dedup_output);
  return build_report(outputs, refs);
}

inline TrainResult train(const TrainConfig& cfg, const Corpus& corpus, const ModelDims& dims,
                         const Corpus* eval_corpus = nullptr) {
  cfg.validate();
  detail::require(!corpus.empty(), "training corpus is empty");
  check_corpus(corpus, dims);

  Rng init_rng = make_stream(cfg.seed, "init");
  Rng sample_rng = make_stream(cfg.seed, "sampling");
  TrainResult res{ModelParams::random(dims, init_rng, cfg.init_scale), {}};
  AdamState state = AdamState::for_params(res.params);
  std::uniform_int_distribution<std::size_t> pick(0, corpus.size() - 1);

  std::vector<TokenSeq> src(cfg.batch_size), tgt(cfg.batch_size);
  std::vector<std::size_t> lens(cfg.batch_size);
  const double inv_batch = 1.0 / static_cast<double>(cfg.batch_size);
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    for (std::size_t b = 0; b < cfg.batch_size; ++b) {
      const auto& ex = corpus[pick(sample_rng)];
      src[b] = ex.src;
      tgt[b] = ex.target;
      lens[b] = ex.target.length();
    }
    // Inputs were validated up front, so a rejection here means the
    // parameters have blown up.
    std::optional<ForwardResult> fr;
    try {
      fr.emplace(forward(res.params, src, lens));
    } catch (const ValidationError&) {
      throw TrainingDiverged(step, std::move(res.history));
    }
    LossOutput lo = compute_loss(cfg.loss_at(step), fr->logp, tgt, cfg.n, cfg.pi, cfg.threads);
    const double loss = lo.value * inv_batch;
    if (!std::isfinite(loss)) throw TrainingDiverged(step, std::move(res.history));
    for (double& g : lo.grad.data()) g *= inv_batch;
    const ModelParams grads = backward(res.params, fr->cache, lo.grad);
    adam_step(res.params, grads, state, cfg.adam);
    res.history.steps.push_back({step, loss, lo.keep_rate()});
    if (cfg.eval_every > 0 && eval_corpus != nullptr && (step + 1) % cfg.eval_every == 0) {
      res.history.evals.push_back({step + 1, evaluate(res.params, *eval_corpus, false)});
    }
  }
  return res;
}

// step,loss,keep_rate with round-trip precision, so equal histories give
// byte-identical files.
inline std::string history_csv(const History& h) {
  std::string s = "step,loss,keep_rate\n";
  char buf[96];
  for (const auto& r : h.steps) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", r.step, r.loss, r.keep_rate);
    s += buf;
  }
  return s;
}

inline std::string eval_history_csv(const History& h) {
  std::string s = "step,repetition_rate,p1,p2,p3,p4,mode_match_rate\n";
  char buf[64];
  auto num = [&](std::optional<double> v) {
    if (!v) return std::string();
    std::snprintf(buf, sizeof buf, "%.17g", *v);
    return std::string(buf);
  };
  for (const auto& e : h.evals) {
    s += std::to_string(e.step) + "," + num(e.report.repetition_rate);
    for (const auto& p : e.report.ngram_precision) s += "," + num(p);
    s += "," + num(e.report.mode_match_rate) + "\n";
  }
  return s;
}

// Mean per-sentence loss of `kind` over a whole corpus (no parameter update).
inline double corpus_loss(const ModelParams& params, const Corpus& corpus, LossKind kind, int n, double pi) {
  detail::require(!corpus.empty(), "empty corpus");
  std::vector<TokenSeq> src, tgt;
  std::vector<std::size_t> lens;
  for (const auto& ex : corpus) {
    src.push_back(ex.src);
    tgt.push_back(ex.target);
    lens.push_back(ex.target.length());
  }
  const ForwardResult fr = forward(params, src, lens);
  return compute_loss(kind, fr.logp, tgt, n, pi, 1).value / static_cast<double>(corpus.size());
}

// ---------------------------------------------------------------------------
// Checkpoints: a single JSON document with config, vocabularies and
// parameter arrays. Doubles are written in shortest round-trip form.

struct Checkpoint {
  TrainConfig config;
  Vocab src_vocab;
  Vocab tgt_vocab;
  ModelParams params;
};

inline nlohmann::json to_json(const TrainConfig& c) {
  return {
      {"loss", to_string(c.loss_kind)}, {"n", c.n},
      {"pi", c.pi},                     {"pretrain_steps", c.pretrain_steps},
      {"lr", c.adam.lr},                {"beta1", c.adam.beta1},
      {"beta2", c.adam.beta2},          {"eps", c.adam.eps},
      {"steps", c.steps},               {"batch_size", c.batch_size},
      {"seed", c.seed},                 {"embed", c.embed},
      {"hidden", c.hidden},             {"max_len", c.max_len},
      {"init_scale", c.init_scale},     {"eval_every", c.eval_every},
  };
}

// Overrides fields of `c` present in `j`; unknown keys are rejected.
inline void apply_json(TrainConfig& c, const nlohmann::json& j) {
  detail::require(j.is_object(), "config must be a JSON object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "loss") c.loss_kind = parse_loss_kind(value.get<std::string>());
      else if (key == "n") c.n = value.get<int>();
      else if (key == "pi") c.pi = value.get<double>();
      else if (key == "pretrain_steps") c.pretrain_steps = value.get<std::size_t>();
      else if (key == "lr") c.adam.lr = value.get<double>();
      else if (key == "beta1") c.adam.beta1 = value.get<double>();
      else if (key == "beta2") c.adam.beta2 = value.get<double>();
      else if (key == "eps") c.adam.eps = value.get<double>();
      else if (key == "steps") c.steps = value.get<std::size_t>();
      else if (key == "batch_size") c.batch_size = value.get<std::size_t>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "embed") c.embed = value.get<std::size_t>();
      else if (key == "hidden") c.hidden = value.get<std::size_t>();
      else if (key == "max_len") c.max_len = value.get<std::size_t>();
      else if (key == "init_scale") c.init_scale = value.get<double>();
      else if (key == "eval_every") c.eval_every = value.get<std::size_t>();
      else throw ValidationError("unknown config key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad config value: ") + e.what());
  }
}

inline nlohmann::json to_json(const Checkpoint& ck) {
  nlohmann::json params = nlohmann::json::object();
  const auto ts = ck.params.tensors();
  for (std::size_t k = 0; k < ts.size(); ++k) {
    params[ModelParams::kNames[k]] = {{"rows", ts[k]->rows}, {"cols", ts[k]->cols}, {"data", ts[k]->data}};
  }
  const ModelDims& d = ck.params.dims;
  return {
      {"format", "ngram-oaxe-checkpoint"},
      {"version", 1},
      {"config", to_json(ck.config)},
      {"dims",
       {{"src_vocab", d.src_vocab}, {"tgt_vocab", d.tgt_vocab}, {"max_len", d.max_len}, {"embed", d.embed},
        {"hidden", d.hidden}}},
      {"src_vocab", ck.src_vocab.tokens()},
      {"tgt_vocab", ck.tgt_vocab.tokens()},
      {"params", params},
  };
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  try {
    detail::require(j.at("format") == "ngram-oaxe-checkpoint", "not an ngram-oaxe checkpoint");
    detail::require(j.at("version") == 1, "unsupported checkpoint version");
    Checkpoint ck;
    apply_json(ck.config, j.at("config"));
    ck.src_vocab = Vocab::from_tokens(j.at("src_vocab").get<std::vector<std::string>>());
    ck.tgt_vocab = Vocab::from_tokens(j.at("tgt_vocab").get<std::vector<std::string>>());
    const auto& jd = j.at("dims");
    ModelDims d{jd.at("src_vocab").get<std::size_t>(), jd.at("tgt_vocab").get<std::size_t>(),
                jd.at("max_len").get<std::size_t>(), jd.at("embed").get<std::size_t>(),
                jd.at("hidden").get<std::size_t>()};
    detail::require(d.src_vocab == ck.src_vocab.size() && d.tgt_vocab == ck.tgt_vocab.size(),
                    "checkpoint dims disagree with stored vocabularies");
    ck.params = ModelParams::zeros(d);
    auto ts = ck.params.tensors();
    for (std::size_t k = 0; k < ts.size(); ++k) {
      const auto& jt = j.at("params").at(ModelParams::kNames[k]);
      detail::require(jt.at("rows").get<std::size_t>() == ts[k]->rows && jt.at("cols").get<std::size_t>() == ts[k]->cols,
                      std::string("checkpoint tensor '") + ModelParams::kNames[k] + "' has wrong shape");
      auto data = jt.at("data").get<std::vector<double>>();
      detail::require(data.size() == ts[k]->data.size(),
                      std::string("checkpoint tensor '") + ModelParams::kNames[k] + "' has wrong size");
      for (double x : data) detail::require(std::isfinite(x), "non-finite parameter in checkpoint");
      ts[k]->data = std::move(data);
    }
    return ck;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed checkpoint: ") + e.what());
  }
}

inline void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  write_file_atomic(path, to_json(ck).dump() + "\n");
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open checkpoint " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("malformed checkpoint: " + std::string(e.what()));
  }
  return checkpoint_from_json(j);
}

}  // namespace ngram_oaxe
