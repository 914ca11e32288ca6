// ngram-oaxe: corpus generation, training, evaluation, verification,
// benchmarking and the worked bigram demo.
//
// Exit codes: 0 success, 1 validation or usage error, 2 runtime failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "ngram_oaxe/bench.hpp"
#include "ngram_oaxe/datagen.hpp"
#include "ngram_oaxe/error.hpp"
#include "ngram_oaxe/eval.hpp"
#include "ngram_oaxe/figure1.hpp"
#include "ngram_oaxe/manifest.hpp"
#include "ngram_oaxe/model.hpp"
#include "ngram_oaxe/parallel.hpp"
#include "ngram_oaxe/verify.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ngram_oaxe;

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ValidationError("cannot create output directory " + dir.string() + ": " + ec.message());
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

// --data may name a corpus directory (train.jsonl / eval.jsonl inside) or a
// JSONL file directly.
fs::path corpus_file(const fs::path& data, const char* name) {
  if (fs::is_directory(data)) return data / name;
  return data;
}

fs::path corpus_dir(const fs::path& data) { return fs::is_directory(data) ? data : data.parent_path(); }

struct Vocabs {
  Vocab src, tgt;
};

json vocab_json(const Vocab& src, const Vocab& tgt) { return {{"source", src.tokens()}, {"target", tgt.tokens()}}; }

Vocabs read_vocabs(const fs::path& dir) {
  const fs::path path = dir / "vocab.json";
  if (!fs::exists(path)) throw ValidationError("missing " + path.string() + " (written by `ngram-oaxe gen`)");
  const json j = read_json_file(path);
  try {
    return {Vocab::from_tokens(j.at("source").get<std::vector<std::string>>()),
            Vocab::from_tokens(j.at("target").get<std::vector<std::string>>())};
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------

struct GenArgs {
  GenConfig cfg;
  std::string out = "data";
};

int run_gen(const GenArgs& a) {
  const GeneratedCorpus corpus = gen_corpus(a.cfg);
  const fs::path out(a.out);
  ensure_dir(out);
  const Vocab src = make_source_vocab(a.cfg.inventory_size);
  const Vocab tgt = make_target_vocab(a.cfg.target_tokens);
  write_jsonl(corpus.train, out / "train.jsonl");
  write_jsonl(corpus.eval, out / "eval.jsonl");
  write_file_atomic(out / "vocab.json", vocab_json(src, tgt).dump() + "\n");

  RunManifest m;
  m.command = "gen";
  m.config = {{"examples", a.cfg.n_examples},   {"eval_examples", a.cfg.eval_examples},
              {"phrases", a.cfg.n_phrases},     {"modes", a.cfg.mode_count},
              {"inventory", a.cfg.inventory_size}, {"target_tokens", a.cfg.target_tokens},
              {"phrase_len", a.cfg.phrase_len}, {"seed", a.cfg.seed}};
  m.seed = a.cfg.seed;
  m.outputs = {(out / "train.jsonl").string(), (out / "eval.jsonl").string(), (out / "vocab.json").string()};
  write_manifest(m, out);
  std::printf("wrote %zu train / %zu eval examples to %s\n", corpus.train.size(), corpus.eval.size(),
              out.string().c_str());
  return 0;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string data = "data";
  std::string out = "runs/train";
  std::string config;
  std::string loss = "ngram_oaxe";
  int n = 2;
  double pi = 0.15;
  std::size_t pretrain = 500;
  std::size_t steps = 5000;
  std::size_t batch = 32;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  std::size_t eval_every = 0;
  int threads = -1;

  CLI::Option *o_loss, *o_n, *o_pi, *o_pretrain, *o_steps, *o_batch, *o_lr, *o_seed, *o_eval_every;
};

// defaults < --config file < explicit flags
TrainConfig resolve_train_config(const TrainArgs& a) {
  TrainConfig c;
  if (!a.config.empty()) apply_json(c, read_json_file(a.config));
  if (a.o_loss->count()) c.loss_kind = parse_loss_kind(a.loss);
  if (a.o_n->count()) c.n = a.n;
  if (a.o_pi->count()) c.pi = a.pi;
  if (a.o_pretrain->count()) c.pretrain_steps = a.pretrain;
  if (a.o_steps->count()) c.steps = a.steps;
  if (a.o_batch->count()) c.batch_size = a.batch;
  if (a.o_lr->count()) c.adam.lr = a.lr;
  if (a.o_seed->count()) c.seed = a.seed;
  if (a.o_eval_every->count()) c.eval_every = a.eval_every;
  c.threads = a.threads >= 0 ? static_cast<std::size_t>(a.threads) : configured_threads();
  c.validate();
  return c;
}

int run_train(const TrainArgs& a) {
  const TrainConfig cfg = resolve_train_config(a);
  const fs::path data(a.data);
  const fs::path train_path = corpus_file(data, "train.jsonl");
  const Vocabs v = read_vocabs(corpus_dir(data));
  const Corpus corpus = read_jsonl(train_path);
  const ModelDims dims = dims_for(cfg, v.src.size(), v.tgt.size());

  RunManifest m;
  m.command = "train";
  m.config = to_json(cfg);
  m.seed = cfg.seed;
  m.inputs = {train_path.string()};

  Corpus eval_corpus;
  const fs::path eval_path = corpus_dir(data) / "eval.jsonl";
  if (cfg.eval_every > 0 && fs::exists(eval_path)) {
    eval_corpus = read_jsonl(eval_path);
    check_corpus(eval_corpus, dims);
    m.inputs.push_back(eval_path.string());
  }

  const fs::path out(a.out);
  ensure_dir(out);
  const fs::path history_path = out / "history.csv";
  try {
    const TrainResult res = train(cfg, corpus, dims, eval_corpus.empty() ? nullptr : &eval_corpus);
    save_checkpoint({cfg, v.src, v.tgt, res.params}, out / "checkpoint.json");
    write_file_atomic(history_path, history_csv(res.history));
    m.outputs = {(out / "checkpoint.json").string(), history_path.string()};
    if (!res.history.evals.empty()) {
      write_file_atomic(out / "eval_history.csv", eval_history_csv(res.history));
      m.outputs.push_back((out / "eval_history.csv").string());
    }
    write_manifest(m, out);
    const auto& last = res.history.steps.back();
    std::printf("trained %s for %zu steps: final loss %.4f keep_rate %.3f\n", to_string(cfg.loss_kind), cfg.steps,
                last.loss, last.keep_rate);
    return 0;
  } catch (const TrainingDiverged& e) {
    write_file_atomic(history_path, history_csv(e.partial_history()));
    m.outputs = {history_path.string()};
    write_manifest(m, out);
    throw;
  }
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint = "runs/train/checkpoint.json";
  std::string data = "data";
  std::string out = "runs/eval";
  bool dedup = false;
};

int run_eval(const EvalArgs& a) {
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  const fs::path data(a.data);
  const fs::path eval_path = corpus_file(data, "eval.jsonl");
  const fs::path vocab_path = corpus_dir(data) / "vocab.json";
  if (fs::exists(vocab_path)) {
    const Vocabs v = read_vocabs(corpus_dir(data));
    if (!(v.src == ck.src_vocab) || !(v.tgt == ck.tgt_vocab)) {
      throw ValidationError("vocab mismatch: checkpoint vocabularies differ from " + vocab_path.string());
    }
  }
  const Corpus corpus = read_jsonl(eval_path);
  check_corpus(corpus, ck.params.dims);
  const EvalReport report = evaluate(ck.params, corpus, a.dedup);

  const fs::path out(a.out);
  ensure_dir(out);
  write_file_atomic(out / "report.json", to_json(report).dump(2) + "\n");
  RunManifest m;
  m.command = "eval";
  m.config = {{"checkpoint", a.checkpoint}, {"data", eval_path.string()}, {"dedup", a.dedup}};
  m.seed = ck.config.seed;
  m.inputs = {a.checkpoint, eval_path.string()};
  m.outputs = {(out / "report.json").string()};
  write_manifest(m, out);

  std::printf("repetition_rate %.4f  mode_match_rate %.4f  (%zu examples)\n", report.repetition_rate,
              report.mode_match_rate, report.n_examples);
  for (std::size_t n = 0; n < 4; ++n) {
    if (report.ngram_precision[n]) std::printf("p%zu %.4f\n", n + 1, *report.ngram_precision[n]);
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct VerifyArgs {
  std::string suite = "all";
  std::size_t trials = 0;  // 0: each suite's default
  std::size_t size = 0;    // hungarian only; 0 sweeps 2..7
  std::uint64_t seed = 0;
  std::string out = "runs/verify";
};

int run_verify(const VerifyArgs& a) {
  auto t = [&](std::size_t def) { return a.trials ? a.trials : def; };
  const bool all = a.suite == "all";
  std::vector<verify::SuiteResult> results;
  if (all || a.suite == "hungarian") results.push_back(verify::hungarian(t(500), a.size, a.seed));
  if (all || a.suite == "reduction") results.push_back(verify::reduction(t(200), a.seed));
  if (all || a.suite == "oracle") results.push_back(verify::oracle_loss(t(100), a.seed));
  if (all || a.suite == "gradient") results.push_back(verify::gradient(t(20), a.seed));
  if (all || a.suite == "figure1") results.push_back(verify::figure1_suite());
  if (all || a.suite == "truncation") results.push_back(verify::truncation(t(50), a.seed));
  if (results.empty()) {
    throw ValidationError("unknown suite '" + a.suite +
                          "' (expected all, hungarian, reduction, oracle, gradient, figure1 or truncation)");
  }

  json summary = json::array();
  const verify::SuiteResult* first_failure = nullptr;
  for (const auto& r : results) {
    std::printf("%-11s %zu/%zu %s\n", r.name.c_str(), r.passed, r.total, r.ok() ? "pass" : "FAIL");
    for (const auto& note : r.notes) std::printf("  %s\n", note.c_str());
    json j = {{"suite", r.name}, {"passed", r.passed}, {"total", r.total}};
    if (r.counterexample) j["counterexample"] = *r.counterexample;
    summary.push_back(j);
    if (!r.ok() && first_failure == nullptr) first_failure = &r;
  }

  const fs::path out(a.out);
  ensure_dir(out);
  write_file_atomic(out / "verify.json", summary.dump(2) + "\n");
  RunManifest m;
  m.command = "verify";
  m.config = {{"suite", a.suite}, {"trials", a.trials}, {"size", a.size}, {"seed", a.seed}};
  m.seed = a.seed;
  m.outputs = {(out / "verify.json").string()};
  write_manifest(m, out);

  if (first_failure != nullptr) {
    std::fprintf(stderr, "first counterexample (%s): %s\n", first_failure->name.c_str(),
                 first_failure->counterexample->dump().c_str());
    return kExitRuntime;
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct BenchArgs {
  bench::BenchConfig cfg;
  std::string out = "runs/bench";
};

int run_bench(const BenchArgs& a) {
  detail::require(a.cfg.reps >= 30, "bench needs at least 30 repetitions per cell");
  const auto rows = bench::run(a.cfg);
  const std::string csv = bench::to_csv(rows);
  std::fputs(csv.c_str(), stdout);

  const auto* n1 = bench::find(rows, 1, 32, 32);
  const auto* n2 = bench::find(rows, 2, 32, 32);
  if (n1 && n2) std::printf("# N=2 / N=1 loss time at I=32, batch=32: %.3f\n", n2->median_loss_us / n1->median_loss_us);
  for (std::size_t batch : a.cfg.batches) {
    std::printf("# Hungarian log-log slope (N=1, batch=%zu): %.3f\n", batch, bench::hungarian_slope(rows, 1, batch));
  }

  const fs::path out(a.out);
  ensure_dir(out);
  write_file_atomic(out / "bench.csv", csv);
  RunManifest m;
  m.command = "bench";
  m.config = {{"ngram_sizes", a.cfg.ngram_sizes}, {"lengths", a.cfg.lengths}, {"batches", a.cfg.batches},
              {"reps", a.cfg.reps},               {"vocab", a.cfg.vocab},     {"pi", a.cfg.pi}};
  m.seed = a.cfg.seed;
  m.outputs = {(out / "bench.csv").string()};
  write_manifest(m, out);
  return 0;
}

// ---------------------------------------------------------------------------

struct DemoArgs {
  double pi = figure1::kMargin;
  std::string out = "runs/demo-figure1";
};

int run_demo(const DemoArgs& a) {
  (void)TruncationConfig::with_margin(a.pi);
  const figure1::Demo demo = figure1::run(a.pi);
  const auto& w = figure1::words();
  const std::vector<std::string> bigrams{w[0] + " " + w[1], w[1] + " " + w[2], w[2] + " " + w[3], w[3] + " " + w[4]};

  std::printf("%-10s", "");
  for (const auto& b : bigrams) std::printf("%16s", b.c_str());
  std::printf("\n");
  for (std::size_t i = 0; i < 4; ++i) {
    const std::string pos = "Pos:" + std::to_string(i + 1) + "," + std::to_string(i + 2);
    std::printf("%-10s", pos.c_str());
    for (std::size_t j = 0; j < 4; ++j) std::printf("%16.4f", demo.bigram_probs[i][j]);
    std::printf("\n");
  }
  std::printf("\nmargin %.2f\n", a.pi);
  json selected = json::array();
  for (const auto& s : demo.selected) {
    std::printf("%s (%s | Pos:%zu,%zu)  p=%.4f\n", s.kept ? "selected " : "truncated", s.phrase.c_str(),
                s.first_position, s.first_position + 1, s.probability);
    selected.push_back(
        {{"bigram", s.phrase}, {"position", s.first_position}, {"probability", s.probability}, {"kept", s.kept}});
  }
  std::printf("loss %.6f\n", demo.loss);

  const fs::path out(a.out);
  ensure_dir(out);
  json probs = json::array();
  for (const auto& row : demo.bigram_probs) probs.push_back(row);
  write_file_atomic(out / "figure1.json",
                    json{{"bigrams", bigrams}, {"bigram_probs", probs}, {"selected", selected}, {"loss", demo.loss}}
                            .dump(2) + "\n");
  RunManifest m;
  m.command = "demo-figure1";
  m.config = {{"pi", a.pi}};
  m.outputs = {(out / "figure1.json").string()};
  write_manifest(m, out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ngram-OaXE loss toolkit for non-autoregressive translation experiments"};
  app.set_version_flag("--version", std::string(kToolVersion));
  app.require_subcommand(1);

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "Generate a synthetic multimodal corpus");
  g->add_option("--examples", gen.cfg.n_examples, "Training examples")->capture_default_str();
  g->add_option("--eval-examples", gen.cfg.eval_examples, "Held-out examples")->capture_default_str();
  g->add_option("--phrases", gen.cfg.n_phrases, "Phrases per example")->capture_default_str();
  g->add_option("--modes", gen.cfg.mode_count, "Distinct phrase orders per example")->capture_default_str();
  g->add_option("--phrase-len", gen.cfg.phrase_len, "Tokens per phrase")->capture_default_str();
  g->add_option("--inventory", gen.cfg.inventory_size, "Phrase inventory size")->capture_default_str();
  g->add_option("--tokens", gen.cfg.target_tokens, "Target content tokens")->capture_default_str();
  g->add_option("--seed", gen.cfg.seed)->capture_default_str();
  g->add_option("--out", gen.out, "Output directory")->capture_default_str();

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train the NAT model");
  t->add_option("--data", tr.data, "Corpus directory or train JSONL file")->capture_default_str();
  t->add_option("--out", tr.out, "Output directory")->capture_default_str();
  t->add_option("--config", tr.config, "JSON config overriding defaults");
  tr.o_loss = t->add_option("--loss", tr.loss, "xe, oaxe or ngram_oaxe")->capture_default_str();
  tr.o_n = t->add_option("--n", tr.n, "Ngram size")->capture_default_str();
  tr.o_pi = t->add_option("--pi", tr.pi, "Truncation margin in [0, 1]")->capture_default_str();
  tr.o_pretrain = t->add_option("--pretrain", tr.pretrain, "Initial XE steps")->capture_default_str();
  tr.o_steps = t->add_option("--steps", tr.steps, "Total steps")->capture_default_str();
  tr.o_batch = t->add_option("--batch", tr.batch, "Batch size")->capture_default_str();
  tr.o_lr = t->add_option("--lr", tr.lr, "Adam learning rate")->capture_default_str();
  tr.o_seed = t->add_option("--seed", tr.seed)->capture_default_str();
  tr.o_eval_every = t->add_option("--eval-every", tr.eval_every, "Evaluate on eval.jsonl every k steps (0: never)");
  t->add_option("--threads", tr.threads, "Loss threads (default: NGRAM_OAXE_THREADS, 0 = auto)");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Decode an eval corpus and score it");
  e->add_option("--checkpoint", ev.checkpoint)->capture_default_str();
  e->add_option("--data", ev.data, "Corpus directory or eval JSONL file")->capture_default_str();
  e->add_option("--dedup", ev.dedup, "Collapse adjacent repeats in the output (true/false)")->capture_default_str();
  e->add_option("--out", ev.out, "Output directory")->capture_default_str();

  VerifyArgs ve;
  auto* v = app.add_subcommand("verify", "Run the property and oracle suites");
  v->add_option("--suite", ve.suite, "all, hungarian, reduction, oracle, gradient, figure1 or truncation")
      ->capture_default_str();
  v->add_option("--trials", ve.trials, "Trials per suite (0: suite default)");
  v->add_option("--size", ve.size, "Matrix size for the hungarian suite (0: sweep 2..7)");
  v->add_option("--seed", ve.seed)->capture_default_str();
  v->add_option("--out", ve.out, "Output directory")->capture_default_str();

  BenchArgs be;
  auto* b = app.add_subcommand("bench", "Time loss evaluation over N, length and batch grids");
  b->add_option("--reps", be.cfg.reps, "Repetitions per cell (>= 30)")->capture_default_str();
  b->add_option("--vocab", be.cfg.vocab)->capture_default_str();
  b->add_option("--seed", be.cfg.seed)->capture_default_str();
  b->add_option("--out", be.out, "Output directory")->capture_default_str();

  DemoArgs de;
  auto* d = app.add_subcommand("demo-figure1", "Worked bigram example on \"I ate pizza this afternoon\"");
  d->add_option("--pi", de.pi, "Truncation margin")->capture_default_str();
  d->add_option("--out", de.out, "Output directory")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int rc = app.exit(err);
    return rc == 0 ? 0 : kExitValidation;
  }

  try {
    if (g->parsed()) return run_gen(gen);
    if (t->parsed()) return run_train(tr);
    if (e->parsed()) return run_eval(ev);
    if (v->parsed()) return run_verify(ve);
    if (b->parsed()) return run_bench(be);
    if (d->parsed()) return run_demo(de);
  } catch (const ValidationError& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return kExitValidation;
  } catch (const std::exception& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return kExitRuntime;
  }
  return kExitValidation;
}
