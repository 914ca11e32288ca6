#pragma once

// Synthetic multimodal corpus: every source is a set of phrases and each valid
// target concatenates those phrases in one of several admitted orders.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "ngram_oaxe/core.hpp"
#include "ngram_oaxe/error.hpp"
#include "ngram_oaxe/rng.hpp"

namespace ngram_oaxe {

// Source ids: pad, unk, marker, then one id per phrase.
inline constexpr TokenId kMarkerId = 2;
inline constexpr TokenId kFirstPhraseSourceId = 3;
// Target ids: pad, unk, then content tokens.
inline constexpr TokenId kFirstTargetTokenId = 2;

inline Vocab make_source_vocab(std::size_t n_phrase_ids) {
  std::vector<std::string> symbols{"<m>"};
  for (std::size_t k = 0; k < n_phrase_ids; ++k) symbols.push_back("p" + std::to_string(k));
  return Vocab(symbols);
}

inline Vocab make_target_vocab(std::size_t n_tokens) {
  std::vector<std::string> symbols;
  for (std::size_t k = 0; k < n_tokens; ++k) symbols.push_back("t" + std::to_string(k));
  return Vocab(symbols);
}

struct PhraseInventory {
  std::vector<std::vector<TokenId>> phrases;  // indexed by phrase id

  TokenId source_id(std::size_t phrase) const {
    return kFirstPhraseSourceId + static_cast<TokenId>(phrase);
  }
};

struct SyntheticExample {
  TokenSeq src;
  TokenSeq target;
  std::vector<TokenSeq> refs;
  std::vector<std::vector<TokenId>> phrases;  // in source order

  bool operator==(const SyntheticExample&) const = default;
};

using Corpus = std::vector<SyntheticExample>;

struct GenConfig {
  std::size_t n_examples = 2000;
  std::size_t eval_examples = 200;
  std::size_t n_phrases = 3;  // per example
  std::size_t mode_count = 2;
  std::size_t inventory_size = 64;  // phrase ids
  std::size_t target_tokens = 30;   // content tokens (target vocab = this + 2)
  std::size_t phrase_len = 2;
  std::uint64_t seed = 0;
};

struct GeneratedCorpus {
  PhraseInventory inventory;
  Corpus train;
  Corpus eval;
};

inline std::uint64_t factorial_capped(std::size_t n) {
  std::uint64_t f = 1;
  for (std::size_t k = 2; k <= n; ++k) {
    if (f > UINT64_MAX / k) return UINT64_MAX;
    f *= k;
  }
  return f;
}

namespace detail {

inline double combinations(std::size_t n, std::size_t k) {
  if (k > n) return 0.0;
  double c = 1.0;
  for (std::size_t i = 0; i < k; ++i) c = c * static_cast<double>(n - i) / static_cast<double>(i + 1);
  return c;
}

inline void validate(const GenConfig& cfg) {
  require(cfg.n_examples >= 1, "n_examples must be positive");
  require(cfg.n_phrases >= 1, "n_phrases must be positive");
  require(cfg.phrase_len >= 1 && cfg.phrase_len <= 4, "phrase length must be in [1, 4]");
  require(cfg.mode_count >= 1, "mode_count must be positive");
  const std::uint64_t perms = factorial_capped(cfg.n_phrases);
  require(cfg.mode_count <= perms, "mode_count exceeds " + std::to_string(cfg.n_phrases) +
                                       "! = " + std::to_string(perms));
  require(cfg.n_phrases <= cfg.inventory_size, "n_phrases exceeds inventory size");
  require(cfg.phrase_len <= cfg.target_tokens, "phrase length exceeds target token count");
  const double distinct_phrases =
      std::pow(static_cast<double>(cfg.target_tokens), static_cast<double>(cfg.phrase_len));
  require(static_cast<double>(cfg.inventory_size) <= distinct_phrases / 2.0,
          "inventory too large for the target token alphabet");
  require(static_cast<double>(cfg.n_examples + cfg.eval_examples) <=
              combinations(cfg.inventory_size, cfg.n_phrases) / 2.0,
          "not enough distinct phrase combinations for the requested corpus size");
}

inline PhraseInventory make_inventory(const GenConfig& cfg, Rng& rng) {
  PhraseInventory inv;
  std::set<std::vector<TokenId>> seen;
  std::uniform_int_distribution<TokenId> tok(kFirstTargetTokenId,
                                             kFirstTargetTokenId + static_cast<TokenId>(cfg.target_tokens) - 1);
  while (inv.phrases.size() < cfg.inventory_size) {
    std::vector<TokenId> p;
    while (p.size() < cfg.phrase_len) {
      const TokenId t = tok(rng);
      if (std::find(p.begin(), p.end(), t) == p.end()) p.push_back(t);
    }
    if (seen.insert(p).second) inv.phrases.push_back(std::move(p));
  }
  return inv;
}

inline SyntheticExample make_example(const PhraseInventory& inv, const std::vector<std::size_t>& combo,
                                     const GenConfig& cfg, Rng& rng) {
  SyntheticExample ex;
  std::vector<TokenId> src;
  for (std::size_t p : combo) {
    src.push_back(inv.source_id(p));
    ex.phrases.push_back(inv.phrases[p]);
  }
  src.push_back(kMarkerId);
  ex.src = TokenSeq(std::move(src));

  std::set<std::vector<std::size_t>> orders;
  std::vector<std::size_t> order(combo.size());
  while (orders.size() < cfg.mode_count) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    orders.insert(order);
  }
  for (const auto& o : orders) {
    std::vector<TokenId> ids;
    for (std::size_t slot : o) ids.insert(ids.end(), ex.phrases[slot].begin(), ex.phrases[slot].end());
    ex.refs.emplace_back(std::move(ids));
  }
  std::uniform_int_distribution<std::size_t> pick(0, ex.refs.size() - 1);
  ex.target = ex.refs[pick(rng)];
  return ex;
}

}  // namespace detail

// Uniformly samples one valid target of `ex`.
inline const TokenSeq& sample_target(const SyntheticExample& ex, Rng& rng) {
  detail::require(!ex.refs.empty(), "example has no references");
  std::uniform_int_distribution<std::size_t> pick(0, ex.refs.size() - 1);
  return ex.refs[pick(rng)];
}

// Train and eval splits use disjoint phrase combinations. Each example draws
// its orders from its own derived stream, so the result is a pure function of
// the config.
inline GeneratedCorpus gen_corpus(const GenConfig& cfg) {
  detail::validate(cfg);
  GeneratedCorpus out;
  Rng inv_rng = make_stream(cfg.seed, "datagen/inventory");
  out.inventory = detail::make_inventory(cfg, inv_rng);

  Rng combo_rng = make_stream(cfg.seed, "datagen/combos");
  std::set<std::vector<std::size_t>> used;
  std::vector<std::size_t> ids(cfg.inventory_size);
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  const std::size_t total = cfg.n_examples + cfg.eval_examples;
  for (std::size_t k = 0; k < total;) {
    std::vector<std::size_t> combo;
    std::sample(ids.begin(), ids.end(), std::back_inserter(combo), static_cast<std::ptrdiff_t>(cfg.n_phrases),
                combo_rng);
    if (!used.insert(combo).second) continue;
    Rng ex_rng = make_stream(cfg.seed, "datagen/example", k);
    auto ex = detail::make_example(out.inventory, combo, cfg, ex_rng);
    (k < cfg.n_examples ? out.train : out.eval).push_back(std::move(ex));
    ++k;
  }
  return out;
}

// True when `seq` splits into exactly the given phrases, each used once and
// internally in order.
inline bool is_phrase_concatenation(const TokenSeq& seq, const std::vector<std::vector<TokenId>>& phrases) {
  std::vector<bool> used(phrases.size(), false);
  const auto& ids = seq.ids();
  auto search = [&](auto&& self, std::size_t pos, std::size_t placed) -> bool {
    if (placed == phrases.size()) return pos == seq.length();
    for (std::size_t p = 0; p < phrases.size(); ++p) {
      if (used[p] || pos + phrases[p].size() > seq.length()) continue;
      if (!std::equal(phrases[p].begin(), phrases[p].end(), ids.begin() + static_cast<std::ptrdiff_t>(pos))) continue;
      used[p] = true;
      if (self(self, pos + phrases[p].size(), placed + 1)) return true;
      used[p] = false;
    }
    return false;
  };
  return search(search, 0, 0);
}

// ---------------------------------------------------------------------------
// JSONL: {"src": [...], "target": [...], "refs": [[...], ...], "phrases": [[...], ...]}

inline nlohmann::json to_json(const SyntheticExample& ex) {
  nlohmann::json j;
  j["src"] = ex.src.ids();
  j["target"] = ex.target.ids();
  j["refs"] = nlohmann::json::array();
  for (const auto& r : ex.refs) j["refs"].push_back(r.ids());
  j["phrases"] = ex.phrases;
  return j;
}

inline std::string to_jsonl(const Corpus& corpus) {
  std::string s;
  for (const auto& ex : corpus) {
    s += to_json(ex).dump();
    s += '\n';
  }
  return s;
}

namespace detail {

inline const nlohmann::json& field(const nlohmann::json& j, const char* name, std::size_t line) {
  auto it = j.find(name);
  if (it == j.end()) {
    throw ValidationError("line " + std::to_string(line) + ": missing field '" + name + "'");
  }
  return *it;
}

inline SyntheticExample example_from_json(const nlohmann::json& j, std::size_t line) {
  if (!j.is_object()) throw ValidationError("line " + std::to_string(line) + ": expected a JSON object");
  try {
    SyntheticExample ex;
    ex.src = TokenSeq(field(j, "src", line).get<std::vector<TokenId>>());
    ex.target = TokenSeq(field(j, "target", line).get<std::vector<TokenId>>());
    for (const auto& r : field(j, "refs", line)) ex.refs.emplace_back(r.get<std::vector<TokenId>>());
    ex.phrases = field(j, "phrases", line).get<std::vector<std::vector<TokenId>>>();
    require(!ex.refs.empty(), "empty 'refs'");
    require(ex.src.length() >= 1 && ex.target.length() >= 1, "empty sequence");
    return ex;
  } catch (const ValidationError& e) {
    const std::string what = e.what();
    if (what.rfind("line ", 0) == 0) throw;
    throw ValidationError("line " + std::to_string(line) + ": " + what);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("line " + std::to_string(line) + ": " + e.what());
  }
}

}  // namespace detail

inline Corpus parse_jsonl(std::istream& in) {
  Corpus corpus;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (!text.empty() && text.back() == '\r') text.pop_back();
    if (text.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw ValidationError("line " + std::to_string(line) + ": malformed JSON: " + e.what());
    }
    corpus.push_back(detail::example_from_json(j, line));
  }
  return corpus;
}

inline Corpus read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open corpus file " + path.string());
  return parse_jsonl(in);
}

// Atomic: writes a sibling temp file, then renames it into place.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw RuntimeFailure("cannot write " + tmp.string());
    out << contents;
    out.flush();
    if (!out) throw RuntimeFailure("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline void write_jsonl(const Corpus& corpus, const std::filesystem::path& path) {
  write_file_atomic(path, to_jsonl(corpus));
}

}  // namespace ngram_oaxe
