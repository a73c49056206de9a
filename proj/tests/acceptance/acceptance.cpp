// Copyright 2026 The voxt Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Acceptance suite. Prints one PASS/FAIL line per criterion.
//
//   voxt_acceptance [--only N]... [--work DIR] [--prepare]
//
// Criteria 6-8 share one recipe run under WORK/run_a. --prepare (re)creates
// it; --only 6/7/8 reuse it when present.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "voxt/corpus.hpp"
#include "voxt/error.hpp"
#include "voxt/eval.hpp"
#include "voxt/formatter.hpp"
#include "voxt/inference.hpp"
#include "voxt/model.hpp"
#include "voxt/quantizer.hpp"
#include "voxt/trainer.hpp"
#include "voxt/vocab.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace voxt;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int prec = 4) {
  std::ostringstream o;
  o.precision(prec);
  o << v;
  return o.str();
}

fs::path g_work = "acceptance_work";

// ---------------------------------------------------------------------------
// 1. gradient check

Outcome gradient_check() {
  ModelConfig c;
  c.vocab_size = 11;
  c.n_layers = 1;
  c.width = 8;
  c.n_heads = 2;
  c.max_seq_len = 5;
  ModelParams<double> p(c);
  Rng rng(2024);
  for (auto& v : p.values) v = 0.5 * rng.normal();
  TokenSeq toks(5);
  for (auto& t : toks) t = static_cast<TokenId>(rng.below(11));
  const std::vector<std::uint8_t> mask{0, 1, 1, 1, 1};

  AlignedVector<double> grads;
  loss_and_grads<double>(p, toks, mask, &grads);
  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t i = 0; i < p.values.size(); ++i) {
    const double orig = p.values[i];
    p.values[i] = orig + h;
    const double up = loss_and_grads<double>(p, toks, mask, nullptr).loss;
    p.values[i] = orig - h;
    const double dn = loss_and_grads<double>(p, toks, mask, nullptr).loss;
    p.values[i] = orig;
    const double num = (up - dn) / (2 * h);
    const double rel = std::abs(num - grads[i]) / std::max({std::abs(num), std::abs(grads[i]), 1e-6});
    worst = std::max(worst, rel);
  }
  return {worst < 1e-4, "max_rel_err=" + fmt(worst) + " params=" + std::to_string(p.values.size())};
}

// ---------------------------------------------------------------------------
// 2. beam search vs exhaustive enumeration

double continuation_logprob(const Params& p, const TokenSeq& prompt, const TokenSeq& gen) {
  TokenSeq all = prompt;
  all.insert(all.end(), gen.begin(), gen.end());
  const auto lp = token_logprobs(p, all);
  double s = 0.0;
  for (std::size_t i = prompt.size() - 1; i < lp.size(); ++i) s += lp[i];
  return s;
}

Outcome beam_oracle() {
  constexpr TokenId kEos = static_cast<TokenId>(Special::kEos);
  const double alphas[] = {0.0, 0.6, 1.0};
  int matched = 0;
  Rng rng(77);
  for (int m = 0; m < 100; ++m) {
    ModelConfig c;
    c.vocab_size = 5;
    c.n_layers = 1 + static_cast<std::uint32_t>(rng.below(2));
    c.width = 8;
    c.n_heads = 2;
    c.max_seq_len = 8;
    Params p(c);
    for (auto& v : p.values) v = static_cast<float>(rng.normal() * 0.8);
    const std::uint32_t max_new = 1 + static_cast<std::uint32_t>(rng.below(3));
    const double alpha = alphas[rng.below(3)];
    TokenSeq prompt(1 + rng.below(3));
    for (auto& t : prompt) t = static_cast<TokenId>(rng.below(5));

    // Every continuation that ends at <eos> or at the budget.
    TokenSeq best;
    double best_score = -INFINITY;
    std::vector<TokenSeq> frontier{{}};
    for (std::uint32_t step = 0; step < max_new; ++step) {
      std::vector<TokenSeq> next;
      for (const auto& f : frontier) {
        for (TokenId v = 0; v < 5; ++v) {
          TokenSeq s = f;
          s.push_back(v);
          if (v == kEos || step + 1 == max_new) {
            const double sc = continuation_logprob(p, prompt, s) / std::pow(static_cast<double>(s.size()), alpha);
            if (sc > best_score) {
              best_score = sc;
              best = s;
            }
          } else {
            next.push_back(std::move(s));
          }
        }
      }
      frontier = std::move(next);
    }

    DecodeConfig d;
    d.beam_size = 125;
    d.max_new_tokens = max_new;
    d.length_penalty = alpha;
    const auto hyps = beam_search(p, prompt, d);
    if (!hyps.empty() && hyps[0].ids == best && std::abs(hyps[0].score - best_score) < 1e-4) ++matched;
  }
  return {matched == 100, std::to_string(matched) + "/100 models match"};
}

// ---------------------------------------------------------------------------
// 3. k-means vs brute-force partitions

double best_two_partition(const FeatureMatrix& f) {
  const std::size_t n = f.n_frames;
  double best = INFINITY;
  for (std::uint32_t bits = 1; bits + 1 < (1u << n); ++bits) {
    double total = 0.0;
    for (int side = 0; side < 2; ++side) {
      std::vector<double> mean(f.dim, 0.0);
      std::size_t count = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (((bits >> i) & 1u) != static_cast<unsigned>(side)) continue;
        ++count;
        for (std::uint32_t d = 0; d < f.dim; ++d) mean[d] += f.row(i)[d];
      }
      for (auto& x : mean) x /= static_cast<double>(count);
      for (std::size_t i = 0; i < n; ++i) {
        if (((bits >> i) & 1u) != static_cast<unsigned>(side)) continue;
        for (std::uint32_t d = 0; d < f.dim; ++d) total += (f.row(i)[d] - mean[d]) * (f.row(i)[d] - mean[d]);
      }
    }
    best = std::min(best, total);
  }
  return best;
}

Outcome kmeans_oracle() {
  Rng rng(5150);
  int optimal = 0, monotone = 0;
  double worst_ratio = 0.0;
  for (int inst = 0; inst < 20; ++inst) {
    const auto n = static_cast<std::uint32_t>(4 + rng.below(5));
    const std::uint32_t dim = 2;

    // Separated: two tight blobs far apart.
    FeatureMatrix sep(n, dim);
    const std::uint32_t split = 1 + static_cast<std::uint32_t>(rng.below(n - 1));
    for (std::uint32_t i = 0; i < n; ++i) {
      const double cx = i < split ? 0.0 : 20.0;
      for (std::uint32_t d = 0; d < dim; ++d) sep.row(i)[d] = static_cast<float>(cx + rng.normal());
    }
    const auto cb = train_codebook(sep, {2, 100, inst + 1u});
    const double got = distortion(sep, cb);
    const double opt = best_two_partition(sep);
    worst_ratio = std::max(worst_ratio, got / opt);
    // Centroids are float; allow float rounding of the optimum.
    if (got <= opt * (1.0 + 1e-6)) ++optimal;

    // Unstructured data: distortion must never increase between iterations.
    FeatureMatrix any(n, dim);
    for (auto& v : any.data) v = static_cast<float>(rng.uniform() * 10.0);
    KMeansReport report;
    train_codebook(any, {2, 100, inst + 7u}, &report);
    bool mono = true;
    for (std::size_t i = 1; i < report.distortion.size(); ++i) {
      if (report.distortion[i] > report.distortion[i - 1] * (1.0 + 1e-9)) mono = false;
    }
    if (mono) ++monotone;
  }
  return {optimal == 20 && monotone == 20, "optimal " + std::to_string(optimal) + "/20, monotone " +
                                               std::to_string(monotone) + "/20, worst ratio " + fmt(worst_ratio, 8)};
}

// ---------------------------------------------------------------------------
// 4. round trips

VoxtVocab random_vocab(Rng& rng) {
  static const std::vector<std::string> pool{"a", "b", "c", "d", "e", "f", " ", "\xC3\xA9", "\xE3\x81\x82", "x", "y", "z"};
  std::vector<std::string> syms;
  for (const auto& s : pool) {
    if (rng.bernoulli(0.6)) syms.push_back(s);
  }
  if (syms.empty()) syms.push_back("a");
  auto base = VoxtVocab::build(syms, 1 + static_cast<std::uint32_t>(rng.below(8)));
  std::vector<TokenSeq> corpus;
  for (int i = 0; i < 20; ++i) {
    TokenSeq s;
    const std::size_t n = rng.below(12);
    for (std::size_t j = 0; j < n; ++j) {
      s.push_back(rng.bernoulli(0.5) ? base.text_begin() + static_cast<TokenId>(rng.below(base.num_text_units()))
                                     : base.speech_begin() + static_cast<TokenId>(rng.below(base.num_speech_units())));
    }
    corpus.push_back(s);
  }
  return train_bpe(base, corpus, base.size() + rng.below(30));
}

std::vector<Segment> random_segments(Rng& rng, const VoxtVocab& v) {
  std::vector<Segment> segs;
  int last = -1;
  const std::size_t n = rng.below(6);
  for (std::size_t i = 0; i < n; ++i) {
    int kind = static_cast<int>(rng.below(3));
    if (kind == last) kind = (kind + 1) % 3;
    last = kind;
    const std::size_t len = 1 + rng.below(8);
    if (kind == 0) {
      SpecialRun run;
      for (std::size_t j = 0; j < len; ++j) run.push_back(static_cast<Special>(rng.below(kNumSpecials - 1)));
      segs.emplace_back(run);
    } else if (kind == 1) {
      TextSymbols t;
      for (std::size_t j = 0; j < len; ++j) t.push_back(v.text_units()[rng.below(v.num_text_units())]);
      segs.emplace_back(t);
    } else {
      SpeechUnits u;
      for (std::size_t j = 0; j < len; ++j) u.push_back(static_cast<std::uint32_t>(rng.below(v.num_speech_units())));
      segs.emplace_back(u);
    }
  }
  return segs;
}

Outcome round_trips() {
  Rng rng(4242);
  int fmx = 0, vocab = 0, fmt_ok = 0, ckpt = 0;
  const fs::path dir = g_work / "roundtrip";
  fs::create_directories(dir);

  for (int i = 0; i < 1000; ++i) {
    FeatureMatrix m(static_cast<std::uint32_t>(rng.below(40)), 1 + static_cast<std::uint32_t>(rng.below(40)));
    for (auto& x : m.data) x = static_cast<float>(rng.normal() * std::pow(10.0, rng.normal() * 3));
    bool ok;
    if (i % 10 == 0) {
      save_feature_file(dir / "f.fmx", m);
      ok = load_feature_file(dir / "f.fmx") == m;
    } else {
      ok = decode_feature_file(encode_feature_file(m)) == m;
    }
    fmx += ok;
  }

  for (int i = 0; i < 1000; ++i) {
    const auto v = random_vocab(rng);
    const auto segs = random_segments(rng, v);
    const auto ids = v.encode(segs);
    const auto back = v.decode(ids);
    const bool json_ok = i % 50 != 0 || VoxtVocab::from_json(v.to_json()) == v;
    vocab += back == segs && json_ok;
  }

  for (int i = 0; i < 1000; ++i) {
    const auto v = random_vocab(rng);
    TaskRecord r;
    r.task = kAllTasks[rng.below(kNumTasks)];
    auto text = [&] {
      TextSymbols t;
      for (std::size_t j = 0, n = rng.below(10); j < n; ++j) t.push_back(v.text_units()[rng.below(v.num_text_units())]);
      return v.encode(std::vector<Segment>{t});
    };
    auto speech = [&] {
      SpeechUnits u;
      for (std::size_t j = 0, n = rng.below(10); j < n; ++j) u.push_back(static_cast<std::uint32_t>(rng.below(v.num_speech_units())));
      return v.encode_speech(u);
    };
    if (r.task != Task::kSpeechLM) r.text = text();
    if (r.task != Task::kTextLM) r.speech = speech();
    const auto parsed = parse_generated(format_train(r, v), v);
    fmt_ok += parsed.to_record() == r;
  }

  for (int i = 0; i < 1000; ++i) {
    ModelConfig c;
    c.vocab_size = 5 + static_cast<std::uint32_t>(rng.below(30));
    c.n_layers = 1 + static_cast<std::uint32_t>(rng.below(2));
    c.n_heads = 1 + static_cast<std::uint32_t>(rng.below(3));
    c.width = c.n_heads * (1 + static_cast<std::uint32_t>(rng.below(4)));
    c.max_seq_len = 1 + static_cast<std::uint32_t>(rng.below(16));
    c.ff_mult = 1 + static_cast<std::uint32_t>(rng.below(4));
    c.dropout = rng.uniform() * 0.5;
    Params p(c);
    for (auto& x : p.values) x = static_cast<float>(rng.normal() * std::pow(10.0, rng.normal() * 3));
    const std::string meta = json{{"case", i}, {"note", std::string(rng.below(5), 'q')}}.dump();
    Checkpoint back;
    if (i % 10 == 0) {
      save_checkpoint(dir / "c.ckpt", p, meta);
      back = load_checkpoint(dir / "c.ckpt");
    } else {
      back = decode_checkpoint(encode_checkpoint(p, meta));
    }
    const bool bits = back.params.values.size() == p.values.size() &&
                      std::memcmp(back.params.values.data(), p.values.data(), p.values.size() * sizeof(float)) == 0;
    ckpt += bits && back.params.config == c && back.metadata_json == meta;
  }
  fs::remove_all(dir);
  const bool pass = fmx == 1000 && vocab == 1000 && fmt_ok == 1000 && ckpt == 1000;
  return {pass, "feature " + std::to_string(fmx) + ", vocab " + std::to_string(vocab) + ", format " +
                    std::to_string(fmt_ok) + ", checkpoint " + std::to_string(ckpt) + " of 1000"};
}

// ---------------------------------------------------------------------------
// 5. metric oracles

Outcome metric_oracles() {
  // All strings of length <= 8 over {a, b, c}, in an order where every
  // string's parent (itself minus the last symbol) comes first.
  std::vector<UnitList> strings{{}};
  std::vector<std::size_t> parent{0};
  std::vector<int> last{-1};
  const std::vector<std::string> alphabet{"a", "b", "c"};
  for (std::size_t i = 0; i < strings.size(); ++i) {
    if (strings[i].size() == 8) continue;
    for (int s = 0; s < 3; ++s) {
      auto next = strings[i];
      next.push_back(alphabet[static_cast<std::size_t>(s)]);
      strings.push_back(std::move(next));
      parent.push_back(i);
      last.push_back(s);
    }
  }
  const std::size_t n = strings.size();

  // Full Levenshtein table per reference, grown one hypothesis symbol at a
  // time from the parent's column.
  std::size_t mismatches = 0, pairs = 0;
  std::vector<std::array<std::uint8_t, 9>> col(n);
  for (std::size_t r = 1; r < n; ++r) {
    const auto& ref = strings[r];
    const std::size_t m = ref.size();
    for (std::size_t i = 0; i <= m; ++i) col[0][i] = static_cast<std::uint8_t>(i);
    for (std::size_t h = 1; h < n; ++h) {
      const auto& prev = col[parent[h]];
      auto& cur = col[h];
      const std::string& sym = alphabet[static_cast<std::size_t>(last[h])];
      cur[0] = static_cast<std::uint8_t>(strings[h].size());
      for (std::size_t i = 1; i <= m; ++i) {
        const int sub = prev[i - 1] + (ref[i - 1] == sym ? 0 : 1);
        cur[i] = static_cast<std::uint8_t>(std::min({sub, prev[i] + 1, cur[i - 1] + 1}));
      }
    }
    for (std::size_t h = 0; h < n; ++h) {
      const auto er = error_rate(std::span(&strings[r], 1), std::span(&strings[h], 1));
      ++pairs;
      if (er.errors != col[h][m] || er.rate != static_cast<double>(col[h][m]) / static_cast<double>(m)) ++mismatches;
    }
  }

  // Uniform model: logits fixed at zero.
  int ppl_exact = 0, ppl_cases = 0;
  Rng rng(99);
  for (std::uint32_t V : {2u, 3u, 7u, 11u, 50u, 256u, 1000u}) {
    ModelConfig c;
    c.vocab_size = V;
    c.n_layers = 1;
    c.width = 8;
    c.n_heads = 2;
    c.max_seq_len = 64;
    auto p = init_params<float>(c, V);
    p.tensor("head.weight").setZero();
    std::vector<TokenSeq> data;
    for (int s = 0; s < 5; ++s) {
      TokenSeq t(2 + rng.below(60));
      for (auto& x : t) x = static_cast<TokenId>(rng.below(V));
      data.push_back(t);
    }
    const TransformerScorer scorer(p);
    ++ppl_cases;
    ppl_exact += perplexity(scorer, data, MaskPolicy::kAll).ppl == static_cast<double>(V);
  }

  // Swap symmetry on random models and random pairs, some identical.
  int sym_ok = 0;
  for (int m = 0; m < 20; ++m) {
    ModelConfig c;
    c.vocab_size = 9;
    c.n_layers = 1;
    c.width = 8;
    c.n_heads = 2;
    c.max_seq_len = 16;
    Params p(c);
    for (auto& x : p.values) x = static_cast<float>(rng.normal() * 0.7);
    const TransformerScorer scorer(p);
    std::vector<std::pair<TokenSeq, TokenSeq>> ps, swapped;
    for (int i = 0; i < 30; ++i) {
      TokenSeq a(2 + rng.below(8)), b(2 + rng.below(8));
      for (auto& x : a) x = static_cast<TokenId>(rng.below(9));
      for (auto& x : b) x = static_cast<TokenId>(rng.below(9));
      if (i % 7 == 0) b = a;
      ps.emplace_back(a, b);
      swapped.emplace_back(b, a);
    }
    const auto fwd = paired_judgment(scorer, ps);
    const auto rev = paired_judgment(scorer, swapped);
    const bool counts = rev.ties == fwd.ties && rev.wins == fwd.n - fwd.wins - fwd.ties;
    sym_ok += counts && std::abs(rev.accuracy - (1.0 - fwd.accuracy)) < 1e-12;
  }

  const bool pass = mismatches == 0 && ppl_exact == ppl_cases && sym_ok == 20;
  return {pass, "error_rate mismatches " + std::to_string(mismatches) + "/" + std::to_string(pairs) +
                    ", uniform ppl exact " + std::to_string(ppl_exact) + "/" + std::to_string(ppl_cases) +
                    ", swap symmetry " + std::to_string(sym_ok) + "/20"};
}

// ---------------------------------------------------------------------------
// Recipe runs (criteria 6-8)

fs::path run_dir(const std::string& name) { return g_work / name; }

bool run_recipe(const fs::path& dir, double* secs) {
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string cmd = std::string("VOXT='") + VOXT_CLI_PATH + "' bash '" + VOXT_RECIPE_PATH + "' '" +
                          dir.string() + "' > '" + (dir / "recipe.log").string() + "' 2>&1";
  const auto t0 = Clock::now();
  const int rc = std::system(cmd.c_str());
  const double s = seconds_since(t0);
  if (secs) *secs = s;
  if (rc != 0) return false;
  std::ofstream(dir / "DONE") << s << "\n";
  return true;
}

bool ensure_run_a(bool fresh) {
  const auto dir = run_dir("run_a");
  if (!fresh && fs::exists(dir / "DONE")) return true;
  return run_recipe(dir, nullptr);
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error("missing " + p.string());
  return json::parse(in);
}

Outcome toy_multitask() {
  const auto dir = run_dir("run_a");
  if (!fs::exists(dir / "DONE")) return {false, "recipe run failed, see " + (dir / "recipe.log").string()};
  double recipe_secs = 0.0;
  std::ifstream(dir / "DONE") >> recipe_secs;
  const double asr = read_json(dir / "eval/wer_asr.json")["value"];
  const double tts = read_json(dir / "eval/wer_tts.json")["value"];
  const auto sp = read_json(dir / "eval/ppl_speechlm.json");
  const auto tx = read_json(dir / "eval/ppl_textlm.json");
  const double sp_red = sp["reduction_vs_unigram"], tx_red = tx["reduction_vs_unigram"];
  const bool pass = asr < 0.05 && tts < 0.05 && sp_red >= 0.2 && tx_red >= 0.2 && recipe_secs < 45 * 60;
  return {pass, "asr_wer=" + fmt(asr) + " tts_wer=" + fmt(tts) + " speech_ppl=" + fmt(sp["value"].get<double>()) +
                    " (unigram " + fmt(sp["unigram_ppl"].get<double>()) + ", -" + fmt(100 * sp_red, 3) +
                    "%) text_ppl=" + fmt(tx["value"].get<double>()) + " (unigram " +
                    fmt(tx["unigram_ppl"].get<double>()) + ", -" + fmt(100 * tx_red, 3) + "%) recipe " +
                    fmt(recipe_secs, 4) + "s"};
}

Outcome pretrained_init() {
  const auto dir = run_dir("run_a");
  if (!fs::exists(dir / "DONE")) return {false, "recipe run failed"};
  const auto vocab = VoxtVocab::load(dir / "work/vocab.json");
  const auto train_set = MixedDataset::from_examples(load_dataset(dir / "work/train.vxds"));
  const auto held_all = MixedDataset::from_examples(load_dataset(dir / "work/heldout.vxds"));
  const auto cfg_json = read_json(dir / "work/config.json");
  auto mc = ModelConfig::from_json(
      [&] { auto m = cfg_json["model"]; m["vocab_size"] = vocab.size(); return m.dump(); }());
  auto mix_cfg = TrainConfig::from_json(cfg_json["train"].dump());
  mix_cfg.seed = 1;
  const auto mix_json = read_json(dir / "work/mix.json");
  for (const auto& [name, w] : mix_json["task_weights"].items()) {
    mix_cfg.task_weights[task_index(*parse_task(name))] = w.get<double>();
  }

  // Threshold: the text PPL that criterion 6(d) asks for.
  const UnigramScorer unigram(vocab.size(), train_set.by_task[task_index(Task::kTextLM)], MaskPolicy::kTarget);
  const auto& held_text = held_all.by_task[task_index(Task::kTextLM)];
  const double target = 0.8 * perplexity(unigram, held_text, MaskPolicy::kTarget).ppl;
  MixedDataset held;
  held.by_task[task_index(Task::kTextLM)] = held_text;

  // Text-only pretraining on the text LM split, stopped before held-out text PPL starts to rise.
  auto pre_cfg = mix_cfg;
  pre_cfg.task_weights = {1, 0, 0, 0};
  pre_cfg.total_steps = 500;
  pre_cfg.eval_every = 0;
  const auto pre = train(init_params<float>(mc, Rng::mix(2, 1)), train_set, pre_cfg);

  // Curves are logged to at least `horizon` steps so the comparison covers more than the target.
  const std::uint32_t every = 10, horizon = 600;
  auto steps_to_target = [&](const Params& start, std::vector<std::pair<std::uint32_t, double>>& curve) {
    auto c = mix_cfg;
    c.eval_every = every;
    c.total_steps = 4000;
    TrainOptions opt;
    opt.held_out = &held;
    std::uint32_t hit = 0;
    opt.stop_when = [&](const EvalRecord& e) {
      const double ppl = *e.ppl[task_index(Task::kTextLM)];
      curve.emplace_back(e.step, ppl);
      if (hit == 0 && ppl <= target) hit = e.step;
      return hit != 0 && e.step >= horizon;
    };
    train(start, train_set, c, opt);
    return hit;
  };

  const auto fresh = init_params<float>(mc, Rng::mix(mix_cfg.seed, 1));
  std::vector<std::pair<std::uint32_t, double>> scratch_curve, init_curve;
  const std::uint32_t scratch = steps_to_target(fresh, scratch_curve);
  const std::uint32_t warm = steps_to_target(load_pretrained_text_init(fresh, pre.params), init_curve);

  json log;
  log["target_text_ppl"] = target;
  log["eval_every"] = every;
  log["pretrain_steps"] = pre_cfg.total_steps;
  log["scratch_steps"] = scratch;
  log["init_steps"] = warm;
  log["ratio"] = scratch && warm ? static_cast<double>(warm) / scratch : -1.0;
  auto first_below = [](const std::vector<std::pair<std::uint32_t, double>>& curve, double level) {
    for (const auto& [step, ppl] : curve) {
      if (ppl <= level) return step;
    }
    return std::uint32_t{0};
  };
  for (double level : {10.0, 5.0, 4.0}) {
    log["other_levels"].push_back({{"text_ppl", level},
                                   {"scratch_steps", first_below(scratch_curve, level)},
                                   {"init_steps", first_below(init_curve, level)}});
  }
  log["scratch_curve"] = scratch_curve;
  log["init_curve"] = init_curve;
  std::ofstream(g_work / "criterion7.json") << log.dump(1) << "\n";

  const bool pass = scratch != 0 && warm != 0 && warm <= 0.8 * scratch;
  return {pass, "target text ppl " + fmt(target) + ": scratch " + std::to_string(scratch) + " steps, pretrained init " +
                    std::to_string(warm) + " steps (ratio " + fmt(log["ratio"].get<double>(), 3) + "); log " +
                    (g_work / "criterion7.json").string()};
}

std::vector<fs::path> artifact_files(const fs::path& root) {
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), root);
    if (rel == "DONE" || rel == "recipe.log") continue;
    out.push_back(rel);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Outcome determinism() {
  const auto a = run_dir("run_a");
  if (!fs::exists(a / "DONE")) return {false, "first recipe run failed"};
  const auto b = run_dir("run_b");
  if (!run_recipe(b, nullptr)) return {false, "second recipe run failed, see " + (b / "recipe.log").string()};
  const auto fa = artifact_files(a), fb = artifact_files(b);
  if (fa != fb) return {false, "runs produced different file sets"};
  std::vector<std::string> differ;
  for (const auto& rel : fa) {
    if (slurp(a / rel) != slurp(b / rel)) differ.push_back(rel.string());
  }
  const bool key = std::find(fa.begin(), fa.end(), fs::path("model/model.ckpt")) != fa.end() &&
                   std::find(fa.begin(), fa.end(), fs::path("model/metrics.jsonl")) != fa.end();
  std::string detail = std::to_string(fa.size() - differ.size()) + "/" + std::to_string(fa.size()) +
                       " artifacts byte-identical (checkpoint, metrics, eval reports included)";
  for (const auto& d : differ) detail += "; differs: " + d;
  return {differ.empty() && key, detail};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  bool prepare = false;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--only" && i + 1 < argc) {
      only.insert(std::atoi(argv[++i]));
    } else if (a == "--work" && i + 1 < argc) {
      g_work = argv[++i];
    } else if (a == "--prepare") {
      prepare = true;
    } else {
      std::cerr << "usage: voxt_acceptance [--only N]... [--work DIR] [--prepare]\n";
      return 64;
    }
  }
  fs::create_directories(g_work);

  if (prepare) {
    double secs = 0.0;
    const bool ok = run_recipe(run_dir("run_a"), &secs);
    std::cout << "recipe run_a: " << (ok ? "ok" : "FAILED") << " in " << fmt(secs, 4) << "s\n";
    if (only.empty()) return ok ? 0 : 1;
  }

  struct Criterion {
    int id;
    const char* name;
    double limit_s;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "gradient check", 10, gradient_check},
      {2, "beam search vs exhaustive", 30, beam_oracle},
      {3, "k-means vs brute force", 10, kmeans_oracle},
      {4, "round trips", 60, round_trips},
      {5, "metric oracles", 60, metric_oracles},
      // The 45 min budget applies to the recipe run and is checked inside.
      {6, "toy multitask", 0, toy_multitask},
      {7, "pretrained init", 0, pretrained_init},
      {8, "determinism", 0, determinism},
  };

  bool all = true;
  bool run_a_ready = false;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.contains(c.id)) continue;
    if (c.id >= 6 && !run_a_ready) {
      ensure_run_a(only.empty() && !prepare);
      run_a_ready = true;
    }
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = seconds_since(t0);
    if (c.limit_s > 0 && secs >= c.limit_s) {
      o.pass = false;
      o.detail += " (over the " + fmt(c.limit_s, 3) + "s limit)";
    }
    std::cout << "criterion " << c.id << " [" << c.name << "]: " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail
              << "  (" << fmt(secs, 4) << "s)" << std::endl;
    all = all && o.pass;
  }
  return all ? 0 : 1;
}
