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

#include "voxt/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

#include "voxt/error.hpp"
#include "voxt/formatter.hpp"
#include "voxt/random.hpp"

namespace voxt {

namespace {

constexpr TokenId kEos = static_cast<TokenId>(Special::kEos);
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void log_softmax(std::span<const float> logits, std::vector<double>& out) {
  out.resize(logits.size());
  double mx = kNegInf;
  for (float v : logits) mx = std::max(mx, static_cast<double>(v));
  double sum = 0.0;
  for (float v : logits) sum += std::exp(static_cast<double>(v) - mx);
  const double lse = mx + std::log(sum);
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = static_cast<double>(logits[i]) - lse;
}

bool allowed(const DecodeConfig& cfg, std::size_t id) { return cfg.allowed.empty() || cfg.allowed[id] != 0; }

double length_score(double logprob, std::size_t len, double alpha) {
  if (alpha == 0.0) return logprob;
  return logprob / std::pow(static_cast<double>(len), alpha);
}

// Prepares a decoder primed with the prompt; returns the effective budget.
std::uint32_t prime(const Params& params, std::span<const TokenId> prompt, const DecodeConfig& cfg,
                    IncrementalDecoder<float>& dec) {
  cfg.validate();
  const auto& c = params.config;
  if (prompt.empty()) throw ValidationError("decoding needs a nonempty prompt");
  if (prompt.size() >= c.max_seq_len) {
    throw ValidationError("prompt of " + std::to_string(prompt.size()) + " tokens leaves no room under max_seq_len " +
                          std::to_string(c.max_seq_len));
  }
  if (!cfg.allowed.empty()) {
    if (cfg.allowed.size() != c.vocab_size) throw ValidationError("allowed mask size does not match the vocabulary");
    if (std::none_of(cfg.allowed.begin(), cfg.allowed.end(), [](std::uint8_t a) { return a != 0; })) {
      throw ValidationError("allowed token set is empty");
    }
  }
  for (TokenId id : prompt) dec.push(id);
  return std::min<std::uint32_t>(cfg.max_new_tokens, c.max_seq_len - static_cast<std::uint32_t>(prompt.size()));
}

struct Live {
  Hypothesis hyp;
  IncrementalDecoder<float> dec;
};

struct Candidate {
  double logprob;
  TokenId token;
  std::size_t parent;
};

}  // namespace

std::string_view to_string(DecodeMode mode) {
  switch (mode) {
    case DecodeMode::kBeam: return "beam";
    case DecodeMode::kGreedy: return "greedy";
    case DecodeMode::kSample: return "sample";
  }
  return "beam";
}

DecodeMode parse_decode_mode(std::string_view name) {
  if (name == "beam") return DecodeMode::kBeam;
  if (name == "greedy") return DecodeMode::kGreedy;
  if (name == "sample") return DecodeMode::kSample;
  throw ConfigError("unknown decode mode '" + std::string(name) + "'");
}

void DecodeConfig::validate() const {
  if (beam_size == 0) throw ConfigError("beam_size must be >= 1");
  if (max_new_tokens == 0) throw ConfigError("max_new_tokens must be >= 1");
  if (!(length_penalty >= 0.0 && length_penalty <= 1.0)) throw ConfigError("length_penalty must lie in [0, 1]");
  if (!(temperature >= 0.0)) throw ConfigError("temperature must be >= 0");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw ConfigError("top_p must lie in (0, 1]");
}

std::vector<Hypothesis> beam_search(const Params& params, std::span<const TokenId> prompt, const DecodeConfig& cfg) {
  IncrementalDecoder<float> root(params);
  const std::uint32_t budget = prime(params, prompt, cfg, root);
  const double alpha = cfg.length_penalty;

  std::vector<Live> live;
  live.push_back({Hypothesis{}, std::move(root)});
  std::vector<Hypothesis> finished;
  std::vector<double> lp;
  std::vector<Candidate> cands;

  auto by_score = [](const Hypothesis& a, const Hypothesis& b) { return a.score > b.score; };

  for (std::uint32_t step = 0; step < budget && !live.empty(); ++step) {
    cands.clear();
    for (std::size_t h = 0; h < live.size(); ++h) {
      log_softmax(live[h].dec.logits(), lp);
      for (std::size_t t = 0; t < lp.size(); ++t) {
        if (allowed(cfg, t)) cands.push_back({live[h].hyp.logprob + lp[t], static_cast<TokenId>(t), h});
      }
    }
    const std::size_t keep = std::min<std::size_t>(cfg.beam_size, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(),
                      [](const Candidate& a, const Candidate& b) {
                        if (a.logprob != b.logprob) return a.logprob > b.logprob;
                        if (a.token != b.token) return a.token < b.token;
                        return a.parent < b.parent;
                      });
    const bool last = step + 1 == budget;
    std::vector<Live> next;
    for (std::size_t i = 0; i < keep; ++i) {
      const Candidate& c = cands[i];
      Hypothesis hyp = live[c.parent].hyp;
      hyp.ids.push_back(c.token);
      hyp.logprob = c.logprob;
      hyp.score = length_score(hyp.logprob, hyp.ids.size(), alpha);
      if (c.token == kEos) {
        hyp.finished = true;
        finished.push_back(std::move(hyp));
      } else if (last) {
        finished.push_back(std::move(hyp));  // unterminated, flagged by finished == false
      } else {
        IncrementalDecoder<float> dec = live[c.parent].dec;
        dec.push(c.token);
        next.push_back({std::move(hyp), std::move(dec)});
      }
    }
    live = std::move(next);

    // Stop once no live hypothesis can still enter the top beam_size.
    if (finished.size() >= cfg.beam_size && !live.empty()) {
      std::vector<double> scores;
      for (const auto& f : finished) scores.push_back(f.score);
      std::nth_element(scores.begin(), scores.begin() + (cfg.beam_size - 1), scores.end(), std::greater<>());
      const double threshold = scores[cfg.beam_size - 1];
      double best_bound = kNegInf;
      for (const auto& l : live) {
        best_bound = std::max(best_bound, length_score(l.hyp.logprob, budget, alpha));
      }
      if (best_bound < threshold) live.clear();
    }
  }
  std::stable_sort(finished.begin(), finished.end(), by_score);
  if (finished.size() > cfg.beam_size) finished.resize(cfg.beam_size);
  return finished;
}

Hypothesis greedy_decode(const Params& params, std::span<const TokenId> prompt, const DecodeConfig& cfg) {
  IncrementalDecoder<float> dec(params);
  const std::uint32_t budget = prime(params, prompt, cfg, dec);
  Hypothesis hyp;
  std::vector<double> lp;
  for (std::uint32_t step = 0; step < budget; ++step) {
    log_softmax(dec.logits(), lp);
    std::size_t best = lp.size();
    for (std::size_t t = 0; t < lp.size(); ++t) {
      if (allowed(cfg, t) && (best == lp.size() || lp[t] > lp[best])) best = t;
    }
    hyp.ids.push_back(static_cast<TokenId>(best));
    hyp.logprob += lp[best];
    if (static_cast<TokenId>(best) == kEos) {
      hyp.finished = true;
      break;
    }
    if (step + 1 < budget) dec.push(static_cast<TokenId>(best));
  }
  hyp.score = length_score(hyp.logprob, hyp.ids.size(), cfg.length_penalty);
  return hyp;
}

Hypothesis sample_decode(const Params& params, std::span<const TokenId> prompt, const DecodeConfig& cfg) {
  if (cfg.temperature == 0.0) return greedy_decode(params, prompt, cfg);
  IncrementalDecoder<float> dec(params);
  const std::uint32_t budget = prime(params, prompt, cfg, dec);
  Rng rng(cfg.seed);
  Hypothesis hyp;
  std::vector<double> lp;
  std::vector<std::pair<double, std::size_t>> probs;
  for (std::uint32_t step = 0; step < budget; ++step) {
    log_softmax(dec.logits(), lp);
    probs.clear();
    double mx = kNegInf;
    for (std::size_t t = 0; t < lp.size(); ++t) {
      if (allowed(cfg, t)) mx = std::max(mx, lp[t] / cfg.temperature);
    }
    double total = 0.0;
    for (std::size_t t = 0; t < lp.size(); ++t) {
      if (!allowed(cfg, t)) continue;
      const double p = std::exp(lp[t] / cfg.temperature - mx);
      probs.emplace_back(p, t);
      total += p;
    }
    std::stable_sort(probs.begin(), probs.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    double cum = 0.0;
    std::size_t cut = 0;
    while (cut < probs.size()) {
      cum += probs[cut].first / total;
      ++cut;
      if (cum >= cfg.top_p) break;
    }
    double kept = 0.0;
    for (std::size_t i = 0; i < cut; ++i) kept += probs[i].first;
    const double u = rng.uniform() * kept;
    double acc = 0.0;
    std::size_t pick = probs[cut - 1].second;
    for (std::size_t i = 0; i < cut; ++i) {
      acc += probs[i].first;
      if (u < acc) {
        pick = probs[i].second;
        break;
      }
    }
    hyp.ids.push_back(static_cast<TokenId>(pick));
    hyp.logprob += lp[pick];
    if (static_cast<TokenId>(pick) == kEos) {
      hyp.finished = true;
      break;
    }
    if (step + 1 < budget) dec.push(static_cast<TokenId>(pick));
  }
  hyp.score = length_score(hyp.logprob, hyp.ids.size(), cfg.length_penalty);
  return hyp;
}

std::vector<Hypothesis> decode(const Params& params, std::span<const TokenId> prompt, const DecodeConfig& cfg) {
  switch (cfg.mode) {
    case DecodeMode::kBeam: return beam_search(params, prompt, cfg);
    case DecodeMode::kGreedy: return {greedy_decode(params, prompt, cfg)};
    case DecodeMode::kSample: return {sample_decode(params, prompt, cfg)};
  }
  return {};
}

DecodeConfig constrain(DecodeConfig cfg, const std::vector<std::uint8_t>& mask) {
  if (cfg.allowed.empty()) {
    cfg.allowed = mask;
  } else {
    if (cfg.allowed.size() != mask.size()) throw ValidationError("allowed mask size does not match the vocabulary");
    for (std::size_t i = 0; i < mask.size(); ++i) cfg.allowed[i] = cfg.allowed[i] && mask[i];
  }
  return cfg;
}

namespace {

Hypothesis best_of(const Params& params, std::span<const TokenId> prompt, const DecodeConfig& cfg) {
  auto hyps = decode(params, prompt, cfg);
  if (hyps.empty()) throw ValidationError("decoding produced no hypothesis");
  return std::move(hyps.front());
}

std::span<const TokenId> without_eos(const Hypothesis& h) {
  std::span<const TokenId> ids(h.ids);
  if (h.finished) ids = ids.first(ids.size() - 1);
  return ids;
}

}  // namespace

Recognition recognize(const Params& params, const VoxtVocab& vocab, std::span<const std::uint32_t> speech,
                      const DecodeConfig& cfg) {
  const TokenSeq prompt = format_prompt(Task::kAsr, vocab.encode_speech(speech), vocab);
  Recognition r;
  r.best = best_of(params, prompt, constrain(cfg, vocab.modality_mask(Modality::kText, true)));
  r.text = vocab.decode_text(without_eos(r.best));
  return r;
}

Synthesis synthesize(const Params& params, const VoxtVocab& vocab, std::string_view text, const DecodeConfig& cfg) {
  const TokenSeq prompt = format_prompt(Task::kTts, vocab.encode_text(text), vocab);
  Synthesis s;
  s.best = best_of(params, prompt, constrain(cfg, vocab.modality_mask(Modality::kSpeech, true)));
  s.units = vocab.decode_speech(without_eos(s.best));
  return s;
}

Continuation continue_sequence(const Params& params, const VoxtVocab& vocab, Modality modality,
                               std::span<const TokenId> prefix, const DecodeConfig& cfg) {
  if (modality == Modality::kSpecial) throw ValidationError("continuation modality must be text or speech");
  const Task task = modality == Modality::kText ? Task::kTextLM : Task::kSpeechLM;
  const TokenSeq prompt = format_prompt(task, prefix, vocab);
  Continuation c;
  c.best = best_of(params, prompt, constrain(cfg, vocab.modality_mask(modality, true)));
  const auto ids = without_eos(c.best);
  c.ids.assign(ids.begin(), ids.end());
  return c;
}

std::string generation_json(std::string_view utt_id, Task task, std::size_t prompt_len, const Hypothesis& hyp) {
  nlohmann::json j;
  j["utt_id"] = utt_id;
  j["task"] = to_string(task);
  j["prompt_len"] = prompt_len;
  j["ids"] = hyp.ids;
  j["logprob"] = hyp.logprob;
  j["finished"] = hyp.finished;
  return j.dump();
}

}  // namespace voxt
