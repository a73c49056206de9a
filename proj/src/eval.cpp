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

#include "voxt/eval.hpp"

#include <cctype>
#include <cmath>

#include <nlohmann/json.hpp>

#include "voxt/error.hpp"
#include "voxt/vocab.hpp"

namespace voxt {

std::vector<std::uint8_t> make_mask(std::span<const TokenId> seq, MaskPolicy policy) {
  std::vector<std::uint8_t> mask(seq.size(), 0);
  std::size_t from = 1;
  if (policy == MaskPolicy::kTarget) {
    const auto gen_text = static_cast<TokenId>(Special::kGenerateText);
    const auto gen_speech = static_cast<TokenId>(Special::kGenerateSpeech);
    for (std::size_t i = 0; i < seq.size(); ++i) {
      if (seq[i] == gen_text || seq[i] == gen_speech) from = i + 1;
    }
  }
  for (std::size_t i = from; i < seq.size(); ++i) mask[i] = 1;
  return mask;
}

std::vector<long double> TransformerScorer::token_logprobs(std::span<const TokenId> seq) const {
  return voxt::token_logprobs<float>(*params_, seq);
}

UnigramScorer::UnigramScorer(std::size_t vocab_size, std::span<const TokenSeq> train, MaskPolicy policy,
                             double alpha) {
  if (vocab_size == 0) throw ValidationError("unigram vocabulary is empty");
  std::vector<double> counts(vocab_size, alpha);
  double total = alpha * static_cast<double>(vocab_size);
  for (const auto& seq : train) {
    const auto mask = make_mask(seq, policy);
    for (std::size_t i = 0; i < seq.size(); ++i) {
      if (!mask[i]) continue;
      if (seq[i] < 0 || static_cast<std::size_t>(seq[i]) >= vocab_size) {
        throw ValidationError("token id " + std::to_string(seq[i]) + " outside the unigram vocabulary");
      }
      counts[static_cast<std::size_t>(seq[i])] += 1.0;
      total += 1.0;
    }
  }
  if (total <= 0.0) throw ValidationError("unigram has no mass");
  logprob_.resize(vocab_size);
  for (std::size_t i = 0; i < vocab_size; ++i) {
    logprob_[i] = counts[i] > 0.0 ? std::log(static_cast<long double>(counts[i]) / total) : -INFINITY;
  }
}

std::vector<long double> UnigramScorer::token_logprobs(std::span<const TokenId> seq) const {
  std::vector<long double> out;
  for (std::size_t i = 1; i < seq.size(); ++i) out.push_back(logprob(seq[i]));
  return out;
}

PplResult perplexity(const SequenceScorer& scorer, std::span<const TokenSeq> dataset, MaskPolicy policy) {
  if (dataset.empty()) throw ValidationError("perplexity needs a nonempty dataset");
  PplResult r;
  long double nll = 0.0L;
  for (const auto& seq : dataset) {
    const auto mask = make_mask(seq, policy);
    const auto lp = scorer.token_logprobs(seq);
    for (std::size_t i = 1; i < seq.size(); ++i) {
      if (!mask[i]) continue;
      nll -= lp[i - 1];
      ++r.n_scored;
    }
  }
  if (r.n_scored == 0) throw ValidationError("perplexity dataset has no scored position");
  r.total_nll = static_cast<double>(nll);
  r.ppl = static_cast<double>(std::exp(nll / static_cast<long double>(r.n_scored)));
  return r;
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    const std::size_t start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i > start) out.emplace_back(text.substr(start, i - start));
  }
  return out;
}

std::vector<std::string> split_chars(std::string_view text) {
  std::vector<std::string> out;
  for (auto& c : split_utf8(text)) {
    if (c != " ") out.push_back(std::move(c));
  }
  return out;
}

ErrorRate error_rate(std::span<const UnitList> refs, std::span<const UnitList> hyps) {
  if (refs.size() != hyps.size()) {
    throw ValidationError("error_rate got " + std::to_string(refs.size()) + " references and " +
                          std::to_string(hyps.size()) + " hypotheses");
  }
  ErrorRate r;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    r.errors += edit_distance<std::string>(refs[i], hyps[i]);
    r.ref_units += refs[i].size();
  }
  if (r.ref_units == 0) throw ValidationError("error_rate has zero reference units");
  r.rate = static_cast<double>(r.errors) / static_cast<double>(r.ref_units);
  return r;
}

namespace {

long double mean_logprob(const SequenceScorer& scorer, const TokenSeq& seq) {
  if (seq.size() < 2) throw ValidationError("paired judgment item needs at least two tokens");
  const auto lp = scorer.token_logprobs(seq);
  long double sum = 0.0L;
  for (long double v : lp) sum += v;
  return sum / static_cast<long double>(lp.size());
}

}  // namespace

PairedResult paired_judgment(const SequenceScorer& scorer,
                             std::span<const std::pair<TokenSeq, TokenSeq>> pairs) {
  if (pairs.empty()) throw ValidationError("paired judgment needs at least one pair");
  PairedResult r;
  r.n = pairs.size();
  for (const auto& [pos, neg] : pairs) {
    const double a = mean_logprob(scorer, pos);
    const double b = mean_logprob(scorer, neg);
    if (a > b) {
      ++r.wins;
    } else if (a == b) {
      ++r.ties;
    }
  }
  r.accuracy = static_cast<double>(2 * r.wins + r.ties) / static_cast<double>(2 * r.n);
  return r;
}

std::vector<std::pair<TokenSeq, TokenSeq>> make_corrupted_pairs(std::span<const TokenSeq> contents,
                                                                std::span<const TokenId> pool, Rng& rng) {
  if (pool.empty()) throw ValidationError("corruption pool is empty");
  std::vector<std::pair<TokenSeq, TokenSeq>> out;
  out.reserve(contents.size());
  for (const auto& seq : contents) {
    TokenSeq neg = seq;
    std::vector<std::size_t> swappable;
    for (std::size_t i = 0; i + 1 < seq.size(); ++i) {
      if (seq[i] != seq[i + 1]) swappable.push_back(i);
    }
    if (!swappable.empty() && rng.bernoulli(0.5)) {
      const std::size_t i = swappable[rng.below(swappable.size())];
      std::swap(neg[i], neg[i + 1]);
    } else {
      const std::size_t at = rng.below(seq.size() + 1);
      neg.insert(neg.begin() + static_cast<std::ptrdiff_t>(at), pool[rng.below(pool.size())]);
    }
    out.emplace_back(seq, std::move(neg));
  }
  return out;
}

std::string eval_report_json(std::string_view metric, double value, std::size_t n_items,
                             std::string_view config_digest) {
  nlohmann::json j;
  j["metric"] = metric;
  j["value"] = value;
  j["n_items"] = n_items;
  j["config_digest"] = config_digest;
  return j.dump();
}

}  // namespace voxt
