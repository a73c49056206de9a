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

#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "voxt/model.hpp"
#include "voxt/random.hpp"
#include "voxt/types.hpp"

namespace voxt {

// Which positions of a formatted sequence are scored.
//   kAll:    every position after the first token.
//   kTarget: positions after the last generate token (content and <eos>).
enum class MaskPolicy { kAll, kTarget };

std::vector<std::uint8_t> make_mask(std::span<const TokenId> seq, MaskPolicy policy);

// Anything that assigns next-token log-probabilities to a sequence.
class SequenceScorer {
 public:
  virtual ~SequenceScorer() = default;
  // log p(seq[i] | seq[0..i)) for i = 1..n-1.
  virtual std::vector<long double> token_logprobs(std::span<const TokenId> seq) const = 0;
};

class TransformerScorer : public SequenceScorer {
 public:
  explicit TransformerScorer(const Params& params) : params_(&params) {}
  std::vector<long double> token_logprobs(std::span<const TokenId> seq) const override;

 private:
  const Params* params_;
};

// Context-free add-alpha unigram over a fixed vocabulary size.
class UnigramScorer : public SequenceScorer {
 public:
  // Counts the scored positions of `train` under `policy`.
  UnigramScorer(std::size_t vocab_size, std::span<const TokenSeq> train, MaskPolicy policy,
                double alpha = 1.0);
  std::vector<long double> token_logprobs(std::span<const TokenId> seq) const override;
  long double logprob(TokenId id) const { return logprob_.at(static_cast<std::size_t>(id)); }

 private:
  std::vector<long double> logprob_;
};

struct PplResult {
  double ppl = 0.0;
  double total_nll = 0.0;
  std::size_t n_scored = 0;
};

// exp(total NLL / scored positions). Throws ValidationError for an empty
// dataset or one with no scored position.
PplResult perplexity(const SequenceScorer& scorer, std::span<const TokenSeq> dataset, MaskPolicy policy);

template <typename T>
std::size_t edit_distance(std::span<const T> ref, std::span<const T> hyp) {
  std::vector<std::size_t> row(hyp.size() + 1);
  for (std::size_t j = 0; j <= hyp.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= ref.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= hyp.size(); ++j) {
      const std::size_t up = row[j];
      const std::size_t sub = diag + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      row[j] = std::min({sub, up + 1, row[j - 1] + 1});
      diag = up;
    }
  }
  return row[hyp.size()];
}

using UnitList = std::vector<std::string>;

std::vector<std::string> split_words(std::string_view text);
std::vector<std::string> split_chars(std::string_view text);

struct ErrorRate {
  double rate = 0.0;
  std::size_t errors = 0;
  std::size_t ref_units = 0;
};

// Summed Levenshtein distance over reference units. Throws ValidationError
// for unequal list lengths or zero reference units.
ErrorRate error_rate(std::span<const UnitList> refs, std::span<const UnitList> hyps);

struct PairedResult {
  double accuracy = 0.0;
  std::size_t wins = 0;
  std::size_t ties = 0;
  std::size_t n = 0;
};

// Mean per-token log-likelihood decides each pair; exact ties count half.
// Throws ValidationError for an empty list or an unscoreable item.
PairedResult paired_judgment(const SequenceScorer& scorer,
                             std::span<const std::pair<TokenSeq, TokenSeq>> pairs);

// Negatives for paired judgment: each content sequence is corrupted by either
// swapping two adjacent distinct tokens or inserting a token drawn from
// `pool`. Returns (original, corrupted) content pairs.
std::vector<std::pair<TokenSeq, TokenSeq>> make_corrupted_pairs(std::span<const TokenSeq> contents,
                                                                std::span<const TokenId> pool, Rng& rng);

// {"metric", "value", "n_items", "config_digest"} as one JSON object.
std::string eval_report_json(std::string_view metric, double value, std::size_t n_items,
                             std::string_view config_digest);

}  // namespace voxt
