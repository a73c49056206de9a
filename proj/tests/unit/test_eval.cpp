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

#include <cmath>
#include <map>

#include "doctest.h"
#include "helpers.hpp"
#include "voxt/error.hpp"
#include "voxt/eval.hpp"

using namespace voxt;
using namespace voxt::testing;

namespace {

// Scores from a fixed table of (previous token -> next token) probabilities.
class BigramScorer : public SequenceScorer {
 public:
  explicit BigramScorer(std::map<std::pair<TokenId, TokenId>, double> table) : table_(std::move(table)) {}
  std::vector<long double> token_logprobs(std::span<const TokenId> seq) const override {
    std::vector<long double> out;
    for (std::size_t i = 1; i < seq.size(); ++i) out.push_back(std::log(table_.at({seq[i - 1], seq[i]})));
    return out;
  }

 private:
  std::map<std::pair<TokenId, TokenId>, double> table_;
};

class FixedScorer : public SequenceScorer {
 public:
  explicit FixedScorer(std::vector<double> lp) : lp_(std::move(lp)) {}
  std::vector<long double> token_logprobs(std::span<const TokenId> seq) const override {
    return {lp_.begin(), lp_.begin() + static_cast<std::ptrdiff_t>(seq.size() - 1)};
  }

 private:
  std::vector<double> lp_;
};

UnitList units(std::string_view s) { return split_words(s); }

}  // namespace

TEST_CASE("perplexity examples") {
  const std::vector<TokenSeq> data{{1, 2, 3}};
  CHECK(perplexity(FixedScorer({-std::log(2.0), -std::log(2.0)}), data, MaskPolicy::kAll).ppl ==
        doctest::Approx(2.0));
  CHECK(perplexity(FixedScorer({0.0, 0.0}), data, MaskPolicy::kAll).ppl == 1.0);

  const auto p = constant_logit_model({0, 0, 0, 0, 0, 0});
  const TransformerScorer uniform(p);
  const std::vector<TokenSeq> seqs{{2, 1, 0, 3}, {5, 4}};
  CHECK(perplexity(uniform, seqs, MaskPolicy::kAll).ppl == doctest::Approx(6.0).epsilon(1e-6));
  CHECK_THROWS_AS(perplexity(uniform, std::vector<TokenSeq>{}, MaskPolicy::kAll), ValidationError);
}

TEST_CASE("target mask scores only after the generate token") {
  CHECK(make_mask(TokenSeq{1, 40, 41, 2, 9, 10, 4}, MaskPolicy::kTarget) ==
        std::vector<std::uint8_t>{0, 0, 0, 0, 1, 1, 1});
  CHECK(make_mask(TokenSeq{3, 40, 4}, MaskPolicy::kAll) == std::vector<std::uint8_t>{0, 1, 1});
}

TEST_CASE("unigram baseline") {
  const std::vector<TokenSeq> train{{2, 7, 7, 8, 4}};
  const UnigramScorer u(10, train, MaskPolicy::kTarget, 1.0);
  // Add-one counts over ten ids plus four scored tokens.
  const double total = 10 + 4;
  CHECK(u.logprob(7) == doctest::Approx(std::log(3 / total)));
  CHECK(u.logprob(0) == doctest::Approx(std::log(1 / total)));
}

TEST_CASE("error rate examples") {
  const std::vector<UnitList> r1{units("a b c")}, h1{units("a x c d")};
  CHECK(error_rate(r1, h1).rate == doctest::Approx(2.0 / 3.0));
  CHECK(error_rate(r1, r1).rate == 0.0);
  const std::vector<UnitList> r2{units("a b c d")}, h2{UnitList{}};
  CHECK(error_rate(r2, h2).rate == 1.0);
  const std::vector<UnitList> h3{units("a b c d e f g h i")};
  CHECK(error_rate(r2, h3).rate > 1.0);
  CHECK_THROWS_AS(error_rate(h2, h2), ValidationError);
  CHECK_THROWS_AS(error_rate(r1, std::vector<UnitList>{}), ValidationError);
  CHECK(split_chars("ab c") == UnitList{"a", "b", "c"});
}

TEST_CASE("error rate is invariant to relabeling") {
  Rng rng(6);
  const UnitList alphabet{"p", "q", "r", "s"};
  const std::map<std::string, std::string> relabel{{"p", "s"}, {"q", "p"}, {"r", "q"}, {"s", "r"}};
  for (int i = 0; i < 100; ++i) {
    UnitList a(1 + rng.below(6)), b(rng.below(6));
    for (auto& x : a) x = alphabet[rng.below(4)];
    for (auto& x : b) x = alphabet[rng.below(4)];
    UnitList a2, b2;
    for (auto& x : a) a2.push_back(relabel.at(x));
    for (auto& x : b) b2.push_back(relabel.at(x));
    const std::vector<UnitList> ra{a}, hb{b}, ra2{a2}, hb2{b2};
    CHECK(error_rate(ra, hb).errors == error_rate(ra2, hb2).errors);
  }
}

TEST_CASE("paired judgment on a hand-built table") {
  // Tokens 0 (start), 1, 2. Probabilities chosen so each comparison is clear.
  const BigramScorer s({{{0, 1}, 0.6}, {{0, 2}, 0.4}, {{1, 1}, 0.2}, {{1, 2}, 0.8}, {{2, 1}, 0.5}, {{2, 2}, 0.5}});
  const std::vector<std::pair<TokenSeq, TokenSeq>> pairs{
      {{0, 1, 2}, {0, 2, 1}},  // 0.6*0.8=0.48 vs 0.4*0.5=0.20 -> win
      {{0, 1, 1}, {0, 2, 2}},  // 0.12 vs 0.20 -> loss
      {{0, 2, 1}, {0, 2, 2}},  // equal -> tie
      {{0, 1}, {0, 2, 2}},     // mean log 0.6 vs mean log 0.2 -> win
  };
  const auto r = paired_judgment(s, pairs);
  CHECK(r.wins == 2);
  CHECK(r.ties == 1);
  CHECK(r.accuracy == doctest::Approx(2.5 / 4.0));

  std::vector<std::pair<TokenSeq, TokenSeq>> swapped;
  for (const auto& [a, b] : pairs) swapped.emplace_back(b, a);
  CHECK(paired_judgment(s, swapped).accuracy == doctest::Approx(1.0 - r.accuracy));

  std::vector<std::pair<TokenSeq, TokenSeq>> same;
  for (const auto& [a, b] : pairs) same.emplace_back(a, a);
  CHECK(paired_judgment(s, same).accuracy == 0.5);
}

TEST_CASE("corrupted pairs differ from their source") {
  Rng rng(2);
  const std::vector<TokenSeq> contents{{7, 8, 9}, {7, 7}, {9}};
  const TokenSeq pool{7, 8, 9};
  for (int i = 0; i < 20; ++i) {
    for (const auto& [pos, neg] : make_corrupted_pairs(contents, pool, rng)) CHECK(pos != neg);
  }
}

TEST_CASE("eval report json") {
  const auto s = eval_report_json("wer", 0.25, 10, "abc");
  CHECK(s.find("\"metric\":\"wer\"") != std::string::npos);
  CHECK(s.find("\"n_items\":10") != std::string::npos);
}
