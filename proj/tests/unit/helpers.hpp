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

#include <cmath>
#include <string>
#include <vector>

#include "voxt/model.hpp"
#include "voxt/random.hpp"
#include "voxt/vocab.hpp"

namespace voxt::testing {

inline VoxtVocab letters_vocab(std::uint32_t k = 16) {
  std::vector<std::string> chars;
  for (char c = 'a'; c <= 'z'; ++c) chars.emplace_back(1, c);
  return VoxtVocab::build(chars, k);
}

// A model whose logits are the same vector at every position: the final
// norm emits a constant unit vector and the head reads its first row.
template <typename T = float>
ModelParams<T> constant_logit_model(const std::vector<double>& logits, std::uint32_t width = 8) {
  ModelConfig c;
  c.vocab_size = static_cast<std::uint32_t>(logits.size());
  c.n_layers = 1;
  c.width = width;
  c.n_heads = 2;
  c.max_seq_len = 32;
  auto p = init_params<T>(c, 1);
  p.tensor("final_norm.gain").setZero();
  auto bias = p.tensor("final_norm.bias");
  bias.setZero();
  bias(0, 0) = 1;
  auto head = p.tensor("head.weight");
  head.setZero();
  for (std::size_t v = 0; v < logits.size(); ++v) head(0, static_cast<Eigen::Index>(v)) = static_cast<T>(logits[v]);
  return p;
}

inline ModelConfig tiny_config(std::uint32_t vocab, std::uint32_t width = 8, std::uint32_t heads = 2,
                               std::uint32_t layers = 1) {
  ModelConfig c;
  c.vocab_size = vocab;
  c.n_layers = layers;
  c.width = width;
  c.n_heads = heads;
  c.max_seq_len = 32;
  return c;
}

// Random params with a larger spread than init so logits are far from uniform.
template <typename T>
ModelParams<T> random_params(const ModelConfig& c, std::uint64_t seed, double std = 0.5) {
  ModelParams<T> p(c);
  Rng rng(seed);
  for (auto& v : p.values) v = static_cast<T>(rng.normal() * std);
  return p;
}

inline TokenSeq random_tokens(Rng& rng, std::size_t n, std::uint32_t vocab) {
  TokenSeq s(n);
  for (auto& t : s) t = static_cast<TokenId>(rng.below(vocab));
  return s;
}

}  // namespace voxt::testing
