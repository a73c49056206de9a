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

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "voxt/model.hpp"
#include "voxt/types.hpp"
#include "voxt/vocab.hpp"

namespace voxt {

enum class DecodeMode { kBeam, kGreedy, kSample };

std::string_view to_string(DecodeMode mode);
DecodeMode parse_decode_mode(std::string_view name);

struct DecodeConfig {
  DecodeMode mode = DecodeMode::kBeam;
  std::uint32_t beam_size = 4;
  std::uint32_t max_new_tokens = 64;
  // Final ranking divides logprob by len^length_penalty.
  double length_penalty = 0.6;
  // Membership mask over the vocabulary; empty allows every token.
  std::vector<std::uint8_t> allowed;
  double temperature = 1.0;  // sampling only; 0 means argmax
  double top_p = 1.0;
  std::uint64_t seed = 0;

  // Throws ConfigError for beam_size or max_new_tokens of 0, a length
  // penalty outside [0, 1], negative temperature or top_p outside (0, 1].
  void validate() const;
};

struct Hypothesis {
  TokenSeq ids;          // generated tokens only, <eos> included when finished
  double logprob = 0.0;  // sum of full-vocabulary log-softmax values
  bool finished = false;
  double score = 0.0;    // logprob / len^length_penalty
};

// Ranked best first, at most beam_size entries. Candidates are ordered by
// logprob, then token id, then parent hypothesis order. Throws
// ValidationError for an empty prompt, a prompt with no room left under
// max_seq_len, or an allowed set with no member.
std::vector<Hypothesis> beam_search(const Params& params, std::span<const TokenId> prompt,
                                    const DecodeConfig& cfg);

// Argmax at every step, ties to the lowest id.
Hypothesis greedy_decode(const Params& params, std::span<const TokenId> prompt, const DecodeConfig& cfg);

// Temperature and nucleus sampling seeded by cfg.seed.
Hypothesis sample_decode(const Params& params, std::span<const TokenId> prompt, const DecodeConfig& cfg);

// Dispatches on cfg.mode; greedy and sampling return a single hypothesis.
std::vector<Hypothesis> decode(const Params& params, std::span<const TokenId> prompt, const DecodeConfig& cfg);

// Restricts cfg.allowed to the members of `mask`.
DecodeConfig constrain(DecodeConfig cfg, const std::vector<std::uint8_t>& mask);

struct Recognition {
  std::string text;
  Hypothesis best;
};

struct Synthesis {
  SpeechTokenSeq units;
  Hypothesis best;
};

struct Continuation {
  TokenSeq ids;  // continuation only, without <eos>
  Hypothesis best;
};

// ASR: text-constrained decoding after <start-speech> D <generate-text>.
// best.finished is false when generation hit max_new_tokens.
Recognition recognize(const Params& params, const VoxtVocab& vocab, std::span<const std::uint32_t> speech,
                      const DecodeConfig& cfg);

// TTS: speech-constrained decoding after <start-text> Y <generate-speech>.
Synthesis synthesize(const Params& params, const VoxtVocab& vocab, std::string_view text,
                     const DecodeConfig& cfg);

// textlm/speechlm continuation of an encoded prefix. Throws ValidationError
// when the prefix does not match `modality`.
Continuation continue_sequence(const Params& params, const VoxtVocab& vocab, Modality modality,
                               std::span<const TokenId> prefix, const DecodeConfig& cfg);

// {"utt_id", "task", "prompt_len", "ids", "logprob", "finished"}.
std::string generation_json(std::string_view utt_id, Task task, std::size_t prompt_len, const Hypothesis& hyp);

}  // namespace voxt
