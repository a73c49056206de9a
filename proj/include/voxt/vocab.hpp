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
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <variant>
#include <vector>

#include "voxt/types.hpp"

namespace voxt {

enum class Special : std::uint8_t {
  kStartText = 0,
  kStartSpeech = 1,
  kGenerateText = 2,
  kGenerateSpeech = 3,
  kEos = 4,
  kPad = 5,
  kUnk = 6,
};

inline constexpr std::size_t kNumSpecials = 7;

std::string_view special_name(Special s);

// Surface forms. The variant index matches Modality (special, text, speech).
using SpecialRun = std::vector<Special>;
using TextSymbols = std::vector<std::string>;
using SpeechUnits = std::vector<std::uint32_t>;
using Segment = std::variant<SpecialRun, TextSymbols, SpeechUnits>;

inline Modality modality_of(const Segment& s) { return static_cast<Modality>(s.index()); }

using Merge = std::pair<TokenId, TokenId>;

// Merged speech-text vocabulary. Id layout is contiguous and ordered:
// specials [0, 7), text units, speech units, then one metatoken per merge.
class VoxtVocab {
 public:
  // Throws ValidationError on an empty or duplicated symbol list or k == 0.
  static VoxtVocab build(std::vector<std::string> text_symbols, std::uint32_t k);

  std::size_t size() const { return base_size() + merges_.size(); }
  std::size_t base_size() const { return kNumSpecials + text_units_.size() + speech_units_; }
  std::size_t num_text_units() const { return text_units_.size(); }
  std::uint32_t num_speech_units() const { return speech_units_; }

  TokenId id(Special s) const { return static_cast<TokenId>(s); }
  TokenId text_begin() const { return static_cast<TokenId>(kNumSpecials); }
  TokenId speech_begin() const { return text_begin() + static_cast<TokenId>(text_units_.size()); }
  TokenId meta_begin() const { return static_cast<TokenId>(base_size()); }

  bool contains(TokenId id) const { return id >= 0 && static_cast<std::size_t>(id) < size(); }
  bool is_special(TokenId id) const { return id >= 0 && id < text_begin(); }
  bool is_metatoken(TokenId id) const { return id >= meta_begin() && contains(id); }

  // Throws ValidationError for an id outside the vocabulary.
  Modality modality(TokenId id) const;

  std::optional<TokenId> text_id(std::string_view symbol) const;
  TokenId speech_id(std::uint32_t unit) const;
  const std::vector<std::string>& text_units() const { return text_units_; }

  const std::vector<Merge>& merges() const { return merges_; }

  // Base-unit ids a token stands for (itself for base tokens).
  std::span<const TokenId> expansion(TokenId id) const;

  // Human readable form, e.g. "<eos>", "ab", "[3 7]".
  std::string token_string(TokenId id) const;

  // Applies merges within each segment; unknown symbols become <unk>.
  TokenSeq encode(std::span<const Segment> segments) const;
  TokenSeq encode_text(std::string_view text) const;
  TokenSeq encode_speech(std::span<const std::uint32_t> units) const;

  // Applies merges inside each maximal same-modality run of non-special ids.
  TokenSeq apply_merges(std::span<const TokenId> ids) const;

  // Expands metatokens and groups base units into maximal same-modality
  // segments. Throws ValidationError for an out-of-range id.
  std::vector<Segment> decode(std::span<const TokenId> ids) const;

  // Concatenated text of all text tokens; <unk> renders as '?', other
  // specials and speech tokens are skipped.
  std::string decode_text(std::span<const TokenId> ids) const;
  // Speech units of all speech tokens, in order.
  SpeechTokenSeq decode_speech(std::span<const TokenId> ids) const;

  // Membership mask over the vocabulary for one modality (base and
  // metatokens), optionally including <eos>.
  std::vector<std::uint8_t> modality_mask(Modality modality, bool include_eos) const;

  // Optional link to the codebook that defines the speech units.
  struct CodebookRef {
    std::string path;
    std::string digest;
    bool operator==(const CodebookRef&) const = default;
  };
  const std::optional<CodebookRef>& codebook() const { return codebook_; }
  void set_codebook(CodebookRef ref) { codebook_ = std::move(ref); }

  std::string to_json() const;
  // Throws VersionError for a foreign format tag or version; CorruptError
  // for inconsistent merge tables.
  static VoxtVocab from_json(std::string_view json);

  void save(const std::filesystem::path& path) const;
  static VoxtVocab load(const std::filesystem::path& path);

  // Digest over the id layout and merge table.
  std::string digest() const;

  // Appends a merge; both ids must be defined, non-special and share a
  // modality. Returns the new metatoken id.
  TokenId add_merge(TokenId left, TokenId right);

  bool operator==(const VoxtVocab& other) const {
    return text_units_ == other.text_units_ && speech_units_ == other.speech_units_ &&
           merges_ == other.merges_ && codebook_ == other.codebook_;
  }

 private:
  TokenSeq merge_run(std::vector<TokenId> run) const;

  std::vector<std::string> text_units_;
  std::uint32_t speech_units_ = 0;
  std::vector<Merge> merges_;
  std::optional<CodebookRef> codebook_;

  std::unordered_map<std::string, TokenId> text_lookup_;
  std::unordered_map<std::uint64_t, std::size_t> merge_rank_;
  std::vector<std::vector<TokenId>> meta_expansion_;
  std::vector<Modality> meta_modality_;
  std::vector<TokenId> base_ids_;  // identity table backing expansion() of base ids
};

struct BpeReport {
  // Frequency of each chosen pair at the time it was merged.
  std::vector<std::uint64_t> merge_counts;
};

// Greedy BPE: repeatedly merges the most frequent adjacent pair (ties to the
// lexicographically smallest (left, right)) until the vocabulary reaches
// target_size or no pair occurs at least twice. Pairs never span a special
// token or a modality change. Throws ValidationError if target_size is below
// the current vocabulary size.
VoxtVocab train_bpe(const VoxtVocab& vocab, std::span<const TokenSeq> corpora,
                    std::size_t target_size, BpeReport* report = nullptr);

}  // namespace voxt
