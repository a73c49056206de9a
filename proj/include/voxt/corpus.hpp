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

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "voxt/random.hpp"
#include "voxt/types.hpp"

namespace voxt {

// Rows of fixed-dimension feature frames, row-major.
struct FeatureMatrix {
  std::uint32_t n_frames = 0;
  std::uint32_t dim = 0;
  std::vector<float> data;

  FeatureMatrix() = default;
  FeatureMatrix(std::uint32_t frames, std::uint32_t d)
      : n_frames(frames), dim(d), data(static_cast<std::size_t>(frames) * d, 0.0f) {}

  std::span<const float> row(std::size_t i) const {
    return {data.data() + i * dim, dim};
  }
  std::span<float> row(std::size_t i) { return {data.data() + i * dim, dim}; }

  bool operator==(const FeatureMatrix&) const = default;
};

// Throws ValidationError when data size or finiteness invariants fail.
void validate(const FeatureMatrix& m);

// .fmx: "FMX1", u32 n_frames, u32 dim, then n_frames*dim f32, all little-endian.
std::vector<char> encode_feature_file(const FeatureMatrix& m);
FeatureMatrix decode_feature_file(std::span<const char> bytes);

void save_feature_file(const std::filesystem::path& path, const FeatureMatrix& m);
FeatureMatrix load_feature_file(const std::filesystem::path& path);

// Concatenates frames of matrices that share a dimension.
FeatureMatrix stack_frames(std::span<const FeatureMatrix> parts);

// Speech token files (.tok): whitespace separated unsigned integers.
void save_token_file(const std::filesystem::path& path, std::span<const std::uint32_t> tokens);
SpeechTokenSeq load_token_file(const std::filesystem::path& path);

struct ManifestRecord {
  std::string utt_id;
  Task task = Task::kTextLM;
  std::optional<std::string> text;
  std::optional<std::string> feature_path;
  std::optional<std::string> token_path;

  bool has_speech() const { return feature_path.has_value() || token_path.has_value(); }
  bool operator==(const ManifestRecord&) const = default;
};

struct Manifest {
  // Relative paths in records resolve against this directory.
  std::filesystem::path base_dir;
  std::vector<ManifestRecord> records;

  std::array<std::size_t, kNumTasks> task_counts() const;
  std::filesystem::path resolve(const std::string& relative) const;
};

// Throws ValidationError unless the record's sides match its task:
// textlm text only, speechlm speech only, asr/tts both.
void validate(const ManifestRecord& record);

// One JSON object per line; blank lines ignored.
Manifest parse_manifest(std::string_view jsonl, std::filesystem::path base_dir = {});
Manifest load_manifest(const std::filesystem::path& path);
std::string dump_manifest(const Manifest& manifest);
void save_manifest(const std::filesystem::path& path, const Manifest& manifest);

// Speech side of a record: reads the token file directly. Feature files need
// a codebook and are handled by the quantizer.
SpeechTokenSeq load_record_tokens(const Manifest& manifest, const ManifestRecord& record);

// ---------------------------------------------------------------------------
// Synthetic toy speech domain.
//
// Every character maps to a fixed tuple of `arity` speech units; words are
// separated by a dedicated boundary unit (unit 0). Units 1..num_units-1 are
// split into `arity` position groups and tuple position j draws from group j,
// so adjacent units of a clean rendering never repeat. Duplicated units
// (frame repetition) are therefore always removable by run-length dedup.
// ---------------------------------------------------------------------------

struct ToyDomainSpec {
  std::vector<std::string> charset;
  std::uint32_t arity = 2;
  double dup_prob = 0.3;
  std::uint64_t seed = 0;
  std::uint32_t num_units = 16;
  std::uint32_t lexicon_size = 64;
  std::uint32_t min_word_len = 2;
  std::uint32_t max_word_len = 5;

  static ToyDomainSpec lowercase(std::uint64_t seed = 0);
  bool operator==(const ToyDomainSpec&) const = default;
};

std::string dump_toy_spec(const ToyDomainSpec& spec);
ToyDomainSpec parse_toy_spec(std::string_view json);

struct ToyUtterance {
  std::string text;
  SpeechTokenSeq speech;
  bool operator==(const ToyUtterance&) const = default;
};

class ToyDomain {
 public:
  static constexpr std::uint32_t kBoundaryUnit = 0;

  // Throws ValidationError for an empty charset or impossible tuple table.
  explicit ToyDomain(ToyDomainSpec spec);

  const ToyDomainSpec& spec() const { return spec_; }
  const std::vector<std::string>& lexicon() const { return lexicon_; }
  std::span<const std::uint32_t> tuple(std::size_t char_index) const;

  // Clean rendering (no duplicated units).
  SpeechTokenSeq render(std::string_view text) const;
  // Rendering with each emitted unit duplicated with probability dup_prob.
  SpeechTokenSeq render(std::string_view text, Rng& rng) const;

  // Collapses repeats, then parses tuples; unknown tuples become '?'.
  std::string invert(std::span<const std::uint32_t> units) const;

  // Deterministic feature prototype for a unit; used to render .fmx frames.
  std::vector<float> prototype(std::uint32_t unit, std::uint32_t dim) const;
  FeatureMatrix render_features(std::span<const std::uint32_t> units, std::uint32_t dim,
                                double noise_std, Rng& rng) const;

  // Permutation from codebook centroid index to toy unit: each centroid maps
  // to the nearest prototype.
  std::vector<std::uint32_t> align_centroids(std::span<const float> centroids,
                                             std::uint32_t dim) const;

 private:
  std::vector<std::string> split_symbols(std::string_view text) const;

  ToyDomainSpec spec_;
  std::vector<std::uint32_t> tuples_;  // charset.size() * arity
  std::vector<std::string> lexicon_;
};

// Words per utterance drawn uniformly from len_range; words drawn uniformly
// from the lexicon. Pure function of its arguments.
std::vector<ToyUtterance> gen_toy_corpus(const ToyDomainSpec& spec, std::size_t n_utts,
                                         std::pair<std::uint32_t, std::uint32_t> len_range);

}  // namespace voxt
