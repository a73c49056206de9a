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
#include <vector>

#include "voxt/types.hpp"
#include "voxt/vocab.hpp"

namespace voxt {

// A task-tagged utterance with already encoded segments.
struct TaskRecord {
  Task task = Task::kTextLM;
  std::optional<TokenSeq> text;
  std::optional<TokenSeq> speech;

  bool operator==(const TaskRecord&) const = default;
};

// Throws ValidationError when the record's segments do not match its task
// or a segment holds tokens of the wrong modality.
void validate(const TaskRecord& record, const VoxtVocab& vocab);

// Training sequences, one utterance each:
//   textlm:   <generate-text> Y <eos>
//   speechlm: <generate-speech> D <eos>
//   asr:      <start-speech> D <generate-text> Y <eos>
//   tts:      <start-text> Y <generate-speech> D <eos>
TokenSeq format_train(const TaskRecord& record, const VoxtVocab& vocab);

// Inference prompts: the training layout up to and including the generate
// token; continuation tasks append the prefix after it. Throws
// ValidationError when the condition modality does not match the task.
TokenSeq format_prompt(Task task, std::span<const TokenId> condition, const VoxtVocab& vocab);

// Modality a task generates and the modality its condition must have.
Modality target_modality(Task task);
Modality condition_modality(Task task);

struct ParsedSequence {
  std::optional<Task> task;
  // Condition segment of asr/tts sequences. For textlm/speechlm the prompt
  // prefix and its continuation are both reported as content.
  std::optional<TokenSeq> condition;
  std::optional<Modality> target;
  TokenSeq content;
  bool terminated = false;

  // Set when content violates the announced modality or the framing is
  // not recognisable; content is left untouched.
  bool malformed = false;
  std::string diagnostic;

  // Rebuilds the record for a terminated, well-formed sequence.
  std::optional<TaskRecord> to_record() const;
};

// Inverse of the framing: strips specials, truncates at the first <eos> and
// reports the modality implied by the last generate token before content.
ParsedSequence parse_generated(std::span<const TokenId> seq, const VoxtVocab& vocab);

// ---------------------------------------------------------------------------
// Framed dataset files.
//
// .vxds: "VXDS", u32 version, u32 count, then per record
//        u8 task, u32 length, length x u32 token ids.
// .idx:  "VXDI", u32 version, u32 count, then count x u64 byte offsets of
//        each record in the .vxds file.

struct FormattedExample {
  Task task = Task::kTextLM;
  TokenSeq ids;
  bool operator==(const FormattedExample&) const = default;
};

void save_dataset(const std::filesystem::path& path, std::span<const FormattedExample> examples);
std::vector<FormattedExample> load_dataset(const std::filesystem::path& path);
// Random access through the index file.
FormattedExample read_dataset_record(const std::filesystem::path& path, std::size_t index);

std::filesystem::path dataset_index_path(const std::filesystem::path& path);

}  // namespace voxt
