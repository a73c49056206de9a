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
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace voxt {

using TokenId = std::int32_t;

// Ids over the merged speech-text vocabulary.
using TokenSeq = std::vector<TokenId>;

// Discrete speech units, each in [0, k).
using SpeechTokenSeq = std::vector<std::uint32_t>;

enum class Task : std::uint8_t { kTextLM = 0, kSpeechLM = 1, kAsr = 2, kTts = 3 };

inline constexpr std::size_t kNumTasks = 4;
inline constexpr std::array<Task, kNumTasks> kAllTasks = {Task::kTextLM, Task::kSpeechLM,
                                                          Task::kAsr, Task::kTts};

std::string_view to_string(Task task);
std::optional<Task> parse_task(std::string_view name);

inline std::size_t task_index(Task task) { return static_cast<std::size_t>(task); }

enum class Modality : std::uint8_t { kSpecial = 0, kText = 1, kSpeech = 2 };

std::string_view to_string(Modality modality);
std::optional<Modality> parse_modality(std::string_view name);

// Splits UTF-8 text into one string per code point. Invalid lead bytes are
// kept as single-byte symbols.
std::vector<std::string> split_utf8(std::string_view text);

}  // namespace voxt
