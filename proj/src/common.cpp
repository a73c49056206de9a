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

#include <cstdio>
#include <fstream>
#include <iterator>

#include "binary_io.hpp"
#include "voxt/error.hpp"
#include "voxt/types.hpp"

namespace voxt {

std::string_view to_string(IngestFault fault) {
  switch (fault) {
    case IngestFault::kOpen: return "open";
    case IngestFault::kBadMagic: return "bad_magic";
    case IngestFault::kTruncated: return "truncated";
    case IngestFault::kNonFinite: return "non_finite";
    case IngestFault::kMalformed: return "malformed";
  }
  return "unknown";
}

std::string_view to_string(Task task) {
  switch (task) {
    case Task::kTextLM: return "textlm";
    case Task::kSpeechLM: return "speechlm";
    case Task::kAsr: return "asr";
    case Task::kTts: return "tts";
  }
  return "unknown";
}

std::optional<Task> parse_task(std::string_view name) {
  for (Task t : kAllTasks) {
    if (to_string(t) == name) return t;
  }
  return std::nullopt;
}

std::string_view to_string(Modality modality) {
  switch (modality) {
    case Modality::kSpecial: return "special";
    case Modality::kText: return "text";
    case Modality::kSpeech: return "speech";
  }
  return "unknown";
}

std::optional<Modality> parse_modality(std::string_view name) {
  if (name == "text") return Modality::kText;
  if (name == "speech") return Modality::kSpeech;
  if (name == "special") return Modality::kSpecial;
  return std::nullopt;
}

namespace detail {

std::vector<char> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError(IngestFault::kOpen, "cannot open " + path.string());
  return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

std::string read_file_text(const std::filesystem::path& path) {
  auto bytes = read_file_bytes(path);
  return std::string(bytes.begin(), bytes.end());
}

void write_file_bytes(const std::filesystem::path& path, std::span<const char> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("io", "cannot open for writing " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("io", "write failed " + path.string());
}

void write_file_text(const std::filesystem::path& path, std::string_view text) {
  write_file_bytes(path, std::span<const char>(text.data(), text.size()));
}

std::uint64_t fnv1a64(std::span<const char> bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (char c : bytes) {
    h ^= static_cast<std::uint8_t>(c);
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace detail
}  // namespace voxt

namespace voxt {

std::vector<std::string> split_utf8(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto lead = static_cast<unsigned char>(text[i]);
    std::size_t len = 1;
    if ((lead & 0xE0) == 0xC0) len = 2;
    else if ((lead & 0xF0) == 0xE0) len = 3;
    else if ((lead & 0xF8) == 0xF0) len = 4;
    if (i + len > text.size()) len = 1;
    out.emplace_back(text.substr(i, len));
    i += len;
  }
  return out;
}

}  // namespace voxt
