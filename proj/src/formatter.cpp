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

#include "voxt/formatter.hpp"

#include "binary_io.hpp"
#include "voxt/error.hpp"

namespace voxt {

namespace {

constexpr char kDatasetMagic[4] = {'V', 'X', 'D', 'S'};
constexpr char kIndexMagic[4] = {'V', 'X', 'D', 'I'};
constexpr std::uint32_t kDatasetVersion = 1;

void check_segment(std::span<const TokenId> seg, Modality want, const VoxtVocab& vocab,
                   const char* what) {
  for (TokenId id : seg) {
    if (vocab.modality(id) != want) {
      throw ValidationError(std::string(what) + " segment contains token " + vocab.token_string(id) +
                            " of modality " + std::string(to_string(vocab.modality(id))));
    }
  }
}

Special generate_token(Modality m) {
  return m == Modality::kText ? Special::kGenerateText : Special::kGenerateSpeech;
}

Special start_token(Modality m) {
  return m == Modality::kText ? Special::kStartText : Special::kStartSpeech;
}

}  // namespace

Modality target_modality(Task task) {
  switch (task) {
    case Task::kTextLM:
    case Task::kAsr:
      return Modality::kText;
    case Task::kSpeechLM:
    case Task::kTts:
      return Modality::kSpeech;
  }
  return Modality::kText;
}

Modality condition_modality(Task task) {
  switch (task) {
    case Task::kTextLM:
    case Task::kTts:
      return Modality::kText;
    case Task::kSpeechLM:
    case Task::kAsr:
      return Modality::kSpeech;
  }
  return Modality::kText;
}

void validate(const TaskRecord& record, const VoxtVocab& vocab) {
  const bool need_text = record.task != Task::kSpeechLM;
  const bool need_speech = record.task != Task::kTextLM;
  const std::string task(to_string(record.task));
  if (need_text != record.text.has_value()) {
    throw ValidationError(task + " record " + (need_text ? "is missing" : "must not carry") + " a text segment");
  }
  if (need_speech != record.speech.has_value()) {
    throw ValidationError(task + " record " + (need_speech ? "is missing" : "must not carry") +
                          " a speech segment");
  }
  if (record.text) check_segment(*record.text, Modality::kText, vocab, "text");
  if (record.speech) check_segment(*record.speech, Modality::kSpeech, vocab, "speech");
}

TokenSeq format_train(const TaskRecord& record, const VoxtVocab& vocab) {
  validate(record, vocab);
  TokenSeq out;
  auto append = [&](const TokenSeq& s) { out.insert(out.end(), s.begin(), s.end()); };
  switch (record.task) {
    case Task::kTextLM:
      out.push_back(vocab.id(Special::kGenerateText));
      append(*record.text);
      break;
    case Task::kSpeechLM:
      out.push_back(vocab.id(Special::kGenerateSpeech));
      append(*record.speech);
      break;
    case Task::kAsr:
      out.push_back(vocab.id(Special::kStartSpeech));
      append(*record.speech);
      out.push_back(vocab.id(Special::kGenerateText));
      append(*record.text);
      break;
    case Task::kTts:
      out.push_back(vocab.id(Special::kStartText));
      append(*record.text);
      out.push_back(vocab.id(Special::kGenerateSpeech));
      append(*record.speech);
      break;
  }
  out.push_back(vocab.id(Special::kEos));
  return out;
}

TokenSeq format_prompt(Task task, std::span<const TokenId> condition, const VoxtVocab& vocab) {
  const Modality cond = condition_modality(task);
  check_segment(condition, cond, vocab, "condition");
  TokenSeq out;
  if (task == Task::kAsr || task == Task::kTts) {
    out.push_back(vocab.id(start_token(cond)));
    out.insert(out.end(), condition.begin(), condition.end());
    out.push_back(vocab.id(generate_token(target_modality(task))));
  } else {
    out.push_back(vocab.id(generate_token(cond)));
    out.insert(out.end(), condition.begin(), condition.end());
  }
  return out;
}

std::optional<TaskRecord> ParsedSequence::to_record() const {
  if (!task || malformed || !terminated) return std::nullopt;
  TaskRecord r;
  r.task = *task;
  switch (*task) {
    case Task::kTextLM: r.text = content; break;
    case Task::kSpeechLM: r.speech = content; break;
    case Task::kAsr:
      r.speech = condition.value_or(TokenSeq{});
      r.text = content;
      break;
    case Task::kTts:
      r.text = condition.value_or(TokenSeq{});
      r.speech = content;
      break;
  }
  return r;
}

ParsedSequence parse_generated(std::span<const TokenId> seq, const VoxtVocab& vocab) {
  ParsedSequence p;
  auto fail = [&](std::string why) {
    p.malformed = true;
    if (p.diagnostic.empty()) p.diagnostic = std::move(why);
  };
  std::size_t i = 0;
  std::optional<Modality> cond_mod;
  if (!seq.empty() && (seq[0] == vocab.id(Special::kStartText) || seq[0] == vocab.id(Special::kStartSpeech))) {
    cond_mod = seq[0] == vocab.id(Special::kStartText) ? Modality::kText : Modality::kSpeech;
    p.condition = TokenSeq{};
    for (i = 1; i < seq.size() && !vocab.is_special(seq[i]); ++i) {
      if (vocab.modality(seq[i]) != *cond_mod) {
        fail("condition token " + vocab.token_string(seq[i]) + " does not match the announced " +
             std::string(to_string(*cond_mod)) + " condition");
      }
      p.condition->push_back(seq[i]);
    }
  }

  // Locate the generate token that opens the content.
  if (i >= seq.size() ||
      (seq[i] != vocab.id(Special::kGenerateText) && seq[i] != vocab.id(Special::kGenerateSpeech))) {
    fail("no generate token before content");
    for (; i < seq.size() && seq[i] != vocab.id(Special::kEos); ++i) p.content.push_back(seq[i]);
    p.terminated = i < seq.size();
    return p;
  }
  const Modality target = seq[i] == vocab.id(Special::kGenerateText) ? Modality::kText : Modality::kSpeech;
  p.target = target;
  if (!cond_mod) {
    p.task = target == Modality::kText ? Task::kTextLM : Task::kSpeechLM;
  } else if (*cond_mod != target) {
    p.task = target == Modality::kText ? Task::kAsr : Task::kTts;
  } else {
    fail("condition and target share a modality; no task uses that framing");
  }

  for (++i; i < seq.size(); ++i) {
    const TokenId id = seq[i];
    if (id == vocab.id(Special::kEos)) {
      p.terminated = true;
      break;
    }
    if (vocab.modality(id) != target) {
      fail("content token " + vocab.token_string(id) + " at position " + std::to_string(i) +
           " violates the announced " + std::string(to_string(target)) + " output");
    }
    p.content.push_back(id);
  }
  return p;
}

// ---------------------------------------------------------------------------
// Framed dataset files

std::filesystem::path dataset_index_path(const std::filesystem::path& path) {
  auto p = path;
  p += ".idx";
  return p;
}

void save_dataset(const std::filesystem::path& path, std::span<const FormattedExample> examples) {
  detail::ByteWriter data;
  detail::ByteWriter index;
  data.put_bytes(std::string_view(kDatasetMagic, 4));
  data.put_u32(kDatasetVersion);
  data.put_u32(static_cast<std::uint32_t>(examples.size()));
  index.put_bytes(std::string_view(kIndexMagic, 4));
  index.put_u32(kDatasetVersion);
  index.put_u32(static_cast<std::uint32_t>(examples.size()));
  for (const auto& ex : examples) {
    index.put_u64(data.bytes().size());
    data.put_u8(static_cast<std::uint8_t>(ex.task));
    data.put_u32(static_cast<std::uint32_t>(ex.ids.size()));
    for (TokenId id : ex.ids) data.put_u32(static_cast<std::uint32_t>(id));
  }
  detail::write_file_bytes(path, data.bytes());
  detail::write_file_bytes(dataset_index_path(path), index.bytes());
}

namespace {

bool read_record(detail::ByteReader& r, FormattedExample& ex) {
  std::uint8_t task = 0;
  std::uint32_t len = 0;
  if (!r.get_u8(task) || !r.get_u32(len)) return false;
  if (task >= kNumTasks) throw IngestError(IngestFault::kMalformed, "dataset record has an unknown task tag");
  ex.task = static_cast<Task>(task);
  if (r.remaining() < static_cast<std::size_t>(len) * 4) return false;
  ex.ids.resize(len);
  for (auto& id : ex.ids) {
    std::uint32_t v = 0;
    r.get_u32(v);
    id = static_cast<TokenId>(v);
  }
  return true;
}

std::uint32_t read_header(detail::ByteReader& r, const char* magic, const std::string& what) {
  std::string m;
  std::uint32_t version = 0, count = 0;
  if (!r.get_bytes(4, m)) throw IngestError(IngestFault::kTruncated, what + " header truncated");
  if (m != std::string_view(magic, 4)) throw IngestError(IngestFault::kBadMagic, what + " has bad magic");
  if (!r.get_u32(version) || !r.get_u32(count)) throw IngestError(IngestFault::kTruncated, what + " header truncated");
  if (version != kDatasetVersion) throw VersionError(what + " version " + std::to_string(version) + " is not supported");
  return count;
}

}  // namespace

std::vector<FormattedExample> load_dataset(const std::filesystem::path& path) {
  const auto bytes = detail::read_file_bytes(path);
  detail::ByteReader r(bytes);
  const std::uint32_t count = read_header(r, kDatasetMagic, path.string());
  std::vector<FormattedExample> out(count);
  for (auto& ex : out) {
    if (!read_record(r, ex)) throw IngestError(IngestFault::kTruncated, path.string() + " is truncated");
  }
  if (r.remaining() != 0) throw IngestError(IngestFault::kMalformed, path.string() + " has trailing bytes");
  return out;
}

FormattedExample read_dataset_record(const std::filesystem::path& path, std::size_t index) {
  const auto idx_bytes = detail::read_file_bytes(dataset_index_path(path));
  detail::ByteReader ir(idx_bytes);
  const std::uint32_t count = read_header(ir, kIndexMagic, dataset_index_path(path).string());
  if (index >= count) throw ValidationError("dataset index " + std::to_string(index) + " out of range");
  std::uint64_t offset = 0;
  for (std::size_t i = 0; i <= index; ++i) {
    if (!ir.get_u64(offset)) throw IngestError(IngestFault::kTruncated, "dataset index truncated");
  }
  const auto bytes = detail::read_file_bytes(path);
  if (offset > bytes.size()) throw CorruptError("dataset index points past the end of the data file");
  detail::ByteReader r(std::span<const char>(bytes).subspan(offset));
  FormattedExample ex;
  if (!read_record(r, ex)) throw IngestError(IngestFault::kTruncated, path.string() + " is truncated");
  return ex;
}

}  // namespace voxt
