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

#include "voxt/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "binary_io.hpp"
#include "voxt/error.hpp"

namespace voxt {

using nlohmann::json;

namespace {

constexpr char kFeatureMagic[4] = {'F', 'M', 'X', '1'};

}  // namespace

void validate(const FeatureMatrix& m) {
  if (m.data.size() != static_cast<std::size_t>(m.n_frames) * m.dim) {
    throw ValidationError("feature matrix data size does not match n_frames x dim");
  }
  for (float v : m.data) {
    if (!std::isfinite(v)) throw ValidationError("feature matrix contains a non-finite value");
  }
}

std::vector<char> encode_feature_file(const FeatureMatrix& m) {
  validate(m);
  detail::ByteWriter w;
  w.put_bytes(std::string_view(kFeatureMagic, 4));
  w.put_u32(m.n_frames);
  w.put_u32(m.dim);
  w.put_f32s(m.data);
  return std::move(w.bytes());
}

FeatureMatrix decode_feature_file(std::span<const char> bytes) {
  detail::ByteReader r(bytes);
  std::string magic;
  if (!r.get_bytes(4, magic)) throw IngestError(IngestFault::kTruncated, "feature file header truncated");
  if (magic != std::string_view(kFeatureMagic, 4)) {
    throw IngestError(IngestFault::kBadMagic, "feature file has bad magic (expected FMX1)");
  }
  FeatureMatrix m;
  if (!r.get_u32(m.n_frames) || !r.get_u32(m.dim)) {
    throw IngestError(IngestFault::kTruncated, "feature file header truncated");
  }
  const std::uint64_t count = static_cast<std::uint64_t>(m.n_frames) * m.dim;
  if (r.remaining() < count * sizeof(float)) {
    throw IngestError(IngestFault::kTruncated,
                      "feature file payload truncated: header declares " +
                          std::to_string(m.n_frames) + "x" + std::to_string(m.dim));
  }
  if (r.remaining() != count * sizeof(float)) {
    throw IngestError(IngestFault::kMalformed, "feature file has trailing bytes");
  }
  m.data.resize(count);
  r.get_f32s(m.data);
  for (std::size_t i = 0; i < m.data.size(); ++i) {
    if (!std::isfinite(m.data[i])) {
      throw IngestError(IngestFault::kNonFinite,
                        "feature file has non-finite value at frame " + std::to_string(i / m.dim));
    }
  }
  return m;
}

void save_feature_file(const std::filesystem::path& path, const FeatureMatrix& m) {
  detail::write_file_bytes(path, encode_feature_file(m));
}

FeatureMatrix load_feature_file(const std::filesystem::path& path) {
  auto bytes = detail::read_file_bytes(path);
  try {
    return decode_feature_file(bytes);
  } catch (const IngestError& e) {
    throw IngestError(e.fault(), path.string() + ": " + e.what());
  }
}

FeatureMatrix stack_frames(std::span<const FeatureMatrix> parts) {
  FeatureMatrix out;
  if (parts.empty()) return out;
  out.dim = parts.front().dim;
  for (const auto& p : parts) {
    if (p.dim != out.dim) throw ValidationError("cannot stack feature matrices of different dim");
    out.n_frames += p.n_frames;
    out.data.insert(out.data.end(), p.data.begin(), p.data.end());
  }
  return out;
}

void save_token_file(const std::filesystem::path& path, std::span<const std::uint32_t> tokens) {
  std::string s;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) s += ' ';
    s += std::to_string(tokens[i]);
  }
  s += '\n';
  detail::write_file_text(path, s);
}

SpeechTokenSeq load_token_file(const std::filesystem::path& path) {
  const std::string text = detail::read_file_text(path);
  SpeechTokenSeq out;
  const char* p = text.data();
  const char* end = p + text.size();
  while (p < end) {
    while (p < end && std::isspace(static_cast<unsigned char>(*p))) ++p;
    if (p == end) break;
    std::uint32_t v = 0;
    auto [next, ec] = std::from_chars(p, end, v);
    if (ec != std::errc()) {
      throw IngestError(IngestFault::kMalformed, path.string() + ": token file has a non-integer entry");
    }
    out.push_back(v);
    p = next;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Manifest

std::array<std::size_t, kNumTasks> Manifest::task_counts() const {
  std::array<std::size_t, kNumTasks> counts{};
  for (const auto& r : records) ++counts[task_index(r.task)];
  return counts;
}

std::filesystem::path Manifest::resolve(const std::string& relative) const {
  std::filesystem::path p(relative);
  if (p.is_absolute() || base_dir.empty()) return p;
  return base_dir / p;
}

void validate(const ManifestRecord& record) {
  const bool text = record.text.has_value();
  const bool speech = record.has_speech();
  const std::string who = "record '" + record.utt_id + "' (" + std::string(to_string(record.task)) + ")";
  switch (record.task) {
    case Task::kTextLM:
      if (!text) throw ValidationError(who + " is missing text");
      if (speech) throw ValidationError(who + " must not carry a speech side");
      break;
    case Task::kSpeechLM:
      if (!speech) throw ValidationError(who + " is missing a speech side");
      if (text) throw ValidationError(who + " must not carry text");
      break;
    case Task::kAsr:
    case Task::kTts:
      if (!text) throw ValidationError(who + " is missing text");
      if (!speech) throw ValidationError(who + " is missing a speech side");
      break;
  }
}

namespace {

std::optional<std::string> optional_string(const json& obj, const char* key, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) {
    throw ValidationError("manifest line " + std::to_string(line) + ": field '" + key +
                          "' must be a string");
  }
  return it->get<std::string>();
}

}  // namespace

Manifest parse_manifest(std::string_view jsonl, std::filesystem::path base_dir) {
  Manifest m;
  m.base_dir = std::move(base_dir);
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < jsonl.size()) {
    std::size_t eol = jsonl.find('\n', pos);
    if (eol == std::string_view::npos) eol = jsonl.size();
    std::string_view line = jsonl.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;

    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw IngestError(IngestFault::kMalformed,
                        "manifest line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!obj.is_object()) {
      throw IngestError(IngestFault::kMalformed,
                        "manifest line " + std::to_string(line_no) + " is not a JSON object");
    }
    ManifestRecord rec;
    auto id = optional_string(obj, "utt_id", line_no);
    if (!id) throw ValidationError("manifest line " + std::to_string(line_no) + ": missing utt_id");
    rec.utt_id = *id;
    auto task_name = optional_string(obj, "task", line_no);
    if (!task_name) throw ValidationError("manifest line " + std::to_string(line_no) + ": missing task");
    auto task = parse_task(*task_name);
    if (!task) {
      throw ValidationError("manifest line " + std::to_string(line_no) + ": unknown task '" +
                            *task_name + "'");
    }
    rec.task = *task;
    rec.text = optional_string(obj, "text", line_no);
    rec.feature_path = optional_string(obj, "feature_path", line_no);
    rec.token_path = optional_string(obj, "token_path", line_no);
    validate(rec);
    m.records.push_back(std::move(rec));
  }
  return m;
}

Manifest load_manifest(const std::filesystem::path& path) {
  return parse_manifest(detail::read_file_text(path), path.parent_path());
}

std::string dump_manifest(const Manifest& manifest) {
  std::string out;
  for (const auto& r : manifest.records) {
    json obj;
    obj["utt_id"] = r.utt_id;
    obj["task"] = std::string(to_string(r.task));
    if (r.text) obj["text"] = *r.text;
    if (r.feature_path) obj["feature_path"] = *r.feature_path;
    if (r.token_path) obj["token_path"] = *r.token_path;
    out += obj.dump();
    out += '\n';
  }
  return out;
}

void save_manifest(const std::filesystem::path& path, const Manifest& manifest) {
  detail::write_file_text(path, dump_manifest(manifest));
}

SpeechTokenSeq load_record_tokens(const Manifest& manifest, const ManifestRecord& record) {
  if (!record.token_path) {
    throw ValidationError("record '" + record.utt_id + "' has no token_path");
  }
  return load_token_file(manifest.resolve(*record.token_path));
}

// ---------------------------------------------------------------------------
// Toy domain

ToyDomainSpec ToyDomainSpec::lowercase(std::uint64_t seed) {
  ToyDomainSpec spec;
  for (char c = 'a'; c <= 'z'; ++c) spec.charset.emplace_back(1, c);
  spec.seed = seed;
  return spec;
}

std::string dump_toy_spec(const ToyDomainSpec& spec) {
  json j;
  j["format"] = "voxt-toy-domain";
  j["version"] = 1;
  j["charset"] = spec.charset;
  j["arity"] = spec.arity;
  j["dup_prob"] = spec.dup_prob;
  j["seed"] = spec.seed;
  j["num_units"] = spec.num_units;
  j["lexicon_size"] = spec.lexicon_size;
  j["min_word_len"] = spec.min_word_len;
  j["max_word_len"] = spec.max_word_len;
  return j.dump(2);
}

ToyDomainSpec parse_toy_spec(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("toy domain spec: ") + e.what());
  }
  ToyDomainSpec spec;
  try {
    if (j.contains("charset")) {
      if (j["charset"].is_string()) {
        spec.charset = split_utf8(j["charset"].get<std::string>());
      } else {
        spec.charset = j["charset"].get<std::vector<std::string>>();
      }
    }
    spec.arity = j.value("arity", spec.arity);
    spec.dup_prob = j.value("dup_prob", spec.dup_prob);
    spec.seed = j.value("seed", spec.seed);
    spec.num_units = j.value("num_units", spec.num_units);
    spec.lexicon_size = j.value("lexicon_size", spec.lexicon_size);
    spec.min_word_len = j.value("min_word_len", spec.min_word_len);
    spec.max_word_len = j.value("max_word_len", spec.max_word_len);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("toy domain spec: ") + e.what());
  }
  return spec;
}

ToyDomain::ToyDomain(ToyDomainSpec spec) : spec_(std::move(spec)) {
  if (spec_.charset.empty()) throw ValidationError("toy domain charset is empty");
  std::set<std::string> seen;
  for (const auto& c : spec_.charset) {
    if (c.empty() || c == " ") throw ValidationError("toy charset symbols must be non-empty and not a space");
    if (!seen.insert(c).second) throw ValidationError("toy charset has duplicate symbol '" + c + "'");
  }
  if (spec_.arity < 2) {
    throw ValidationError("toy arity must be at least 2 so that repeated units stay removable");
  }
  if (spec_.num_units < spec_.arity + 1) {
    throw ValidationError("toy num_units too small for the requested arity");
  }
  if (!(spec_.dup_prob >= 0.0 && spec_.dup_prob <= 1.0)) {
    throw ValidationError("toy dup_prob must lie in [0, 1]");
  }
  if (spec_.min_word_len < 1 || spec_.min_word_len > spec_.max_word_len) {
    throw ValidationError("toy word length range is invalid");
  }

  // Position group j holds units u in [1, num_units) with (u - 1) % arity == j.
  std::vector<std::vector<std::uint32_t>> groups(spec_.arity);
  for (std::uint32_t u = 1; u < spec_.num_units; ++u) groups[(u - 1) % spec_.arity].push_back(u);
  std::uint64_t capacity = 1;
  for (const auto& g : groups) {
    capacity *= g.size();
    if (capacity >= spec_.charset.size()) break;
  }
  if (capacity < spec_.charset.size()) {
    throw ValidationError("toy domain cannot map " + std::to_string(spec_.charset.size()) +
                          " symbols injectively with " + std::to_string(spec_.num_units) +
                          " units and arity " + std::to_string(spec_.arity));
  }

  // Draw distinct tuples for each symbol.
  Rng rng(Rng::mix(spec_.seed, 0));
  std::set<std::vector<std::uint32_t>> used;
  tuples_.reserve(spec_.charset.size() * spec_.arity);
  for (std::size_t c = 0; c < spec_.charset.size(); ++c) {
    std::vector<std::uint32_t> t(spec_.arity);
    do {
      for (std::uint32_t j = 0; j < spec_.arity; ++j) t[j] = groups[j][rng.below(groups[j].size())];
    } while (!used.insert(t).second);
    tuples_.insert(tuples_.end(), t.begin(), t.end());
  }

  Rng lex_rng(Rng::mix(spec_.seed, 1));
  std::set<std::string> words;
  const std::size_t max_attempts = 1000 * static_cast<std::size_t>(spec_.lexicon_size) + 1000;
  std::size_t attempts = 0;
  while (lexicon_.size() < spec_.lexicon_size) {
    if (++attempts > max_attempts) throw ValidationError("toy lexicon cannot be filled with distinct words");
    const auto len = spec_.min_word_len + lex_rng.below(spec_.max_word_len - spec_.min_word_len + 1);
    std::string w;
    for (std::uint64_t i = 0; i < len; ++i) w += spec_.charset[lex_rng.below(spec_.charset.size())];
    if (words.insert(w).second) lexicon_.push_back(std::move(w));
  }
}

std::span<const std::uint32_t> ToyDomain::tuple(std::size_t char_index) const {
  return {tuples_.data() + char_index * spec_.arity, spec_.arity};
}

std::vector<std::string> ToyDomain::split_symbols(std::string_view text) const {
  return split_utf8(text);
}

SpeechTokenSeq ToyDomain::render(std::string_view text) const {
  SpeechTokenSeq out;
  bool pending_boundary = false;
  for (const auto& sym : split_symbols(text)) {
    if (sym == " ") {
      pending_boundary = !out.empty();
      continue;
    }
    auto it = std::find(spec_.charset.begin(), spec_.charset.end(), sym);
    if (it == spec_.charset.end()) throw ValidationError("symbol '" + sym + "' is not in the toy charset");
    if (pending_boundary) {
      out.push_back(kBoundaryUnit);
      pending_boundary = false;
    }
    auto t = tuple(static_cast<std::size_t>(it - spec_.charset.begin()));
    out.insert(out.end(), t.begin(), t.end());
  }
  return out;
}

SpeechTokenSeq ToyDomain::render(std::string_view text, Rng& rng) const {
  SpeechTokenSeq clean = render(text);
  SpeechTokenSeq out;
  out.reserve(clean.size() * 2);
  for (auto u : clean) {
    out.push_back(u);
    if (spec_.dup_prob > 0.0 && rng.bernoulli(spec_.dup_prob)) out.push_back(u);
  }
  return out;
}

std::string ToyDomain::invert(std::span<const std::uint32_t> units) const {
  std::map<std::vector<std::uint32_t>, std::size_t> lookup;
  for (std::size_t c = 0; c < spec_.charset.size(); ++c) {
    auto t = tuple(c);
    lookup.emplace(std::vector<std::uint32_t>(t.begin(), t.end()), c);
  }
  std::vector<std::vector<std::uint32_t>> words(1);
  for (std::size_t i = 0; i < units.size(); ++i) {
    if (i > 0 && units[i] == units[i - 1]) continue;
    if (units[i] == kBoundaryUnit) {
      if (!words.back().empty()) words.emplace_back();
    } else {
      words.back().push_back(units[i]);
    }
  }
  if (words.back().empty()) words.pop_back();

  std::string text;
  for (std::size_t w = 0; w < words.size(); ++w) {
    if (w) text += ' ';
    const auto& word = words[w];
    for (std::size_t i = 0; i < word.size(); i += spec_.arity) {
      if (i + spec_.arity > word.size()) {
        text += '?';
        break;
      }
      auto it = lookup.find(std::vector<std::uint32_t>(word.begin() + i, word.begin() + i + spec_.arity));
      text += it == lookup.end() ? std::string("?") : spec_.charset[it->second];
    }
  }
  return text;
}

std::vector<float> ToyDomain::prototype(std::uint32_t unit, std::uint32_t dim) const {
  Rng rng(Rng::mix(spec_.seed, 1000 + unit));
  std::vector<float> p(dim);
  for (auto& v : p) v = static_cast<float>(rng.normal());
  return p;
}

FeatureMatrix ToyDomain::render_features(std::span<const std::uint32_t> units, std::uint32_t dim,
                                         double noise_std, Rng& rng) const {
  FeatureMatrix m(static_cast<std::uint32_t>(units.size()), dim);
  std::vector<std::vector<float>> protos(spec_.num_units);
  for (std::size_t i = 0; i < units.size(); ++i) {
    if (units[i] >= spec_.num_units) throw ValidationError("unit out of range for toy domain");
    auto& proto = protos[units[i]];
    if (proto.empty()) proto = prototype(units[i], dim);
    auto row = m.row(i);
    for (std::uint32_t d = 0; d < dim; ++d) {
      row[d] = proto[d] + static_cast<float>(noise_std * rng.normal());
    }
  }
  return m;
}

std::vector<std::uint32_t> ToyDomain::align_centroids(std::span<const float> centroids,
                                                      std::uint32_t dim) const {
  const std::size_t k = centroids.size() / dim;
  std::vector<std::vector<float>> protos;
  for (std::uint32_t u = 0; u < spec_.num_units; ++u) protos.push_back(prototype(u, dim));
  std::vector<std::uint32_t> map(k);
  for (std::size_t c = 0; c < k; ++c) {
    double best = std::numeric_limits<double>::infinity();
    for (std::uint32_t u = 0; u < spec_.num_units; ++u) {
      double d = 0.0;
      for (std::uint32_t j = 0; j < dim; ++j) {
        const double diff = static_cast<double>(centroids[c * dim + j]) - protos[u][j];
        d += diff * diff;
      }
      if (d < best) {
        best = d;
        map[c] = u;
      }
    }
  }
  return map;
}

std::vector<ToyUtterance> gen_toy_corpus(const ToyDomainSpec& spec, std::size_t n_utts,
                                         std::pair<std::uint32_t, std::uint32_t> len_range) {
  if (len_range.first < 1 || len_range.first > len_range.second) {
    throw ValidationError("toy corpus word-count range is invalid");
  }
  ToyDomain domain(spec);
  Rng rng(Rng::mix(spec.seed, 2));
  const auto& lex = domain.lexicon();
  std::vector<ToyUtterance> out;
  out.reserve(n_utts);
  for (std::size_t n = 0; n < n_utts; ++n) {
    const auto words = len_range.first + rng.below(len_range.second - len_range.first + 1);
    ToyUtterance u;
    for (std::uint64_t w = 0; w < words; ++w) {
      if (w) u.text += ' ';
      u.text += lex[rng.below(lex.size())];
    }
    u.speech = domain.render(u.text, rng);
    out.push_back(std::move(u));
  }
  return out;
}

}  // namespace voxt
