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

#include "voxt/vocab.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <set>

#include <nlohmann/json.hpp>

#include "binary_io.hpp"
#include "voxt/error.hpp"

namespace voxt {

using nlohmann::json;

namespace {

constexpr int kVocabVersion = 1;

constexpr std::string_view kSpecialNames[kNumSpecials] = {
    "<start-text>", "<start-speech>", "<generate-text>", "<generate-speech>",
    "<eos>",        "<pad>",          "<unk>",
};

std::uint64_t pair_key(TokenId a, TokenId b) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
         static_cast<std::uint32_t>(b);
}

}  // namespace

std::string_view special_name(Special s) { return kSpecialNames[static_cast<std::size_t>(s)]; }

VoxtVocab VoxtVocab::build(std::vector<std::string> text_symbols, std::uint32_t k) {
  if (text_symbols.empty()) throw ValidationError("text symbol list is empty");
  if (k == 0) throw ValidationError("speech vocabulary size k must be >= 1");
  VoxtVocab v;
  v.text_units_ = std::move(text_symbols);
  v.speech_units_ = k;
  for (std::size_t i = 0; i < v.text_units_.size(); ++i) {
    const auto& sym = v.text_units_[i];
    if (sym.empty()) throw ValidationError("text symbol list contains an empty symbol");
    if (!v.text_lookup_.emplace(sym, v.text_begin() + static_cast<TokenId>(i)).second) {
      throw ValidationError("duplicate text symbol '" + sym + "'");
    }
  }
  v.base_ids_.resize(v.base_size());
  for (std::size_t i = 0; i < v.base_ids_.size(); ++i) v.base_ids_[i] = static_cast<TokenId>(i);
  return v;
}

Modality VoxtVocab::modality(TokenId id) const {
  if (!contains(id)) throw ValidationError("token id " + std::to_string(id) + " is out of range");
  if (id < text_begin()) return Modality::kSpecial;
  if (id < speech_begin()) return Modality::kText;
  if (id < meta_begin()) return Modality::kSpeech;
  return meta_modality_[static_cast<std::size_t>(id - meta_begin())];
}

std::optional<TokenId> VoxtVocab::text_id(std::string_view symbol) const {
  auto it = text_lookup_.find(std::string(symbol));
  if (it == text_lookup_.end()) return std::nullopt;
  return it->second;
}

TokenId VoxtVocab::speech_id(std::uint32_t unit) const {
  if (unit >= speech_units_) return id(Special::kUnk);
  return speech_begin() + static_cast<TokenId>(unit);
}

std::span<const TokenId> VoxtVocab::expansion(TokenId id) const {
  if (!contains(id)) throw ValidationError("token id " + std::to_string(id) + " is out of range");
  if (id < meta_begin()) return {base_ids_.data() + id, 1};
  return meta_expansion_[static_cast<std::size_t>(id - meta_begin())];
}

std::string VoxtVocab::token_string(TokenId id) const {
  switch (modality(id)) {
    case Modality::kSpecial:
      return std::string(special_name(static_cast<Special>(id)));
    case Modality::kText: {
      std::string s;
      for (TokenId b : expansion(id)) s += text_units_[static_cast<std::size_t>(b - text_begin())];
      return s;
    }
    case Modality::kSpeech: {
      std::string s = "[";
      bool first = true;
      for (TokenId b : expansion(id)) {
        if (!first) s += ' ';
        first = false;
        s += std::to_string(b - speech_begin());
      }
      return s + "]";
    }
  }
  return {};
}

TokenId VoxtVocab::add_merge(TokenId left, TokenId right) {
  if (!contains(left) || !contains(right)) throw CorruptError("merge references an undefined id");
  const Modality ml = modality(left);
  const Modality mr = modality(right);
  if (ml == Modality::kSpecial || mr == Modality::kSpecial) {
    throw CorruptError("merges may not involve special tokens");
  }
  if (ml != mr) throw CorruptError("merges may not pair text and speech units");
  if (merge_rank_.contains(pair_key(left, right))) throw CorruptError("duplicate merge rule");

  const TokenId new_id = static_cast<TokenId>(size());
  std::vector<TokenId> exp;
  auto a = expansion(left);
  auto b = expansion(right);
  exp.reserve(a.size() + b.size());
  exp.insert(exp.end(), a.begin(), a.end());
  exp.insert(exp.end(), b.begin(), b.end());
  merge_rank_.emplace(pair_key(left, right), merges_.size());
  merges_.emplace_back(left, right);
  meta_expansion_.push_back(std::move(exp));
  meta_modality_.push_back(ml);
  return new_id;
}

TokenSeq VoxtVocab::merge_run(std::vector<TokenId> run) const {
  if (merges_.empty() || run.size() < 2) return run;
  while (run.size() >= 2) {
    std::size_t best_rank = std::numeric_limits<std::size_t>::max();
    for (std::size_t i = 0; i + 1 < run.size(); ++i) {
      auto it = merge_rank_.find(pair_key(run[i], run[i + 1]));
      if (it != merge_rank_.end() && it->second < best_rank) best_rank = it->second;
    }
    if (best_rank == std::numeric_limits<std::size_t>::max()) break;
    const auto [l, r] = merges_[best_rank];
    const TokenId merged = meta_begin() + static_cast<TokenId>(best_rank);
    std::vector<TokenId> next;
    next.reserve(run.size());
    for (std::size_t i = 0; i < run.size();) {
      if (i + 1 < run.size() && run[i] == l && run[i + 1] == r) {
        next.push_back(merged);
        i += 2;
      } else {
        next.push_back(run[i]);
        ++i;
      }
    }
    run.swap(next);
  }
  return run;
}

TokenSeq VoxtVocab::apply_merges(std::span<const TokenId> ids) const {
  TokenSeq out;
  out.reserve(ids.size());
  std::vector<TokenId> run;
  Modality run_mod = Modality::kSpecial;
  auto flush = [&] {
    if (run.empty()) return;
    auto merged = merge_run(std::move(run));
    out.insert(out.end(), merged.begin(), merged.end());
    run.clear();
  };
  for (TokenId id : ids) {
    const Modality m = modality(id);
    if (m == Modality::kSpecial) {
      flush();
      out.push_back(id);
      continue;
    }
    if (!run.empty() && m != run_mod) flush();
    run_mod = m;
    run.push_back(id);
  }
  flush();
  return out;
}

TokenSeq VoxtVocab::encode(std::span<const Segment> segments) const {
  TokenSeq out;
  for (const auto& seg : segments) {
    TokenSeq ids;
    if (const auto* sp = std::get_if<SpecialRun>(&seg)) {
      for (Special s : *sp) out.push_back(id(s));
      continue;
    }
    if (const auto* tx = std::get_if<TextSymbols>(&seg)) {
      for (const auto& sym : *tx) {
        auto t = text_id(sym);
        ids.push_back(t ? *t : id(Special::kUnk));
      }
    } else {
      for (auto u : std::get<SpeechUnits>(seg)) ids.push_back(speech_id(u));
    }
    auto merged = apply_merges(ids);
    out.insert(out.end(), merged.begin(), merged.end());
  }
  return out;
}

TokenSeq VoxtVocab::encode_text(std::string_view text) const {
  const Segment seg = split_utf8(text);
  return encode(std::span<const Segment>(&seg, 1));
}

TokenSeq VoxtVocab::encode_speech(std::span<const std::uint32_t> units) const {
  const Segment seg = SpeechUnits(units.begin(), units.end());
  return encode(std::span<const Segment>(&seg, 1));
}

std::vector<Segment> VoxtVocab::decode(std::span<const TokenId> ids) const {
  std::vector<Segment> out;
  for (TokenId tok : ids) {
    const Modality m = modality(tok);
    if (out.empty() || modality_of(out.back()) != m) {
      switch (m) {
        case Modality::kSpecial: out.emplace_back(SpecialRun{}); break;
        case Modality::kText: out.emplace_back(TextSymbols{}); break;
        case Modality::kSpeech: out.emplace_back(SpeechUnits{}); break;
      }
    }
    auto& seg = out.back();
    for (TokenId b : expansion(tok)) {
      switch (m) {
        case Modality::kSpecial:
          std::get<SpecialRun>(seg).push_back(static_cast<Special>(b));
          break;
        case Modality::kText:
          std::get<TextSymbols>(seg).push_back(text_units_[static_cast<std::size_t>(b - text_begin())]);
          break;
        case Modality::kSpeech:
          std::get<SpeechUnits>(seg).push_back(static_cast<std::uint32_t>(b - speech_begin()));
          break;
      }
    }
  }
  return out;
}

std::string VoxtVocab::decode_text(std::span<const TokenId> ids) const {
  std::string s;
  for (TokenId tok : ids) {
    const Modality m = modality(tok);
    if (m == Modality::kText) {
      for (TokenId b : expansion(tok)) s += text_units_[static_cast<std::size_t>(b - text_begin())];
    } else if (tok == id(Special::kUnk)) {
      s += '?';
    }
  }
  return s;
}

SpeechTokenSeq VoxtVocab::decode_speech(std::span<const TokenId> ids) const {
  SpeechTokenSeq out;
  for (TokenId tok : ids) {
    if (modality(tok) != Modality::kSpeech) continue;
    for (TokenId b : expansion(tok)) out.push_back(static_cast<std::uint32_t>(b - speech_begin()));
  }
  return out;
}

std::vector<std::uint8_t> VoxtVocab::modality_mask(Modality m, bool include_eos) const {
  std::vector<std::uint8_t> mask(size(), 0);
  for (std::size_t i = 0; i < size(); ++i) {
    mask[i] = modality(static_cast<TokenId>(i)) == m ? 1 : 0;
  }
  if (include_eos) mask[static_cast<std::size_t>(id(Special::kEos))] = 1;
  return mask;
}

std::string VoxtVocab::to_json() const {
  json j;
  j["format"] = "voxt-vocab";
  j["version"] = kVocabVersion;
  std::vector<std::string> specials;
  for (auto name : kSpecialNames) specials.emplace_back(name);
  j["specials"] = specials;
  j["text_units"] = text_units_;
  j["speech_units"] = speech_units_;
  json merges = json::array();
  for (const auto& [l, r] : merges_) merges.push_back({l, r});
  j["merges"] = merges;
  if (codebook_) j["codebook"] = {{"path", codebook_->path}, {"digest", codebook_->digest}};
  return j.dump(1) + "\n";
}

VoxtVocab VoxtVocab::from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw CorruptError(std::string("vocab file is not valid JSON: ") + e.what());
  }
  if (!j.is_object() || j.value("format", std::string()) != "voxt-vocab") {
    throw VersionError("vocab file has an unexpected format tag");
  }
  if (j.value("version", 0) != kVocabVersion) {
    throw VersionError("vocab format version " + std::to_string(j.value("version", 0)) +
                       " is not supported");
  }
  try {
    const auto specials = j.at("specials").get<std::vector<std::string>>();
    if (specials.size() != kNumSpecials ||
        !std::equal(specials.begin(), specials.end(), std::begin(kSpecialNames))) {
      throw CorruptError("vocab special token list does not match this build");
    }
    VoxtVocab v = build(j.at("text_units").get<std::vector<std::string>>(),
                        j.at("speech_units").get<std::uint32_t>());
    for (const auto& m : j.at("merges")) {
      if (!m.is_array() || m.size() != 2) throw CorruptError("merge entry must be a [left, right] pair");
      v.add_merge(m[0].get<TokenId>(), m[1].get<TokenId>());
    }
    if (j.contains("codebook")) {
      v.set_codebook({j["codebook"].value("path", std::string()),
                      j["codebook"].value("digest", std::string())});
    }
    return v;
  } catch (const json::exception& e) {
    throw CorruptError(std::string("vocab file is malformed: ") + e.what());
  }
}

void VoxtVocab::save(const std::filesystem::path& path) const {
  detail::write_file_text(path, to_json());
}

VoxtVocab VoxtVocab::load(const std::filesystem::path& path) {
  return from_json(detail::read_file_text(path));
}

std::string VoxtVocab::digest() const {
  detail::ByteWriter w;
  w.put_u32(static_cast<std::uint32_t>(text_units_.size()));
  for (const auto& s : text_units_) {
    w.put_u32(static_cast<std::uint32_t>(s.size()));
    w.put_bytes(s);
  }
  w.put_u32(speech_units_);
  w.put_u32(static_cast<std::uint32_t>(merges_.size()));
  for (const auto& [l, r] : merges_) {
    w.put_u32(static_cast<std::uint32_t>(l));
    w.put_u32(static_cast<std::uint32_t>(r));
  }
  return detail::hex64(detail::fnv1a64(w.bytes()));
}

// ---------------------------------------------------------------------------
// BPE training

namespace {

struct ChunkTable {
  std::vector<std::vector<TokenId>> chunks;
  std::vector<std::uint64_t> freq;
  std::map<Merge, std::int64_t> pair_count;
  std::map<Merge, std::set<std::size_t>> where;

  void add_pairs(std::size_t c, std::int64_t sign) {
    const auto& w = chunks[c];
    for (std::size_t i = 0; i + 1 < w.size(); ++i) {
      const Merge p{w[i], w[i + 1]};
      auto& cnt = pair_count[p];
      cnt += sign * static_cast<std::int64_t>(freq[c]);
      if (sign > 0) {
        where[p].insert(c);
      } else if (cnt == 0) {
        pair_count.erase(p);
      }
    }
  }
};

}  // namespace

VoxtVocab train_bpe(const VoxtVocab& vocab, std::span<const TokenSeq> corpora,
                    std::size_t target_size, BpeReport* report) {
  if (target_size < vocab.size()) {
    throw ValidationError("BPE target size " + std::to_string(target_size) +
                          " is below the current vocabulary size " + std::to_string(vocab.size()));
  }
  VoxtVocab out = vocab;
  BpeReport local;

  // Collect distinct modality-pure chunks with their frequency.
  std::map<std::vector<TokenId>, std::uint64_t> distinct;
  for (const auto& seq : corpora) {
    const TokenSeq ids = out.apply_merges(seq);
    std::vector<TokenId> run;
    Modality run_mod = Modality::kSpecial;
    auto flush = [&] {
      if (run.size() >= 2) ++distinct[run];
      run.clear();
    };
    for (TokenId id : ids) {
      const Modality m = out.modality(id);
      if (m == Modality::kSpecial) {
        flush();
        continue;
      }
      if (!run.empty() && m != run_mod) flush();
      run_mod = m;
      run.push_back(id);
    }
    flush();
  }

  ChunkTable t;
  for (auto& [chunk, f] : distinct) {
    t.chunks.push_back(chunk);
    t.freq.push_back(f);
  }
  for (std::size_t c = 0; c < t.chunks.size(); ++c) t.add_pairs(c, +1);

  while (out.size() < target_size) {
    // std::map iterates pairs in ascending (left, right) order, so the first
    // maximum found is the tie-break winner.
    const Merge* best = nullptr;
    std::int64_t best_count = 0;
    for (const auto& [p, cnt] : t.pair_count) {
      if (cnt > best_count) {
        best_count = cnt;
        best = &p;
      }
    }
    if (best == nullptr || best_count < 2) break;
    const Merge pair = *best;
    const TokenId merged = out.add_merge(pair.first, pair.second);
    local.merge_counts.push_back(static_cast<std::uint64_t>(best_count));

    const auto affected = t.where[pair];
    t.where.erase(pair);
    for (std::size_t c : affected) {
      t.add_pairs(c, -1);
      auto& w = t.chunks[c];
      std::vector<TokenId> next;
      next.reserve(w.size());
      for (std::size_t i = 0; i < w.size();) {
        if (i + 1 < w.size() && w[i] == pair.first && w[i + 1] == pair.second) {
          next.push_back(merged);
          i += 2;
        } else {
          next.push_back(w[i]);
          ++i;
        }
      }
      w.swap(next);
      t.add_pairs(c, +1);
    }
    t.pair_count.erase(pair);
  }

  if (report) *report = std::move(local);
  return out;
}

}  // namespace voxt
