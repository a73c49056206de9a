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

#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "voxt/corpus.hpp"
#include "voxt/error.hpp"

using namespace voxt;

namespace {

FeatureMatrix random_matrix(Rng& rng, std::uint32_t frames, std::uint32_t dim) {
  FeatureMatrix m(frames, dim);
  for (auto& v : m.data) v = static_cast<float>(rng.normal() * 3.0);
  return m;
}

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("voxt_unit_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

IngestFault fault_of(std::span<const char> bytes) {
  try {
    decode_feature_file(bytes);
  } catch (const IngestError& e) {
    return e.fault();
  }
  FAIL("expected an ingest error");
  return IngestFault::kOpen;
}

}  // namespace

TEST_CASE("feature file: empty matrix keeps its dim") {
  FeatureMatrix m(0, 39);
  const auto back = decode_feature_file(encode_feature_file(m));
  CHECK(back.n_frames == 0);
  CHECK(back.dim == 39);
  CHECK(back.data.empty());
}

TEST_CASE("feature file: write then read is bit exact") {
  Rng rng(7);
  const auto dir = temp_dir("fmx");
  for (int i = 0; i < 20; ++i) {
    const auto m = random_matrix(rng, static_cast<std::uint32_t>(rng.below(30)), 1 + static_cast<std::uint32_t>(rng.below(12)));
    save_feature_file(dir / "a.fmx", m);
    CHECK(load_feature_file(dir / "a.fmx") == m);
  }
}

TEST_CASE("feature file: faults are distinguished") {
  Rng rng(1);
  auto bytes = encode_feature_file(random_matrix(rng, 10, 4));
  SUBCASE("missing row") {
    bytes.resize(bytes.size() - 4 * sizeof(float));
    CHECK(fault_of(bytes) == IngestFault::kTruncated);
  }
  SUBCASE("bad magic") {
    bytes[0] = 'X';
    CHECK(fault_of(bytes) == IngestFault::kBadMagic);
  }
  SUBCASE("non finite value") {
    const float nan = std::numeric_limits<float>::quiet_NaN();
    std::memcpy(bytes.data() + bytes.size() - sizeof(float), &nan, sizeof(float));
    CHECK(fault_of(bytes) == IngestFault::kNonFinite);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_feature_file("/nonexistent/voxt.fmx"), IngestError);
  }
}

TEST_CASE("token files round trip") {
  const auto dir = temp_dir("tok");
  const SpeechTokenSeq seq{3, 1, 4, 1, 5, 9, 2, 6};
  save_token_file(dir / "t.tok", seq);
  CHECK(load_token_file(dir / "t.tok") == seq);
  save_token_file(dir / "e.tok", SpeechTokenSeq{});
  CHECK(load_token_file(dir / "e.tok").empty());
}

TEST_CASE("manifest validation and counts") {
  CHECK(parse_manifest("").records.empty());
  CHECK_THROWS_AS(parse_manifest(R"({"utt_id":"a","task":"asr","token_path":"a.tok"})"), ValidationError);
  CHECK_THROWS_AS(parse_manifest(R"({"utt_id":"a","task":"textlm","text":"x","token_path":"a.tok"})"),
                  ValidationError);
  CHECK_THROWS_AS(parse_manifest(R"({"utt_id":"a","task":"karaoke","text":"x"})"), ValidationError);
  CHECK_THROWS_AS(parse_manifest("{not json"), IngestError);

  Rng rng(3);
  Manifest m;
  std::array<std::size_t, kNumTasks> expected{};
  for (int i = 0; i < 40; ++i) {
    ManifestRecord r;
    r.utt_id = "u" + std::to_string(i);
    r.task = kAllTasks[rng.below(kNumTasks)];
    if (r.task != Task::kSpeechLM) r.text = "hello";
    if (r.task != Task::kTextLM) r.token_path = "tokens/" + r.utt_id + ".tok";
    ++expected[task_index(r.task)];
    m.records.push_back(r);
  }
  const auto back = parse_manifest(dump_manifest(m));
  CHECK(back.records == m.records);
  CHECK(back.task_counts() == expected);
}

TEST_CASE("toy domain: render and invert") {
  const ToyDomain dom(ToyDomainSpec::lowercase(5));
  CHECK(dom.invert(dom.render("abc xyz")) == "abc xyz");
  CHECK(dom.render("").empty());

  std::set<std::vector<std::uint32_t>> tuples;
  for (std::size_t i = 0; i < 26; ++i) {
    const auto t = dom.tuple(i);
    tuples.emplace(t.begin(), t.end());
  }
  CHECK(tuples.size() == 26);

  Rng rng(4);
  for (const auto& word : dom.lexicon()) {
    const auto noisy = dom.render(word, rng);
    CHECK(noisy.size() >= dom.render(word).size());
    CHECK(dom.invert(noisy) == word);
  }
}

TEST_CASE("toy domain: spec errors") {
  auto spec = ToyDomainSpec::lowercase();
  spec.charset.clear();
  CHECK_THROWS_AS(ToyDomain{spec}, ValidationError);
  spec = ToyDomainSpec::lowercase();
  spec.charset.push_back("a");
  CHECK_THROWS_AS(ToyDomain{spec}, ValidationError);
  spec = ToyDomainSpec::lowercase();
  spec.num_units = 3;
  CHECK_THROWS_AS(ToyDomain{spec}, ValidationError);
}

TEST_CASE("gen_toy_corpus") {
  auto spec = ToyDomainSpec::lowercase(11);
  CHECK(gen_toy_corpus(spec, 0, {1, 4}).empty());

  const auto a = gen_toy_corpus(spec, 50, {1, 4});
  CHECK(a == gen_toy_corpus(spec, 50, {1, 4}));

  spec.dup_prob = 0.0;
  const ToyDomain dom(spec);
  for (const auto& u : gen_toy_corpus(spec, 50, {1, 4})) {
    CHECK(dom.invert(u.speech) == u.text);
    CHECK(u.speech == dom.render(u.text));
  }
}

TEST_CASE("toy spec json round trip") {
  auto spec = ToyDomainSpec::lowercase(99);
  spec.dup_prob = 0.125;
  CHECK(parse_toy_spec(dump_toy_spec(spec)) == spec);
  CHECK_THROWS_AS(parse_toy_spec("[]"), ConfigError);
}
