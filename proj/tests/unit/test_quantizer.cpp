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

#include <filesystem>
#include <set>

#include "doctest.h"
#include "voxt/error.hpp"
#include "voxt/quantizer.hpp"

using namespace voxt;

namespace {

FeatureMatrix points(std::initializer_list<std::pair<float, float>> xs) {
  FeatureMatrix m(static_cast<std::uint32_t>(xs.size()), 2);
  std::size_t i = 0;
  for (auto [x, y] : xs) {
    m.data[i++] = x;
    m.data[i++] = y;
  }
  return m;
}

}  // namespace

TEST_CASE("k-means separates two clear clusters") {
  const auto frames = points({{0, 0}, {0, 1}, {10, 10}, {10, 11}});
  const auto cb = train_codebook(frames, {2, 100, 3});
  const auto labels = assign(frames, cb);
  CHECK(labels[0] == labels[1]);
  CHECK(labels[2] == labels[3]);
  CHECK(labels[0] != labels[2]);
  CHECK(distortion(frames, cb) == doctest::Approx(1.0));
}

TEST_CASE("k equal to the frame count gives zero distortion") {
  const auto frames = points({{0, 0}, {3, 1}, {-2, 5}, {7, 7}, {1, -1}});
  const auto cb = train_codebook(frames, {5, 50, 1});
  CHECK(distortion(frames, cb) == 0.0);
  const auto labels = assign(frames, cb);
  CHECK(std::set<std::uint32_t>(labels.begin(), labels.end()).size() == 5);
}

TEST_CASE("k-means distortion never increases and runs are deterministic") {
  Rng rng(2);
  FeatureMatrix frames(200, 3);
  for (auto& v : frames.data) v = static_cast<float>(rng.normal());
  KMeansReport report;
  const auto cb = train_codebook(frames, {8, 50, 17}, &report);
  REQUIRE(!report.distortion.empty());
  for (std::size_t i = 1; i < report.distortion.size(); ++i) {
    CHECK(report.distortion[i] <= report.distortion[i - 1] + 1e-9);
  }
  CHECK(train_codebook(frames, {8, 50, 17}) == cb);
}

TEST_CASE("k-means argument errors") {
  const auto frames = points({{0, 0}, {1, 1}});
  CHECK_THROWS_AS(train_codebook(frames, {3, 10, 0}), ValidationError);
  CHECK_THROWS_AS(train_codebook(frames, {0, 10, 0}), ValidationError);
}

TEST_CASE("assign: exact match and tie break") {
  Codebook cb;
  cb.k = 4;
  cb.dim = 1;
  cb.centroids = {5.0f, -1.0f, 9.0f, 1.0f};
  const auto labels = assign(FeatureMatrix(0, 1), cb);
  CHECK(labels.empty());

  FeatureMatrix f(3, 1);
  f.data = {9.0f, 0.0f, -1.0f};
  CHECK(assign(f, cb) == SpeechTokenSeq{2, 1, 1});

  FeatureMatrix wrong(1, 2);
  CHECK_THROWS_AS(assign(wrong, cb), ValidationError);
}

TEST_CASE("dedup_runs") {
  CHECK(dedup_runs(SpeechTokenSeq{7, 7, 7}) == SpeechTokenSeq{7});
  CHECK(dedup_runs(SpeechTokenSeq{}).empty());
  CHECK(dedup_runs(SpeechTokenSeq{3, 3, 5, 3}) == SpeechTokenSeq{3, 5, 3});
}

TEST_CASE("codebook save and load") {
  Rng rng(5);
  Codebook cb;
  cb.k = 3;
  cb.dim = 4;
  cb.seed = 42;
  for (int i = 0; i < 12; ++i) cb.centroids.push_back(static_cast<float>(rng.normal()));
  const auto path = std::filesystem::temp_directory_path() / "voxt_unit_cb.fmx";
  save_codebook(path, cb);
  const auto back = load_codebook(path);
  CHECK(back == cb);
  CHECK(codebook_digest(back) == codebook_digest(cb));
  cb.centroids[0] += 1.0f;
  CHECK(codebook_digest(back) != codebook_digest(cb));
}
