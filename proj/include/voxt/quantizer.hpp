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
#include <span>
#include <string>
#include <vector>

#include "voxt/corpus.hpp"
#include "voxt/types.hpp"

namespace voxt {

// k centroids over feature frames; defines the discrete speech units.
struct Codebook {
  std::uint32_t k = 0;
  std::uint32_t dim = 0;
  std::uint64_t seed = 0;
  std::vector<float> centroids;  // k * dim, row-major

  std::span<const float> centroid(std::size_t j) const {
    return {centroids.data() + j * dim, dim};
  }

  bool operator==(const Codebook&) const = default;
};

struct KMeansOptions {
  std::uint32_t k = 50;
  std::uint32_t max_iters = 100;
  std::uint64_t seed = 0;
};

struct KMeansReport {
  // Total within-cluster squared distance after each Lloyd iteration; the
  // first entry is measured right after seeding.
  std::vector<double> distortion;
  std::uint32_t iterations = 0;
  bool converged = false;
};

// Lloyd's algorithm with greedy k-means++ seeding. Empty clusters are
// reseeded to the frame farthest from its assigned centroid.
// Throws ValidationError when n_frames < k, k == 0, max_iters == 0 or any
// input value is non-finite.
Codebook train_codebook(const FeatureMatrix& frames, const KMeansOptions& options,
                        KMeansReport* report = nullptr);

// Nearest centroid in squared Euclidean distance; ties go to the lowest index.
SpeechTokenSeq assign(const FeatureMatrix& frames, const Codebook& codebook);

double distortion(const FeatureMatrix& frames, const Codebook& codebook);

// Collapses maximal runs of identical adjacent tokens.
SpeechTokenSeq dedup_runs(std::span<const std::uint32_t> seq);

// Centroids go to `<stem>.fmx`, metadata to the `<stem>.json` sidecar.
void save_codebook(const std::filesystem::path& fmx_path, const Codebook& codebook);
Codebook load_codebook(const std::filesystem::path& fmx_path);

std::filesystem::path codebook_sidecar_path(const std::filesystem::path& fmx_path);

// Stable digest of the centroid payload and metadata, used to pair a
// vocabulary with the codebook that produced its speech units.
std::string codebook_digest(const Codebook& codebook);

}  // namespace voxt
