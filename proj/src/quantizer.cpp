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

#include "voxt/quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <nlohmann/json.hpp>

#include "binary_io.hpp"
#include "voxt/error.hpp"
#include "voxt/random.hpp"

namespace voxt {

namespace {

constexpr int kCodebookVersion = 1;

double squared_distance(const double* a, const double* b, std::size_t dim) {
  double s = 0.0;
  for (std::size_t j = 0; j < dim; ++j) {
    const double d = a[j] - b[j];
    s += d * d;
  }
  return s;
}

struct Lloyd {
  std::size_t n, dim, k;
  std::vector<double> x;        // n * dim
  std::vector<double> centers;  // k * dim
  std::vector<std::uint32_t> label;
  std::vector<double> dist;     // distance of each point to its labelled center

  const double* point(std::size_t i) const { return x.data() + i * dim; }
  double* center(std::size_t j) { return centers.data() + j * dim; }

  void assign_all() {
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      std::uint32_t arg = 0;
      for (std::size_t j = 0; j < k; ++j) {
        const double d = squared_distance(point(i), centers.data() + j * dim, dim);
        if (d < best) {
          best = d;
          arg = static_cast<std::uint32_t>(j);
        }
      }
      label[i] = arg;
      dist[i] = best;
    }
  }

  // Moves the farthest point of a multi-member cluster into each empty one.
  void repair_empty() {
    std::vector<std::size_t> count(k, 0);
    for (auto l : label) ++count[l];
    for (std::size_t j = 0; j < k; ++j) {
      if (count[j] != 0) continue;
      std::size_t far = n;
      double far_d = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (count[label[i]] > 1 && dist[i] > far_d) {
          far_d = dist[i];
          far = i;
        }
      }
      if (far == n) continue;
      --count[label[far]];
      ++count[j];
      label[far] = static_cast<std::uint32_t>(j);
      dist[far] = 0.0;
      std::copy_n(point(far), dim, center(j));
    }
  }

  void update_means() {
    std::vector<double> sums(k * dim, 0.0);
    std::vector<std::size_t> count(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++count[label[i]];
      double* s = sums.data() + label[i] * dim;
      for (std::size_t j = 0; j < dim; ++j) s[j] += point(i)[j];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (count[c] == 0) continue;  // keeps its previous position
      for (std::size_t j = 0; j < dim; ++j) {
        centers[c * dim + j] = sums[c * dim + j] / static_cast<double>(count[c]);
      }
    }
  }

  double total_distortion() const {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      s += squared_distance(point(i), centers.data() + label[i] * dim, dim);
    }
    return s;
  }

  // Greedy k-means++: each new center is the best of several D^2 samples.
  void seed_plus_plus(Rng& rng) {
    const std::size_t trials = 2 + static_cast<std::size_t>(std::log(static_cast<double>(k)));
    std::vector<double> d2(n);
    const std::size_t first = rng.below(n);
    std::copy_n(point(first), dim, center(0));
    for (std::size_t i = 0; i < n; ++i) d2[i] = squared_distance(point(i), point(first), dim);

    std::vector<double> cand_d2(n);
    std::vector<double> best_d2(n);
    for (std::size_t c = 1; c < k; ++c) {
      double total = 0.0;
      for (double v : d2) total += v;
      std::size_t best_idx = n;
      double best_pot = std::numeric_limits<double>::infinity();
      for (std::size_t t = 0; t < trials; ++t) {
        std::size_t idx;
        if (total > 0.0) {
          double r = rng.uniform() * total;
          idx = 0;
          for (; idx + 1 < n; ++idx) {
            r -= d2[idx];
            if (r < 0.0) break;
          }
          // rounding at the tail can land on an already chosen point
          for (std::size_t step = 0; d2[idx] == 0.0 && step < n; ++step) idx = (idx + 1) % n;
        } else {
          idx = rng.below(n);
        }
        double pot = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          cand_d2[i] = std::min(d2[i], squared_distance(point(i), point(idx), dim));
          pot += cand_d2[i];
        }
        if (pot < best_pot) {
          best_pot = pot;
          best_idx = idx;
          best_d2.swap(cand_d2);
        }
      }
      std::copy_n(point(best_idx), dim, center(c));
      d2.swap(best_d2);
      best_d2.resize(n);
    }
  }
};

}  // namespace

Codebook train_codebook(const FeatureMatrix& frames, const KMeansOptions& options,
                        KMeansReport* report) {
  validate(frames);
  if (options.k == 0) throw ValidationError("k-means requires k >= 1");
  if (options.max_iters == 0) throw ValidationError("k-means requires max_iters >= 1");
  if (frames.n_frames < options.k) {
    throw ValidationError("k-means needs at least k frames (" + std::to_string(frames.n_frames) +
                          " < " + std::to_string(options.k) + ")");
  }

  Lloyd s{frames.n_frames, frames.dim, options.k, {}, {}, {}, {}};
  s.x.assign(frames.data.begin(), frames.data.end());
  s.centers.assign(s.k * s.dim, 0.0);
  s.label.assign(s.n, 0);
  s.dist.assign(s.n, 0.0);

  Rng rng(options.seed);
  s.seed_plus_plus(rng);
  s.assign_all();
  s.repair_empty();

  KMeansReport local;
  local.distortion.push_back(s.total_distortion());
  for (std::uint32_t it = 0; it < options.max_iters; ++it) {
    const auto previous = s.label;
    s.update_means();
    s.assign_all();
    s.repair_empty();
    local.distortion.push_back(s.total_distortion());
    local.iterations = it + 1;
    if (s.label == previous) {
      local.converged = true;
      break;
    }
  }
  if (report) *report = std::move(local);

  Codebook cb;
  cb.k = options.k;
  cb.dim = frames.dim;
  cb.seed = options.seed;
  cb.centroids.resize(s.centers.size());
  std::transform(s.centers.begin(), s.centers.end(), cb.centroids.begin(),
                 [](double v) { return static_cast<float>(v); });
  return cb;
}

SpeechTokenSeq assign(const FeatureMatrix& frames, const Codebook& codebook) {
  if (frames.dim != codebook.dim) {
    throw ValidationError("frame dim " + std::to_string(frames.dim) + " does not match codebook dim " +
                          std::to_string(codebook.dim));
  }
  SpeechTokenSeq out(frames.n_frames);
  for (std::size_t i = 0; i < frames.n_frames; ++i) {
    const auto row = frames.row(i);
    double best = std::numeric_limits<double>::infinity();
    std::uint32_t arg = 0;
    for (std::uint32_t j = 0; j < codebook.k; ++j) {
      const auto c = codebook.centroid(j);
      double d = 0.0;
      for (std::size_t t = 0; t < codebook.dim; ++t) {
        const double diff = static_cast<double>(row[t]) - static_cast<double>(c[t]);
        d += diff * diff;
      }
      if (d < best) {
        best = d;
        arg = j;
      }
    }
    out[i] = arg;
  }
  return out;
}

double distortion(const FeatureMatrix& frames, const Codebook& codebook) {
  const auto labels = assign(frames, codebook);
  double s = 0.0;
  for (std::size_t i = 0; i < frames.n_frames; ++i) {
    const auto row = frames.row(i);
    const auto c = codebook.centroid(labels[i]);
    for (std::size_t t = 0; t < codebook.dim; ++t) {
      const double diff = static_cast<double>(row[t]) - static_cast<double>(c[t]);
      s += diff * diff;
    }
  }
  return s;
}

SpeechTokenSeq dedup_runs(std::span<const std::uint32_t> seq) {
  SpeechTokenSeq out;
  out.reserve(seq.size());
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (i == 0 || seq[i] != seq[i - 1]) out.push_back(seq[i]);
  }
  return out;
}

std::filesystem::path codebook_sidecar_path(const std::filesystem::path& fmx_path) {
  auto p = fmx_path;
  p.replace_extension(".json");
  return p;
}

void save_codebook(const std::filesystem::path& fmx_path, const Codebook& codebook) {
  FeatureMatrix m(codebook.k, codebook.dim);
  m.data = codebook.centroids;
  save_feature_file(fmx_path, m);
  nlohmann::json j;
  j["format"] = "voxt-codebook";
  j["version"] = kCodebookVersion;
  j["k"] = codebook.k;
  j["dim"] = codebook.dim;
  j["seed"] = codebook.seed;
  j["digest"] = codebook_digest(codebook);
  detail::write_file_text(codebook_sidecar_path(fmx_path), j.dump(2) + "\n");
}

Codebook load_codebook(const std::filesystem::path& fmx_path) {
  const auto m = load_feature_file(fmx_path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(detail::read_file_text(codebook_sidecar_path(fmx_path)));
  } catch (const nlohmann::json::parse_error& e) {
    throw IngestError(IngestFault::kMalformed, "codebook sidecar: " + std::string(e.what()));
  }
  if (j.value("format", std::string()) != "voxt-codebook") {
    throw VersionError("codebook sidecar has an unexpected format tag");
  }
  if (j.value("version", 0) != kCodebookVersion) {
    throw VersionError("codebook sidecar version " + std::to_string(j.value("version", 0)) +
                       " is not supported");
  }
  Codebook cb;
  cb.k = j.value("k", 0u);
  cb.dim = j.value("dim", 0u);
  cb.seed = j.value("seed", std::uint64_t{0});
  if (cb.k != m.n_frames || cb.dim != m.dim || cb.k == 0) {
    throw CorruptError("codebook sidecar does not match centroid matrix shape");
  }
  cb.centroids = m.data;
  return cb;
}

std::string codebook_digest(const Codebook& codebook) {
  detail::ByteWriter w;
  w.put_u32(codebook.k);
  w.put_u32(codebook.dim);
  w.put_u64(codebook.seed);
  w.put_f32s(codebook.centroids);
  return detail::hex64(detail::fnv1a64(w.bytes()));
}

}  // namespace voxt
