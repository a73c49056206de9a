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

#include <Eigen/Dense>

#include "voxt/random.hpp"
#include "voxt/types.hpp"

namespace voxt {

struct ModelConfig {
  std::uint32_t vocab_size = 0;
  std::uint32_t n_layers = 1;
  std::uint32_t width = 64;
  std::uint32_t n_heads = 1;
  std::uint32_t max_seq_len = 256;
  std::uint32_t ff_mult = 4;
  double dropout = 0.0;

  // L=12 F=768 H=12, L=24 F=1024 H=16, L=24 F=2048 H=32.
  static ModelConfig small(std::uint32_t vocab_size);
  static ModelConfig medium(std::uint32_t vocab_size);
  static ModelConfig large(std::uint32_t vocab_size);
  // Throws ConfigError for an unknown preset name.
  static ModelConfig preset(std::string_view name, std::uint32_t vocab_size);

  std::uint32_t head_dim() const { return width / n_heads; }
  std::uint32_t ff_width() const { return width * ff_mult; }

  // Throws ConfigError: counts must be >= 1, width divisible by n_heads,
  // dropout in [0, 1).
  void validate() const;

  std::string to_json() const;
  static ModelConfig from_json(std::string_view json);

  bool operator==(const ModelConfig&) const = default;
};

struct TensorSpec {
  std::string name;
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::size_t offset = 0;

  std::size_t size() const { return static_cast<std::size_t>(rows) * cols; }
};

// Named tensors laid out in one flat buffer, in a fixed order.
class ParamLayout {
 public:
  explicit ParamLayout(const ModelConfig& config);

  const std::vector<TensorSpec>& tensors() const { return tensors_; }
  std::size_t total_size() const { return total_; }
  // Throws ValidationError for an unknown name.
  const TensorSpec& find(std::string_view name) const;

  // Tensors whose values are scaled by 1/sqrt(2L) at init.
  static bool is_residual_projection(std::string_view name);

 private:
  std::vector<TensorSpec> tensors_;
  std::size_t total_ = 0;
};

// Eigen chooses how to peel vectorized loops from the buffer address, which
// changes float summation order. Fixed alignment keeps results reproducible.
template <typename T>
using AlignedVector = std::vector<T, Eigen::aligned_allocator<T>>;

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
struct ModelParams {
  ModelConfig config;
  AlignedVector<T> values;

  ModelParams() = default;
  explicit ModelParams(const ModelConfig& cfg);

  ParamLayout layout() const { return ParamLayout(config); }

  Eigen::Map<RowMatrix<T>> tensor(const TensorSpec& spec) {
    return {values.data() + spec.offset, spec.rows, spec.cols};
  }
  Eigen::Map<const RowMatrix<T>> tensor(const TensorSpec& spec) const {
    return {values.data() + spec.offset, spec.rows, spec.cols};
  }
  Eigen::Map<RowMatrix<T>> tensor(std::string_view name) { return tensor(layout().find(name)); }
  Eigen::Map<const RowMatrix<T>> tensor(std::string_view name) const {
    return tensor(layout().find(name));
  }

  template <typename U>
  ModelParams<U> cast() const {
    ModelParams<U> out;
    out.config = config;
    out.values.assign(values.begin(), values.end());
    return out;
  }

  bool operator==(const ModelParams&) const = default;
};

using Params = ModelParams<float>;

// Normal(0, 0.02) weights, residual projections scaled by 1/sqrt(2L), zero
// biases, unit norm gains. Values are drawn in double precision, so float and
// double parameter sets from one seed agree up to rounding.
template <typename T>
ModelParams<T> init_params(const ModelConfig& config, std::uint64_t seed);

// One training sequence. mask[i] marks token i as a scored prediction target
// (predicted from tokens 0..i-1); mask[0] is ignored.
struct SequenceView {
  std::span<const TokenId> tokens;
  std::span<const std::uint8_t> mask;
};

struct DropoutContext {
  Rng* rng = nullptr;  // dropout is active only when set and config.dropout > 0
};

struct LossResult {
  double loss = 0.0;          // mean cross-entropy over scored positions
  double total_nll = 0.0;
  std::size_t n_scored = 0;
};

// Logits for every position, tokens.size() x vocab_size. Throws
// ValidationError for an empty or over-length sequence or an invalid id.
template <typename T>
RowMatrix<T> forward(const ModelParams<T>& params, std::span<const TokenId> tokens);

// Mean next-token cross-entropy over all scored positions of the batch and,
// when grads is non-null, its exact gradient (grads is overwritten and sized
// like params.values). Throws ValidationError when nothing is scored.
template <typename T>
LossResult loss_and_grads(const ModelParams<T>& params, std::span<const SequenceView> batch,
                          AlignedVector<T>* grads, DropoutContext dropout = {});

// Single-sequence convenience; an empty mask scores every position.
template <typename T>
LossResult loss_and_grads(const ModelParams<T>& params, std::span<const TokenId> tokens,
                          std::span<const std::uint8_t> mask, AlignedVector<T>* grads);

// log p(tokens[i] | tokens[0..i)) for i = 1..n-1, computed in double.
// Extended precision so that sums and exponentials of these stay exact for
// simple distributions.
template <typename T>
std::vector<long double> token_logprobs(const ModelParams<T>& params, std::span<const TokenId> tokens);

// Key/value cache decoding: push tokens one at a time and read the logits
// for the next position. Copyable, so beam search can fork hypotheses.
template <typename T>
class IncrementalDecoder {
 public:
  explicit IncrementalDecoder(const ModelParams<T>& params);

  // Throws ValidationError past max_seq_len or for an invalid id.
  void push(TokenId token);
  std::size_t length() const { return length_; }
  // Logits after the most recent push.
  std::span<const T> logits() const { return {logits_.data(), logits_.size()}; }

 private:
  const ModelParams<T>* params_;
  std::size_t length_ = 0;
  std::vector<AlignedVector<T>> keys_;    // per layer, length x width
  std::vector<AlignedVector<T>> values_;  // per layer, length x width
  AlignedVector<T> logits_;
};

// Copies block and normalization weights (and overlapping position rows)
// from a checkpoint trained with a different vocabulary. Token embedding and
// output projection keep the target's fresh values. Throws ConfigError when
// n_layers, width, n_heads or ff_mult differ.
template <typename T>
ModelParams<T> load_pretrained_text_init(const ModelParams<T>& target, const ModelParams<T>& checkpoint);

// ---------------------------------------------------------------------------
// Checkpoints: "VXCK", u32 version, u32 json_len, JSON header (config plus
// free-form metadata), u32 n_tensors, then per tensor u32 name_len, name,
// u32 rows, u32 cols, rows*cols f32; trailing u64 FNV-1a of all prior bytes.

struct Checkpoint {
  Params params;
  std::string metadata_json = "{}";  // object stored next to the config
};

void save_checkpoint(const std::filesystem::path& path, const Params& params,
                     std::string_view metadata_json = "{}");
// Throws VersionError for unknown versions, CorruptError for damaged files.
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::vector<char> encode_checkpoint(const Params& params, std::string_view metadata_json);
Checkpoint decode_checkpoint(std::span<const char> bytes);

}  // namespace voxt
