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
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "voxt/formatter.hpp"
#include "voxt/model.hpp"
#include "voxt/random.hpp"
#include "voxt/types.hpp"

namespace voxt {

struct TrainConfig {
  // Sampling weights per task, indexed by task_index(); normalized on load.
  std::array<double, kNumTasks> task_weights{0.25, 0.25, 0.25, 0.25};
  std::uint32_t batch_size = 16;
  double peak_lr = 1e-3;
  std::uint32_t warmup_steps = 100;
  std::uint32_t total_steps = 1000;
  std::uint64_t seed = 0;
  double grad_clip = 1.0;
  std::uint32_t eval_every = 100;  // 0 disables periodic evaluation
  double beta1 = 0.9;
  double beta2 = 0.98;
  double adam_eps = 1e-8;

  // Throws ConfigError: negative or all-zero weights, batch_size == 0,
  // warmup_steps outside [1, total_steps], non-positive lr or clip.
  void validate() const;
  // Weights rescaled to sum to 1.
  TrainConfig normalized() const;

  std::string to_json() const;
  static TrainConfig from_json(std::string_view json);

  bool operator==(const TrainConfig&) const = default;
};

// Weights proportional to per-task corpus sizes.
std::array<double, kNumTasks> weights_from_sizes(const std::array<std::size_t, kNumTasks>& sizes);

// Formatted training sequences grouped by task.
struct MixedDataset {
  std::array<std::vector<TokenSeq>, kNumTasks> by_task;
  TokenId pad_id = static_cast<TokenId>(5);

  static MixedDataset from_examples(std::span<const FormattedExample> examples);
  std::array<std::size_t, kNumTasks> sizes() const;
  std::size_t total() const;
  // Throws ValidationError when a task has positive weight but no data.
  void check(const TrainConfig& cfg) const;
};

struct Batch {
  std::vector<TokenSeq> tokens;               // padded to a common length
  std::vector<std::vector<std::uint8_t>> masks;  // 0 at pads and position 0
  std::vector<Task> tasks;
};

Batch sample_batch(const MixedDataset& mix, const TrainConfig& cfg, Rng& rng);

// Linear warmup to peak_lr over warmup_steps, then peak_lr*sqrt(warmup/step).
// Throws ValidationError for step 0.
double lr_at_step(std::uint32_t step, const TrainConfig& cfg);

struct AdamState {
  std::vector<float> m;
  std::vector<float> v;
  std::uint32_t step = 0;
};

// Global L2 norm of a gradient buffer, accumulated in double.
double global_norm(std::span<const float> grads);
// Scales grads in place so their norm is at most max_norm; returns the
// pre-clip norm.
double clip_grad_norm(std::span<float> grads, double max_norm);

void adam_step(Params& params, std::span<const float> grads, AdamState& state, double lr,
               const TrainConfig& cfg);

struct StepRecord {
  std::uint32_t step = 0;
  double lr = 0.0;
  double loss = 0.0;
  double grad_norm = 0.0;
  std::array<std::size_t, kNumTasks> task_mix{};
};

struct EvalRecord {
  std::uint32_t step = 0;
  // Teacher-forced target-segment PPL per task; empty when no held-out data.
  std::array<std::optional<double>, kNumTasks> ppl;
};

struct TrainOptions {
  const MixedDataset* held_out = nullptr;
  std::ostream* metrics = nullptr;  // JSON lines
  // Called after each evaluation; returning true stops training early.
  std::function<bool(const EvalRecord&)> stop_when;
};

struct TrainResult {
  Params params;
  std::uint32_t steps_run = 0;
  std::vector<StepRecord> steps;
  std::vector<EvalRecord> evals;
};

// Held-out target-segment PPL for every task that has data.
EvalRecord evaluate_tasks(const Params& params, const MixedDataset& held_out, std::uint32_t step);

// Throws DivergenceError when the loss becomes non-finite.
TrainResult train(Params params, const MixedDataset& mix, const TrainConfig& cfg,
                  const TrainOptions& options = {});

// Metadata stored with checkpoints written after training.
std::string train_metadata_json(const TrainConfig& cfg, std::string_view vocab_digest, std::uint32_t steps);

}  // namespace voxt
