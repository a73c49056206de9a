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

#include "voxt/trainer.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "voxt/error.hpp"
#include "voxt/eval.hpp"

namespace voxt {

using nlohmann::json;

void TrainConfig::validate() const {
  double sum = 0.0;
  for (double w : task_weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("task weights must be finite and nonnegative");
    sum += w;
  }
  if (sum <= 0.0) throw ConfigError("at least one task weight must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (total_steps == 0) throw ConfigError("total_steps must be >= 1");
  if (warmup_steps == 0 || warmup_steps > total_steps) {
    throw ConfigError("warmup_steps must lie in [1, total_steps]");
  }
  if (!(peak_lr > 0.0)) throw ConfigError("peak_lr must be positive");
  if (!(grad_clip > 0.0)) throw ConfigError("grad_clip must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && adam_eps > 0.0)) {
    throw ConfigError("Adam hyperparameters out of range");
  }
}

TrainConfig TrainConfig::normalized() const {
  TrainConfig c = *this;
  double sum = 0.0;
  for (double w : task_weights) sum += w;
  if (sum > 0.0) {
    for (double& w : c.task_weights) w /= sum;
  }
  return c;
}

std::string TrainConfig::to_json() const {
  json j;
  json w;
  for (Task t : kAllTasks) w[std::string(to_string(t))] = task_weights[task_index(t)];
  j["task_weights"] = w;
  j["batch_size"] = batch_size;
  j["peak_lr"] = peak_lr;
  j["warmup_steps"] = warmup_steps;
  j["total_steps"] = total_steps;
  j["seed"] = seed;
  j["grad_clip"] = grad_clip;
  j["eval_every"] = eval_every;
  j["adam"] = {{"beta1", beta1}, {"beta2", beta2}, {"eps", adam_eps}};
  return j.dump();
}

TrainConfig TrainConfig::from_json(std::string_view text) {
  TrainConfig c;
  try {
    const json j = json::parse(text);
    if (j.contains("task_weights")) {
      const auto& w = j.at("task_weights");
      if (w.is_array()) {
        if (w.size() != kNumTasks) throw ConfigError("task_weights needs four entries");
        for (std::size_t i = 0; i < kNumTasks; ++i) c.task_weights[i] = w[i].get<double>();
      } else {
        c.task_weights.fill(0.0);
        for (const auto& [name, value] : w.items()) {
          const auto task = parse_task(name);
          if (!task) throw ConfigError("unknown task '" + name + "' in task_weights");
          c.task_weights[task_index(*task)] = value.get<double>();
        }
      }
    }
    c.batch_size = j.value("batch_size", c.batch_size);
    c.peak_lr = j.value("peak_lr", c.peak_lr);
    c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
    c.total_steps = j.value("total_steps", c.total_steps);
    c.seed = j.value("seed", c.seed);
    c.grad_clip = j.value("grad_clip", c.grad_clip);
    c.eval_every = j.value("eval_every", c.eval_every);
    if (j.contains("adam")) {
      const auto& a = j.at("adam");
      c.beta1 = a.value("beta1", c.beta1);
      c.beta2 = a.value("beta2", c.beta2);
      c.adam_eps = a.value("eps", c.adam_eps);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  c.validate();
  return c.normalized();
}

std::array<double, kNumTasks> weights_from_sizes(const std::array<std::size_t, kNumTasks>& sizes) {
  std::array<double, kNumTasks> w{};
  double total = 0.0;
  for (std::size_t s : sizes) total += static_cast<double>(s);
  if (total <= 0.0) throw ValidationError("all task sizes are zero");
  for (std::size_t i = 0; i < kNumTasks; ++i) w[i] = static_cast<double>(sizes[i]) / total;
  return w;
}

MixedDataset MixedDataset::from_examples(std::span<const FormattedExample> examples) {
  MixedDataset mix;
  for (const auto& ex : examples) mix.by_task[task_index(ex.task)].push_back(ex.ids);
  return mix;
}

std::array<std::size_t, kNumTasks> MixedDataset::sizes() const {
  std::array<std::size_t, kNumTasks> s{};
  for (std::size_t i = 0; i < kNumTasks; ++i) s[i] = by_task[i].size();
  return s;
}

std::size_t MixedDataset::total() const {
  std::size_t n = 0;
  for (const auto& v : by_task) n += v.size();
  return n;
}

void MixedDataset::check(const TrainConfig& cfg) const {
  for (Task t : kAllTasks) {
    if (cfg.task_weights[task_index(t)] > 0.0 && by_task[task_index(t)].empty()) {
      throw ValidationError("task " + std::string(to_string(t)) + " has positive weight but no data");
    }
  }
}

Batch sample_batch(const MixedDataset& mix, const TrainConfig& cfg, Rng& rng) {
  mix.check(cfg);
  double total = 0.0;
  for (double w : cfg.task_weights) total += w;
  Batch b;
  std::size_t max_len = 0;
  for (std::uint32_t n = 0; n < cfg.batch_size; ++n) {
    const double u = rng.uniform() * total;
    std::size_t t = 0;
    double acc = 0.0;
    std::size_t last_positive = 0;
    for (std::size_t i = 0; i < kNumTasks; ++i) {
      if (cfg.task_weights[i] > 0.0) last_positive = i;
    }
    for (t = 0; t < kNumTasks; ++t) {
      acc += cfg.task_weights[t];
      if (cfg.task_weights[t] > 0.0 && u < acc) break;
    }
    if (t == kNumTasks) t = last_positive;
    const auto& pool = mix.by_task[t];
    b.tokens.push_back(pool[rng.below(pool.size())]);
    b.tasks.push_back(static_cast<Task>(t));
    max_len = std::max(max_len, b.tokens.back().size());
  }
  for (auto& seq : b.tokens) {
    std::vector<std::uint8_t> mask(max_len, 0);
    for (std::size_t i = 1; i < seq.size(); ++i) mask[i] = 1;
    seq.resize(max_len, mix.pad_id);
    b.masks.push_back(std::move(mask));
  }
  return b;
}

double lr_at_step(std::uint32_t step, const TrainConfig& cfg) {
  if (step == 0) throw ValidationError("lr_at_step: steps count from 1");
  const double w = static_cast<double>(cfg.warmup_steps);
  const double s = static_cast<double>(step);
  if (step <= cfg.warmup_steps) return cfg.peak_lr * s / w;
  return cfg.peak_lr * std::sqrt(w / s);
}

double global_norm(std::span<const float> grads) {
  double sq = 0.0;
  for (float g : grads) sq += static_cast<double>(g) * g;
  return std::sqrt(sq);
}

double clip_grad_norm(std::span<float> grads, double max_norm) {
  const double norm = global_norm(grads);
  if (norm > max_norm) {
    const auto scale = static_cast<float>(max_norm / norm);
    for (float& g : grads) g *= scale;
  }
  return norm;
}

void adam_step(Params& params, std::span<const float> grads, AdamState& state, double lr,
               const TrainConfig& cfg) {
  const std::size_t n = params.values.size();
  if (grads.size() != n) throw ValidationError("gradient size does not match parameters");
  if (state.m.size() != n) {
    state.m.assign(n, 0.0f);
    state.v.assign(n, 0.0f);
  }
  ++state.step;
  const auto b1 = static_cast<float>(cfg.beta1);
  const auto b2 = static_cast<float>(cfg.beta2);
  const double c1 = 1.0 - std::pow(cfg.beta1, state.step);
  const double c2 = 1.0 - std::pow(cfg.beta2, state.step);
  const auto step_size = static_cast<float>(lr / c1);
  const auto inv_c2 = static_cast<float>(1.0 / c2);
  const auto eps = static_cast<float>(cfg.adam_eps);
  for (std::size_t i = 0; i < n; ++i) {
    const float g = grads[i];
    state.m[i] = b1 * state.m[i] + (1.0f - b1) * g;
    state.v[i] = b2 * state.v[i] + (1.0f - b2) * g * g;
    params.values[i] -= step_size * state.m[i] / (std::sqrt(state.v[i] * inv_c2) + eps);
  }
}

EvalRecord evaluate_tasks(const Params& params, const MixedDataset& held_out, std::uint32_t step) {
  EvalRecord rec;
  rec.step = step;
  const TransformerScorer scorer(params);
  for (Task t : kAllTasks) {
    const auto& data = held_out.by_task[task_index(t)];
    if (data.empty()) continue;
    rec.ppl[task_index(t)] = perplexity(scorer, data, MaskPolicy::kTarget).ppl;
  }
  return rec;
}

namespace {

json eval_json(const EvalRecord& e) {
  json j;
  j["step"] = e.step;
  json ppl = json::object();
  for (Task t : kAllTasks) {
    if (e.ppl[task_index(t)]) ppl[std::string(to_string(t))] = *e.ppl[task_index(t)];
  }
  j["eval"] = {{"ppl", ppl}};
  return j;
}

}  // namespace

TrainResult train(Params params, const MixedDataset& mix, const TrainConfig& cfg_in, const TrainOptions& options) {
  cfg_in.validate();
  const TrainConfig cfg = cfg_in.normalized();
  mix.check(cfg);

  TrainResult result;
  Rng sample_rng(Rng::mix(cfg.seed, 10));
  Rng dropout_rng(Rng::mix(cfg.seed, 11));
  AdamState adam;
  AlignedVector<float> grads;

  for (std::uint32_t step = 1; step <= cfg.total_steps; ++step) {
    const Batch batch = sample_batch(mix, cfg, sample_rng);
    std::vector<SequenceView> views;
    views.reserve(batch.tokens.size());
    for (std::size_t i = 0; i < batch.tokens.size(); ++i) views.push_back({batch.tokens[i], batch.masks[i]});
    const LossResult loss = loss_and_grads<float>(params, views, &grads, DropoutContext{&dropout_rng});
    if (!std::isfinite(loss.loss)) {
      throw DivergenceError("loss became non-finite at step " + std::to_string(step));
    }
    StepRecord rec;
    rec.step = step;
    rec.lr = lr_at_step(step, cfg);
    rec.loss = loss.loss;
    rec.grad_norm = clip_grad_norm(grads, cfg.grad_clip);
    if (!std::isfinite(rec.grad_norm)) {
      throw DivergenceError("gradient became non-finite at step " + std::to_string(step));
    }
    for (Task t : batch.tasks) ++rec.task_mix[task_index(t)];
    adam_step(params, grads, adam, rec.lr, cfg);
    result.steps.push_back(rec);
    result.steps_run = step;

    if (options.metrics) {
      json j;
      j["step"] = rec.step;
      json task_mix;
      for (Task t : kAllTasks) task_mix[std::string(to_string(t))] = rec.task_mix[task_index(t)];
      j["task_mix"] = task_mix;
      j["lr"] = rec.lr;
      j["loss"] = rec.loss;
      j["grad_norm"] = rec.grad_norm;
      *options.metrics << j.dump() << '\n';
    }

    const bool eval_now = options.held_out && cfg.eval_every > 0 &&
                          (step % cfg.eval_every == 0 || step == cfg.total_steps);
    if (eval_now) {
      const EvalRecord e = evaluate_tasks(params, *options.held_out, step);
      result.evals.push_back(e);
      if (options.metrics) *options.metrics << eval_json(e).dump() << '\n';
      if (options.stop_when && options.stop_when(e)) break;
    }
  }
  if (options.metrics) options.metrics->flush();
  result.params = std::move(params);
  return result;
}

std::string train_metadata_json(const TrainConfig& cfg, std::string_view vocab_digest, std::uint32_t steps) {
  json j;
  j["train_config"] = json::parse(cfg.to_json());
  j["vocab_digest"] = vocab_digest;
  j["steps"] = steps;
  return j.dump();
}

}  // namespace voxt
