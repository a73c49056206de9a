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

#include "voxt/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <nlohmann/json.hpp>

#include "binary_io.hpp"
#include "voxt/error.hpp"

namespace voxt {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Config and layout

ModelConfig ModelConfig::small(std::uint32_t vocab_size) {
  return {vocab_size, 12, 768, 12, 2048, 4, 0.0};
}

ModelConfig ModelConfig::medium(std::uint32_t vocab_size) {
  return {vocab_size, 24, 1024, 16, 2048, 4, 0.0};
}

ModelConfig ModelConfig::large(std::uint32_t vocab_size) {
  return {vocab_size, 24, 2048, 32, 2048, 4, 0.0};
}

ModelConfig ModelConfig::preset(std::string_view name, std::uint32_t vocab_size) {
  if (name == "small") return small(vocab_size);
  if (name == "medium") return medium(vocab_size);
  if (name == "large") return large(vocab_size);
  throw ConfigError("unknown model preset '" + std::string(name) + "'");
}

void ModelConfig::validate() const {
  if (vocab_size < 1 || n_layers < 1 || width < 1 || n_heads < 1 || max_seq_len < 1 || ff_mult < 1) {
    throw ConfigError("model config counts must all be >= 1");
  }
  if (width % n_heads != 0) {
    throw ConfigError("model width " + std::to_string(width) + " is not divisible by " +
                      std::to_string(n_heads) + " heads");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
}

std::string ModelConfig::to_json() const {
  json j;
  j["vocab_size"] = vocab_size;
  j["n_layers"] = n_layers;
  j["width"] = width;
  j["n_heads"] = n_heads;
  j["max_seq_len"] = max_seq_len;
  j["ff_mult"] = ff_mult;
  j["dropout"] = dropout;
  return j.dump();
}

ModelConfig ModelConfig::from_json(std::string_view text) {
  try {
    const json j = json::parse(text);
    ModelConfig c;
    c.vocab_size = j.value("vocab_size", c.vocab_size);
    c.n_layers = j.value("n_layers", c.n_layers);
    c.width = j.value("width", c.width);
    c.n_heads = j.value("n_heads", c.n_heads);
    c.max_seq_len = j.value("max_seq_len", c.max_seq_len);
    c.ff_mult = j.value("ff_mult", c.ff_mult);
    c.dropout = j.value("dropout", c.dropout);
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
}

namespace {

enum LayerSlot : std::size_t {
  kLn1Gain,
  kLn1Bias,
  kQkvWeight,
  kQkvBias,
  kOutWeight,
  kOutBias,
  kLn2Gain,
  kLn2Bias,
  kFcWeight,
  kFcBias,
  kProjWeight,
  kProjBias,
  kSlotsPerLayer,
};

constexpr std::size_t kTokEmb = 0;
constexpr std::size_t kPosEmb = 1;
constexpr std::size_t kFirstLayer = 2;

std::size_t layer_slot(std::size_t layer, LayerSlot slot) {
  return kFirstLayer + layer * kSlotsPerLayer + slot;
}
std::size_t final_gain_slot(const ModelConfig& c) { return kFirstLayer + c.n_layers * kSlotsPerLayer; }
std::size_t final_bias_slot(const ModelConfig& c) { return final_gain_slot(c) + 1; }
std::size_t head_slot(const ModelConfig& c) { return final_gain_slot(c) + 2; }

}  // namespace

ParamLayout::ParamLayout(const ModelConfig& c) {
  c.validate();
  auto add = [&](std::string name, std::uint32_t rows, std::uint32_t cols) {
    tensors_.push_back({std::move(name), rows, cols, total_});
    total_ += static_cast<std::size_t>(rows) * cols;
  };
  const std::uint32_t F = c.width;
  add("embed.tokens", c.vocab_size, F);
  add("embed.positions", c.max_seq_len, F);
  for (std::uint32_t l = 0; l < c.n_layers; ++l) {
    const std::string p = "layers." + std::to_string(l) + ".";
    add(p + "ln1.gain", 1, F);
    add(p + "ln1.bias", 1, F);
    add(p + "attn.qkv.weight", F, 3 * F);
    add(p + "attn.qkv.bias", 1, 3 * F);
    add(p + "attn.out.weight", F, F);
    add(p + "attn.out.bias", 1, F);
    add(p + "ln2.gain", 1, F);
    add(p + "ln2.bias", 1, F);
    add(p + "mlp.fc.weight", F, c.ff_width());
    add(p + "mlp.fc.bias", 1, c.ff_width());
    add(p + "mlp.proj.weight", c.ff_width(), F);
    add(p + "mlp.proj.bias", 1, F);
  }
  add("final_norm.gain", 1, F);
  add("final_norm.bias", 1, F);
  add("head.weight", F, c.vocab_size);
}

const TensorSpec& ParamLayout::find(std::string_view name) const {
  for (const auto& t : tensors_) {
    if (t.name == name) return t;
  }
  throw ValidationError("no parameter tensor named '" + std::string(name) + "'");
}

bool ParamLayout::is_residual_projection(std::string_view name) {
  return name.ends_with("attn.out.weight") || name.ends_with("mlp.proj.weight");
}

template <typename T>
ModelParams<T>::ModelParams(const ModelConfig& cfg) : config(cfg), values(ParamLayout(cfg).total_size(), T(0)) {}

template <typename T>
ModelParams<T> init_params(const ModelConfig& config, std::uint64_t seed) {
  ModelParams<T> p(config);
  Rng rng(seed);
  const double residual_scale = 1.0 / std::sqrt(2.0 * config.n_layers);
  const ParamLayout layout(config);
  for (const auto& spec : layout.tensors()) {
    auto t = p.tensor(spec);
    if (spec.name.ends_with(".gain")) {
      t.setOnes();
    } else if (spec.name.ends_with(".bias")) {
      t.setZero();
    } else {
      const double std = ParamLayout::is_residual_projection(spec.name) ? 0.02 * residual_scale : 0.02;
      for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = static_cast<T>(std * rng.normal());
    }
  }
  return p;
}

// ---------------------------------------------------------------------------
// Forward / backward

namespace {

constexpr double kNormEps = 1e-5;

template <typename T>
using Mat = RowMatrix<T>;
template <typename T>
using ColVec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
template <typename T>
using CMap = Eigen::Map<const Mat<T>>;
template <typename T>
using MMap = Eigen::Map<Mat<T>>;

template <typename T>
struct Views {
  const ModelParams<T>& p;
  const ParamLayout layout;

  explicit Views(const ModelParams<T>& params) : p(params), layout(params.config) {}
  CMap<T> at(std::size_t slot) const { return p.tensor(layout.tensors()[slot]); }
};

template <typename T>
struct GradViews {
  AlignedVector<T>& g;
  const ParamLayout& layout;
  MMap<T> at(std::size_t slot) const {
    const auto& s = layout.tensors()[slot];
    return {g.data() + s.offset, s.rows, s.cols};
  }
};

template <typename T>
T gelu(T x) {
  return T(0.5) * x * (T(1) + std::erf(x * T(std::numbers::sqrt2 / 2)));
}

template <typename T>
T gelu_grad(T x) {
  const T cdf = T(0.5) * (T(1) + std::erf(x * T(std::numbers::sqrt2 / 2)));
  const T pdf = std::exp(T(-0.5) * x * x) * T(std::numbers::inv_sqrtpi / std::numbers::sqrt2);
  return cdf + x * pdf;
}

template <typename T>
void layer_norm(const Mat<T>& x, const CMap<T>& gain, const CMap<T>& bias, Mat<T>& xhat,
                ColVec<T>& rstd, Mat<T>& y) {
  const Eigen::Index n = x.rows();
  const Eigen::Index f = x.cols();
  xhat.resize(n, f);
  rstd.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const T mean = x.row(i).mean();
    auto centered = (x.row(i).array() - mean).matrix();
    const T var = centered.squaredNorm() / static_cast<T>(f);
    const T r = T(1) / std::sqrt(var + static_cast<T>(kNormEps));
    xhat.row(i) = centered * r;
    rstd(i) = r;
  }
  y = (xhat.array().rowwise() * gain.row(0).array()).rowwise() + bias.row(0).array();
}

// Returns dx; accumulates gain/bias gradients.
template <typename T>
Mat<T> layer_norm_backward(const Mat<T>& dy, const Mat<T>& xhat, const ColVec<T>& rstd,
                           const CMap<T>& gain, MMap<T> dgain, MMap<T> dbias) {
  dgain.row(0) += (dy.array() * xhat.array()).colwise().sum().matrix();
  dbias.row(0) += dy.colwise().sum();
  Mat<T> dxhat = dy.array().rowwise() * gain.row(0).array();
  Mat<T> dx(dy.rows(), dy.cols());
  const T inv_f = T(1) / static_cast<T>(dy.cols());
  for (Eigen::Index i = 0; i < dy.rows(); ++i) {
    const T m1 = dxhat.row(i).sum() * inv_f;
    const T m2 = dxhat.row(i).dot(xhat.row(i)) * inv_f;
    dx.row(i) = rstd(i) * (dxhat.row(i).array() - m1 - xhat.row(i).array() * m2).matrix();
  }
  return dx;
}

template <typename T>
struct LayerCache {
  Mat<T> x_in;
  Mat<T> xhat1;
  ColVec<T> rstd1;
  Mat<T> h1;
  Mat<T> qkv;
  std::vector<Mat<T>> probs;  // sequence-major, then head
  Mat<T> att;
  Mat<T> drop1;
  Mat<T> x_mid;
  Mat<T> xhat2;
  ColVec<T> rstd2;
  Mat<T> h2;
  Mat<T> u;
  Mat<T> g;
  Mat<T> drop2;
};

template <typename T>
struct ForwardCache {
  std::vector<std::size_t> offsets;
  std::vector<std::size_t> lengths;
  std::vector<TokenId> ids;
  Mat<T> drop0;
  std::vector<LayerCache<T>> layers;
  Mat<T> x_final;
  Mat<T> xhatf;
  ColVec<T> rstdf;
  Mat<T> hf;
};

template <typename T>
Mat<T> dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, Rng& rng) {
  Mat<T> m(rows, cols);
  const T scale = static_cast<T>(1.0 / (1.0 - p));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform() < p ? T(0) : scale;
  return m;
}

template <typename T>
void check_tokens(const ModelConfig& c, std::span<const TokenId> tokens) {
  if (tokens.empty()) throw ValidationError("model input is empty");
  if (tokens.size() > c.max_seq_len) {
    throw ValidationError("sequence length " + std::to_string(tokens.size()) + " exceeds max_seq_len " +
                          std::to_string(c.max_seq_len));
  }
  for (TokenId id : tokens) {
    if (id < 0 || static_cast<std::uint32_t>(id) >= c.vocab_size) {
      throw ValidationError("token id " + std::to_string(id) + " is outside the model vocabulary");
    }
  }
}

// Runs the packed forward pass over several sequences and fills the cache.
template <typename T>
void run_forward(const Views<T>& v, ForwardCache<T>& cache, Rng* dropout_rng) {
  const ModelConfig& c = v.p.config;
  const auto F = static_cast<Eigen::Index>(c.width);
  const auto H = static_cast<Eigen::Index>(c.n_heads);
  const auto d = static_cast<Eigen::Index>(c.head_dim());
  const auto N = static_cast<Eigen::Index>(cache.ids.size());
  const T scale = T(1) / std::sqrt(static_cast<T>(d));
  const bool dropout = dropout_rng != nullptr && c.dropout > 0.0;

  const auto tok = v.at(kTokEmb);
  const auto pos = v.at(kPosEmb);
  Mat<T> x(N, F);
  for (std::size_t s = 0; s < cache.offsets.size(); ++s) {
    for (std::size_t t = 0; t < cache.lengths[s]; ++t) {
      const auto row = static_cast<Eigen::Index>(cache.offsets[s] + t);
      x.row(row) = tok.row(cache.ids[static_cast<std::size_t>(row)]) + pos.row(static_cast<Eigen::Index>(t));
    }
  }
  if (dropout) {
    cache.drop0 = dropout_mask<T>(N, F, c.dropout, *dropout_rng);
    x.array() *= cache.drop0.array();
  } else {
    cache.drop0.resize(0, 0);
  }

  cache.layers.resize(c.n_layers);
  for (std::size_t l = 0; l < c.n_layers; ++l) {
    auto& lc = cache.layers[l];
    lc.x_in = std::move(x);
    layer_norm<T>(lc.x_in, v.at(layer_slot(l, kLn1Gain)), v.at(layer_slot(l, kLn1Bias)), lc.xhat1, lc.rstd1, lc.h1);
    lc.qkv.noalias() = lc.h1 * v.at(layer_slot(l, kQkvWeight));
    lc.qkv.rowwise() += v.at(layer_slot(l, kQkvBias)).row(0);

    lc.att.resize(N, F);
    lc.probs.resize(cache.offsets.size() * static_cast<std::size_t>(H));
    for (std::size_t s = 0; s < cache.offsets.size(); ++s) {
      const auto o = static_cast<Eigen::Index>(cache.offsets[s]);
      const auto n = static_cast<Eigen::Index>(cache.lengths[s]);
      for (Eigen::Index h = 0; h < H; ++h) {
        auto q = lc.qkv.block(o, h * d, n, d);
        auto k = lc.qkv.block(o, F + h * d, n, d);
        auto val = lc.qkv.block(o, 2 * F + h * d, n, d);
        Mat<T>& P = lc.probs[s * static_cast<std::size_t>(H) + static_cast<std::size_t>(h)];
        P.noalias() = (q * k.transpose()) * scale;
        for (Eigen::Index i = 0; i < n; ++i) {
          const T mx = P.row(i).head(i + 1).maxCoeff();
          T sum = 0;
          for (Eigen::Index j = 0; j <= i; ++j) {
            const T e = std::exp(P(i, j) - mx);
            P(i, j) = e;
            sum += e;
          }
          P.row(i).head(i + 1) /= sum;
          P.row(i).tail(n - i - 1).setZero();
        }
        lc.att.block(o, h * d, n, d).noalias() = P * val;
      }
    }

    Mat<T> attn_out = lc.att * v.at(layer_slot(l, kOutWeight));
    attn_out.rowwise() += v.at(layer_slot(l, kOutBias)).row(0);
    if (dropout) {
      lc.drop1 = dropout_mask<T>(N, F, c.dropout, *dropout_rng);
      attn_out.array() *= lc.drop1.array();
    } else {
      lc.drop1.resize(0, 0);
    }
    lc.x_mid = lc.x_in + attn_out;

    layer_norm<T>(lc.x_mid, v.at(layer_slot(l, kLn2Gain)), v.at(layer_slot(l, kLn2Bias)), lc.xhat2, lc.rstd2, lc.h2);
    lc.u.noalias() = lc.h2 * v.at(layer_slot(l, kFcWeight));
    lc.u.rowwise() += v.at(layer_slot(l, kFcBias)).row(0);
    lc.g = lc.u.unaryExpr([](T z) { return gelu(z); });
    Mat<T> mlp_out = lc.g * v.at(layer_slot(l, kProjWeight));
    mlp_out.rowwise() += v.at(layer_slot(l, kProjBias)).row(0);
    if (dropout) {
      lc.drop2 = dropout_mask<T>(N, F, c.dropout, *dropout_rng);
      mlp_out.array() *= lc.drop2.array();
    } else {
      lc.drop2.resize(0, 0);
    }
    x = lc.x_mid + mlp_out;
  }
  cache.x_final = std::move(x);
  layer_norm<T>(cache.x_final, v.at(final_gain_slot(c)), v.at(final_bias_slot(c)), cache.xhatf, cache.rstdf, cache.hf);
}

// Backpropagates dhf (gradient w.r.t. final normalized hidden states).
template <typename T>
void run_backward(const Views<T>& v, const ForwardCache<T>& cache, const Mat<T>& dhf, AlignedVector<T>& grads) {
  const ModelConfig& c = v.p.config;
  const auto F = static_cast<Eigen::Index>(c.width);
  const auto H = static_cast<Eigen::Index>(c.n_heads);
  const auto d = static_cast<Eigen::Index>(c.head_dim());
  const auto N = static_cast<Eigen::Index>(cache.ids.size());
  const T scale = T(1) / std::sqrt(static_cast<T>(d));
  GradViews<T> gv{grads, v.layout};

  Mat<T> dx = layer_norm_backward<T>(dhf, cache.xhatf, cache.rstdf, v.at(final_gain_slot(c)),
                                     gv.at(final_gain_slot(c)), gv.at(final_bias_slot(c)));

  for (std::size_t li = c.n_layers; li-- > 0;) {
    const auto& lc = cache.layers[li];
    // MLP branch.
    Mat<T> dm = dx;
    if (lc.drop2.size() != 0) dm.array() *= lc.drop2.array();
    gv.at(layer_slot(li, kProjWeight)).noalias() += lc.g.transpose() * dm;
    gv.at(layer_slot(li, kProjBias)).row(0) += dm.colwise().sum();
    Mat<T> du = dm * v.at(layer_slot(li, kProjWeight)).transpose();
    du.array() *= lc.u.unaryExpr([](T z) { return gelu_grad(z); }).array();
    gv.at(layer_slot(li, kFcWeight)).noalias() += lc.h2.transpose() * du;
    gv.at(layer_slot(li, kFcBias)).row(0) += du.colwise().sum();
    Mat<T> dh2 = du * v.at(layer_slot(li, kFcWeight)).transpose();
    dx += layer_norm_backward<T>(dh2, lc.xhat2, lc.rstd2, v.at(layer_slot(li, kLn2Gain)),
                                 gv.at(layer_slot(li, kLn2Gain)), gv.at(layer_slot(li, kLn2Bias)));

    // Attention branch.
    Mat<T> dout = dx;
    if (lc.drop1.size() != 0) dout.array() *= lc.drop1.array();
    gv.at(layer_slot(li, kOutWeight)).noalias() += lc.att.transpose() * dout;
    gv.at(layer_slot(li, kOutBias)).row(0) += dout.colwise().sum();
    Mat<T> datt = dout * v.at(layer_slot(li, kOutWeight)).transpose();

    Mat<T> dqkv(N, 3 * F);
    for (std::size_t s = 0; s < cache.offsets.size(); ++s) {
      const auto o = static_cast<Eigen::Index>(cache.offsets[s]);
      const auto n = static_cast<Eigen::Index>(cache.lengths[s]);
      for (Eigen::Index h = 0; h < H; ++h) {
        const Mat<T>& P = lc.probs[s * static_cast<std::size_t>(H) + static_cast<std::size_t>(h)];
        auto q = lc.qkv.block(o, h * d, n, d);
        auto k = lc.qkv.block(o, F + h * d, n, d);
        auto val = lc.qkv.block(o, 2 * F + h * d, n, d);
        auto da = datt.block(o, h * d, n, d);
        Mat<T> dP = da * val.transpose();
        dqkv.block(o, 2 * F + h * d, n, d).noalias() = P.transpose() * da;
        for (Eigen::Index i = 0; i < n; ++i) {
          const T dot = P.row(i).dot(dP.row(i));
          dP.row(i) = (P.row(i).array() * (dP.row(i).array() - dot)).matrix();
        }
        dqkv.block(o, h * d, n, d).noalias() = (dP * k) * scale;
        dqkv.block(o, F + h * d, n, d).noalias() = (dP.transpose() * q) * scale;
      }
    }
    gv.at(layer_slot(li, kQkvWeight)).noalias() += lc.h1.transpose() * dqkv;
    gv.at(layer_slot(li, kQkvBias)).row(0) += dqkv.colwise().sum();
    Mat<T> dh1 = dqkv * v.at(layer_slot(li, kQkvWeight)).transpose();
    dx += layer_norm_backward<T>(dh1, lc.xhat1, lc.rstd1, v.at(layer_slot(li, kLn1Gain)),
                                 gv.at(layer_slot(li, kLn1Gain)), gv.at(layer_slot(li, kLn1Bias)));
  }

  if (cache.drop0.size() != 0) dx.array() *= cache.drop0.array();
  auto dtok = gv.at(kTokEmb);
  auto dpos = gv.at(kPosEmb);
  for (std::size_t s = 0; s < cache.offsets.size(); ++s) {
    for (std::size_t t = 0; t < cache.lengths[s]; ++t) {
      const auto row = static_cast<Eigen::Index>(cache.offsets[s] + t);
      dtok.row(cache.ids[static_cast<std::size_t>(row)]) += dx.row(row);
      dpos.row(static_cast<Eigen::Index>(t)) += dx.row(row);
    }
  }
}

}  // namespace

template <typename T>
RowMatrix<T> forward(const ModelParams<T>& params, std::span<const TokenId> tokens) {
  check_tokens<T>(params.config, tokens);
  Views<T> v(params);
  ForwardCache<T> cache;
  cache.offsets = {0};
  cache.lengths = {tokens.size()};
  cache.ids.assign(tokens.begin(), tokens.end());
  run_forward<T>(v, cache, nullptr);
  return cache.hf * v.at(head_slot(params.config));
}

template <typename T>
LossResult loss_and_grads(const ModelParams<T>& params, std::span<const SequenceView> batch,
                          AlignedVector<T>* grads, DropoutContext dropout) {
  Views<T> v(params);
  ForwardCache<T> cache;
  // (row in packed batch, target token) for every scored position
  std::vector<std::pair<Eigen::Index, TokenId>> scored;
  for (const auto& seq : batch) {
    if (!seq.mask.empty() && seq.mask.size() != seq.tokens.size()) {
      throw ValidationError("loss mask length does not match the sequence length");
    }
    // Trailing unscored positions cannot influence any scored prediction, so
    // each sequence is cut right after its last scored target.
    std::size_t last = 0;
    for (std::size_t i = 1; i < seq.tokens.size(); ++i) {
      if (seq.mask.empty() || seq.mask[i]) last = i;
    }
    if (last == 0) continue;
    const auto used = seq.tokens.first(last);
    check_tokens<T>(params.config, seq.tokens.first(last + 1));
    const std::size_t offset = cache.ids.size();
    for (std::size_t i = 1; i <= last; ++i) {
      if (seq.mask.empty() || seq.mask[i]) {
        scored.emplace_back(static_cast<Eigen::Index>(offset + i - 1), seq.tokens[i]);
      }
    }
    cache.offsets.push_back(offset);
    cache.lengths.push_back(used.size());
    cache.ids.insert(cache.ids.end(), used.begin(), used.end());
  }
  if (scored.empty()) throw ValidationError("loss mask leaves no scored position");

  run_forward<T>(v, cache, dropout.rng);

  const ModelConfig& c = params.config;
  const auto M = static_cast<Eigen::Index>(scored.size());
  const auto F = static_cast<Eigen::Index>(c.width);
  Mat<T> hs(M, F);
  for (Eigen::Index r = 0; r < M; ++r) hs.row(r) = cache.hf.row(scored[static_cast<std::size_t>(r)].first);
  const auto head = v.at(head_slot(c));
  Mat<T> logits = hs * head;

  LossResult result;
  result.n_scored = scored.size();
  const T inv_m = T(1) / static_cast<T>(M);
  for (Eigen::Index r = 0; r < M; ++r) {
    auto row = logits.row(r);
    const TokenId target = scored[static_cast<std::size_t>(r)].second;
    const T mx = row.maxCoeff();
    const T true_logit = row(target);
    row.array() = (row.array() - mx).exp();
    const T sum = row.sum();
    result.total_nll += static_cast<double>(mx) + std::log(static_cast<double>(sum)) - static_cast<double>(true_logit);
    if (grads) {
      row /= sum;
      row(target) -= T(1);
      row *= inv_m;
    }
  }
  result.loss = result.total_nll / static_cast<double>(M);
  if (!std::isfinite(result.loss)) return result;

  if (grads) {
    grads->assign(params.values.size(), T(0));
    GradViews<T> gv{*grads, v.layout};
    gv.at(head_slot(c)).noalias() += hs.transpose() * logits;
    Mat<T> dhs = logits * head.transpose();
    Mat<T> dhf = Mat<T>::Zero(cache.hf.rows(), F);
    for (Eigen::Index r = 0; r < M; ++r) dhf.row(scored[static_cast<std::size_t>(r)].first) += dhs.row(r);
    run_backward<T>(v, cache, dhf, *grads);
  }
  return result;
}

template <typename T>
LossResult loss_and_grads(const ModelParams<T>& params, std::span<const TokenId> tokens,
                          std::span<const std::uint8_t> mask, AlignedVector<T>* grads) {
  if (tokens.size() < 2) throw ValidationError("loss needs a sequence of at least two tokens");
  const SequenceView view{tokens, mask};
  return loss_and_grads<T>(params, std::span<const SequenceView>(&view, 1), grads);
}

template <typename T>
std::vector<long double> token_logprobs(const ModelParams<T>& params, std::span<const TokenId> tokens) {
  const auto logits = forward<T>(params, tokens);
  std::vector<long double> out;
  out.reserve(tokens.size() > 0 ? tokens.size() - 1 : 0);
  for (std::size_t i = 1; i < tokens.size(); ++i) {
    const auto row = logits.row(static_cast<Eigen::Index>(i - 1)).template cast<long double>();
    const long double mx = row.maxCoeff();
    const long double lse = mx + std::log((row.array() - mx).exp().sum());
    out.push_back(row(tokens[i]) - lse);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Incremental decoding

template <typename T>
IncrementalDecoder<T>::IncrementalDecoder(const ModelParams<T>& params)
    : params_(&params), keys_(params.config.n_layers), values_(params.config.n_layers) {}

template <typename T>
void IncrementalDecoder<T>::push(TokenId token) {
  const ModelConfig& c = params_->config;
  if (length_ >= c.max_seq_len) throw ValidationError("decoder reached max_seq_len");
  if (token < 0 || static_cast<std::uint32_t>(token) >= c.vocab_size) {
    throw ValidationError("token id " + std::to_string(token) + " is outside the model vocabulary");
  }
  Views<T> v(*params_);
  const auto F = static_cast<Eigen::Index>(c.width);
  const auto d = static_cast<Eigen::Index>(c.head_dim());
  const T scale = T(1) / std::sqrt(static_cast<T>(d));
  const auto pos = static_cast<Eigen::Index>(length_);
  const Eigen::Index n = pos + 1;

  Mat<T> x = v.at(kTokEmb).row(token) + v.at(kPosEmb).row(pos);
  Mat<T> xhat, h;
  ColVec<T> rstd;
  for (std::size_t l = 0; l < c.n_layers; ++l) {
    layer_norm<T>(x, v.at(layer_slot(l, kLn1Gain)), v.at(layer_slot(l, kLn1Bias)), xhat, rstd, h);
    Mat<T> qkv = h * v.at(layer_slot(l, kQkvWeight));
    qkv += v.at(layer_slot(l, kQkvBias));
    auto& kc = keys_[l];
    auto& vc = values_[l];
    kc.insert(kc.end(), qkv.data() + F, qkv.data() + 2 * F);
    vc.insert(vc.end(), qkv.data() + 2 * F, qkv.data() + 3 * F);
    Eigen::Map<const Mat<T>> K(kc.data(), n, F);
    Eigen::Map<const Mat<T>> V(vc.data(), n, F);
    Mat<T> att(1, F);
    for (Eigen::Index hd = 0; hd < static_cast<Eigen::Index>(c.n_heads); ++hd) {
      Mat<T> s = (qkv.block(0, hd * d, 1, d) * K.block(0, hd * d, n, d).transpose()) * scale;
      const T mx = s.maxCoeff();
      s = (s.array() - mx).exp();
      s /= s.sum();
      att.block(0, hd * d, 1, d).noalias() = s * V.block(0, hd * d, n, d);
    }
    Mat<T> o = att * v.at(layer_slot(l, kOutWeight));
    o += v.at(layer_slot(l, kOutBias));
    x += o;
    layer_norm<T>(x, v.at(layer_slot(l, kLn2Gain)), v.at(layer_slot(l, kLn2Bias)), xhat, rstd, h);
    Mat<T> u = h * v.at(layer_slot(l, kFcWeight));
    u += v.at(layer_slot(l, kFcBias));
    Mat<T> g = u.unaryExpr([](T z) { return gelu(z); });
    Mat<T> m = g * v.at(layer_slot(l, kProjWeight));
    m += v.at(layer_slot(l, kProjBias));
    x += m;
  }
  layer_norm<T>(x, v.at(final_gain_slot(c)), v.at(final_bias_slot(c)), xhat, rstd, h);
  Mat<T> logits = h * v.at(head_slot(c));
  logits_.assign(logits.data(), logits.data() + logits.size());
  ++length_;
}

// ---------------------------------------------------------------------------
// Pretrained initialization

template <typename T>
ModelParams<T> load_pretrained_text_init(const ModelParams<T>& target, const ModelParams<T>& checkpoint) {
  const auto& a = target.config;
  const auto& b = checkpoint.config;
  if (a.n_layers != b.n_layers || a.width != b.width || a.n_heads != b.n_heads || a.ff_mult != b.ff_mult) {
    throw ConfigError("pretrained checkpoint shape (L=" + std::to_string(b.n_layers) + ", F=" +
                      std::to_string(b.width) + ", H=" + std::to_string(b.n_heads) +
                      ") does not match the target (L=" + std::to_string(a.n_layers) + ", F=" +
                      std::to_string(a.width) + ", H=" + std::to_string(a.n_heads) + ")");
  }
  ModelParams<T> out = target;
  const ParamLayout src_layout(b);
  const ParamLayout dst_layout(target.config);
  for (const auto& spec : dst_layout.tensors()) {
    if (spec.name == "embed.tokens" || spec.name == "head.weight") continue;
    const auto& src = src_layout.find(spec.name);
    auto dst = out.tensor(spec);
    const auto from = checkpoint.tensor(src);
    const auto rows = std::min(dst.rows(), from.rows());
    dst.topRows(rows) = from.topRows(rows);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kCheckpointMagic[4] = {'V', 'X', 'C', 'K'};
constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace

std::vector<char> encode_checkpoint(const Params& params, std::string_view metadata_json) {
  json header;
  header["config"] = json::parse(params.config.to_json());
  try {
    header["metadata"] = json::parse(metadata_json);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("checkpoint metadata is not valid JSON: ") + e.what());
  }
  const std::string header_text = header.dump();
  const ParamLayout layout(params.config);
  if (params.values.size() != layout.total_size()) {
    throw ValidationError("parameter buffer does not match its config");
  }

  detail::ByteWriter w;
  w.put_bytes(std::string_view(kCheckpointMagic, 4));
  w.put_u32(kCheckpointVersion);
  w.put_u32(static_cast<std::uint32_t>(header_text.size()));
  w.put_bytes(header_text);
  w.put_u32(static_cast<std::uint32_t>(layout.tensors().size()));
  for (const auto& spec : layout.tensors()) {
    w.put_u32(static_cast<std::uint32_t>(spec.name.size()));
    w.put_bytes(spec.name);
    w.put_u32(spec.rows);
    w.put_u32(spec.cols);
    w.put_f32s(std::span<const float>(params.values.data() + spec.offset, spec.size()));
  }
  w.put_u64(detail::fnv1a64(w.bytes()));
  return std::move(w.bytes());
}

Checkpoint decode_checkpoint(std::span<const char> bytes) {
  detail::ByteReader r(bytes);
  auto truncated = [] { return CorruptError("checkpoint is truncated"); };
  std::string magic;
  if (!r.get_bytes(4, magic)) throw truncated();
  if (magic != std::string_view(kCheckpointMagic, 4)) throw CorruptError("checkpoint has bad magic");
  std::uint32_t version = 0;
  if (!r.get_u32(version)) throw truncated();
  if (version != kCheckpointVersion) {
    throw VersionError("checkpoint version " + std::to_string(version) + " is not supported");
  }
  if (bytes.size() < 8 + 4 + 8) throw truncated();
  {
    detail::ByteReader tail(bytes.subspan(bytes.size() - 8));
    std::uint64_t stored = 0;
    tail.get_u64(stored);
    if (stored != detail::fnv1a64(bytes.first(bytes.size() - 8))) {
      // A short file fails the checksum too; report the likelier cause.
      throw CorruptError("checkpoint checksum mismatch (truncated or corrupted file)");
    }
  }
  std::uint32_t header_len = 0;
  std::string header_text;
  if (!r.get_u32(header_len) || !r.get_bytes(header_len, header_text)) throw truncated();
  Checkpoint ck;
  try {
    const json header = json::parse(header_text);
    ck.params.config = ModelConfig::from_json(header.at("config").dump());
    ck.metadata_json = header.value("metadata", json::object()).dump();
  } catch (const json::exception& e) {
    throw CorruptError(std::string("checkpoint header is malformed: ") + e.what());
  }
  try {
    ck.params.config.validate();
  } catch (const ConfigError& e) {
    throw CorruptError(std::string("checkpoint config is invalid: ") + e.what());
  }
  const ParamLayout layout(ck.params.config);
  ck.params.values.assign(layout.total_size(), 0.0f);
  std::uint32_t n_tensors = 0;
  if (!r.get_u32(n_tensors)) throw truncated();
  if (n_tensors != layout.tensors().size()) throw CorruptError("checkpoint tensor count does not match its config");
  for (const auto& spec : layout.tensors()) {
    std::uint32_t name_len = 0, rows = 0, cols = 0;
    std::string name;
    if (!r.get_u32(name_len) || !r.get_bytes(name_len, name) || !r.get_u32(rows) || !r.get_u32(cols)) {
      throw truncated();
    }
    if (name != spec.name || rows != spec.rows || cols != spec.cols) {
      throw CorruptError("checkpoint tensor '" + name + "' does not match the expected '" + spec.name + "'");
    }
    if (!r.get_f32s(std::span<float>(ck.params.values.data() + spec.offset, spec.size()))) throw truncated();
  }
  if (r.remaining() != 8) throw CorruptError("checkpoint has unexpected trailing bytes");
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Params& params, std::string_view metadata_json) {
  detail::write_file_bytes(path, encode_checkpoint(params, metadata_json));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = detail::read_file_bytes(path);
  return decode_checkpoint(bytes);
}

// ---------------------------------------------------------------------------
// Explicit instantiations

#define VOXT_INSTANTIATE(T)                                                                             \
  template struct ModelParams<T>;                                                                       \
  template ModelParams<T> init_params<T>(const ModelConfig&, std::uint64_t);                            \
  template RowMatrix<T> forward<T>(const ModelParams<T>&, std::span<const TokenId>);                    \
  template LossResult loss_and_grads<T>(const ModelParams<T>&, std::span<const SequenceView>,           \
                                        AlignedVector<T>*, DropoutContext);                               \
  template LossResult loss_and_grads<T>(const ModelParams<T>&, std::span<const TokenId>,                \
                                        std::span<const std::uint8_t>, AlignedVector<T>*);                \
  template std::vector<long double> token_logprobs<T>(const ModelParams<T>&, std::span<const TokenId>);      \
  template class IncrementalDecoder<T>;                                                                 \
  template ModelParams<T> load_pretrained_text_init<T>(const ModelParams<T>&, const ModelParams<T>&);

VOXT_INSTANTIATE(float)
VOXT_INSTANTIATE(double)

#undef VOXT_INSTANTIATE

}  // namespace voxt
