// Copyright 2026 The eeganon Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#pragma once

// The three networks: a transformer autoencoder, a two-branch CNN sleep
// stager (utility model) and a transformer subject classifier (re-id model).
// All forward passes record onto a Tape so gradients can flow either into
// the parameters or, for frozen models, only into the input signal.

#include <algorithm>
#include <cmath>
#include <map>
#include <cstddef>
#include <string>
#include <vector>

#include "eeganon/autodiff.hpp"
#include "eeganon/errors.hpp"
#include "eeganon/ops.hpp"
#include "eeganon/params.hpp"
#include "eeganon/random.hpp"
#include "eeganon/tensor.hpp"
#include "json.hpp"

namespace eeganon {

inline constexpr const char* kAutoencoderKind = "autoencoder";
inline constexpr const char* kUtilityKind = "utility_cnn";
inline constexpr const char* kReidKind = "reid_transformer";

struct AutoencoderConfig {
  int n_channels = 2;
  int n_samples = 3000;
  int patch_len = 100;
  int d_model = 64;
  int n_encoder_layers = 4;
  int n_decoder_layers = 4;
  int n_heads = 8;
  int ff_dim = 256;
  double dropout = 0.0;

  int TokenCount() const { return n_samples / patch_len; }
  int TokenWidth() const { return n_channels * patch_len; }

  void Validate() const {
    auto fail = [](const std::string& m) { throw Error(ErrorCode::kConfig, "autoencoder: " + m); };
    if (n_channels < 1 || n_samples < 1) fail("channels and samples must be positive");
    if (patch_len < 1 || n_samples % patch_len != 0) fail("patch_len must divide n_samples");
    if (d_model < 1 || n_heads < 1 || d_model % n_heads != 0)
      fail("d_model must be divisible by n_heads");
    if (n_encoder_layers < 1 || n_decoder_layers < 1 || ff_dim < 1) fail("layer sizes must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must lie in [0, 1)");
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(AutoencoderConfig, n_channels, n_samples,
                                                patch_len, d_model, n_encoder_layers,
                                                n_decoder_layers, n_heads, ff_dim, dropout)

enum class ClassifierKind { kUtilityCnn, kReidTransformer };

NLOHMANN_JSON_SERIALIZE_ENUM(ClassifierKind, {{ClassifierKind::kUtilityCnn, "utility_cnn"},
                                              {ClassifierKind::kReidTransformer,
                                               "reid_transformer"}})

struct ClassifierConfig {
  ClassifierKind kind = ClassifierKind::kUtilityCnn;
  int n_classes = 5;
  int n_channels = 2;
  int n_samples = 3000;
  // utility_cnn
  int small_kernel = 50;
  int small_stride = 6;
  int large_kernel = 400;
  int large_stride = 50;
  int conv_filters = 32;
  int hidden = 64;
  // reid_transformer
  int patch_len = 100;
  int d_model = 64;
  int n_layers = 2;
  int n_heads = 8;
  int ff_dim = 256;
  double dropout = 0.0;

  static ClassifierConfig Utility(int n_classes = 5) {
    ClassifierConfig c;
    c.kind = ClassifierKind::kUtilityCnn;
    c.n_classes = n_classes;
    return c;
  }
  static ClassifierConfig Reid(int n_subjects) {
    ClassifierConfig c;
    c.kind = ClassifierKind::kReidTransformer;
    c.n_classes = n_subjects;
    return c;
  }

  const char* KindName() const {
    return kind == ClassifierKind::kUtilityCnn ? kUtilityKind : kReidKind;
  }

  void Validate() const {
    auto fail = [this](const std::string& m) {
      throw Error(ErrorCode::kConfig, std::string(KindName()) + ": " + m);
    };
    // A single-subject re-id head is degenerate but well defined.
    const int min_classes = kind == ClassifierKind::kUtilityCnn ? 2 : 1;
    if (n_classes < min_classes) fail("too few classes");
    if (n_channels < 1 || n_samples < 1) fail("channels and samples must be positive");
    if (kind == ClassifierKind::kUtilityCnn) {
      if (small_kernel < 1 || large_kernel < 1 || small_stride < 1 || large_stride < 1)
        fail("kernel and stride must be positive");
      if (small_kernel > n_samples || large_kernel > n_samples) fail("kernel longer than epoch");
      if (conv_filters < 1 || hidden < 1) fail("widths must be positive");
    } else {
      if (patch_len < 1 || n_samples % patch_len != 0) fail("patch_len must divide n_samples");
      if (d_model < 1 || n_heads < 1 || d_model % n_heads != 0)
        fail("d_model must be divisible by n_heads");
      if (n_layers < 1 || ff_dim < 1) fail("layer sizes must be positive");
    }
    if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must lie in [0, 1)");
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ClassifierConfig, kind, n_classes, n_channels,
                                                n_samples, small_kernel, small_stride,
                                                large_kernel, large_stride, conv_filters, hidden,
                                                patch_len, d_model, n_layers, n_heads, ff_dim,
                                                dropout)

// Closed-form parameter counts, used to cross-check initialization.
inline std::size_t EncoderLayerParamCount(std::size_t d, std::size_t ff) {
  return 4 * (d * d + d) + 2 * (2 * d) + (d * ff + ff) + (ff * d + d);
}

inline std::size_t DecoderLayerParamCount(std::size_t d, std::size_t ff) {
  return 8 * (d * d + d) + 3 * (2 * d) + (d * ff + ff) + (ff * d + d);
}

inline std::size_t ExpectedParamCount(const AutoencoderConfig& c) {
  const std::size_t d = c.d_model, w = c.TokenWidth(), ff = c.ff_dim;
  return (w * d + d) + c.n_encoder_layers * EncoderLayerParamCount(d, ff) + 2 * d +
         c.n_decoder_layers * DecoderLayerParamCount(d, ff) + 2 * d + (d * w + w);
}

inline std::size_t ExpectedParamCount(const ClassifierConfig& c) {
  const std::size_t k = c.n_classes;
  if (c.kind == ClassifierKind::kUtilityCnn) {
    const std::size_t f = c.conv_filters, ch = c.n_channels, h = c.hidden;
    return (f * ch * c.small_kernel + f) + (f * ch * c.large_kernel + f) + (2 * f * h + h) +
           (h * k + k);
  }
  const std::size_t d = c.d_model, w = c.n_channels * c.patch_len;
  return (w * d + d) + c.n_layers * EncoderLayerParamCount(d, c.ff_dim) + 2 * d + (d * k + k);
}

namespace internal {

template <typename T>
void AddLinear(ParameterStore<T>& s, Rng& rng, const std::string& name, std::size_t in,
               std::size_t out) {
  Tensor<T> w({in, out});
  const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = static_cast<T>(rng.Uniform(-bound, bound));
  s.Add(name + ".w", std::move(w));
  s.Add(name + ".b", Tensor<T>({out}));
}

template <typename T>
void AddNorm(ParameterStore<T>& s, const std::string& name, std::size_t d) {
  s.Add(name + ".g", Tensor<T>({d}, T(1)));
  s.Add(name + ".b", Tensor<T>({d}));
}

template <typename T>
void AddAttention(ParameterStore<T>& s, Rng& rng, const std::string& name, std::size_t d) {
  for (const char* proj : {"q", "k", "v", "o"}) AddLinear(s, rng, name + "." + proj, d, d);
}

template <typename T>
void AddEncoderLayer(ParameterStore<T>& s, Rng& rng, const std::string& name, std::size_t d,
                     std::size_t ff) {
  AddNorm(s, name + ".ln1", d);
  AddAttention(s, rng, name + ".attn", d);
  AddNorm(s, name + ".ln2", d);
  AddLinear(s, rng, name + ".ff1", d, ff);
  AddLinear(s, rng, name + ".ff2", ff, d);
}

template <typename T>
void AddDecoderLayer(ParameterStore<T>& s, Rng& rng, const std::string& name, std::size_t d,
                     std::size_t ff) {
  AddNorm(s, name + ".ln1", d);
  AddAttention(s, rng, name + ".self", d);
  AddNorm(s, name + ".ln2", d);
  AddAttention(s, rng, name + ".cross", d);
  AddNorm(s, name + ".ln3", d);
  AddLinear(s, rng, name + ".ff1", d, ff);
  AddLinear(s, rng, name + ".ff2", ff, d);
}

}  // namespace internal

template <typename T>
ParameterStore<T> InitAutoencoder(const AutoencoderConfig& c, std::uint64_t seed) {
  c.Validate();
  Rng rng(DeriveSeed(seed, kAutoencoderKind));
  ParameterStore<T> s(kAutoencoderKind, c);
  const std::size_t d = c.d_model, w = c.TokenWidth();
  internal::AddLinear(s, rng, "embed", w, d);
  for (int i = 0; i < c.n_encoder_layers; ++i)
    internal::AddEncoderLayer(s, rng, "enc" + std::to_string(i), d, c.ff_dim);
  internal::AddNorm(s, "enc_norm", d);
  for (int i = 0; i < c.n_decoder_layers; ++i)
    internal::AddDecoderLayer(s, rng, "dec" + std::to_string(i), d, c.ff_dim);
  internal::AddNorm(s, "dec_norm", d);
  internal::AddLinear(s, rng, "head", d, w);
  return s;
}

template <typename T>
ParameterStore<T> InitClassifier(const ClassifierConfig& c, std::uint64_t seed) {
  c.Validate();
  Rng rng(DeriveSeed(seed, c.KindName()));
  ParameterStore<T> s(c.KindName(), c);
  if (c.kind == ClassifierKind::kUtilityCnn) {
    const std::size_t f = c.conv_filters, ch = c.n_channels;
    for (const auto& [name, ks] :
         {std::pair<std::string, std::size_t>{"small", c.small_kernel}, {"large", c.large_kernel}}) {
      Tensor<T> w({f, ch, ks});
      const double bound = std::sqrt(6.0 / static_cast<double>((ch + f) * ks));
      for (std::size_t i = 0; i < w.size(); ++i) w[i] = static_cast<T>(rng.Uniform(-bound, bound));
      s.Add(name + ".w", std::move(w));
      s.Add(name + ".b", Tensor<T>({f}));
    }
    internal::AddLinear(s, rng, "fc1", 2 * f, c.hidden);
    internal::AddLinear(s, rng, "fc2", c.hidden, c.n_classes);
  } else {
    const std::size_t d = c.d_model;
    internal::AddLinear(s, rng, "embed", static_cast<std::size_t>(c.n_channels * c.patch_len), d);
    for (int i = 0; i < c.n_layers; ++i)
      internal::AddEncoderLayer(s, rng, "enc" + std::to_string(i), d, c.ff_dim);
    internal::AddNorm(s, "enc_norm", d);
    internal::AddLinear(s, rng, "head", d, c.n_classes);
  }
  return s;
}

// Parameters placed on a tape. Trainable bindings receive gradients;
// frozen bindings are constants that still pass gradients to the input.
template <typename T>
class BoundParams {
 public:
  BoundParams(Tape<T>& tape, const ParameterStore<T>& store, bool trainable) {
    vars_.reserve(store.size());
    for (std::size_t i = 0; i < store.size(); ++i) {
      index_.emplace(store.NameAt(i), i);
      vars_.push_back(tape.Leaf(store.At(i), trainable));
    }
  }

  Var<T> operator()(const std::string& name) const {
    const auto it = index_.find(name);
    if (it == index_.end()) {
      throw Error(ErrorCode::kIncompatibleCheckpoint, "model is missing array '" + name + "'");
    }
    return vars_[it->second];
  }

  // Gradients in store order; empty tensors where nothing flowed.
  std::vector<Tensor<T>> Gradients() const {
    std::vector<Tensor<T>> out;
    out.reserve(vars_.size());
    for (const Var<T>& v : vars_) out.push_back(v.grad());
    return out;
  }

 private:
  std::map<std::string, std::size_t> index_;
  std::vector<Var<T>> vars_;
};

// Dropout randomness; a null rng means inference mode.
struct ForwardMode {
  bool train = false;
  Rng* rng = nullptr;
  Rng* active_rng() const { return train ? rng : nullptr; }
};

template <typename T>
Tensor<T> SinusoidalPositions(std::size_t tokens, std::size_t d) {
  Tensor<T> pe({tokens, d});
  for (std::size_t t = 0; t < tokens; ++t)
    for (std::size_t i = 0; i < d; i += 2) {
      const double angle =
          static_cast<double>(t) / std::pow(10000.0, static_cast<double>(i) / static_cast<double>(d));
      pe[t * d + i] = static_cast<T>(std::sin(angle));
      if (i + 1 < d) pe[t * d + i + 1] = static_cast<T>(std::cos(angle));
    }
  return pe;
}

namespace internal {

template <typename T>
void CheckFinite(Var<T> v, int layer, const char* where) {
  if (!v.value().AllFinite()) {
    throw Error(ErrorCode::kNumericFailure,
                std::string("non-finite activation in ") + where + " layer " + std::to_string(layer),
                layer);
  }
}

template <typename T>
Var<T> Dense(const BoundParams<T>& p, const std::string& name, Var<T> x) {
  return ops::Linear(x, p(name + ".w"), p(name + ".b"));
}

template <typename T>
Var<T> Norm(const BoundParams<T>& p, const std::string& name, Var<T> x) {
  return ops::LayerNorm(x, p(name + ".g"), p(name + ".b"));
}

template <typename T>
Var<T> MultiHead(const BoundParams<T>& p, const std::string& name, Var<T> query, Var<T> memory,
                 std::size_t batch, std::size_t heads) {
  Var<T> q = Dense(p, name + ".q", query);
  Var<T> k = Dense(p, name + ".k", memory);
  Var<T> v = Dense(p, name + ".v", memory);
  return Dense(p, name + ".o", ops::Attention(q, k, v, batch, heads));
}

template <typename T>
Var<T> FeedForward(const BoundParams<T>& p, const std::string& name, Var<T> x) {
  return Dense(p, name + ".ff2", ops::Gelu(Dense(p, name + ".ff1", x)));
}

// Pre-norm encoder layer.
template <typename T>
Var<T> EncoderLayer(const BoundParams<T>& p, const std::string& name, Var<T> x,
                    std::size_t batch, std::size_t heads, double dropout, const ForwardMode& mode) {
  Var<T> h = Norm(p, name + ".ln1", x);
  x = ops::Add(x, ops::Dropout(MultiHead(p, name + ".attn", h, h, batch, heads), dropout,
                               mode.active_rng()));
  h = Norm(p, name + ".ln2", x);
  return ops::Add(x, ops::Dropout(FeedForward(p, name, h), dropout, mode.active_rng()));
}

// Pre-norm decoder layer: self-attention, cross-attention over `memory`,
// feed-forward. No causal mask.
template <typename T>
Var<T> DecoderLayer(const BoundParams<T>& p, const std::string& name, Var<T> y, Var<T> memory,
                    std::size_t batch, std::size_t heads, double dropout,
                    const ForwardMode& mode) {
  Var<T> h = Norm(p, name + ".ln1", y);
  y = ops::Add(y, ops::Dropout(MultiHead(p, name + ".self", h, h, batch, heads), dropout,
                               mode.active_rng()));
  h = Norm(p, name + ".ln2", y);
  y = ops::Add(y, ops::Dropout(MultiHead(p, name + ".cross", h, memory, batch, heads), dropout,
                               mode.active_rng()));
  h = Norm(p, name + ".ln3", y);
  return ops::Add(y, ops::Dropout(FeedForward(p, name, h), dropout, mode.active_rng()));
}

template <typename T>
void RequireBatchShape(const Tensor<T>& x, int channels, int samples, const char* model) {
  if (x.rank() != 3 || x.dim(0) < 1 || x.dim(1) != static_cast<std::size_t>(channels) ||
      x.dim(2) != static_cast<std::size_t>(samples)) {
    throw Error(ErrorCode::kContract, std::string(model) + " expects [B x " +
                                          std::to_string(channels) + " x " +
                                          std::to_string(samples) + "], got " +
                                          ShapeString(x.shape()));
  }
}

}  // namespace internal

// Autoencoder on standardized signals [B, C, L] -> [B, C, L].
template <typename T>
Var<T> AutoencoderForward(const BoundParams<T>& p, const AutoencoderConfig& c, Var<T> x,
                          const ForwardMode& mode = {}) {
  internal::RequireBatchShape(x.value(), c.n_channels, c.n_samples, "autoencoder");
  const std::size_t batch = x.value().dim(0);
  const std::size_t heads = c.n_heads;
  Var<T> h = internal::Dense(p, "embed", ops::Tokenize(x, c.patch_len));
  h = ops::AddTiled(h, SinusoidalPositions<T>(c.TokenCount(), c.d_model));
  internal::CheckFinite(h, 0, "autoencoder embedding");
  for (int i = 0; i < c.n_encoder_layers; ++i) {
    h = internal::EncoderLayer(p, "enc" + std::to_string(i), h, batch, heads, c.dropout, mode);
    internal::CheckFinite(h, i, "autoencoder encoder");
  }
  const Var<T> memory = internal::Norm(p, "enc_norm", h);
  Var<T> y = memory;
  for (int i = 0; i < c.n_decoder_layers; ++i) {
    y = internal::DecoderLayer(p, "dec" + std::to_string(i), y, memory, batch, heads, c.dropout,
                               mode);
    internal::CheckFinite(y, c.n_encoder_layers + i, "autoencoder decoder");
  }
  y = internal::Dense(p, "head", internal::Norm(p, "dec_norm", y));
  return ops::Detokenize(y, c.n_channels, c.n_samples);
}

// Utility stager on raw microvolt signals [B, C, L] -> logits [B, K].
template <typename T>
Var<T> UtilityForward(const BoundParams<T>& p, const ClassifierConfig& c, Var<T> x,
                      const ForwardMode& mode = {}) {
  internal::RequireBatchShape(x.value(), c.n_channels, c.n_samples, "utility model");
  const std::size_t batch = x.value().dim(0);
  const std::size_t f = c.conv_filters;
  Var<T> xs = ops::StandardizeRows(x, c.n_samples);
  auto branch = [&](const std::string& name, int stride) {
    Var<T> h = ops::Gelu(ops::Conv1d(xs, p(name + ".w"), p(name + ".b"), stride));
    const std::size_t len = h.value().dim(2);
    return ops::Reshape(ops::MeanMiddle(h, batch * f, len, 1), {batch, f});
  };
  Var<T> feats = ops::ConcatColumns(branch("small", c.small_stride), branch("large", c.large_stride));
  internal::CheckFinite(feats, 0, "utility conv");
  Var<T> h = ops::Gelu(internal::Dense(p, "fc1", ops::Dropout(feats, c.dropout, mode.active_rng())));
  internal::CheckFinite(h, 1, "utility dense");
  Var<T> logits = internal::Dense(p, "fc2", h);
  internal::CheckFinite(logits, 2, "utility output");
  return logits;
}

// Re-identification transformer on raw microvolt signals -> logits [B, n_subjects].
template <typename T>
Var<T> ReidForward(const BoundParams<T>& p, const ClassifierConfig& c, Var<T> x,
                   const ForwardMode& mode = {}) {
  internal::RequireBatchShape(x.value(), c.n_channels, c.n_samples, "re-id model");
  const std::size_t batch = x.value().dim(0);
  const std::size_t tokens = c.n_samples / c.patch_len;
  Var<T> h = internal::Dense(p, "embed", ops::Tokenize(ops::StandardizeRows(x, c.n_samples),
                                                       c.patch_len));
  h = ops::AddTiled(h, SinusoidalPositions<T>(tokens, c.d_model));
  internal::CheckFinite(h, 0, "re-id embedding");
  for (int i = 0; i < c.n_layers; ++i) {
    h = internal::EncoderLayer(p, "enc" + std::to_string(i), h, batch, c.n_heads, c.dropout, mode);
    internal::CheckFinite(h, i, "re-id encoder");
  }
  h = internal::Norm(p, "enc_norm", h);
  Var<T> pooled = ops::MeanMiddle(h, batch, tokens, c.d_model);
  return internal::Dense(p, "head", pooled);
}

template <typename T>
Var<T> ClassifierForward(const BoundParams<T>& p, const ClassifierConfig& c, Var<T> x,
                         const ForwardMode& mode = {}) {
  return c.kind == ClassifierKind::kUtilityCnn ? UtilityForward(p, c, x, mode)
                                               : ReidForward(p, c, x, mode);
}

// Per-row mean and standard deviation (sqrt(var + eps)), matching
// ops::StandardizeRows.
template <typename T>
struct RowStats {
  std::vector<T> mean;
  std::vector<T> stddev;
};

template <typename T>
RowStats<T> ComputeRowStats(const Tensor<T>& x, std::size_t row_len, T eps = T(1e-6)) {
  const std::size_t rows = x.size() / row_len;
  RowStats<T> s{std::vector<T>(rows), std::vector<T>(rows)};
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x.data() + r * row_len;
    T mean = 0;
    for (std::size_t j = 0; j < row_len; ++j) mean += xr[j];
    mean /= static_cast<T>(row_len);
    T var = 0;
    for (std::size_t j = 0; j < row_len; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= static_cast<T>(row_len);
    s.mean[r] = mean;
    s.stddev[r] = std::sqrt(var + eps);
  }
  return s;
}

template <typename T>
Tensor<T> Standardize(const Tensor<T>& x, const RowStats<T>& s, std::size_t row_len) {
  Tensor<T> y(x.shape());
  for (std::size_t r = 0; r < s.mean.size(); ++r)
    for (std::size_t j = 0; j < row_len; ++j)
      y[r * row_len + j] = (x[r * row_len + j] - s.mean[r]) / s.stddev[r];
  return y;
}

// Inference-mode reconstruction in microvolts: standardize, autoencode,
// restore each row's mean and scale.
template <typename T>
Tensor<T> Reconstruct(const ParameterStore<T>& store, const AutoencoderConfig& c,
                      const Tensor<T>& batch) {
  internal::RequireBatchShape(batch, c.n_channels, c.n_samples, "autoencoder");
  const RowStats<T> stats = ComputeRowStats(batch, c.n_samples);
  Tape<T> tape;
  BoundParams<T> p(tape, store, false);
  Var<T> z = AutoencoderForward(p, c, tape.Constant(Standardize(batch, stats, c.n_samples)));
  Var<T> out = ops::AffineRows(z, c.n_samples, std::span<const T>(stats.stddev),
                               std::span<const T>(stats.mean));
  return out.value();
}

template <typename T>
Tensor<T> ClassifierLogits(const ParameterStore<T>& store, const ClassifierConfig& c,
                           const Tensor<T>& batch) {
  Tape<T> tape;
  BoundParams<T> p(tape, store, false);
  return ClassifierForward(p, c, tape.Constant(batch)).value();
}

inline std::vector<int> ArgmaxRows(const Tensor<float>& logits) {
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const float* r = logits.data() + i * k;
    out[i] = static_cast<int>(std::max_element(r, r + k) - r);
  }
  return out;
}

inline AutoencoderConfig AutoencoderConfigOf(const ParameterStore<float>& s) {
  return s.config().get<AutoencoderConfig>();
}

inline ClassifierConfig ClassifierConfigOf(const ParameterStore<float>& s) {
  return s.config().get<ClassifierConfig>();
}

}  // namespace eeganon
