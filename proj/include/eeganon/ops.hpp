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

// Differentiable ops recorded on a Tape. Each op validates its shapes,
// computes the forward value, and registers a closure that accumulates
// gradients into whichever inputs require them.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "eeganon/autodiff.hpp"
#include "eeganon/errors.hpp"
#include "eeganon/random.hpp"
#include "eeganon/tensor.hpp"

namespace eeganon::ops {

namespace internal {

inline void Require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::kContract, what);
}

template <typename T>
bool AnyGrad(std::initializer_list<Var<T>> vars) {
  for (const auto& v : vars) {
    if (v.requires_grad()) return true;
  }
  return false;
}

}  // namespace internal

template <typename T>
using Node = typename Tape<T>::Node;

template <typename T>
using MatrixMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename T>
using ConstMatrixMap =
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename T>
using VectorMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>;
template <typename T>
using ConstVectorMap = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>;
template <typename T>
using RowVectorMap = Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>;
template <typename T>
using ConstRowVectorMap = Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>;

// y[N,out] = x[N,in] * w[in,out] + b[out]
template <typename T>
Var<T> Linear(Var<T> x, Var<T> w, Var<T> b) {
  const Tensor<T>& X = x.value();
  const Tensor<T>& W = w.value();
  internal::Require(X.rank() == 2 && W.rank() == 2 && X.dim(1) == W.dim(0) &&
                        b.value().size() == W.dim(1),
                    "linear: incompatible shapes " + ShapeString(X.shape()) +
                        " and " + ShapeString(W.shape()));
  const std::size_t n = X.dim(0), in = X.dim(1), out = W.dim(1);
  Tensor<T> y({n, out});
  {
    MatrixMap<T> ym(y.data(), n, out);
    ym.noalias() = ConstMatrixMap<T>(X.data(), n, in) * ConstMatrixMap<T>(W.data(), in, out);
    ym.rowwise() += ConstRowVectorMap<T>(b.value().data(), out);
  }
  return x.tape->Op(
      std::move(y), internal::AnyGrad({x, w, b}),
      [xi = x.id, wi = w.id, bi = b.id, n, in, out](Tape<T>& t, Node<T>& self) {
        ConstMatrixMap<T> dy(self.grad.data(), n, out);
        if (t.node(xi).requires_grad) {
          MatrixMap<T>(t.GradOf(xi).data(), n, in).noalias() +=
              dy * ConstMatrixMap<T>(t.node(wi).value.data(), in, out).transpose();
        }
        if (t.node(wi).requires_grad) {
          MatrixMap<T>(t.GradOf(wi).data(), in, out).noalias() +=
              ConstMatrixMap<T>(t.node(xi).value.data(), n, in).transpose() * dy;
        }
        if (t.node(bi).requires_grad) {
          RowVectorMap<T>(t.GradOf(bi).data(), out) += dy.colwise().sum();
        }
      });
}

template <typename T>
Var<T> Add(Var<T> a, Var<T> b) {
  internal::Require(a.value().size() == b.value().size(),
                    "add: size mismatch " + ShapeString(a.shape()) + " vs " +
                        ShapeString(b.shape()));
  Tensor<T> y = a.value();
  const T* bv = b.value().data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += bv[i];
  return a.tape->Op(std::move(y), internal::AnyGrad({a, b}),
                    [ai = a.id, bi = b.id](Tape<T>& t, Node<T>& self) {
                      for (const std::size_t id : {ai, bi}) {
                        if (!t.node(id).requires_grad) continue;
                        Tensor<T>& g = t.GradOf(id);
                        Axpy(T{1}, self.grad.data(), g.data(), g.size());
                      }
                    });
}

// x[N,D] + pattern[P,D] tiled over N/P blocks. The pattern is a constant.
template <typename T>
Var<T> AddTiled(Var<T> x, const Tensor<T>& pattern) {
  const Tensor<T>& X = x.value();
  internal::Require(pattern.size() > 0 && X.size() % pattern.size() == 0,
                    "add_tiled: pattern does not tile input");
  Tensor<T> y = X;
  const std::size_t p = pattern.size();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += pattern[i % p];
  return x.tape->Op(std::move(y), x.requires_grad(),
                    [xi = x.id](Tape<T>& t, Node<T>& self) {
                      Tensor<T>& g = t.GradOf(xi);
                      Axpy(T{1}, self.grad.data(), g.data(), g.size());
                    });
}

// Row-wise layer normalization over the last axis of x[N,D].
template <typename T>
Var<T> LayerNorm(Var<T> x, Var<T> gamma, Var<T> beta, T eps = T(1e-5)) {
  const Tensor<T>& X = x.value();
  internal::Require(X.rank() == 2 && gamma.value().size() == X.dim(1) &&
                        beta.value().size() == X.dim(1),
                    "layer_norm: bad shapes");
  const std::size_t n = X.dim(0), d = X.dim(1);
  Tensor<T> xhat({n, d});
  std::vector<T> rstd(n);
  Tensor<T> y({n, d});
  const T* g = gamma.value().data();
  const T* bb = beta.value().data();
  for (std::size_t i = 0; i < n; ++i) {
    const T* xr = X.data() + i * d;
    T mean = 0;
    for (std::size_t j = 0; j < d; ++j) mean += xr[j];
    mean /= static_cast<T>(d);
    T var = 0;
    for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= static_cast<T>(d);
    rstd[i] = T{1} / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      const T h = (xr[j] - mean) * rstd[i];
      xhat[i * d + j] = h;
      y[i * d + j] = h * g[j] + bb[j];
    }
  }
  return x.tape->Op(
      std::move(y), internal::AnyGrad({x, gamma, beta}),
      [xi = x.id, gi = gamma.id, bi = beta.id, n, d, xhat = std::move(xhat),
       rstd = std::move(rstd)](Tape<T>& t, Node<T>& self) {
        const T* dy = self.grad.data();
        if (t.node(gi).requires_grad) {
          T* dg = t.GradOf(gi).data();
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) dg[j] += dy[i * d + j] * xhat[i * d + j];
        }
        if (t.node(bi).requires_grad) {
          T* db = t.GradOf(bi).data();
          for (std::size_t i = 0; i < n; ++i) Axpy(T{1}, dy + i * d, db, d);
        }
        if (t.node(xi).requires_grad) {
          T* dx = t.GradOf(xi).data();
          const T* g = t.node(gi).value.data();
          std::vector<T> dh(d);
          for (std::size_t i = 0; i < n; ++i) {
            T mean_dh = 0, mean_dh_h = 0;
            for (std::size_t j = 0; j < d; ++j) {
              dh[j] = dy[i * d + j] * g[j];
              mean_dh += dh[j];
              mean_dh_h += dh[j] * xhat[i * d + j];
            }
            mean_dh /= static_cast<T>(d);
            mean_dh_h /= static_cast<T>(d);
            for (std::size_t j = 0; j < d; ++j) {
              dx[i * d + j] +=
                  rstd[i] * (dh[j] - mean_dh - xhat[i * d + j] * mean_dh_h);
            }
          }
        }
      });
}

// GELU, tanh form: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
template <typename T>
Var<T> Gelu(Var<T> x) {
  using Arr = Eigen::Array<T, Eigen::Dynamic, 1>;
  const Tensor<T>& X = x.value();
  const auto n = static_cast<Eigen::Index>(X.size());
  const T c = std::sqrt(T(2) / std::numbers::pi_v<T>);
  const T a = T(0.044715);
  Eigen::Map<const Arr> xv(X.data(), n);
  Arr th = (c * (xv + a * xv.cube())).tanh();
  Tensor<T> y(X.shape());
  Eigen::Map<Arr>(y.data(), n) = T(0.5) * xv * (T(1) + th);
  return x.tape->Op(
      std::move(y), x.requires_grad(),
      [xi = x.id, n, c, a, th = std::move(th)](Tape<T>& t, Node<T>& self) {
        Eigen::Map<const Arr> xv(t.node(xi).value.data(), n);
        Eigen::Map<const Arr> dy(self.grad.data(), n);
        Eigen::Map<Arr>(t.GradOf(xi).data(), n) +=
            dy * (T(0.5) * (T(1) + th) +
                  T(0.5) * xv * (T(1) - th.square()) * c * (T(1) + T(3) * a * xv.square()));
      });
}

// Multi-head scaled dot-product attention without masking.
// q: [batch*tq, d], k and v: [batch*tk, d]; heads split the last axis.
template <typename T>
Var<T> Attention(Var<T> q, Var<T> k, Var<T> v, std::size_t batch,
                 std::size_t heads) {
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using Strided = Eigen::Map<const Mat, 0, Eigen::OuterStride<>>;
  using StridedOut = Eigen::Map<Mat, 0, Eigen::OuterStride<>>;
  const Tensor<T>& Q = q.value();
  const Tensor<T>& K = k.value();
  const Tensor<T>& V = v.value();
  internal::Require(Q.rank() == 2 && K.rank() == 2 && V.shape() == K.shape() &&
                        Q.dim(1) == K.dim(1) && batch > 0 &&
                        Q.dim(0) % batch == 0 && K.dim(0) % batch == 0 &&
                        heads > 0 && Q.dim(1) % heads == 0,
                    "attention: bad shapes");
  const auto d = static_cast<Eigen::Index>(Q.dim(1));
  const auto tq = static_cast<Eigen::Index>(Q.dim(0) / batch);
  const auto tk = static_cast<Eigen::Index>(K.dim(0) / batch);
  const auto hd = d / static_cast<Eigen::Index>(heads);
  const T scale = T(1) / std::sqrt(static_cast<T>(hd));
  auto block = [d, hd](const T* base, Eigen::Index rows, std::size_t b, std::size_t h) {
    return Strided(base + static_cast<Eigen::Index>(b) * rows * d + static_cast<Eigen::Index>(h) * hd,
                   rows, hd, Eigen::OuterStride<>(d));
  };
  Tensor<T> probs({batch, heads, static_cast<std::size_t>(tq), static_cast<std::size_t>(tk)});
  Tensor<T> out({batch * static_cast<std::size_t>(tq), static_cast<std::size_t>(d)});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      Eigen::Map<Mat> p(probs.data() + (b * heads + h) * tq * tk, tq, tk);
      p.noalias() = scale * (block(Q.data(), tq, b, h) * block(K.data(), tk, b, h).transpose());
      for (Eigen::Index i = 0; i < tq; ++i) {
        auto row = p.row(i);
        row = (row.array() - row.maxCoeff()).exp();
        row /= row.sum();
      }
      StridedOut o(out.data() + b * tq * d + h * hd, tq, hd, Eigen::OuterStride<>(d));
      o.noalias() = p * block(V.data(), tk, b, h);
    }
  }
  return q.tape->Op(
      std::move(out), internal::AnyGrad({q, k, v}),
      [qi_ = q.id, ki_ = k.id, vi_ = v.id, batch, heads, tq, tk, d, hd, scale, block,
       probs = std::move(probs)](Tape<T>& t, Node<T>& self) {
        const T* Qv = t.node(qi_).value.data();
        const T* Kv = t.node(ki_).value.data();
        const T* Vv = t.node(vi_).value.data();
        T* dq = t.node(qi_).requires_grad ? t.GradOf(qi_).data() : nullptr;
        T* dk = t.node(ki_).requires_grad ? t.GradOf(ki_).data() : nullptr;
        T* dv = t.node(vi_).requires_grad ? t.GradOf(vi_).data() : nullptr;
        Mat dp(tq, tk);
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t h = 0; h < heads; ++h) {
            Eigen::Map<const Mat> p(probs.data() + (b * heads + h) * tq * tk, tq, tk);
            const Strided dout = block(self.grad.data(), tq, b, h);
            const auto off_q = static_cast<Eigen::Index>(b) * tq * d + static_cast<Eigen::Index>(h) * hd;
            const auto off_k = static_cast<Eigen::Index>(b) * tk * d + static_cast<Eigen::Index>(h) * hd;
            if (dv) StridedOut(dv + off_k, tk, hd, Eigen::OuterStride<>(d)).noalias() += p.transpose() * dout;
            dp.noalias() = dout * block(Vv, tk, b, h).transpose();
            // Softmax backward, folded with the score scale.
            const Eigen::Matrix<T, Eigen::Dynamic, 1> rowdot = (p.array() * dp.array()).rowwise().sum();
            dp = (p.array() * (dp.array().colwise() - rowdot.array())) * scale;
            if (dq) StridedOut(dq + off_q, tq, hd, Eigen::OuterStride<>(d)).noalias() += dp * block(Kv, tk, b, h);
            if (dk) StridedOut(dk + off_k, tk, hd, Eigen::OuterStride<>(d)).noalias() += dp.transpose() * block(Qv, tq, b, h);
          }
        }
      });
}

// Inverted dropout. Identity when rate is zero or outside training.
template <typename T>
Var<T> Dropout(Var<T> x, double rate, Rng* rng) {
  if (rate <= 0.0 || rng == nullptr) return x;
  const Tensor<T>& X = x.value();
  std::vector<T> mask(X.size());
  const T keep_scale = T(1) / static_cast<T>(1.0 - rate);
  Tensor<T> y(X.shape());
  for (std::size_t i = 0; i < X.size(); ++i) {
    mask[i] = rng->Uniform() < rate ? T(0) : keep_scale;
    y[i] = X[i] * mask[i];
  }
  return x.tape->Op(std::move(y), x.requires_grad(),
                    [xi = x.id, mask = std::move(mask)](Tape<T>& t, Node<T>& self) {
                      T* dx = t.GradOf(xi).data();
                      for (std::size_t i = 0; i < mask.size(); ++i)
                        dx[i] += self.grad[i] * mask[i];
                    });
}

// Standardizes consecutive rows of `row_len` elements to zero mean and unit
// variance.
template <typename T>
Var<T> StandardizeRows(Var<T> x, std::size_t row_len, T eps = T(1e-6)) {
  const Tensor<T>& X = x.value();
  internal::Require(row_len > 0 && X.size() % row_len == 0,
                    "standardize: row length does not divide input");
  const std::size_t rows = X.size() / row_len;
  Tensor<T> y(X.shape());
  std::vector<T> rstd(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = X.data() + r * row_len;
    T mean = 0;
    for (std::size_t j = 0; j < row_len; ++j) mean += xr[j];
    mean /= static_cast<T>(row_len);
    T var = 0;
    for (std::size_t j = 0; j < row_len; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= static_cast<T>(row_len);
    rstd[r] = T(1) / std::sqrt(var + eps);
    for (std::size_t j = 0; j < row_len; ++j) y[r * row_len + j] = (xr[j] - mean) * rstd[r];
  }
  return x.tape->Op(
      std::move(y), x.requires_grad(),
      [xi = x.id, rows, row_len, rstd = std::move(rstd)](Tape<T>& t, Node<T>& self) {
        T* dx = t.GradOf(xi).data();
        const T* yv = self.value.data();
        const T* dy = self.grad.data();
        for (std::size_t r = 0; r < rows; ++r) {
          const std::size_t off = r * row_len;
          T mean_dy = 0, mean_dy_y = 0;
          for (std::size_t j = 0; j < row_len; ++j) {
            mean_dy += dy[off + j];
            mean_dy_y += dy[off + j] * yv[off + j];
          }
          mean_dy /= static_cast<T>(row_len);
          mean_dy_y /= static_cast<T>(row_len);
          for (std::size_t j = 0; j < row_len; ++j) {
            dx[off + j] += rstd[r] * (dy[off + j] - mean_dy - yv[off + j] * mean_dy_y);
          }
        }
      });
}

// y = x * scale[r] + shift[r] for consecutive rows of `row_len` elements.
// Scale and shift are constants.
template <typename T>
Var<T> AffineRows(Var<T> x, std::size_t row_len, std::span<const T> scale,
                  std::span<const T> shift) {
  const Tensor<T>& X = x.value();
  internal::Require(row_len > 0 && X.size() == scale.size() * row_len &&
                        scale.size() == shift.size(),
                    "affine_rows: bad shapes");
  Tensor<T> y(X.shape());
  for (std::size_t r = 0; r < scale.size(); ++r)
    for (std::size_t j = 0; j < row_len; ++j)
      y[r * row_len + j] = X[r * row_len + j] * scale[r] + shift[r];
  return x.tape->Op(std::move(y), x.requires_grad(),
                    [xi = x.id, row_len,
                     s = std::vector<T>(scale.begin(), scale.end())](Tape<T>& t, Node<T>& self) {
                      T* dx = t.GradOf(xi).data();
                      for (std::size_t r = 0; r < s.size(); ++r)
                        for (std::size_t j = 0; j < row_len; ++j)
                          dx[r * row_len + j] += self.grad[r * row_len + j] * s[r];
                    });
}

// [B, C, L] -> [B * L/patch, C * patch]; token t holds samples
// [t*patch, (t+1)*patch) of every channel, channel-major.
template <typename T>
Tensor<T> TokenizeValues(const Tensor<T>& x, std::size_t patch) {
  internal::Require(x.rank() == 3 && patch > 0 && x.dim(2) % patch == 0,
                    "tokenize: expected [B, C, L] with patch dividing L, got " +
                        ShapeString(x.shape()));
  const std::size_t b = x.dim(0), c = x.dim(1), l = x.dim(2), nt = l / patch;
  Tensor<T> y({b * nt, c * patch});
  for (std::size_t bi = 0; bi < b; ++bi)
    for (std::size_t ci = 0; ci < c; ++ci)
      for (std::size_t ti = 0; ti < nt; ++ti)
        std::copy_n(x.data() + (bi * c + ci) * l + ti * patch, patch,
                    y.data() + (bi * nt + ti) * c * patch + ci * patch);
  return y;
}

template <typename T>
Tensor<T> DetokenizeValues(const Tensor<T>& y, std::size_t channels,
                           std::size_t length) {
  internal::Require(y.rank() == 2 && channels > 0 && y.dim(1) % channels == 0,
                    "detokenize: bad token shape " + ShapeString(y.shape()));
  const std::size_t patch = y.dim(1) / channels;
  internal::Require(length % patch == 0 && y.dim(0) % (length / patch) == 0,
                    "detokenize: token count does not match length");
  const std::size_t nt = length / patch, b = y.dim(0) / nt;
  Tensor<T> x({b, channels, length});
  for (std::size_t bi = 0; bi < b; ++bi)
    for (std::size_t ci = 0; ci < channels; ++ci)
      for (std::size_t ti = 0; ti < nt; ++ti)
        std::copy_n(y.data() + (bi * nt + ti) * channels * patch + ci * patch, patch,
                    x.data() + (bi * channels + ci) * length + ti * patch);
  return x;
}

template <typename T>
Var<T> Tokenize(Var<T> x, std::size_t patch) {
  const std::size_t c = x.value().rank() == 3 ? x.value().dim(1) : 0;
  const std::size_t l = x.value().rank() == 3 ? x.value().dim(2) : 0;
  return x.tape->Op(TokenizeValues(x.value(), patch), x.requires_grad(),
                    [xi = x.id, c, l](Tape<T>& t, Node<T>& self) {
                      const Tensor<T> back = DetokenizeValues(self.grad, c, l);
                      Tensor<T>& g = t.GradOf(xi);
                      Axpy(T{1}, back.data(), g.data(), g.size());
                    });
}

template <typename T>
Var<T> Detokenize(Var<T> y, std::size_t channels, std::size_t length) {
  Tensor<T> x = DetokenizeValues(y.value(), channels, length);
  const std::size_t patch = y.value().dim(1) / channels;
  return y.tape->Op(std::move(x), y.requires_grad(),
                    [yi = y.id, patch](Tape<T>& t, Node<T>& self) {
                      const Tensor<T> back = TokenizeValues(self.grad, patch);
                      Tensor<T>& g = t.GradOf(yi);
                      Axpy(T{1}, back.data(), g.data(), g.size());
                    });
}

// Valid 1-D convolution. x: [B, Cin, L], w: [Cout, Cin, K], b: [Cout].
// Each example is lowered to a [Lout, Cin*K] patch matrix and multiplied.
template <typename T>
Var<T> Conv1d(Var<T> x, Var<T> w, Var<T> b, std::size_t stride) {
  const Tensor<T>& X = x.value();
  const Tensor<T>& W = w.value();
  internal::Require(X.rank() == 3 && W.rank() == 3 && X.dim(1) == W.dim(1) &&
                        b.value().size() == W.dim(0) && stride > 0 &&
                        X.dim(2) >= W.dim(2),
                    "conv1d: bad shapes " + ShapeString(X.shape()) + " * " +
                        ShapeString(W.shape()));
  const std::size_t nb = X.dim(0), cin = X.dim(1), len = X.dim(2);
  const std::size_t cout = W.dim(0), ks = W.dim(2);
  const std::size_t lout = (len - ks) / stride + 1;
  const std::size_t width = cin * ks;
  auto lower = [=](const T* xb, T* patches) {
    for (std::size_t t = 0; t < lout; ++t)
      for (std::size_t ci = 0; ci < cin; ++ci)
        std::copy_n(xb + ci * len + t * stride, ks, patches + t * width + ci * ks);
  };
  Tensor<T> y({nb, cout, lout});
  std::vector<T> patches(lout * width);
  ConstMatrixMap<T> wm(W.data(), cout, width);
  for (std::size_t bi = 0; bi < nb; ++bi) {
    lower(X.data() + bi * cin * len, patches.data());
    MatrixMap<T> ym(y.data() + bi * cout * lout, cout, lout);
    ym.noalias() = wm * ConstMatrixMap<T>(patches.data(), lout, width).transpose();
    ym.colwise() += ConstVectorMap<T>(b.value().data(), cout);
  }
  return x.tape->Op(
      std::move(y), internal::AnyGrad({x, w, b}),
      [xi = x.id, wi = w.id, bi_ = b.id, nb, cin, len, cout, ks, lout, stride, width,
       lower](Tape<T>& t, Node<T>& self) {
        const T* xv = t.node(xi).value.data();
        ConstMatrixMap<T> wm(t.node(wi).value.data(), cout, width);
        T* dx = t.node(xi).requires_grad ? t.GradOf(xi).data() : nullptr;
        T* dw = t.node(wi).requires_grad ? t.GradOf(wi).data() : nullptr;
        T* db = t.node(bi_).requires_grad ? t.GradOf(bi_).data() : nullptr;
        std::vector<T> patches(lout * width), dpatches(lout * width);
        for (std::size_t bi = 0; bi < nb; ++bi) {
          ConstMatrixMap<T> dy(self.grad.data() + bi * cout * lout, cout, lout);
          if (db) VectorMap<T>(db, cout) += dy.rowwise().sum();
          if (dw) {
            lower(xv + bi * cin * len, patches.data());
            MatrixMap<T>(dw, cout, width).noalias() +=
                dy * ConstMatrixMap<T>(patches.data(), lout, width);
          }
          if (dx) {
            MatrixMap<T> dp(dpatches.data(), lout, width);
            dp.noalias() = dy.transpose() * wm;
            T* dxb = dx + bi * cin * len;
            for (std::size_t tt = 0; tt < lout; ++tt)
              for (std::size_t ci = 0; ci < cin; ++ci)
                Axpy(T{1}, dpatches.data() + tt * width + ci * ks, dxb + ci * len + tt * stride, ks);
          }
        }
      });
}

// Views x as [outer, middle, inner] and averages over the middle axis,
// giving [outer, inner].
template <typename T>
Var<T> MeanMiddle(Var<T> x, std::size_t outer, std::size_t middle,
                  std::size_t inner) {
  internal::Require(x.value().size() == outer * middle * inner && middle > 0,
                    "mean: shape mismatch");
  Tensor<T> y({outer, inner});
  const T inv = T(1) / static_cast<T>(middle);
  const T* xv = x.value().data();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t m = 0; m < middle; ++m)
      Axpy(inv, xv + (o * middle + m) * inner, y.data() + o * inner, inner);
  return x.tape->Op(std::move(y), x.requires_grad(),
                    [xi = x.id, outer, middle, inner, inv](Tape<T>& t, Node<T>& self) {
                      T* dx = t.GradOf(xi).data();
                      for (std::size_t o = 0; o < outer; ++o)
                        for (std::size_t m = 0; m < middle; ++m)
                          Axpy(inv, self.grad.data() + o * inner,
                               dx + (o * middle + m) * inner, inner);
                    });
}

template <typename T>
Var<T> Reshape(Var<T> x, Shape shape) {
  Tensor<T> y = x.value();
  y.Reshape(std::move(shape));
  return x.tape->Op(std::move(y), x.requires_grad(),
                    [xi = x.id](Tape<T>& t, Node<T>& self) {
                      Tensor<T>& g = t.GradOf(xi);
                      Axpy(T{1}, self.grad.data(), g.data(), g.size());
                    });
}

// [N, Da] ++ [N, Db] -> [N, Da + Db]
template <typename T>
Var<T> ConcatColumns(Var<T> a, Var<T> b) {
  const Tensor<T>& A = a.value();
  const Tensor<T>& B = b.value();
  internal::Require(A.rank() == 2 && B.rank() == 2 && A.dim(0) == B.dim(0),
                    "concat: row count mismatch");
  const std::size_t n = A.dim(0), da = A.dim(1), db = B.dim(1);
  Tensor<T> y({n, da + db});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(A.data() + i * da, da, y.data() + i * (da + db));
    std::copy_n(B.data() + i * db, db, y.data() + i * (da + db) + da);
  }
  return a.tape->Op(std::move(y), internal::AnyGrad({a, b}),
                    [ai = a.id, bi = b.id, n, da, db](Tape<T>& t, Node<T>& self) {
                      const T* g = self.grad.data();
                      if (t.node(ai).requires_grad) {
                        T* ga = t.GradOf(ai).data();
                        for (std::size_t i = 0; i < n; ++i)
                          Axpy(T{1}, g + i * (da + db), ga + i * da, da);
                      }
                      if (t.node(bi).requires_grad) {
                        T* gb = t.GradOf(bi).data();
                        for (std::size_t i = 0; i < n; ++i)
                          Axpy(T{1}, g + i * (da + db) + da, gb + i * db, db);
                      }
                    });
}

// Mean cross-entropy (nats) of logits[B, K] against integer labels.
template <typename T>
Var<T> CrossEntropy(Var<T> logits, std::span<const int> labels) {
  const Tensor<T>& L = logits.value();
  internal::Require(L.rank() == 2 && L.dim(0) == labels.size() && L.dim(0) > 0,
                    "cross_entropy: logits/labels mismatch");
  const std::size_t nb = L.dim(0), k = L.dim(1);
  Tensor<T> probs({nb, k});
  T total = 0;
  for (std::size_t i = 0; i < nb; ++i) {
    internal::Require(labels[i] >= 0 && static_cast<std::size_t>(labels[i]) < k,
                      "cross_entropy: label out of range");
    const T* row = L.data() + i * k;
    const T mx = *std::max_element(row, row + k);
    T sum = 0;
    for (std::size_t j = 0; j < k; ++j) {
      probs[i * k + j] = std::exp(row[j] - mx);
      sum += probs[i * k + j];
    }
    for (std::size_t j = 0; j < k; ++j) probs[i * k + j] /= sum;
    total += std::log(sum) + mx - row[labels[i]];
  }
  Tensor<T> y({1}, total / static_cast<T>(nb));
  return logits.tape->Op(
      std::move(y), logits.requires_grad(),
      [li = logits.id, nb, k, probs = std::move(probs),
       lab = std::vector<int>(labels.begin(), labels.end())](Tape<T>& t, Node<T>& self) {
        T* dl = t.GradOf(li).data();
        const T g = self.grad[0] / static_cast<T>(nb);
        for (std::size_t i = 0; i < nb; ++i)
          for (std::size_t j = 0; j < k; ++j) {
            const T onehot = static_cast<int>(j) == lab[i] ? T(1) : T(0);
            dl[i * k + j] += g * (probs[i * k + j] - onehot);
          }
      });
}

// Mean of squared differences over all elements.
template <typename T>
Var<T> MeanSquaredError(Var<T> a, Var<T> b) {
  const Tensor<T>& A = a.value();
  const Tensor<T>& B = b.value();
  internal::Require(A.size() == B.size() && A.size() > 0, "mse: shape mismatch");
  T total = 0;
  for (std::size_t i = 0; i < A.size(); ++i) total += (A[i] - B[i]) * (A[i] - B[i]);
  Tensor<T> y({1}, total / static_cast<T>(A.size()));
  return a.tape->Op(std::move(y), internal::AnyGrad({a, b}),
                    [ai = a.id, bi = b.id](Tape<T>& t, Node<T>& self) {
                      const Tensor<T>& av = t.node(ai).value;
                      const Tensor<T>& bv = t.node(bi).value;
                      const T g = T(2) * self.grad[0] / static_cast<T>(av.size());
                      if (t.node(ai).requires_grad) {
                        T* da = t.GradOf(ai).data();
                        for (std::size_t i = 0; i < av.size(); ++i) da[i] += g * (av[i] - bv[i]);
                      }
                      if (t.node(bi).requires_grad) {
                        T* db = t.GradOf(bi).data();
                        for (std::size_t i = 0; i < av.size(); ++i) db[i] -= g * (av[i] - bv[i]);
                      }
                    });
}

// w_util * util - w_id * min(id, ceiling) + w_dist * dist over scalar vars.
template <typename T>
Var<T> WeightedObjective(Var<T> util, Var<T> id, Var<T> dist, T w_util, T w_id,
                         T w_dist, T id_ceiling) {
  const T u = util.value()[0], i = id.value()[0], d = dist.value()[0];
  const bool clipped = !(i < id_ceiling);
  const T combined = w_util * u - w_id * (clipped ? id_ceiling : i) + w_dist * d;
  return util.tape->Op(
      Tensor<T>({1}, combined), internal::AnyGrad({util, id, dist}),
      [ui = util.id, ii = id.id, di = dist.id, w_util, w_id, w_dist, clipped](
          Tape<T>& t, Node<T>& self) {
        const T g = self.grad[0];
        if (t.node(ui).requires_grad) t.GradOf(ui)[0] += w_util * g;
        if (t.node(ii).requires_grad && !clipped) t.GradOf(ii)[0] -= w_id * g;
        if (t.node(di).requires_grad) t.GradOf(di)[0] += w_dist * g;
      });
}

}  // namespace eeganon::ops
