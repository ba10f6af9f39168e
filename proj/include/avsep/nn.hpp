// include/avsep/nn.hpp
//
// Copyright 2026 avsep authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
//
// Minimal differentiable layer library. Layers hold parameter indices into
// a shared ParamStore; every forward records what its backward needs on a
// LIFO tape, so weight-shared sub-networks can run any number of concurrent
// passes with independent tapes. Convolutions run as im2col + GEMM.

#ifndef AVSEP_NN_HPP_
#define AVSEP_NN_HPP_

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "avsep/error.hpp"
#include "avsep/rng.hpp"
#include "avsep/tensor.hpp"

namespace avsep::nn {

// ---------------------------------------------------------------------------
// Parameters, gradients, tape
// ---------------------------------------------------------------------------

struct ParamStore {
  std::vector<Tensor> values;
  std::vector<std::string> names;

  long add(const std::string& name, Tensor t) {
    names.push_back(name);
    values.push_back(std::move(t));
    return static_cast<long>(values.size()) - 1;
  }

  long total_elements() const {
    long n = 0;
    for (const auto& v : values) n += v.numel();
    return n;
  }

  bool all_finite() const {
    for (const auto& v : values)
      if (!v.all_finite()) return false;
    return true;
  }
};

struct Grads {
  std::vector<Tensor> g;

  Grads() = default;
  explicit Grads(const ParamStore& store) {
    g.reserve(store.values.size());
    for (const auto& v : store.values) g.emplace_back(v.shape());
  }

  void zero() {
    for (auto& t : g) t.fill(0.0);
  }

  void add(const Grads& other) {
    for (std::size_t i = 0; i < g.size(); ++i) axpy(1.0, other.g[i], g[i]);
  }

  void scale(double s) {
    for (auto& t : g) t.vec() *= s;
  }
};

// LIFO stash of forward intermediates. Each layer pops in backward exactly
// what it pushed in forward, in reverse order.
struct Tape {
  std::vector<Tensor> stack;

  void push(Tensor t) { stack.push_back(std::move(t)); }

  Tensor pop() {
    if (stack.empty()) throw NumericalError("tape underflow (forward/backward mismatch)");
    Tensor t = std::move(stack.back());
    stack.pop_back();
    return t;
  }
};

struct Layer {
  virtual ~Layer() = default;
  virtual Tensor forward(const Tensor& x, Tape& tape) const = 0;
  virtual Tensor backward(const Tensor& gy, Tape& tape, Grads& grads) const = 0;
};

using LayerPtr = std::unique_ptr<Layer>;

struct Sequential {
  std::vector<LayerPtr> layers;

  Tensor forward(const Tensor& x, Tape& tape) const {
    Tensor h = x;
    for (const auto& l : layers) h = l->forward(h, tape);
    return h;
  }

  Tensor backward(const Tensor& gy, Tape& tape, Grads& grads) const {
    Tensor g = gy;
    for (auto it = layers.rbegin(); it != layers.rend(); ++it)
      g = (*it)->backward(g, tape, grads);
    return g;
  }

  template <typename T, typename... Args>
  T* emplace(Args&&... args) {
    auto p = std::make_unique<T>(std::forward<Args>(args)...);
    T* raw = p.get();
    layers.push_back(std::move(p));
    return raw;
  }
};

// ---------------------------------------------------------------------------
// im2col helpers
// ---------------------------------------------------------------------------

inline long conv_out(long in, long k, long s, long p) {
  const long v = (in + 2 * p - k) / s + 1;
  if (v <= 0) throw ShapeError("convolution output collapsed to zero size");
  return v;
}

namespace detail {

// x: (C, H, W) -> cols: (C*kh*kw, OH*OW)
inline void im2col(const Tensor& x, long kh, long kw, long sh, long sw, long ph,
                   long pw, Tensor& cols) {
  const long c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const long oh = conv_out(h, kh, sh, ph), ow = conv_out(w, kw, sw, pw);
  const long p = oh * ow;
  if (cols.numel() != c * kh * kw * p) cols = Tensor({c * kh * kw, p});
  const double* xd = x.data();
  double* cd = cols.data();
  for (long ci = 0; ci < c; ++ci) {
    for (long ky = 0; ky < kh; ++ky) {
      for (long kx = 0; kx < kw; ++kx) {
        double* row = cd + ((ci * kh + ky) * kw + kx) * p;
        for (long oy = 0; oy < oh; ++oy) {
          const long iy = oy * sh - ph + ky;
          double* dst = row + oy * ow;
          if (iy < 0 || iy >= h) {
            for (long ox = 0; ox < ow; ++ox) dst[ox] = 0.0;
            continue;
          }
          const double* src = xd + (ci * h + iy) * w;
          for (long ox = 0; ox < ow; ++ox) {
            const long ix = ox * sw - pw + kx;
            dst[ox] = (ix >= 0 && ix < w) ? src[ix] : 0.0;
          }
        }
      }
    }
  }
}

// scatter-add of cols back into (C, H, W)
inline void col2im(const Tensor& cols, long c, long h, long w, long kh, long kw,
                   long sh, long sw, long ph, long pw, Tensor& x) {
  const long oh = conv_out(h, kh, sh, ph), ow = conv_out(w, kw, sw, pw);
  const long p = oh * ow;
  if (x.numel() != c * h * w) x = Tensor({c, h, w});
  x.fill(0.0);
  const double* cd = cols.data();
  double* xd = x.data();
  for (long ci = 0; ci < c; ++ci) {
    for (long ky = 0; ky < kh; ++ky) {
      for (long kx = 0; kx < kw; ++kx) {
        const double* row = cd + ((ci * kh + ky) * kw + kx) * p;
        for (long oy = 0; oy < oh; ++oy) {
          const long iy = oy * sh - ph + ky;
          if (iy < 0 || iy >= h) continue;
          const double* src = row + oy * ow;
          double* dst = xd + (ci * h + iy) * w;
          for (long ox = 0; ox < ow; ++ox) {
            const long ix = ox * sw - pw + kx;
            if (ix >= 0 && ix < w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

inline void he_init(Tensor& w, long fan_in, Rng& rng) {
  const double std = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (long i = 0; i < w.numel(); ++i) w[i] = rng.normal(0.0, std);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Conv2d
// ---------------------------------------------------------------------------

struct Conv2d : Layer {
  long w_idx = -1, b_idx = -1;
  long in_ch, out_ch, kh, kw, sh, sw, ph, pw;
  const ParamStore* store = nullptr;

  Conv2d(ParamStore& s, Rng& rng, const std::string& name, long in_c, long out_c,
         long k_h, long k_w, long s_h, long s_w, long p_h, long p_w)
      : in_ch(in_c), out_ch(out_c), kh(k_h), kw(k_w), sh(s_h), sw(s_w), ph(p_h),
        pw(p_w), store(&s) {
    Tensor w({out_ch, in_ch, kh, kw});
    detail::he_init(w, in_ch * kh * kw, rng);
    w_idx = s.add(name + ".weight", std::move(w));
    b_idx = s.add(name + ".bias", Tensor({out_ch}));
  }

  Tensor forward(const Tensor& x, Tape& tape) const override {
    if (x.ndim() != 3 || x.dim(0) != in_ch)
      throw ShapeError("Conv2d: expected (" + std::to_string(in_ch) + ",H,W), got " +
                       x.shape_str());
    const long oh = conv_out(x.dim(1), kh, sh, ph);
    const long ow = conv_out(x.dim(2), kw, sw, pw);
    Tensor cols;
    detail::im2col(x, kh, kw, sh, sw, ph, pw, cols);
    Tensor y({out_ch, oh, ow});
    const Tensor& w = store->values[static_cast<std::size_t>(w_idx)];
    const Tensor& b = store->values[static_cast<std::size_t>(b_idx)];
    y.mat(out_ch, oh * ow).noalias() =
        w.mat(out_ch, in_ch * kh * kw) * cols.mat(in_ch * kh * kw, oh * ow);
    for (long co = 0; co < out_ch; ++co) {
      double* yd = y.data() + co * oh * ow;
      const double bias = b[co];
      for (long i = 0; i < oh * ow; ++i) yd[i] += bias;
    }
    tape.push(x);
    return y;
  }

  Tensor backward(const Tensor& gy, Tape& tape, Grads& grads) const override {
    Tensor x = tape.pop();
    const long h = x.dim(1), w_in = x.dim(2);
    const long oh = gy.dim(1), ow = gy.dim(2);
    const long k = in_ch * kh * kw, p = oh * ow;

    Tensor cols;
    detail::im2col(x, kh, kw, sh, sw, ph, pw, cols);

    Tensor& dw = grads.g[static_cast<std::size_t>(w_idx)];
    Tensor& db = grads.g[static_cast<std::size_t>(b_idx)];
    dw.mat(out_ch, k).noalias() += gy.mat(out_ch, p) * cols.mat(k, p).transpose();
    for (long co = 0; co < out_ch; ++co) {
      const double* gd = gy.data() + co * p;
      double acc = 0.0;
      for (long i = 0; i < p; ++i) acc += gd[i];
      db[co] += acc;
    }

    const Tensor& wt = store->values[static_cast<std::size_t>(w_idx)];
    Tensor dcols({k, p});
    dcols.mat(k, p).noalias() = wt.mat(out_ch, k).transpose() * gy.mat(out_ch, p);
    Tensor dx;
    detail::col2im(dcols, in_ch, h, w_in, kh, kw, sh, sw, ph, pw, dx);
    return dx;
  }
};

// ---------------------------------------------------------------------------
// ConvTranspose2d (stride-s upsampling convolution)
// ---------------------------------------------------------------------------

struct ConvTranspose2d : Layer {
  long w_idx = -1, b_idx = -1;
  long in_ch, out_ch, kh, kw, sh, sw, ph, pw, oph, opw;
  const ParamStore* store = nullptr;

  ConvTranspose2d(ParamStore& s, Rng& rng, const std::string& name, long in_c,
                  long out_c, long k_h, long k_w, long s_h, long s_w, long p_h,
                  long p_w, long op_h = 0, long op_w = 0)
      : in_ch(in_c), out_ch(out_c), kh(k_h), kw(k_w), sh(s_h), sw(s_w), ph(p_h),
        pw(p_w), oph(op_h), opw(op_w), store(&s) {
    Tensor w({in_ch, out_ch, kh, kw});
    detail::he_init(w, in_ch * kh * kw, rng);
    w_idx = s.add(name + ".weight", std::move(w));
    b_idx = s.add(name + ".bias", Tensor({out_ch}));
  }

  long out_size_h(long h) const { return (h - 1) * sh - 2 * ph + kh + oph; }
  long out_size_w(long w) const { return (w - 1) * sw - 2 * pw + kw + opw; }

  Tensor forward(const Tensor& x, Tape& tape) const override {
    if (x.ndim() != 3 || x.dim(0) != in_ch)
      throw ShapeError("ConvTranspose2d: bad input " + x.shape_str());
    const long h = x.dim(1), w_in = x.dim(2);
    const long oh = out_size_h(h), ow = out_size_w(w_in);
    const long k = out_ch * kh * kw;

    const Tensor& w = store->values[static_cast<std::size_t>(w_idx)];
    const Tensor& b = store->values[static_cast<std::size_t>(b_idx)];

    // cols = W^T x, then scatter back onto the upsampled grid. The scatter
    // uses the same geometry as im2col over the *output*, so conv_out on
    // (oh, kh, sh, ph) must reproduce (h, w_in); output_padding keeps that
    // consistent for odd sizes.
    Tensor cols({k, h * w_in});
    cols.mat(k, h * w_in).noalias() =
        w.mat(in_ch, k).transpose() * x.mat(in_ch, h * w_in);
    Tensor y;
    detail::col2im(cols, out_ch, oh, ow, kh, kw, sh, sw, ph, pw, y);
    double* yd = y.data();
    for (long co = 0; co < out_ch; ++co) {
      const double bias = b[co];
      for (long i = 0; i < oh * ow; ++i) yd[co * oh * ow + i] += bias;
    }
    tape.push(x);
    return y;
  }

  Tensor backward(const Tensor& gy, Tape& tape, Grads& grads) const override {
    Tensor x = tape.pop();
    const long h = x.dim(1), w_in = x.dim(2);
    const long oh = gy.dim(1), ow = gy.dim(2);
    const long k = out_ch * kh * kw;

    Tensor cols_gy;
    detail::im2col(gy, kh, kw, sh, sw, ph, pw, cols_gy);  // (k, h*w_in)

    Tensor& dw = grads.g[static_cast<std::size_t>(w_idx)];
    Tensor& db = grads.g[static_cast<std::size_t>(b_idx)];
    dw.mat(in_ch, k).noalias() +=
        x.mat(in_ch, h * w_in) * cols_gy.mat(k, h * w_in).transpose();
    for (long co = 0; co < out_ch; ++co) {
      const double* gd = gy.data() + co * oh * ow;
      double acc = 0.0;
      for (long i = 0; i < oh * ow; ++i) acc += gd[i];
      db[co] += acc;
    }

    const Tensor& w = store->values[static_cast<std::size_t>(w_idx)];
    Tensor dx({in_ch, h, w_in});
    dx.mat(in_ch, h * w_in).noalias() =
        w.mat(in_ch, k) * cols_gy.mat(k, h * w_in);
    return dx;
  }
};

// ---------------------------------------------------------------------------
// Conv3d (temporal stride fixed at 1, used by the lip-motion stem)
// ---------------------------------------------------------------------------

struct Conv3d : Layer {
  long w_idx = -1, b_idx = -1;
  long in_ch, out_ch, kt, kh, kw, sh, sw, pt, ph, pw;
  const ParamStore* store = nullptr;

  Conv3d(ParamStore& s, Rng& rng, const std::string& name, long in_c, long out_c,
         long k_t, long k_h, long k_w, long s_h, long s_w, long p_t, long p_h,
         long p_w)
      : in_ch(in_c), out_ch(out_c), kt(k_t), kh(k_h), kw(k_w), sh(s_h), sw(s_w),
        pt(p_t), ph(p_h), pw(p_w), store(&s) {
    Tensor w({out_ch, in_ch, kt, kh, kw});
    detail::he_init(w, in_ch * kt * kh * kw, rng);
    w_idx = s.add(name + ".weight", std::move(w));
    b_idx = s.add(name + ".bias", Tensor({out_ch}));
  }

  // x: (Cin, T, H, W) -> y: (Cout, T, OH, OW)
  Tensor forward(const Tensor& x, Tape& tape) const override {
    if (x.ndim() != 4 || x.dim(0) != in_ch)
      throw ShapeError("Conv3d: bad input " + x.shape_str());
    const long t_len = x.dim(1), h = x.dim(2), w_in = x.dim(3);
    const long oh = conv_out(h, kh, sh, ph), ow = conv_out(w_in, kw, sw, pw);
    const long k = in_ch * kt * kh * kw, p = oh * ow;

    const Tensor& w = store->values[static_cast<std::size_t>(w_idx)];
    const Tensor& b = store->values[static_cast<std::size_t>(b_idx)];

    Tensor y({out_ch, t_len, oh, ow});
    Tensor cols({k, p});
    Tensor slab({in_ch * kt, h, w_in});  // stacked temporal window
    for (long t = 0; t < t_len; ++t) {
      // gather frames t-pt .. t-pt+kt-1 as extra channels
      for (long dt = 0; dt < kt; ++dt) {
        const long src_t = t - pt + dt;
        for (long ci = 0; ci < in_ch; ++ci) {
          double* dst = slab.data() + (ci * kt + dt) * h * w_in;
          if (src_t < 0 || src_t >= t_len) {
            std::fill(dst, dst + h * w_in, 0.0);
          } else {
            const double* src = x.data() + (ci * t_len + src_t) * h * w_in;
            std::copy(src, src + h * w_in, dst);
          }
        }
      }
      detail::im2col(slab, kh, kw, sh, sw, ph, pw, cols);
      Eigen::Map<MatrixRM, 0, Eigen::OuterStride<>> yt(
          y.data() + t * p, out_ch, p, Eigen::OuterStride<>(t_len * p));
      yt.noalias() = w.mat(out_ch, k) * cols.mat(k, p);
      for (long co = 0; co < out_ch; ++co) {
        double* yd = y.data() + (co * t_len + t) * p;
        const double bias = b[co];
        for (long i = 0; i < p; ++i) yd[i] += bias;
      }
    }
    tape.push(x);
    return y;
  }

  Tensor backward(const Tensor& gy, Tape& tape, Grads& grads) const override {
    Tensor x = tape.pop();
    const long t_len = x.dim(1), h = x.dim(2), w_in = x.dim(3);
    const long oh = gy.dim(2), ow = gy.dim(3);
    const long k = in_ch * kt * kh * kw, p = oh * ow;

    const Tensor& w = store->values[static_cast<std::size_t>(w_idx)];
    Tensor& dw = grads.g[static_cast<std::size_t>(w_idx)];
    Tensor& db = grads.g[static_cast<std::size_t>(b_idx)];

    Tensor dx({in_ch, t_len, h, w_in});
    Tensor cols({k, p});
    Tensor dcols({k, p});
    Tensor dslab;
    Tensor slab({in_ch * kt, h, w_in});
    Tensor gyt({out_ch, p});
    for (long t = 0; t < t_len; ++t) {
      for (long dt = 0; dt < kt; ++dt) {
        const long src_t = t - pt + dt;
        for (long ci = 0; ci < in_ch; ++ci) {
          double* dst = slab.data() + (ci * kt + dt) * h * w_in;
          if (src_t < 0 || src_t >= t_len) {
            std::fill(dst, dst + h * w_in, 0.0);
          } else {
            const double* src = x.data() + (ci * t_len + src_t) * h * w_in;
            std::copy(src, src + h * w_in, dst);
          }
        }
      }
      detail::im2col(slab, kh, kw, sh, sw, ph, pw, cols);
      for (long co = 0; co < out_ch; ++co) {
        const double* src = gy.data() + (co * t_len + t) * p;
        std::copy(src, src + p, gyt.data() + co * p);
        double acc = 0.0;
        for (long i = 0; i < p; ++i) acc += src[i];
        db[co] += acc;
      }
      dw.mat(out_ch, k).noalias() += gyt.mat(out_ch, p) * cols.mat(k, p).transpose();
      dcols.mat(k, p).noalias() = w.mat(out_ch, k).transpose() * gyt.mat(out_ch, p);
      detail::col2im(dcols, in_ch * kt, h, w_in, kh, kw, sh, sw, ph, pw, dslab);
      // scatter the temporal window back
      for (long dt = 0; dt < kt; ++dt) {
        const long src_t = t - pt + dt;
        if (src_t < 0 || src_t >= t_len) continue;
        for (long ci = 0; ci < in_ch; ++ci) {
          const double* src = dslab.data() + (ci * kt + dt) * h * w_in;
          double* dst = dx.data() + (ci * t_len + src_t) * h * w_in;
          for (long i = 0; i < h * w_in; ++i) dst[i] += src[i];
        }
      }
    }
    return dx;
  }
};

// ---------------------------------------------------------------------------
// Linear
// ---------------------------------------------------------------------------

struct Linear : Layer {
  long w_idx = -1, b_idx = -1;
  long in_dim, out_dim;
  const ParamStore* store = nullptr;

  Linear(ParamStore& s, Rng& rng, const std::string& name, long in_d, long out_d)
      : in_dim(in_d), out_dim(out_d), store(&s) {
    Tensor w({out_dim, in_dim});
    detail::he_init(w, in_dim, rng);
    w_idx = s.add(name + ".weight", std::move(w));
    b_idx = s.add(name + ".bias", Tensor({out_dim}));
  }

  Tensor forward(const Tensor& x, Tape& tape) const override {
    if (x.numel() != in_dim)
      throw ShapeError("Linear: expected " + std::to_string(in_dim) +
                       " inputs, got " + x.shape_str());
    const Tensor& w = store->values[static_cast<std::size_t>(w_idx)];
    const Tensor& b = store->values[static_cast<std::size_t>(b_idx)];
    Tensor y({out_dim});
    y.vec().noalias() = w.mat(out_dim, in_dim) * x.vec();
    y.vec() += b.vec();
    tape.push(x);
    return y;
  }

  Tensor backward(const Tensor& gy, Tape& tape, Grads& grads) const override {
    Tensor x = tape.pop();
    Tensor& dw = grads.g[static_cast<std::size_t>(w_idx)];
    Tensor& db = grads.g[static_cast<std::size_t>(b_idx)];
    dw.mat(out_dim, in_dim).noalias() += gy.vec() * x.vec().transpose();
    db.vec() += gy.vec();
    const Tensor& w = store->values[static_cast<std::size_t>(w_idx)];
    Tensor dx(x.shape());
    dx.vec().noalias() = w.mat(out_dim, in_dim).transpose() * gy.vec();
    return dx;
  }
};

// ---------------------------------------------------------------------------
// InstanceNorm (per channel over all trailing dims)
// ---------------------------------------------------------------------------

struct InstanceNorm : Layer {
  long g_idx = -1, b_idx = -1;
  long channels;
  double eps = 1e-5;
  const ParamStore* store = nullptr;

  InstanceNorm(ParamStore& s, const std::string& name, long ch) : channels(ch), store(&s) {
    g_idx = s.add(name + ".gamma", Tensor::full({channels}, 1.0));
    b_idx = s.add(name + ".beta", Tensor({channels}));
  }

  Tensor forward(const Tensor& x, Tape& tape) const override {
    if (x.ndim() < 2 || x.dim(0) != channels)
      throw ShapeError("InstanceNorm: bad input " + x.shape_str());
    const long m = x.numel() / channels;
    if (m <= 1)
      throw ConfigError("InstanceNorm over a single element per channel; "
                        "the feature map has collapsed, enlarge the input");
    const Tensor& gamma = store->values[static_cast<std::size_t>(g_idx)];
    const Tensor& beta = store->values[static_cast<std::size_t>(b_idx)];
    Tensor y(x.shape());
    for (long c = 0; c < channels; ++c) {
      const double* xd = x.data() + c * m;
      double* yd = y.data() + c * m;
      double mean = 0.0;
      for (long i = 0; i < m; ++i) mean += xd[i];
      mean /= static_cast<double>(m);
      double var = 0.0;
      for (long i = 0; i < m; ++i) {
        const double d = xd[i] - mean;
        var += d * d;
      }
      var /= static_cast<double>(m);
      const double inv = 1.0 / std::sqrt(var + eps);
      const double g = gamma[c], b = beta[c];
      for (long i = 0; i < m; ++i) yd[i] = (xd[i] - mean) * inv * g + b;
    }
    tape.push(x);
    return y;
  }

  Tensor backward(const Tensor& gy, Tape& tape, Grads& grads) const override {
    Tensor x = tape.pop();
    const long m = x.numel() / channels;
    const Tensor& gamma = store->values[static_cast<std::size_t>(g_idx)];
    Tensor& dgamma = grads.g[static_cast<std::size_t>(g_idx)];
    Tensor& dbeta = grads.g[static_cast<std::size_t>(b_idx)];
    Tensor dx(x.shape());
    for (long c = 0; c < channels; ++c) {
      const double* xd = x.data() + c * m;
      const double* gd = gy.data() + c * m;
      double* dxd = dx.data() + c * m;
      double mean = 0.0;
      for (long i = 0; i < m; ++i) mean += xd[i];
      mean /= static_cast<double>(m);
      double var = 0.0;
      for (long i = 0; i < m; ++i) {
        const double d = xd[i] - mean;
        var += d * d;
      }
      var /= static_cast<double>(m);
      const double inv = 1.0 / std::sqrt(var + eps);
      const double g = gamma[c];

      double sum_g = 0.0, sum_gx = 0.0;
      for (long i = 0; i < m; ++i) {
        sum_g += gd[i];
        sum_gx += gd[i] * (xd[i] - mean) * inv;
      }
      dgamma[c] += sum_gx;
      dbeta[c] += sum_g;

      const double inv_m = 1.0 / static_cast<double>(m);
      for (long i = 0; i < m; ++i) {
        const double xhat = (xd[i] - mean) * inv;
        dxd[i] = g * inv * (gd[i] - inv_m * sum_g - xhat * inv_m * sum_gx);
      }
    }
    return dx;
  }
};

// ---------------------------------------------------------------------------
// Activations and simple shape ops
// ---------------------------------------------------------------------------

struct ReLU : Layer {
  Tensor forward(const Tensor& x, Tape& tape) const override {
    Tensor y(x.shape());
    for (long i = 0; i < x.numel(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
    tape.push(x);
    return y;
  }
  Tensor backward(const Tensor& gy, Tape& tape, Grads&) const override {
    Tensor x = tape.pop();
    Tensor dx(x.shape());
    for (long i = 0; i < x.numel(); ++i) dx[i] = x[i] > 0.0 ? gy[i] : 0.0;
    return dx;
  }
};

struct LeakyReLU : Layer {
  double slope;
  explicit LeakyReLU(double s = 0.1) : slope(s) {}
  Tensor forward(const Tensor& x, Tape& tape) const override {
    Tensor y(x.shape());
    for (long i = 0; i < x.numel(); ++i) y[i] = x[i] > 0.0 ? x[i] : slope * x[i];
    tape.push(x);
    return y;
  }
  Tensor backward(const Tensor& gy, Tape& tape, Grads&) const override {
    Tensor x = tape.pop();
    Tensor dx(x.shape());
    for (long i = 0; i < x.numel(); ++i) dx[i] = x[i] > 0.0 ? gy[i] : slope * gy[i];
    return dx;
  }
};

struct Tanh : Layer {
  Tensor forward(const Tensor& x, Tape& tape) const override {
    Tensor y(x.shape());
    for (long i = 0; i < x.numel(); ++i) y[i] = std::tanh(x[i]);
    tape.push(y);
    return y;
  }
  Tensor backward(const Tensor& gy, Tape& tape, Grads&) const override {
    Tensor y = tape.pop();
    Tensor dx(y.shape());
    for (long i = 0; i < y.numel(); ++i) dx[i] = gy[i] * (1.0 - y[i] * y[i]);
    return dx;
  }
};

struct Scale : Layer {
  double factor;
  explicit Scale(double f) : factor(f) {}
  Tensor forward(const Tensor& x, Tape&) const override {
    Tensor y(x.shape());
    for (long i = 0; i < x.numel(); ++i) y[i] = factor * x[i];
    return y;
  }
  Tensor backward(const Tensor& gy, Tape&, Grads&) const override {
    Tensor dx(gy.shape());
    for (long i = 0; i < gy.numel(); ++i) dx[i] = factor * gy[i];
    return dx;
  }
};

// MaxPool over spatial dims of (C, H, W); kernel k, stride s, padding p.
struct MaxPool2d : Layer {
  long k, s, p;
  MaxPool2d(long kk, long ss, long pp = 0) : k(kk), s(ss), p(pp) {}

  Tensor forward(const Tensor& x, Tape& tape) const override {
    const long c = x.dim(0), h = x.dim(1), w = x.dim(2);
    const long oh = conv_out(h, k, s, p), ow = conv_out(w, k, s, p);
    Tensor y({c, oh, ow});
    Tensor idx({c, oh, ow});
    for (long ci = 0; ci < c; ++ci)
      for (long oy = 0; oy < oh; ++oy)
        for (long ox = 0; ox < ow; ++ox) {
          double best = -1e300;
          long best_i = -1;
          for (long ky = 0; ky < k; ++ky)
            for (long kx = 0; kx < k; ++kx) {
              const long iy = oy * s - p + ky;
              const long ix = ox * s - p + kx;
              if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
              const double v = x.at({ci, iy, ix});
              if (v > best) {
                best = v;
                best_i = (ci * h + iy) * w + ix;
              }
            }
          y.at({ci, oy, ox}) = best_i >= 0 ? best : 0.0;
          idx.at({ci, oy, ox}) = static_cast<double>(best_i);
        }
    tape.push(Tensor::from_vector({3}, {static_cast<double>(c), static_cast<double>(h),
                                        static_cast<double>(w)}));
    tape.push(idx);
    return y;
  }

  Tensor backward(const Tensor& gy, Tape& tape, Grads&) const override {
    Tensor idx = tape.pop();
    Tensor dims = tape.pop();
    const long c = static_cast<long>(dims[0]);
    const long h = static_cast<long>(dims[1]);
    const long w = static_cast<long>(dims[2]);
    Tensor dx({c, h, w});
    for (long i = 0; i < gy.numel(); ++i) {
      const long j = static_cast<long>(idx[i]);
      if (j >= 0) dx[j] += gy[i];
    }
    return dx;
  }
};

// Halves the frequency axis of (C, F, T) by averaging adjacent bins.
struct AvgPoolFreq : Layer {
  Tensor forward(const Tensor& x, Tape&) const override {
    const long c = x.dim(0), f = x.dim(1), t = x.dim(2);
    if (f % 2 != 0) throw ShapeError("AvgPoolFreq: frequency dim must be even");
    Tensor y({c, f / 2, t});
    for (long ci = 0; ci < c; ++ci)
      for (long fo = 0; fo < f / 2; ++fo)
        for (long ti = 0; ti < t; ++ti)
          y.at({ci, fo, ti}) =
              0.5 * (x.at({ci, 2 * fo, ti}) + x.at({ci, 2 * fo + 1, ti}));
    return y;
  }
  Tensor backward(const Tensor& gy, Tape&, Grads&) const override {
    const long c = gy.dim(0), fo = gy.dim(1), t = gy.dim(2);
    Tensor dx({c, fo * 2, t});
    for (long ci = 0; ci < c; ++ci)
      for (long f = 0; f < fo; ++f)
        for (long ti = 0; ti < t; ++ti) {
          const double g = 0.5 * gy.at({ci, f, ti});
          dx.at({ci, 2 * f, ti}) = g;
          dx.at({ci, 2 * f + 1, ti}) = g;
        }
    return dx;
  }
};

// Doubles the frequency axis of (C, F, T) by nearest-neighbor copy.
struct UpsampleFreq : Layer {
  Tensor forward(const Tensor& x, Tape&) const override {
    const long c = x.dim(0), f = x.dim(1), t = x.dim(2);
    Tensor y({c, f * 2, t});
    for (long ci = 0; ci < c; ++ci)
      for (long fi = 0; fi < f; ++fi)
        for (long ti = 0; ti < t; ++ti) {
          const double v = x.at({ci, fi, ti});
          y.at({ci, 2 * fi, ti}) = v;
          y.at({ci, 2 * fi + 1, ti}) = v;
        }
    return y;
  }
  Tensor backward(const Tensor& gy, Tape&, Grads&) const override {
    const long c = gy.dim(0), f2 = gy.dim(1), t = gy.dim(2);
    Tensor dx({c, f2 / 2, t});
    for (long ci = 0; ci < c; ++ci)
      for (long fi = 0; fi < f2 / 2; ++fi)
        for (long ti = 0; ti < t; ++ti)
          dx.at({ci, fi, ti}) = gy.at({ci, 2 * fi, ti}) + gy.at({ci, 2 * fi + 1, ti});
    return dx;
  }
};

// (C, H, W) -> (C) spatial mean.
struct GlobalAvgPool : Layer {
  Tensor forward(const Tensor& x, Tape& tape) const override {
    const long c = x.dim(0), m = x.numel() / x.dim(0);
    Tensor y({c});
    for (long ci = 0; ci < c; ++ci) {
      const double* xd = x.data() + ci * m;
      double acc = 0.0;
      for (long i = 0; i < m; ++i) acc += xd[i];
      y[ci] = acc / static_cast<double>(m);
    }
    std::vector<double> dims(x.shape().begin(), x.shape().end());
    tape.push(Tensor::from_vector({static_cast<long>(dims.size())}, dims));
    return y;
  }
  Tensor backward(const Tensor& gy, Tape& tape, Grads&) const override {
    Tensor dims = tape.pop();
    std::vector<long> shape(static_cast<std::size_t>(dims.numel()));
    for (long i = 0; i < dims.numel(); ++i) shape[static_cast<std::size_t>(i)] =
        static_cast<long>(dims[i]);
    Tensor dx(shape);
    const long c = dx.dim(0), m = dx.numel() / c;
    for (long ci = 0; ci < c; ++ci) {
      const double g = gy[ci] / static_cast<double>(m);
      double* dxd = dx.data() + ci * m;
      for (long i = 0; i < m; ++i) dxd[i] = g;
    }
    return dx;
  }
};

// Unit-normalizes a vector; the epsilon keeps zero inputs finite.
struct L2Normalize : Layer {
  double eps = 1e-12;
  Tensor forward(const Tensor& x, Tape& tape) const override {
    double s = 0.0;
    for (long i = 0; i < x.numel(); ++i) s += x[i] * x[i];
    const double inv = 1.0 / std::sqrt(s + eps);
    Tensor y(x.shape());
    for (long i = 0; i < x.numel(); ++i) y[i] = x[i] * inv;
    tape.push(x);
    return y;
  }
  Tensor backward(const Tensor& gy, Tape& tape, Grads&) const override {
    Tensor x = tape.pop();
    double s = 0.0, dot = 0.0;
    for (long i = 0; i < x.numel(); ++i) {
      s += x[i] * x[i];
      dot += x[i] * gy[i];
    }
    const double n = std::sqrt(s + eps);
    const double inv = 1.0 / n, inv3 = 1.0 / (n * n * n);
    Tensor dx(x.shape());
    for (long i = 0; i < x.numel(); ++i) dx[i] = gy[i] * inv - x[i] * dot * inv3;
    return dx;
  }
};

// ---------------------------------------------------------------------------
// Tensor-level helpers used when wiring networks together
// ---------------------------------------------------------------------------

// Concatenate along dim 0 (channels); both inputs share trailing dims.
inline Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.ndim() != b.ndim()) throw ShapeError("concat_channels: rank mismatch");
  for (int i = 1; i < a.ndim(); ++i)
    if (a.dim(i) != b.dim(i)) throw ShapeError("concat_channels: trailing dims differ");
  std::vector<long> shape = a.shape();
  shape[0] += b.dim(0);
  Tensor out(shape);
  std::copy(a.data(), a.data() + a.numel(), out.data());
  std::copy(b.data(), b.data() + b.numel(), out.data() + a.numel());
  return out;
}

inline std::pair<Tensor, Tensor> split_channels(const Tensor& x, long first) {
  std::vector<long> sa = x.shape(), sb = x.shape();
  sa[0] = first;
  sb[0] = x.dim(0) - first;
  Tensor a(sa), b(sb);
  std::copy(x.data(), x.data() + a.numel(), a.data());
  std::copy(x.data() + a.numel(), x.data() + x.numel(), b.data());
  return {std::move(a), std::move(b)};
}

}  // namespace avsep::nn

#endif  // AVSEP_NN_HPP_
