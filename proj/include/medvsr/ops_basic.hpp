#pragma once

#include <cmath>
#include <memory>
#include <vector>

#include "medvsr/graph.hpp"

namespace medvsr {
namespace ag {

template <class T>
int add(Graph<T>& g, int a, int b) {
  require(g.val(a).same_shape(g.val(b)), "add: shape mismatch");
  Tensor<T> y = g.val(a);
  const Tensor<T>& vb = g.val(b);
  for (int64_t i = 0; i < y.numel(); ++i) y[i] += vb[i];
  return g.add_node(std::move(y), {a, b}, [a, b](Graph<T>& g, int self) {
    const Tensor<T>& gy = g.grad(self);
    if (g.needs_grad(a)) {
      Tensor<T>& ga = g.grad_acc(a);
      for (int64_t i = 0; i < gy.numel(); ++i) ga[i] += gy[i];
    }
    if (g.needs_grad(b)) {
      Tensor<T>& gb = g.grad_acc(b);
      for (int64_t i = 0; i < gy.numel(); ++i) gb[i] += gy[i];
    }
  });
}

template <class T>
int sub(Graph<T>& g, int a, int b) {
  require(g.val(a).same_shape(g.val(b)), "sub: shape mismatch");
  Tensor<T> y = g.val(a);
  const Tensor<T>& vb = g.val(b);
  for (int64_t i = 0; i < y.numel(); ++i) y[i] -= vb[i];
  return g.add_node(std::move(y), {a, b}, [a, b](Graph<T>& g, int self) {
    const Tensor<T>& gy = g.grad(self);
    if (g.needs_grad(a)) {
      Tensor<T>& ga = g.grad_acc(a);
      for (int64_t i = 0; i < gy.numel(); ++i) ga[i] += gy[i];
    }
    if (g.needs_grad(b)) {
      Tensor<T>& gb = g.grad_acc(b);
      for (int64_t i = 0; i < gy.numel(); ++i) gb[i] -= gy[i];
    }
  });
}

template <class T>
int mul(Graph<T>& g, int a, int b) {
  require(g.val(a).same_shape(g.val(b)), "mul: shape mismatch");
  Tensor<T> y = g.val(a);
  const Tensor<T>& vb = g.val(b);
  for (int64_t i = 0; i < y.numel(); ++i) y[i] *= vb[i];
  return g.add_node(std::move(y), {a, b}, [a, b](Graph<T>& g, int self) {
    const Tensor<T>& gy = g.grad(self);
    if (g.needs_grad(a)) {
      Tensor<T>& ga = g.grad_acc(a);
      const Tensor<T>& vb = g.val(b);
      for (int64_t i = 0; i < gy.numel(); ++i) ga[i] += gy[i] * vb[i];
    }
    if (g.needs_grad(b)) {
      Tensor<T>& gb = g.grad_acc(b);
      const Tensor<T>& va = g.val(a);
      for (int64_t i = 0; i < gy.numel(); ++i) gb[i] += gy[i] * va[i];
    }
  });
}

// y = k*x + c, elementwise with scalar constants.
template <class T>
int affine(Graph<T>& g, int x, double k, double c) {
  Tensor<T> y = g.val(x);
  for (int64_t i = 0; i < y.numel(); ++i) y[i] = T(k) * y[i] + T(c);
  return g.add_node(std::move(y), {x}, [x, k](Graph<T>& g, int self) {
    const Tensor<T>& gy = g.grad(self);
    Tensor<T>& gx = g.grad_acc(x);
    for (int64_t i = 0; i < gy.numel(); ++i) gx[i] += T(k) * gy[i];
  });
}

template <class T>
int scale(Graph<T>& g, int x, double k) {
  return affine(g, x, k, 0.0);
}

template <class T>
int silu(Graph<T>& g, int x) {
  Tensor<T> y = g.val(x);
  for (int64_t i = 0; i < y.numel(); ++i) {
    T s = T(1) / (T(1) + std::exp(-y[i]));
    y[i] = y[i] * s;
  }
  return g.add_node(std::move(y), {x}, [x](Graph<T>& g, int self) {
    const Tensor<T>& gy = g.grad(self);
    const Tensor<T>& vx = g.val(x);
    Tensor<T>& gx = g.grad_acc(x);
    for (int64_t i = 0; i < gy.numel(); ++i) {
      T s = T(1) / (T(1) + std::exp(-vx[i]));
      gx[i] += gy[i] * s * (T(1) + vx[i] * (T(1) - s));
    }
  });
}

template <class T>
int sigmoid(Graph<T>& g, int x) {
  Tensor<T> y = g.val(x);
  for (int64_t i = 0; i < y.numel(); ++i)
    y[i] = T(1) / (T(1) + std::exp(-y[i]));
  return g.add_node(std::move(y), {x}, [x](Graph<T>& g, int self) {
    const Tensor<T>& gy = g.grad(self);
    const Tensor<T>& vy = g.val(self);
    Tensor<T>& gx = g.grad_acc(x);
    for (int64_t i = 0; i < gy.numel(); ++i)
      gx[i] += gy[i] * vy[i] * (T(1) - vy[i]);
  });
}

template <class T>
int softplus(Graph<T>& g, int x) {
  Tensor<T> y = g.val(x);
  for (int64_t i = 0; i < y.numel(); ++i)
    y[i] = y[i] > T(20) ? y[i] : std::log1p(std::exp(y[i]));
  return g.add_node(std::move(y), {x}, [x](Graph<T>& g, int self) {
    const Tensor<T>& gy = g.grad(self);
    const Tensor<T>& vx = g.val(x);
    Tensor<T>& gx = g.grad_acc(x);
    for (int64_t i = 0; i < gy.numel(); ++i)
      gx[i] += gy[i] / (T(1) + std::exp(-vx[i]));
  });
}

template <class T>
int exp_op(Graph<T>& g, int x) {
  Tensor<T> y = g.val(x);
  for (int64_t i = 0; i < y.numel(); ++i) y[i] = std::exp(y[i]);
  return g.add_node(std::move(y), {x}, [x](Graph<T>& g, int self) {
    const Tensor<T>& gy = g.grad(self);
    const Tensor<T>& vy = g.val(self);
    Tensor<T>& gx = g.grad_acc(x);
    for (int64_t i = 0; i < gy.numel(); ++i) gx[i] += gy[i] * vy[i];
  });
}

// Clamp with zero gradient outside [lo, hi].
template <class T>
int clamp_op(Graph<T>& g, int x, double lo, double hi) {
  Tensor<T> y = g.val(x);
  for (int64_t i = 0; i < y.numel(); ++i)
    y[i] = std::min(std::max(y[i], T(lo)), T(hi));
  return g.add_node(std::move(y), {x}, [x, lo, hi](Graph<T>& g, int self) {
    const Tensor<T>& gy = g.grad(self);
    const Tensor<T>& vx = g.val(x);
    Tensor<T>& gx = g.grad_acc(x);
    for (int64_t i = 0; i < gy.numel(); ++i)
      if (vx[i] >= T(lo) && vx[i] <= T(hi)) gx[i] += gy[i];
  });
}

// x [R,C] @ w [C,E] (+ bias [E] when b >= 0) -> [R,E].
template <class T>
int linear(Graph<T>& g, int x, int w, int b = -1) {
  const Tensor<T>& vx = g.val(x);
  const Tensor<T>& vw = g.val(w);
  require(vx.rank() == 2 && vw.rank() == 2 && vx.dim(1) == vw.dim(0),
          "linear: bad shapes " + shape_str(vx.shape()) + " @ " +
              shape_str(vw.shape()));
  int64_t R = vx.dim(0), C = vx.dim(1), E = vw.dim(1);
  Tensor<T> y({R, E});
  for (int64_t r = 0; r < R; ++r) {
    T* yr = y.data() + r * E;
    const T* xr = vx.data() + r * C;
    for (int64_t c = 0; c < C; ++c) {
      T xv = xr[c];
      const T* wr = vw.data() + c * E;
      for (int64_t e = 0; e < E; ++e) yr[e] += xv * wr[e];
    }
  }
  std::vector<int> parents{x, w};
  if (b >= 0) {
    const Tensor<T>& vb = g.val(b);
    require(vb.rank() == 1 && vb.dim(0) == E, "linear: bad bias shape");
    for (int64_t r = 0; r < R; ++r)
      for (int64_t e = 0; e < E; ++e) y[r * E + e] += vb[e];
    parents.push_back(b);
  }
  return g.add_node(std::move(y), parents, [x, w, b](Graph<T>& g, int self) {
    const Tensor<T>& gy = g.grad(self);
    const Tensor<T>& vx = g.val(x);
    const Tensor<T>& vw = g.val(w);
    int64_t R = vx.dim(0), C = vx.dim(1), E = vw.dim(1);
    if (g.needs_grad(x)) {
      Tensor<T>& gx = g.grad_acc(x);
      for (int64_t r = 0; r < R; ++r) {
        const T* gyr = gy.data() + r * E;
        T* gxr = gx.data() + r * C;
        for (int64_t c = 0; c < C; ++c) {
          const T* wr = vw.data() + c * E;
          T acc = 0;
          for (int64_t e = 0; e < E; ++e) acc += gyr[e] * wr[e];
          gxr[c] += acc;
        }
      }
    }
    if (g.needs_grad(w)) {
      Tensor<T>& gw = g.grad_acc(w);
      for (int64_t r = 0; r < R; ++r) {
        const T* gyr = gy.data() + r * E;
        const T* xr = vx.data() + r * C;
        for (int64_t c = 0; c < C; ++c) {
          T xv = xr[c];
          T* gwr = gw.data() + c * E;
          for (int64_t e = 0; e < E; ++e) gwr[e] += xv * gyr[e];
        }
      }
    }
    if (b >= 0 && g.needs_grad(b)) {
      Tensor<T>& gb = g.grad_acc(b);
      for (int64_t r = 0; r < R; ++r)
        for (int64_t e = 0; e < E; ++e) gb[e] += gy[r * E + e];
    }
  });
}

// Adds a [C] bias to every row of [R,C].
template <class T>
int bias_add_row(Graph<T>& g, int x, int b) {
  const Tensor<T>& vx = g.val(x);
  const Tensor<T>& vb = g.val(b);
  require(vx.rank() == 2 && vb.numel() == vx.dim(1),
          "bias_add_row: shape mismatch");
  int64_t R = vx.dim(0), C = vx.dim(1);
  Tensor<T> y = vx;
  for (int64_t r = 0; r < R; ++r)
    for (int64_t c = 0; c < C; ++c) y[r * C + c] += vb[c];
  return g.add_node(std::move(y), {x, b}, [x, b](Graph<T>& g, int self) {
    const Tensor<T>& gy = g.grad(self);
    int64_t R = gy.dim(0), C = gy.dim(1);
    if (g.needs_grad(x)) {
      Tensor<T>& gx = g.grad_acc(x);
      for (int64_t i = 0; i < gy.numel(); ++i) gx[i] += gy[i];
    }
    if (g.needs_grad(b)) {
      Tensor<T>& gb = g.grad_acc(b);
      for (int64_t r = 0; r < R; ++r)
        for (int64_t c = 0; c < C; ++c) gb[c] += gy[r * C + c];
    }
  });
}

// Row-wise layer norm over the channel axis of [R,C].
template <class T>
int layer_norm(Graph<T>& g, int x, int gain, int bias, double eps = 1e-5) {
  const Tensor<T>& vx = g.val(x);
  require(vx.rank() == 2, "layer_norm: expects [R,C]");
  int64_t R = vx.dim(0), C = vx.dim(1);
  require(g.val(gain).numel() == C && g.val(bias).numel() == C,
          "layer_norm: gain/bias size mismatch");
  auto xhat = std::make_shared<Tensor<T>>(Shape{R, C});
  auto inv = std::make_shared<std::vector<T>>(size_t(R));
  const Tensor<T>& vg = g.val(gain);
  const Tensor<T>& vb = g.val(bias);
  Tensor<T> y({R, C});
  for (int64_t r = 0; r < R; ++r) {
    const T* xr = vx.data() + r * C;
    T mu = 0;
    for (int64_t c = 0; c < C; ++c) mu += xr[c];
    mu /= T(C);
    T var = 0;
    for (int64_t c = 0; c < C; ++c) var += (xr[c] - mu) * (xr[c] - mu);
    var /= T(C);
    T iv = T(1) / std::sqrt(var + T(eps));
    (*inv)[size_t(r)] = iv;
    T* hr = xhat->data() + r * C;
    T* yr = y.data() + r * C;
    for (int64_t c = 0; c < C; ++c) {
      hr[c] = (xr[c] - mu) * iv;
      yr[c] = hr[c] * vg[c] + vb[c];
    }
  }
  return g.add_node(
      std::move(y), {x, gain, bias},
      [x, gain, bias, xhat, inv](Graph<T>& g, int self) {
        const Tensor<T>& gy = g.grad(self);
        const Tensor<T>& vg = g.val(gain);
        int64_t R = xhat->dim(0), C = xhat->dim(1);
        if (g.needs_grad(gain)) {
          Tensor<T>& gg = g.grad_acc(gain);
          for (int64_t r = 0; r < R; ++r)
            for (int64_t c = 0; c < C; ++c)
              gg[c] += gy[r * C + c] * (*xhat)[r * C + c];
        }
        if (g.needs_grad(bias)) {
          Tensor<T>& gb = g.grad_acc(bias);
          for (int64_t r = 0; r < R; ++r)
            for (int64_t c = 0; c < C; ++c) gb[c] += gy[r * C + c];
        }
        if (g.needs_grad(x)) {
          Tensor<T>& gx = g.grad_acc(x);
          for (int64_t r = 0; r < R; ++r) {
            const T* gyr = gy.data() + r * C;
            const T* hr = xhat->data() + r * C;
            T iv = (*inv)[size_t(r)];
            T sum_d = 0, sum_dh = 0;
            for (int64_t c = 0; c < C; ++c) {
              T d = gyr[c] * vg[c];
              sum_d += d;
              sum_dh += d * hr[c];
            }
            sum_d /= T(C);
            sum_dh /= T(C);
            T* gxr = gx.data() + r * C;
            for (int64_t c = 0; c < C; ++c)
              gxr[c] += iv * (gyr[c] * vg[c] - sum_d - hr[c] * sum_dh);
          }
        }
      });
}

// Concatenation along `axis` (0-based) of equal-rank tensors.
template <class T>
int concat(Graph<T>& g, const std::vector<int>& parts, int axis) {
  require(!parts.empty(), "concat: no inputs");
  const Shape& s0 = g.val(parts[0]).shape();
  require(axis >= 0 && axis < int(s0.size()), "concat: bad axis");
  Shape out_shape = s0;
  int64_t axis_total = 0;
  for (int p : parts) {
    const Shape& s = g.val(p).shape();
    require(s.size() == s0.size(), "concat: rank mismatch");
    for (size_t i = 0; i < s.size(); ++i)
      require(int(i) == axis || s[i] == s0[i], "concat: shape mismatch");
    axis_total += s[size_t(axis)];
  }
  out_shape[size_t(axis)] = axis_total;
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= s0[size_t(i)];
  for (size_t i = size_t(axis) + 1; i < s0.size(); ++i) inner *= s0[i];
  Tensor<T> y(out_shape);
  int64_t offset = 0;
  for (int p : parts) {
    const Tensor<T>& vp = g.val(p);
    int64_t len = vp.dim(size_t(axis)) * inner;
    for (int64_t o = 0; o < outer; ++o) {
      const T* src = vp.data() + o * len;
      T* dst = y.data() + o * axis_total * inner + offset;
      std::copy(src, src + len, dst);
    }
    offset += len;
  }
  auto parts_copy = std::make_shared<std::vector<int>>(parts);
  return g.add_node(
      std::move(y), parts,
      [parts_copy, outer, inner, axis_total](Graph<T>& g, int self) {
        const Tensor<T>& gy = g.grad(self);
        int64_t offset = 0;
        for (int p : *parts_copy) {
          int64_t len = g.val(p).numel() / std::max<int64_t>(outer, 1);
          if (g.needs_grad(p)) {
            Tensor<T>& gp = g.grad_acc(p);
            for (int64_t o = 0; o < outer; ++o) {
              const T* src = gy.data() + o * axis_total * inner + offset;
              T* dst = gp.data() + o * len;
              for (int64_t i = 0; i < len; ++i) dst[i] += src[i];
            }
          }
          offset += len;
        }
      });
}

// View of `len` slots starting at `start` along `axis`.
template <class T>
int narrow(Graph<T>& g, int x, int axis, int64_t start, int64_t len) {
  const Tensor<T>& vx = g.val(x);
  require(axis >= 0 && axis < int(vx.rank()), "narrow: bad axis");
  int64_t extent = vx.dim(size_t(axis));
  require(start >= 0 && len >= 0 && start + len <= extent,
          "narrow: range out of bounds");
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= vx.dim(size_t(i));
  for (size_t i = size_t(axis) + 1; i < vx.rank(); ++i) inner *= vx.dim(i);
  Shape out_shape = vx.shape();
  out_shape[size_t(axis)] = len;
  Tensor<T> y(out_shape);
  for (int64_t o = 0; o < outer; ++o) {
    const T* src = vx.data() + (o * extent + start) * inner;
    std::copy(src, src + len * inner, y.data() + o * len * inner);
  }
  return g.add_node(std::move(y), {x},
                    [x, start, len, outer, inner, extent](Graph<T>& g, int self) {
                      const Tensor<T>& gy = g.grad(self);
                      Tensor<T>& gx = g.grad_acc(x);
                      for (int64_t o = 0; o < outer; ++o) {
                        const T* src = gy.data() + o * len * inner;
                        T* dst = gx.data() + (o * extent + start) * inner;
                        for (int64_t i = 0; i < len * inner; ++i)
                          dst[i] += src[i];
                      }
                    });
}

// out[i] = idx[i] >= 0 ? x[idx[i]] : 0. Backward scatter-adds. One op covers
// reshapes, permutes, pads, crops, window moves and pixel shuffles.
template <class T>
int gather(Graph<T>& g, int x, std::shared_ptr<std::vector<int64_t>> idx,
           Shape out_shape) {
  require(int64_t(idx->size()) == shape_numel(out_shape),
          "gather: index count does not match output shape");
  const Tensor<T>& vx = g.val(x);
  Tensor<T> y(std::move(out_shape));
  const int64_t n = y.numel(), xn = vx.numel();
  for (int64_t i = 0; i < n; ++i) {
    int64_t j = (*idx)[size_t(i)];
    require(j < xn, "gather: index out of range");
    y[i] = j >= 0 ? vx[j] : T(0);
  }
  return g.add_node(std::move(y), {x}, [x, idx](Graph<T>& g, int self) {
    const Tensor<T>& gy = g.grad(self);
    Tensor<T>& gx = g.grad_acc(x);
    for (int64_t i = 0; i < gy.numel(); ++i) {
      int64_t j = (*idx)[size_t(i)];
      if (j >= 0) gx[j] += gy[i];
    }
  });
}

template <class T>
int reshape(Graph<T>& g, int x, Shape s) {
  Tensor<T> y = g.val(x).reshaped(std::move(s));
  return g.add_node(std::move(y), {x}, [x](Graph<T>& g, int self) {
    const Tensor<T>& gy = g.grad(self);
    Tensor<T>& gx = g.grad_acc(x);
    for (int64_t i = 0; i < gy.numel(); ++i) gx[i] += gy[i];
  });
}

template <class T>
int reduce_mean(Graph<T>& g, int x) {
  const Tensor<T>& vx = g.val(x);
  require(vx.numel() > 0, "reduce_mean: empty input");
  T acc = 0;
  for (int64_t i = 0; i < vx.numel(); ++i) acc += vx[i];
  int64_t n = vx.numel();
  Tensor<T> y({1});
  y[0] = acc / T(n);
  return g.add_node(std::move(y), {x}, [x, n](Graph<T>& g, int self) {
    T gy = g.grad(self)[0] / T(n);
    Tensor<T>& gx = g.grad_acc(x);
    for (int64_t i = 0; i < gx.numel(); ++i) gx[i] += gy;
  });
}

// Scalar projection against a fixed tensor; handy for gradient checks.
template <class T>
int dot_const(Graph<T>& g, int x, Tensor<T> w) {
  const Tensor<T>& vx = g.val(x);
  require(vx.same_shape(w), "dot_const: shape mismatch");
  T acc = 0;
  for (int64_t i = 0; i < vx.numel(); ++i) acc += vx[i] * w[i];
  Tensor<T> y({1});
  y[0] = acc;
  auto wp = std::make_shared<Tensor<T>>(std::move(w));
  return g.add_node(std::move(y), {x}, [x, wp](Graph<T>& g, int self) {
    T gy = g.grad(self)[0];
    Tensor<T>& gx = g.grad_acc(x);
    for (int64_t i = 0; i < gx.numel(); ++i) gx[i] += gy * (*wp)[i];
  });
}

enum class CharbonnierForm { kPerPixel, kWholeNorm };

// Charbonnier penalty between two same-shape nodes. Per-pixel form averages
// sqrt(d^2 + eps^2) over elements; the whole-norm form is
// sqrt(sum d^2 + eps^2) over the entire tensor.
template <class T>
int charbonnier(Graph<T>& g, int pred, int target, double eps,
                CharbonnierForm form = CharbonnierForm::kPerPixel) {
  const Tensor<T>& vp = g.val(pred);
  const Tensor<T>& vt = g.val(target);
  require(vp.same_shape(vt), "charbonnier: shape mismatch");
  require(vp.numel() > 0, "charbonnier: empty input");
  require(eps > 0, "charbonnier: eps must be positive");
  int64_t n = vp.numel();
  Tensor<T> y({1});
  if (form == CharbonnierForm::kPerPixel) {
    // Running mean (exact for a constant sequence, so loss(x,x) == eps).
    T mean = 0;
    for (int64_t i = 0; i < n; ++i) {
      T d = vp[i] - vt[i];
      T v = d == T(0) ? T(eps) : std::sqrt(d * d + T(eps) * T(eps));
      mean += (v - mean) / T(i + 1);
    }
    y[0] = mean;
  } else {
    T acc = 0;
    for (int64_t i = 0; i < n; ++i) {
      T d = vp[i] - vt[i];
      acc += d * d;
    }
    y[0] = acc == T(0) ? T(eps) : std::sqrt(acc + T(eps) * T(eps));
  }
  return g.add_node(
      std::move(y), {pred, target},
      [pred, target, eps, form, n](Graph<T>& g, int self) {
        T gy = g.grad(self)[0];
        const Tensor<T>& vp = g.val(pred);
        const Tensor<T>& vt = g.val(target);
        T total = g.val(self)[0];
        for (int64_t i = 0; i < n; ++i) {
          T d = vp[i] - vt[i];
          T dd;
          if (form == CharbonnierForm::kPerPixel)
            dd = gy * d / (std::sqrt(d * d + T(eps) * T(eps)) * T(n));
          else
            dd = gy * d / total;
          if (g.needs_grad(pred)) g.grad_acc(pred)[i] += dd;
          if (g.needs_grad(target)) g.grad_acc(target)[i] -= dd;
        }
      });
}

}  // namespace ag
}  // namespace medvsr
